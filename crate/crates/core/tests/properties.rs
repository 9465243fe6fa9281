mod common;

use std::sync::Arc;

use proptest::prelude::*;

use common::*;
use hybridns::condense::{assemble, solve_linear, FactorCache};
use hybridns::diagnostics::{energy_audit, global_mass, kinetic_energy, local_mass_residual, local_momentum_residual};
use hybridns::forms::{
    advective_flux, diffusive_flux, mass_flux, momentum_flux, Assembly, Forcing, Params, State,
    Stepping,
};
use hybridns::linalg::sparse_lu_solve;
use hybridns::mesh::{Mesh, Rect};
use hybridns::scenarios::kovasznay_discretization;
use hybridns::solver::{Measure, Picard, Solver};
use hybridns::spaces::{Constraints, DofMap, SpaceSpec};

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-3.0..3.0f64, -3.0..3.0f64]
}

fn unit_normal() -> impl Strategy<Value = [f64; 2]> {
    (0.0..std::f64::consts::TAU).prop_map(|a| [a.cos(), a.sin()])
}

fn rect_mesh() -> impl Strategy<Value = Mesh> {
    (1usize..7, 1usize..7, -2.0..2.0f64, -2.0..2.0f64, 0.1..3.0f64, 0.1..3.0f64)
        .prop_map(|(nx, ny, x0, y0, w, h)| Mesh::rectangle(nx, ny, Rect::new(x0, y0, x0 + w, y0 + h)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fluxes_reduce_to_physical_flux_for_matching_traces(
        u in point(), p in -3.0..3.0f64, n in unit_normal(),
        g in [[-3.0..3.0f64, -3.0..3.0f64], [-3.0..3.0f64, -3.0..3.0f64]],
        nu in 0.0..2.0f64, h in 0.01..1.0f64, lambda in prop::bool::ANY,
    ) {
        let params = Params { beta: 0.3, ..Params::defaults(nu, 2) };
        let uh = mass_flux(u, p, p, n, h, &params);
        prop_assert_eq!(uh, u);
        let lambda = if lambda { 1.0 } else { 0.0 };
        let adv = advective_flux(u, u, uh, lambda);
        let dif = diffusive_flux(g, u, u, p, n, h, &params);
        let sigma = momentum_flux(g, u, p, nu);
        for c in 0..2 {
            for a in 0..2 {
                let got = adv[c][a] + dif[c][a];
                prop_assert!((got - sigma[c][a]).abs() <= 1e-14 * sigma[c][a].abs().max(1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mesh_invariants(mesh in rect_mesh()) {
        let (v, c, e) = (mesh.num_vertices() as i64, mesh.num_cells() as i64, mesh.num_facets() as i64);
        prop_assert_eq!(v - e + c, 1);
        let area: f64 = (0..mesh.num_cells()).map(|k| mesh.signed_area(k)).sum();
        prop_assert!((area - mesh.bbox().area()).abs() <= 1e-12 * mesh.bbox().area());
        for k in 0..mesh.num_cells() {
            prop_assert!(mesh.signed_area(k) > 0.0);
        }
        for f in 0..mesh.num_facets() {
            let sides = mesh.facet_sides(f);
            prop_assert_eq!(sides.len(), if mesh.is_boundary_facet(f) { 1 } else { 2 });
            if sides.len() == 2 {
                let a = mesh.outward_normal(sides[0].cell, sides[0].local);
                let b = mesh.outward_normal(sides[1].cell, sides[1].local);
                prop_assert!((a[0] + b[0]).abs() < 1e-14 && (a[1] + b[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn condensed_size_matches_skeleton_lattice(mesh in rect_mesh(), kbar in 1usize..4, mbar in 1usize..4) {
        let spec = SpaceSpec::new(kbar, kbar, mbar, mbar).unwrap();
        let dofs = DofMap::new(&mesh, spec).unwrap();
        let expected = 2 * skeleton_lattice_count(&mesh, kbar) + skeleton_lattice_count(&mesh, mbar);
        prop_assert_eq!(dofs.num_facet_dofs(), expected);
    }
}

#[test]
fn condensed_system_has_skeleton_dimension() {
    for (nx, ny) in [(1, 1), (3, 2), (2, 5)] {
        for k in 1..=3 {
            let mut mesh = Mesh::rectangle(nx, ny, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
            mesh.tag_boundary(|_| "wall".into());
            let spec = SpaceSpec::equal_order(k).unwrap();
            let disc = hybridns::forms::Discretization::new(
                mesh.clone(),
                DofMap::new(&mesh, spec).unwrap(),
                hybridns::spaces::BoundaryConditions::new(),
            )
            .unwrap();
            let params = Params::defaults(1.0, k);
            let mode = Assembly { advection: None, stepping: None, time: 0.0, mean_pressure: false };
            let sys = assemble(&disc, &params, &Forcing::Zero, &mode, &Constraints::none(disc.dofs.num_facet_dofs()))
                .unwrap();
            assert_eq!(sys.dim(), 3 * skeleton_lattice_count(&mesh, k));
        }
    }
}

#[test]
fn sparse_solve_recovers_known_solution_of_condensed_system() {
    let disc = channel(3, 3, SpaceSpec::equal_order(2).unwrap());
    let params = Params::defaults(0.1, 2);
    let w = scrambled_state(&disc.dofs, 3);
    let mode = Assembly { advection: Some(&w), stepping: None, time: 0.0, mean_pressure: false };
    let c = Constraints::build(&disc.mesh, &disc.dofs, &disc.bcs, 0.0).unwrap();
    let sys = assemble(&disc, &params, &Forcing::Zero, &mode, &c).unwrap();
    let x0: Vec<f64> = (0..sys.dim()).map(|i| ((i * 37 % 101) as f64 - 50.0) / 17.0).collect();
    let b = sys.matrix.mul_vec(&x0);
    let x = sparse_lu_solve(&sys.matrix, &b).unwrap();
    let err = x.iter().zip(&x0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err <= 1e-9 * scale, "{err}");
}

/// Facet quadrature sum of `½|ŵ·n||ū - u|² + τ(p̄ - p)²` over all cells.
fn upwind_and_pressure_dissipation(disc: &hybridns::forms::Discretization, params: &Params, s: &State, w: &State) -> f64 {
    let tab = &disc.tables;
    let mut total = 0.0;
    for cell in 0..disc.mesh.num_cells() {
        for f in 0..3 {
            let facet = disc.mesh.cell_facets[cell][f];
            let ft = &tab.facets[f][disc.mesh.facet_is_forward(cell, f) as usize];
            let n = disc.mesh.outward_normal(cell, f);
            let h = disc.mesh.facet_size(facet);
            let len = disc.mesh.facet_length(facet);
            for (q, &wq) in tab.facet_w.iter().enumerate() {
                let (u, p) = disc.eval_cell(s, cell, &ft.phi[q], &ft.psi[q]);
                let (ub, pb) = disc.eval_facet(s, cell, f, q);
                let (wu, wp) = disc.eval_cell(w, cell, &ft.phi[q], &ft.psi[q]);
                let (_, wpb) = disc.eval_facet(w, cell, f, q);
                let wh = mass_flux(wu, wp, wpb, n, h, params);
                let an = wh[0] * n[0] + wh[1] * n[1];
                let jump = (ub[0] - u[0]).powi(2) + (ub[1] - u[1]).powi(2);
                total += wq * len * (0.5 * an.abs() * jump + params.tau(h) * (pb - p).powi(2));
            }
        }
    }
    total
}

#[test]
fn skew_symmetric_advection_dissipates_only_through_facets() {
    for k in 1..=2 {
        let disc = noslip_box(3, 2, SpaceSpec::equal_order(k).unwrap());
        let params = Params { nu: 0.0, beta: 0.5, ..Params::defaults(0.0, k) };
        let c = Constraints::build(&disc.mesh, &disc.dofs, &disc.bcs, 0.0).unwrap();
        for salt in 0..4 {
            let mut s = scrambled_state(&disc.dofs, 10 + salt);
            for (g, v) in s.ubar.iter_mut().enumerate() {
                if c.is_fixed(g) {
                    *v = 0.0;
                }
            }
            let w = scrambled_state(&disc.dofs, 100 + salt);
            let mode = Assembly { advection: Some(&w), stepping: None, time: 0.0, mean_pressure: false };
            let (a, _) = monolithic_system(&disc, &params, &Forcing::Zero, &mode);
            let x = pack(&disc, &s);
            let mut flipped = s.clone();
            flipped.p.iter_mut().chain(flipped.pbar.iter_mut()).for_each(|v| *v = -*v);
            let y = pack(&disc, &flipped);
            let quad: f64 = mat_vec(&a, &x).iter().zip(&y).map(|(a, b)| a * b).sum();
            let expected = upwind_and_pressure_dissipation(&disc, &params, &s, &w);
            assert!(expected > 0.0);
            assert!((quad - expected).abs() <= 1e-10 * expected, "k={k}: {quad} vs {expected}");
        }
    }
}

#[test]
fn consistency_residual_does_not_depend_on_chi() {
    let spec = SpaceSpec::new(2, 2, 1, 1).unwrap();
    let u = |x: [f64; 2]| [x[0] * x[0], -2.0 * x[0] * x[1]];
    let p = |x: [f64; 2]| x[0] + 0.5 * x[1];
    let mesh = tagged_mesh(3, 3, Rect::unit(), |_| "wall");
    let dofs = DofMap::new(&mesh, spec).unwrap();
    let bcs = hybridns::spaces::BoundaryConditions::new()
        .with("wall", hybridns::spaces::BoundaryCondition::Dirichlet(Arc::new(move |x, _| u(x))));
    let disc = hybridns::forms::Discretization::new(mesh, dofs, bcs).unwrap();
    let mut s = State::zeros(&disc.dofs);
    s.u = disc.dofs.interpolate_velocity(&disc.mesh, u);
    s.p = disc.dofs.interpolate_pressure(&disc.mesh, p);
    s.ubar = disc.dofs.interpolate_facet_velocity(u);
    s.pbar = disc.dofs.interpolate_facet_pressure(p);
    let c = Constraints::build(&disc.mesh, &disc.dofs, &disc.bcs, 0.0).unwrap();
    let (nl, _) = disc.local_sizes();
    let offset = disc.mesh.num_cells() * nl;
    let residual = |chi: f64| -> Vec<f64> {
        let params = Params { chi, ..Params::defaults(0.01, 2) };
        let mode = Assembly { advection: Some(&s), stepping: None, time: 0.0, mean_pressure: false };
        let (a, b) = monolithic_system(&disc, &params, &Forcing::Zero, &mode);
        let r: Vec<f64> = mat_vec(&a, &pack(&disc, &s)).iter().zip(&b).map(|(x, y)| x - y).collect();
        r.into_iter().enumerate().filter(|(i, _)| *i < offset || !c.is_fixed(i - offset)).map(|(_, v)| v).collect()
    };
    let r0 = residual(0.0);
    let scale = r0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for chi in [0.5, 1.0] {
        let r = residual(chi);
        let diff = r.iter().zip(&r0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-12 * scale, "chi={chi}: {diff}");
    }
}

#[test]
fn energy_audit_balances_for_unforced_stokes() {
    let disc = noslip_box(4, 4, SpaceSpec::equal_order(2).unwrap());
    let params = Params { theta: 0.5, dt: 0.05, ..Params::defaults(0.3, 2) };
    let forcing = Forcing::Analytic(Arc::new(|x, _| [(3.0 * x[1]).sin(), x[0] * x[0]]));
    let mut solver = Solver::new(&disc, Params { theta: 1.0, ..params }, forcing).with_mean_pressure(0.0);
    // a solenoidal start: one forced backward Euler step from rest
    let start = solver.step_transient(&State::zeros(&disc.dofs), false).unwrap();
    solver.forcing = Forcing::Zero;
    solver.params = params;
    let mut prev = start;
    for _ in 0..3 {
        let next = solver.step_transient(&prev, false).unwrap();
        let (rate, dissipation) = energy_audit(&disc, &params, &prev, &next);
        assert!(dissipation > 0.0);
        assert!((rate + dissipation).abs() <= 1e-8 * dissipation, "{rate} vs {dissipation}");
        prev = next;
    }
}

#[test]
fn traction_channel_conserves_mass_globally_and_locally() {
    for k in 1..=2 {
        let disc = channel(4, 3, SpaceSpec::equal_order(k).unwrap());
        let mut solver = Solver::new(&disc, Params::defaults(0.05, k), Forcing::Zero);
        let out = solver.solve_stationary_ns(&Picard::new(1e-10, Measure::VelocityNorm), None).unwrap();
        assert!(global_mass(&disc, &out.state).abs() <= 1e-10);
        let local = local_mass_residual(&disc, &solver.params, &out.state);
        assert!(local.iter().all(|r| r.abs() <= 1e-10));
    }
}

#[test]
fn picard_fixed_point_solves_the_nonlinear_problem() {
    let re = 20.0;
    let disc = kovasznay_discretization(3, SpaceSpec::equal_order(2).unwrap(), re).unwrap();
    let params = Params::defaults(1.0 / re, 2);
    let tol = 1e-8;
    let mut solver = Solver::new(&disc, params, Forcing::Zero);
    let out = solver.solve_stationary_ns(&Picard::new(tol, Measure::VelocityNorm), None).unwrap();
    let mode = Assembly { advection: Some(&out.state), stepping: None, time: 0.0, mean_pressure: false };
    let (a, b) = monolithic_system(&disc, &params, &Forcing::Zero, &mode);
    let c = Constraints::build(&disc.mesh, &disc.dofs, &disc.bcs, 0.0).unwrap();
    let (nl, _) = disc.local_sizes();
    let offset = disc.mesh.num_cells() * nl;
    let x = pack(&disc, &out.state);
    let r = mat_vec(&a, &x);
    let free = |i: &usize| *i < offset || !c.is_fixed(i - offset);
    let res: f64 = (0..b.len()).filter(free).map(|i| (r[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    // right-hand side after lifting the Dirichlet data
    let lifted: f64 = (0..b.len())
        .filter(free)
        .map(|i| {
            let lift: f64 = (offset..x.len()).filter(|j| c.is_fixed(j - offset)).map(|j| a[i][j] * x[j]).sum();
            (b[i] - lift).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    assert!(res <= 10.0 * tol * lifted, "{res} vs {lifted}");
}

#[test]
fn transient_steps_conserve_momentum_and_mass_per_cell() {
    for k in 1..=2 {
        let disc = channel(3, 3, SpaceSpec::equal_order(k).unwrap());
        let params = Params { theta: 0.5, dt: 0.1, ..Params::defaults(0.02, k) };
        let forcing = Forcing::Analytic(Arc::new(|x, t| [1.0 + t * x[1], -x[0]]));
        let mut solver = Solver::new(&disc, params, forcing.clone());
        let mut prev = solver.solve_stokes().unwrap();
        for _ in 0..3 {
            let next = solver.step_transient(&prev, true).unwrap();
            let r = local_momentum_residual(&disc, &params, &forcing, Some(&prev), &next, Some(&prev));
            assert!(r.iter().all(|v| v[0].abs() <= 1e-9 && v[1].abs() <= 1e-9), "{r:?}");
            assert!(local_mass_residual(&disc, &params, &next).iter().all(|m| m.abs() <= 1e-10));
            assert!(kinetic_energy(&disc, &next).is_finite());
            prev = next;
        }
    }
}

#[test]
fn mean_constraint_matches_bordered_multiplier_system() {
    let disc = noslip_box(2, 2, SpaceSpec::equal_order(2).unwrap());
    let params = Params::defaults(0.7, 2);
    let forcing = Forcing::Analytic(Arc::new(|x, _| [x[1] * x[1], (2.0 * x[0]).cos()]));
    let mode = Assembly { advection: None, stepping: None, time: 0.0, mean_pressure: false };
    let c = Constraints::build(&disc.mesh, &disc.dofs, &disc.bcs, 0.0).unwrap();
    let got = solve_linear(&disc, &params, &forcing, &mode, &c, Some(0.25), &mut FactorCache::new()).unwrap();
    let want = monolithic_solve(&disc, &params, &forcing, &mode, &c, Some(0.25));
    assert!(relative_difference(&got, &want) <= 1e-10);
    let w = scrambled_state(&disc.dofs, 8);
    let step = Assembly { advection: Some(&w), stepping: Some(Stepping { previous: &w }), time: 0.0, mean_pressure: false };
    let got = solve_linear(&disc, &params, &forcing, &step, &c, Some(-1.0), &mut FactorCache::new()).unwrap();
    let want = monolithic_solve(&disc, &params, &forcing, &step, &c, Some(-1.0));
    assert!(relative_difference(&got, &want) <= 1e-10);
}
