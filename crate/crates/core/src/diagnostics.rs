//! Error norms, conservation residuals, kinetic energy, wall shear and run reports.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::{make_quadrature, ReferenceElement};
use crate::forms::{
    advective_flux, diffusive_flux, mass_flux, upwind_switch, CellGeometry, Discretization, Forcing, Params,
    State, Tensor,
};
use crate::mesh::Point;
use crate::Result;

/// Basis tables at a cell quadrature rule of a chosen degree.
struct Probe {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    phi: Vec<Vec<f64>>,
    dphi: Vec<Vec<[f64; 2]>>,
    psi: Vec<Vec<f64>>,
}

impl Probe {
    fn new(disc: &Discretization, degree: usize) -> Result<Self> {
        let q = make_quadrature(ReferenceElement::Triangle, degree)?;
        let vb = &disc.dofs.velocity_basis;
        let pb = &disc.dofs.pressure_basis;
        Ok(Probe {
            phi: vb.tabulate(&q.points),
            dphi: vb.tabulate_grad(&q.points),
            psi: pb.tabulate(&q.points),
            points: q.points,
            weights: q.weights,
        })
    }

    fn assembly(disc: &Discretization) -> Self {
        let t = &disc.tables;
        Probe {
            points: t.cell_points.clone(),
            weights: t.cell_weights.clone(),
            phi: t.phi.clone(),
            dphi: t.dphi.clone(),
            psi: t.psi.clone(),
        }
    }

    /// Sum over cells and quadrature points of `w · g(cell, geo, q, x)`.
    fn integrate<F>(&self, disc: &Discretization, mut g: F) -> f64
    where
        F: FnMut(usize, &CellGeometry, usize, Point) -> f64,
    {
        let mut total = 0.0;
        for cell in 0..disc.mesh.num_cells() {
            let geo = CellGeometry::new(&disc.mesh, cell);
            let jac = geo.det.abs();
            for (q, &w) in self.weights.iter().enumerate() {
                total += w * jac * g(cell, &geo, q, geo.map(self.points[q]));
            }
        }
        total
    }
}

/// Default quadrature degree for error norms.
pub fn error_degree(disc: &Discretization) -> usize {
    2 * disc.dofs.spec.max_order() + 6
}

/// `‖u_h - u‖₀`.
pub fn l2_error_velocity<F>(disc: &Discretization, state: &State, exact: F, degree: usize) -> Result<f64>
where
    F: Fn(Point) -> [f64; 2],
{
    let probe = Probe::new(disc, degree)?;
    let s = probe.integrate(disc, |cell, _, q, x| {
        let (u, _) = disc.eval_cell(state, cell, &probe.phi[q], &probe.psi[q]);
        let e = exact(x);
        (u[0] - e[0]).powi(2) + (u[1] - e[1]).powi(2)
    });
    Ok(s.max(0.0).sqrt())
}

/// `‖p_h - p‖₀`, optionally after removing the mean of the difference.
pub fn l2_error_pressure<F>(
    disc: &Discretization,
    state: &State,
    exact: F,
    degree: usize,
    modulo_mean: bool,
) -> Result<f64>
where
    F: Fn(Point) -> f64,
{
    let probe = Probe::new(disc, degree)?;
    let (mut sq, mut sum, mut area) = (0.0, 0.0, 0.0);
    for cell in 0..disc.mesh.num_cells() {
        let geo = CellGeometry::new(&disc.mesh, cell);
        let jac = geo.det.abs();
        for (q, &w) in probe.weights.iter().enumerate() {
            let (_, p) = disc.eval_cell(state, cell, &probe.phi[q], &probe.psi[q]);
            let e = p - exact(geo.map(probe.points[q]));
            sq += w * jac * e * e;
            sum += w * jac * e;
            area += w * jac;
        }
    }
    if modulo_mean {
        sq -= sum * sum / area;
    }
    Ok(sq.max(0.0).sqrt())
}

/// `‖u_h‖₀`.
pub fn velocity_norm(disc: &Discretization, state: &State) -> f64 {
    kinetic_energy(disc, state).sqrt()
}

/// `∫ |u_h|²`.
pub fn kinetic_energy(disc: &Discretization, state: &State) -> f64 {
    let probe = Probe::assembly(disc);
    probe.integrate(disc, |cell, _, q, _| {
        let (u, _) = disc.eval_cell(state, cell, &probe.phi[q], &probe.psi[q]);
        u[0] * u[0] + u[1] * u[1]
    })
}

/// `∫ p_h`.
pub fn pressure_integral(disc: &Discretization, state: &State) -> f64 {
    let probe = Probe::assembly(disc);
    probe.integrate(disc, |cell, _, q, _| disc.eval_cell(state, cell, &probe.phi[q], &probe.psi[q]).1)
}

/// `(Σ_K ∫_K (div u_h)²)^{1/2}`.
pub fn divergence_error(disc: &Discretization, state: &State) -> f64 {
    let probe = Probe::assembly(disc);
    probe
        .integrate(disc, |cell, geo, q, _| {
            let g = disc.eval_cell_grad(state, cell, geo, &probe.dphi[q]);
            (g[0][0] + g[1][1]).powi(2)
        })
        .sqrt()
}

/// Visits every facet quadrature point of every cell.
fn for_facet_points<F>(disc: &Discretization, mut visit: F)
where
    F: FnMut(FacetPoint),
{
    let mesh = &disc.mesh;
    let tab = &disc.tables;
    for cell in 0..mesh.num_cells() {
        let geo = CellGeometry::new(mesh, cell);
        for f in 0..3 {
            let facet = mesh.cell_facets[cell][f];
            let fwd = mesh.facet_is_forward(cell, f);
            let ft = &tab.facets[f][fwd as usize];
            let n = mesh.outward_normal(cell, f);
            let len = mesh.facet_length(facet);
            let h = mesh.facet_size(facet);
            for (q, &w) in tab.facet_w.iter().enumerate() {
                visit(FacetPoint {
                    cell,
                    local: f,
                    facet,
                    q,
                    weight: w * len,
                    normal: n,
                    h,
                    geo: &geo,
                    phi: &ft.phi[q],
                    dphi: &ft.dphi[q],
                    psi: &ft.psi[q],
                });
            }
        }
    }
}

struct FacetPoint<'a> {
    cell: usize,
    local: usize,
    facet: usize,
    q: usize,
    weight: f64,
    normal: [f64; 2],
    h: f64,
    geo: &'a CellGeometry,
    phi: &'a [f64],
    dphi: &'a [[f64; 2]],
    psi: &'a [f64],
}

/// Per-cell `∮_{∂K} û·n ds`.
pub fn local_mass_residual(disc: &Discretization, params: &Params, state: &State) -> Vec<f64> {
    let mut r = vec![0.0; disc.mesh.num_cells()];
    for_facet_points(disc, |fp| {
        let (u, p) = disc.eval_cell(state, fp.cell, fp.phi, fp.psi);
        let (_, pb) = disc.eval_facet(state, fp.cell, fp.local, fp.q);
        let uh = mass_flux(u, p, pb, fp.normal, fp.h, params);
        r[fp.cell] += fp.weight * (uh[0] * fp.normal[0] + uh[1] * fp.normal[1]);
    });
    r
}

/// Per-cell `∮_{∂K} u·n ds` of the cell velocity itself.
pub fn local_velocity_flux(disc: &Discretization, state: &State) -> Vec<f64> {
    let mut r = vec![0.0; disc.mesh.num_cells()];
    for_facet_points(disc, |fp| {
        let (u, _) = disc.eval_cell(state, fp.cell, fp.phi, fp.psi);
        r[fp.cell] += fp.weight * (u[0] * fp.normal[0] + u[1] * fp.normal[1]);
    });
    r
}

/// `∮_{∂Ω} ū·n ds`.
pub fn global_mass(disc: &Discretization, state: &State) -> f64 {
    let mut total = 0.0;
    for_facet_points(disc, |fp| {
        if disc.mesh.is_boundary_facet(fp.facet) {
            let (ub, _) = disc.eval_facet(state, fp.cell, fp.local, fp.q);
            total += fp.weight * (ub[0] * fp.normal[0] + ub[1] * fp.normal[1]);
        }
    });
    total
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `max_K |∮ û·n|`.
pub fn max_mass_residual(disc: &Discretization, params: &Params, state: &State) -> f64 {
    max_abs(local_mass_residual(disc, params, state))
}

/// Per-cell momentum balance
/// `∫_K (u_{n+1} - u_n)/δt + ∮_{∂K} σ̂ n - ∫_K f`,
/// with every term at the θ-blend of the two levels and the advective flux
/// transported by `advection` (the frozen state). Without `previous` the time
/// derivative is dropped and `next` is taken as steady.
pub fn local_momentum_residual(
    disc: &Discretization,
    params: &Params,
    forcing: &Forcing,
    previous: Option<&State>,
    next: &State,
    advection: Option<&State>,
) -> Vec<[f64; 2]> {
    let ncell = disc.mesh.num_cells();
    let mut r = vec![[0.0; 2]; ncell];
    let (theta, mid, t0, t1) = match previous {
        Some(prev) => (params.theta, State::blend(prev, next, params.theta), prev.t, next.t),
        None => (1.0, next.clone(), next.t, next.t),
    };
    let probe = Probe::assembly(disc);
    for cell in 0..ncell {
        let geo = CellGeometry::new(&disc.mesh, cell);
        let jac = geo.det.abs();
        for (q, &w) in probe.weights.iter().enumerate() {
            let w = w * jac;
            let xi = probe.points[q];
            let x = geo.map(xi);
            let f0 = forcing.eval(&disc.mesh, cell, xi, x, t0);
            let f1 = forcing.eval(&disc.mesh, cell, xi, x, t1);
            for c in 0..2 {
                r[cell][c] -= w * ((1.0 - theta) * f0[c] + theta * f1[c]);
            }
            if let Some(prev) = previous {
                let (u1, _) = disc.eval_cell(next, cell, &probe.phi[q], &probe.psi[q]);
                let (u0, _) = disc.eval_cell(prev, cell, &probe.phi[q], &probe.psi[q]);
                for c in 0..2 {
                    r[cell][c] += w * (u1[c] - u0[c]) / params.dt;
                }
            }
        }
    }
    for_facet_points(disc, |fp| {
        let (u, _) = disc.eval_cell(&mid, fp.cell, fp.phi, fp.psi);
        let g = disc.eval_cell_grad(&mid, fp.cell, fp.geo, fp.dphi);
        let (ub, pb) = disc.eval_facet(&mid, fp.cell, fp.local, fp.q);
        let mut s: Tensor = diffusive_flux(g, u, ub, pb, fp.normal, fp.h, params);
        if let Some(wst) = advection {
            let (wu, wp) = disc.eval_cell(wst, fp.cell, fp.phi, fp.psi);
            let (_, wpb) = disc.eval_facet(wst, fp.cell, fp.local, fp.q);
            let uh = mass_flux(wu, wp, wpb, fp.normal, fp.h, params);
            let lam = upwind_switch(uh[0] * fp.normal[0] + uh[1] * fp.normal[1]);
            let a = advective_flux(u, ub, uh, lam);
            for c in 0..2 {
                for d in 0..2 {
                    s[c][d] += a[c][d];
                }
            }
        }
        let n = fp.normal;
        for c in 0..2 {
            r[fp.cell][c] += fp.weight * (s[c][0] * n[0] + s[c][1] * n[1]);
        }
    });
    r
}

/// Largest component of the per-cell momentum residual.
pub fn max_momentum_residual(r: &[[f64; 2]]) -> f64 {
    max_abs(r.iter().flat_map(|v| [v[0], v[1]]))
}

/// Dissipation of the Stokes operator at `state`:
/// viscous volume, interior penalty, consistency and pressure-jump terms.
pub fn stokes_dissipation(disc: &Discretization, params: &Params, state: &State) -> f64 {
    let nu2 = 2.0 * params.nu;
    let probe = Probe::assembly(disc);
    let volume = probe.integrate(disc, |cell, geo, q, _| {
        let g = disc.eval_cell_grad(state, cell, geo, &probe.dphi[q]);
        let mut e = 0.0;
        for c in 0..2 {
            for a in 0..2 {
                let s = 0.5 * (g[c][a] + g[a][c]);
                e += s * s;
            }
        }
        nu2 * e
    });
    let mut facets = 0.0;
    for_facet_points(disc, |fp| {
        let (u, p) = disc.eval_cell(state, fp.cell, fp.phi, fp.psi);
        let g = disc.eval_cell_grad(state, fp.cell, fp.geo, fp.dphi);
        let (ub, pb) = disc.eval_facet(state, fp.cell, fp.local, fp.q);
        let n = fp.normal;
        let jump = [u[0] - ub[0], u[1] - ub[1]];
        let pen = params.alpha / fp.h * nu2;
        let mut v = pen * (jump[0] * jump[0] + jump[1] * jump[1]);
        for c in 0..2 {
            let sn: f64 = (0..2).map(|a| 0.5 * (g[c][a] + g[a][c]) * n[a]).sum();
            v -= 2.0 * nu2 * sn * jump[c];
        }
        v += params.tau(fp.h) * (p - pb).powi(2);
        facets += fp.weight * v;
    });
    volume + facets
}

/// Energy balance of one θ-step of the unforced Stokes problem:
/// returns `(½(E_{n+1} - E_n)/δt, dissipation at the θ-blend)`, whose sum
/// vanishes when θ = ½.
pub fn energy_audit(disc: &Discretization, params: &Params, previous: &State, next: &State) -> (f64, f64) {
    let rate = 0.5 * (kinetic_energy(disc, next) - kinetic_energy(disc, previous)) / params.dt;
    let mid = State::blend(previous, next, params.theta);
    (rate, stokes_dissipation(disc, params, &mid))
}

// ---------------------------------------------------------------------------
// wall shear

/// Interval of negative wall shear; `end` is `None` when the flow does not
/// reattach before the end of the wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearInterval {
    pub start: f64,
    pub end: Option<f64>,
}

const SAMPLES_PER_FACET: usize = 20;

/// Regions of negative wall shear `∂u_x/∂n` (n pointing into the fluid) on
/// the horizontal wall `y = wall_y`, ordered by `x`.
pub fn negative_shear_intervals(disc: &Discretization, state: &State, wall_y: f64) -> Vec<ShearInterval> {
    let mesh = &disc.mesh;
    let vb = &disc.dofs.velocity_basis;
    struct Seg {
        cell: usize,
        x0: f64,
        x1: f64,
        xi0: [f64; 2],
        xi1: [f64; 2],
        sign: f64,
    }
    let mut segs = Vec::new();
    for f in 0..mesh.num_facets() {
        if !mesh.is_boundary_facet(f) {
            continue;
        }
        let [a, b] = mesh.facets[f];
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        if (pa[1] - wall_y).abs() > 1e-12 || (pb[1] - wall_y).abs() > 1e-12 {
            continue;
        }
        let side = mesh.facet_sides(f)[0];
        let n = mesh.outward_normal(side.cell, side.local);
        let ends = crate::basis::trace_points(side.local, mesh.facet_is_forward(side.cell, side.local), &[0.0, 1.0]);
        let (x0, x1, xi0, xi1) =
            if pa[0] < pb[0] { (pa[0], pb[0], ends[0], ends[1]) } else { (pb[0], pa[0], ends[1], ends[0]) };
        segs.push(Seg { cell: side.cell, x0, x1, xi0, xi1, sign: -n[1].signum() });
    }
    segs.sort_by(|a, b| a.x0.total_cmp(&b.x0));

    let shear = |s: &Seg, t: f64| -> f64 {
        let xi = [s.xi0[0] + t * (s.xi1[0] - s.xi0[0]), s.xi0[1] + t * (s.xi1[1] - s.xi0[1])];
        let geo = CellGeometry::new(mesh, s.cell);
        let g = disc.eval_cell_grad(state, s.cell, &geo, &vb.eval_grad(xi));
        s.sign * g[0][1]
    };
    let crossing = |s: &Seg, mut ta: f64, mut tb: f64| -> f64 {
        let fa = shear(s, ta);
        for _ in 0..60 {
            let tm = 0.5 * (ta + tb);
            if (shear(s, tm) < 0.0) == (fa < 0.0) {
                ta = tm;
            } else {
                tb = tm;
            }
        }
        let t = 0.5 * (ta + tb);
        s.x0 + t * (s.x1 - s.x0)
    };

    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    let mut prev_neg: Option<bool> = None;
    for s in &segs {
        let mut last_t = 0.0;
        for i in 0..SAMPLES_PER_FACET {
            let t = i as f64 / (SAMPLES_PER_FACET - 1) as f64;
            let neg = shear(s, t) < 0.0;
            match prev_neg {
                None if neg => open = Some(s.x0),
                Some(p) if p != neg => {
                    // inside a cell the polynomial is bisected; across cells the shared vertex is used
                    let x = if i == 0 { s.x0 } else { crossing(s, last_t, t) };
                    if neg {
                        open = Some(x);
                    } else if let Some(start) = open.take() {
                        out.push(ShearInterval { start, end: Some(x) });
                    }
                }
                _ => {}
            }
            prev_neg = Some(neg);
            last_t = t;
        }
    }
    if let Some(start) = open {
        out.push(ShearInterval { start, end: None });
    }
    out
}

/// First point where the wall shear turns from negative to positive, divided
/// by `step_height`; `None` when the flow does not reattach.
pub fn reattachment_length(disc: &Discretization, state: &State, wall_y: f64, step_height: f64) -> Option<f64> {
    negative_shear_intervals(disc, state, wall_y)
        .iter()
        .find_map(|iv| iv.end)
        .map(|x| x / step_height)
}

// ---------------------------------------------------------------------------
// reports

/// One solved configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: String,
    pub scenario: String,
    pub n: usize,
    pub h: f64,
    pub k: usize,
    pub kbar: usize,
    pub m: usize,
    pub mbar: usize,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    pub theta: f64,
    pub dt: f64,
    pub re: Option<f64>,
    pub seed: Option<u64>,
    pub global_dofs: usize,
    pub iterations: Option<usize>,
    pub l2_velocity: Option<f64>,
    pub l2_pressure: Option<f64>,
    pub div_error: Option<f64>,
    pub max_mass_residual: Option<f64>,
    pub max_momentum_residual: Option<f64>,
    pub kinetic_energy: Vec<f64>,
    pub reattachment: Option<f64>,
    pub top_bubble: Option<(f64, f64)>,
    pub pressure_pin: Option<usize>,
}

/// Columns of `report.csv`, in order.
pub const CSV_COLUMNS: [&str; 28] = [
    "run",
    "scenario",
    "n",
    "h",
    "k",
    "kbar",
    "m",
    "mbar",
    "nu",
    "alpha",
    "beta",
    "chi",
    "theta",
    "dt",
    "re",
    "seed",
    "global_dofs",
    "iterations",
    "l2_velocity",
    "l2_pressure",
    "div_error",
    "max_mass_residual",
    "max_momentum_residual",
    "kinetic_energy_final",
    "reattachment",
    "top_bubble_start",
    "top_bubble_end",
    "pressure_pin",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl RunRecord {
    fn csv_row(&self) -> Vec<String> {
        vec![
            self.run.clone(),
            self.scenario.clone(),
            self.n.to_string(),
            self.h.to_string(),
            self.k.to_string(),
            self.kbar.to_string(),
            self.m.to_string(),
            self.mbar.to_string(),
            self.nu.to_string(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.chi.to_string(),
            self.theta.to_string(),
            self.dt.to_string(),
            opt(self.re),
            opt(self.seed),
            self.global_dofs.to_string(),
            opt(self.iterations),
            opt(self.l2_velocity),
            opt(self.l2_pressure),
            opt(self.div_error),
            opt(self.max_mass_residual),
            opt(self.max_momentum_residual),
            opt(self.kinetic_energy.last()),
            opt(self.reattachment),
            opt(self.top_bubble.map(|b| b.0)),
            opt(self.top_bubble.map(|b| b.1)),
            opt(self.pressure_pin),
        ]
    }

    /// Whether every stored number is finite.
    pub fn is_finite(&self) -> bool {
        let mut vals = vec![self.h, self.nu, self.alpha, self.beta, self.chi, self.theta, self.dt];
        vals.extend(self.re);
        vals.extend(self.l2_velocity);
        vals.extend(self.l2_pressure);
        vals.extend(self.div_error);
        vals.extend(self.max_mass_residual);
        vals.extend(self.max_momentum_residual);
        vals.extend(&self.kinetic_energy);
        vals.extend(self.reattachment);
        if let Some((a, b)) = self.top_bubble {
            vals.extend([a, b]);
        }
        vals.iter().all(|v| v.is_finite())
    }
}

/// All runs of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunRecord>,
}

impl Report {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| crate::Error::Io(std::io::Error::other(e));
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.runs {
            w.write_record(r.csv_row()).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| crate::Error::Io(e.into()))
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("report.csv"))?)?;
        self.write_json(std::fs::File::create(dir.join("report.json"))?)?;
        Ok(())
    }
}

/// Writes `x, y, u_x, u_y, p` at the velocity lattice points of every cell.
pub fn write_field<W: Write>(disc: &Discretization, state: &State, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| crate::Error::Io(std::io::Error::other(e));
    w.write_record(["x", "y", "u_x", "u_y", "p"]).map_err(io)?;
    let vb = &disc.dofs.velocity_basis;
    let nodes = vb.nodes().to_vec();
    let phi = vb.tabulate(&nodes);
    let psi = disc.dofs.pressure_basis.tabulate(&nodes);
    for cell in 0..disc.mesh.num_cells() {
        let geo = CellGeometry::new(&disc.mesh, cell);
        for (i, xi) in nodes.iter().enumerate() {
            let x = geo.map(*xi);
            let (u, p) = disc.eval_cell(state, cell, &phi[i], &psi[i]);
            w.write_record([x[0], x[1], u[0], u[1], p].map(|v| v.to_string())).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryTag, Mesh, Rect};
    use crate::spaces::{BoundaryCondition, BoundaryConditions, DofMap, SpaceSpec};
    use std::sync::Arc;

    fn disc(k: usize, n: usize, rect: Rect) -> Discretization {
        let mut mesh = Mesh::rectangle(n, n, rect).unwrap();
        mesh.tag_boundary(|_| BoundaryTag::from("wall"));
        let dofs = DofMap::new(&mesh, SpaceSpec::equal_order(k).unwrap()).unwrap();
        let bcs = BoundaryConditions::new().with("wall", BoundaryCondition::Dirichlet(Arc::new(|_, _| [0.0; 2])));
        Discretization::new(mesh, dofs, bcs).unwrap()
    }

    fn with_velocity(d: &Discretization, f: impl Fn(Point) -> [f64; 2]) -> State {
        let mut s = State::zeros(&d.dofs);
        s.u = d.dofs.interpolate_velocity(&d.mesh, &f);
        s.ubar = d.dofs.interpolate_facet_velocity(&f);
        s
    }

    #[test]
    fn polynomial_fields_have_zero_error() {
        let d = disc(3, 3, Rect::unit());
        let f = |x: Point| [x[0].powi(3) - x[1], x[0] * x[1] * x[1]];
        let s = with_velocity(&d, f);
        assert!(l2_error_velocity(&d, &s, f, error_degree(&d)).unwrap() < 1e-12);
        let mut s = s;
        s.p = d.dofs.interpolate_pressure(&d.mesh, |x| x[0] * x[1]);
        assert!(l2_error_pressure(&d, &s, |x| x[0] * x[1] + 7.0, 12, true).unwrap() < 1e-12);
        assert!((l2_error_pressure(&d, &s, |x| x[0] * x[1] + 7.0, 12, false).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn norm_of_separable_polynomial() {
        // u = (x²(1-x)² y, 0): ∫∫ = (1/630)(1/3)
        let d = disc(2, 4, Rect::unit());
        let s = State::zeros(&d.dofs);
        let e = l2_error_velocity(&d, &s, |x| [x[0].powi(2) * (1.0 - x[0]).powi(2) * x[1], 0.0], 12).unwrap();
        assert!((e - (1.0f64 / 630.0 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn divergence_examples() {
        let d = disc(1, 4, Rect::unit());
        assert!(divergence_error(&d, &with_velocity(&d, |x| [x[1], x[0]])) < 1e-13);
        assert!((divergence_error(&d, &with_velocity(&d, |x| x)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kinetic_energy_examples() {
        let d = disc(1, 3, Rect::unit());
        assert_eq!(kinetic_energy(&d, &State::zeros(&d.dofs)), 0.0);
        assert!((kinetic_energy(&d, &with_velocity(&d, |_| [1.0, 0.0])) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn random_states_violate_mass_balance() {
        let d = disc(1, 3, Rect::unit());
        let mut s = State::zeros(&d.dofs);
        let mut v = 0.3_f64;
        for x in s.u.iter_mut().chain(s.p.iter_mut()).chain(s.pbar.iter_mut()) {
            v = (v * 7919.0 + 0.1).fract();
            *x = v - 0.5;
        }
        let params = Params::defaults(1.0, 1);
        assert!(max_mass_residual(&d, &params, &s) > 1e-3);
    }

    #[test]
    fn continuous_fields_balance_mass_per_cell() {
        // interpolated divergence-free linear field: the cell flux equals ∫ div u = 0
        let d = disc(1, 3, Rect::unit());
        let s = with_velocity(&d, |x| [x[0] - 2.0 * x[1], 3.0 - x[1]]);
        for r in local_velocity_flux(&d, &s) {
            assert!(r.abs() < 1e-14);
        }
        assert!(global_mass(&d, &s).abs() < 1e-14);
    }

    #[test]
    fn shear_sign_changes_are_located() {
        // u_x = y (x - 1.3) on the wall y = 0: negative shear for x < 1.3
        let d = disc(2, 5, Rect::new(0.0, 0.0, 3.0, 1.0));
        let s = with_velocity(&d, |x| [x[1] * (x[0] - 1.3), 0.0]);
        let iv = negative_shear_intervals(&d, &s, 0.0);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].start, 0.0);
        assert!((iv[0].end.unwrap() - 1.3).abs() < 1e-12);
        assert!((reattachment_length(&d, &s, 0.0, 0.5).unwrap() - 2.6).abs() < 1e-11);
        // on the top wall the inward normal is -y: shear = -(x - 1.3), negative for x > 1.3
        let top = negative_shear_intervals(&d, &s, 1.0);
        assert_eq!(top.len(), 1);
        assert!((top[0].start - 1.3).abs() < 1e-12 && top[0].end.is_none());
        let none = with_velocity(&d, |x| [x[1], 0.0]);
        assert_eq!(reattachment_length(&d, &none, 0.0, 0.5), None);
    }

    #[test]
    fn report_round_trip_and_columns() {
        let rec = RunRecord { run: "a".into(), scenario: "stokes-mms".into(), l2_velocity: Some(0.5), ..Default::default() };
        let rep = Report { runs: vec![rec] };
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), CSV_COLUMNS.len());
        assert_eq!(lines.next().unwrap().split(',').count(), CSV_COLUMNS.len());
        let mut js = Vec::new();
        rep.write_json(&mut js).unwrap();
        let back: Report = serde_json::from_slice(&js).unwrap();
        assert_eq!(back, rep);
    }
}
