#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;

use hybridns::forms::{cell_tensors, Assembly, Discretization, Forcing, Params, State};
use hybridns::mesh::{BoundaryTag, Mesh, Rect};
use hybridns::spaces::{BoundaryCondition, BoundaryConditions, Constraints, DofMap, SpaceSpec};

/// Gaussian elimination with partial pivoting on a row-major copy.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        assert!(a[piv][col].abs() > 1e-300, "oracle matrix is singular at column {col}");
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Uncondensed global matrix and right-hand side over every unknown:
/// cell blocks first, then facet DOFs, then the mean-pressure multiplier
/// when `mode.mean_pressure` is set. No constraints applied.
pub fn monolithic_system(
    disc: &Discretization,
    params: &Params,
    forcing: &Forcing,
    mode: &Assembly,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let ncell = disc.mesh.num_cells();
    let (nl, _) = disc.local_sizes();
    let nf = disc.dofs.num_facet_dofs();
    let n = ncell * nl + nf + mode.mean_pressure as usize;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for cell in 0..ncell {
        let local = cell_tensors(disc, cell, params, forcing, mode);
        let map: Vec<usize> = (0..nl)
            .map(|i| cell * nl + i)
            .chain(local.global_dofs.iter().map(|&g| if g == usize::MAX { n - 1 } else { ncell * nl + g }))
            .collect();
        for (i, &gi) in map.iter().enumerate() {
            b[gi] += local.rhs[i];
            for (j, &gj) in map.iter().enumerate() {
                a[gi][gj] += local.matrix[(i, j)];
            }
        }
    }
    (a, b)
}

/// Direct solve of the uncondensed problem; constrained facet DOFs become
/// identity rows. With `mean` the bordered multiplier row prescribes `∫ p`.
pub fn monolithic_solve(
    disc: &Discretization,
    params: &Params,
    forcing: &Forcing,
    mode: &Assembly,
    constraints: &Constraints,
    mean: Option<f64>,
) -> State {
    let mode = Assembly { mean_pressure: mean.is_some(), ..*mode };
    let (mut a, mut b) = monolithic_system(disc, params, forcing, &mode);
    let ncell = disc.mesh.num_cells();
    let (nl, _) = disc.local_sizes();
    for g in 0..disc.dofs.num_facet_dofs() {
        if let Some(v) = constraints.get(g) {
            let r = ncell * nl + g;
            a[r].iter_mut().for_each(|x| *x = 0.0);
            a[r][r] = 1.0;
            b[r] = v;
        }
    }
    if let Some(c) = mean {
        let last = b.len() - 1;
        b[last] += c;
    }
    let x = gauss_solve(a, b);
    unpack(disc, &x)
}

pub fn unpack(disc: &Discretization, x: &[f64]) -> State {
    let mut s = State::zeros(&disc.dofs);
    let nk2 = 2 * disc.dofs.nk();
    let nm = disc.dofs.nm();
    let (nl, _) = disc.local_sizes();
    let ncell = disc.mesh.num_cells();
    for cell in 0..ncell {
        let o = cell * nl;
        s.u[cell * nk2..(cell + 1) * nk2].copy_from_slice(&x[o..o + nk2]);
        s.p[cell * nm..(cell + 1) * nm].copy_from_slice(&x[o + nk2..o + nl]);
    }
    s.set_facet_vector(&x[ncell * nl..ncell * nl + disc.dofs.num_facet_dofs()]);
    s
}

/// Concatenation `[u, p, ubar, pbar]` for cross-route comparisons.
pub fn flatten(s: &State) -> Vec<f64> {
    s.u.iter().chain(&s.p).chain(&s.ubar).chain(&s.pbar).copied().collect()
}

/// `max |a - b| / max(1, max |b|)`.
pub fn relative_difference(a: &State, b: &State) -> f64 {
    let (a, b) = (flatten(a), flatten(b));
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn tagged_mesh(nx: usize, ny: usize, bbox: Rect, tag: impl Fn([f64; 2]) -> &'static str) -> Mesh {
    let mut mesh = Mesh::rectangle(nx, ny, bbox).unwrap();
    mesh.tag_boundary(|p| BoundaryTag::from(tag(p)));
    mesh
}

/// Channel on the unit square: parabolic inflow on the left, traction-free
/// outflow on the right, no-slip walls.
pub fn channel(nx: usize, ny: usize, spec: SpaceSpec) -> Discretization {
    let mesh = tagged_mesh(nx, ny, Rect::unit(), |p| {
        if p[0] < 1e-12 {
            "inflow"
        } else if p[0] > 1.0 - 1e-12 {
            "outflow"
        } else {
            "wall"
        }
    });
    let dofs = DofMap::new(&mesh, spec).unwrap();
    let bcs = BoundaryConditions::new()
        .with("inflow", BoundaryCondition::Dirichlet(Arc::new(|x, _| [4.0 * x[1] * (1.0 - x[1]), 0.0])))
        .with("wall", BoundaryCondition::Dirichlet(Arc::new(|_, _| [0.0, 0.0])))
        .with("outflow", BoundaryCondition::Neumann(Arc::new(|x, _| [0.1 * x[1], 0.0])));
    Discretization::new(mesh, dofs, bcs).unwrap()
}

/// Unit square with no-slip walls.
pub fn noslip_box(nx: usize, ny: usize, spec: SpaceSpec) -> Discretization {
    let mesh = tagged_mesh(nx, ny, Rect::unit(), |_| "wall");
    let dofs = DofMap::new(&mesh, spec).unwrap();
    let bcs = BoundaryConditions::new().with("wall", BoundaryCondition::Dirichlet(Arc::new(|_, _| [0.0, 0.0])));
    Discretization::new(mesh, dofs, bcs).unwrap()
}

/// Cell grids with at most eight triangles.
pub const SMALL_GRIDS: [(usize, usize); 8] = [(1, 1), (2, 1), (1, 2), (3, 1), (1, 3), (4, 1), (1, 4), (2, 2)];

/// Deterministic pseudo-random state (splitmix-style hash of the index).
pub fn scrambled_state(dofs: &DofMap, salt: u64) -> State {
    let mut s = State::zeros(dofs);
    let mut k = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut next = || {
        k = k.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = k;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for v in s.u.iter_mut().chain(s.p.iter_mut()).chain(s.ubar.iter_mut()).chain(s.pbar.iter_mut()) {
        *v = next();
    }
    s
}

/// Continuous-Galerkin count on the facet skeleton, by enumerating the
/// equispaced points of every facet and deduplicating their coordinates.
pub fn skeleton_lattice_count(mesh: &Mesh, order: usize) -> usize {
    let mut seen = HashSet::new();
    for f in 0..mesh.num_facets() {
        let [a, b] = mesh.facets[f];
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        for j in 0..=order {
            let t = j as f64 / order as f64;
            let x = pa[0] + t * (pb[0] - pa[0]);
            let y = pa[1] + t * (pb[1] - pa[1]);
            seen.insert(((x * 1e9).round() as i64, (y * 1e9).round() as i64));
        }
    }
    seen.len()
}

/// State in the monolithic ordering of [`monolithic_system`] (no multiplier).
pub fn pack(disc: &Discretization, s: &State) -> Vec<f64> {
    let mut x = Vec::new();
    for cell in 0..disc.mesh.num_cells() {
        x.extend_from_slice(s.cell_velocity(&disc.dofs, cell));
        x.extend_from_slice(s.cell_pressure(&disc.dofs, cell));
    }
    x.extend(s.facet_vector());
    x
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}
