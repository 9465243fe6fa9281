//! Static condensation of cell unknowns, global assembly and recovery.

use crate::forms::{cell_tensors, Assembly, CellGeometry, Discretization, Forcing, LocalSystem, Params, State};
use crate::linalg::{DenseLu, DenseMatrix, SparseLu, SparseMatrix};
use crate::spaces::Constraints;
use crate::{Error, Result};

/// What is needed to rebuild the cell unknowns from the global ones.
#[derive(Debug, Clone)]
pub struct Recovery {
    /// `ll⁻¹ lg`
    pub coupling: DenseMatrix,
    /// `ll⁻¹ rhs_l`
    pub offset: Vec<f64>,
}

impl Recovery {
    /// Cell unknowns for the given global-block values.
    pub fn apply(&self, xg: &[f64]) -> Vec<f64> {
        let c = self.coupling.mul_vec(xg);
        self.offset.iter().zip(&c).map(|(a, b)| a - b).collect()
    }
}

/// Eliminates the local block: returns the Schur complement
/// `gg - gl ll⁻¹ lg`, the reduced right-hand side and the recovery data.
pub fn condense(local: &LocalSystem) -> Result<(DenseMatrix, Vec<f64>, Recovery)> {
    let (nl, ng) = (local.nl, local.ng);
    let lrows: Vec<usize> = (0..nl).collect();
    let grows: Vec<usize> = (nl..nl + ng).collect();
    let ll = local.matrix.select(&lrows, &lrows);
    let mut rhs_block = DenseMatrix::zeros(nl, ng + 1);
    for i in 0..nl {
        for j in 0..ng {
            rhs_block[(i, j)] = local.matrix[(i, nl + j)];
        }
        rhs_block[(i, ng)] = local.rhs[i];
    }
    let lu = DenseLu::factor(&ll)?;
    let x = lu.solve_matrix(&rhs_block);
    let mut schur = local.matrix.select(&grows, &grows);
    let mut rg: Vec<f64> = local.rhs[nl..].to_vec();
    for a in 0..ng {
        let row = local.matrix.row(nl + a);
        for k in 0..nl {
            let g = row[k];
            if g == 0.0 {
                continue;
            }
            let xr = x.row(k);
            for b in 0..ng {
                schur[(a, b)] -= g * xr[b];
            }
            rg[a] -= g * xr[ng];
        }
    }
    let mut coupling = DenseMatrix::zeros(nl, ng);
    let mut offset = vec![0.0; nl];
    for i in 0..nl {
        coupling.row_mut(i).copy_from_slice(&x.row(i)[..ng]);
        offset[i] = x[(i, ng)];
    }
    Ok((schur, rg, Recovery { coupling, offset }))
}

/// Global system over the free facet unknowns.
pub struct CondensedSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Row of each global facet DOF, `None` when constrained.
    pub rows: Vec<Option<usize>>,
    pub constraints: Constraints,
    pub recoveries: Vec<Recovery>,
}

impl CondensedSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Full facet vector from a solution of the condensed system.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.rows.len()];
        for (dof, row) in self.rows.iter().enumerate() {
            full[dof] = match row {
                Some(r) => x[*r],
                None => self.constraints.get(dof).unwrap_or(0.0),
            };
        }
        full
    }

    /// Cell unknowns of every cell from the full facet vector.
    pub fn recover(&self, disc: &Discretization, facet: &[f64]) -> State {
        let mut state = State::zeros(&disc.dofs);
        state.set_facet_vector(facet);
        let nk2 = 2 * disc.dofs.nk();
        let nm = disc.dofs.nm();
        for (cell, rec) in self.recoveries.iter().enumerate() {
            let xg: Vec<f64> = disc.dofs.cell_facet_dofs(cell).iter().map(|&g| facet[g]).collect();
            let xl = rec.apply(&xg);
            state.u[cell * nk2..(cell + 1) * nk2].copy_from_slice(&xl[..nk2]);
            state.p[cell * nm..(cell + 1) * nm].copy_from_slice(&xl[nk2..]);
        }
        state
    }
}

/// Condenses every cell and scatters the Schur complements; constrained
/// facet DOFs are moved to the right-hand side.
pub fn assemble(
    disc: &Discretization,
    params: &Params,
    forcing: &Forcing,
    mode: &Assembly,
    constraints: &Constraints,
) -> Result<CondensedSystem> {
    let nf = disc.dofs.num_facet_dofs();
    let mut rows = vec![None; nf];
    let mut dim = 0;
    for (dof, r) in rows.iter_mut().enumerate() {
        if !constraints.is_fixed(dof) {
            *r = Some(dim);
            dim += 1;
        }
    }
    let mode = Assembly { mean_pressure: false, ..*mode };

    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; dim];
    let mut recoveries = Vec::with_capacity(disc.mesh.num_cells());
    for cell in 0..disc.mesh.num_cells() {
        let local = cell_tensors(disc, cell, params, forcing, &mode);
        let (schur, rg, rec) =
            condense(&local).map_err(|e| Error::Condensation { cell, source: Box::new(e) })?;
        let map: Vec<Option<usize>> = local.global_dofs.iter().map(|&g| rows[g]).collect();
        for (a, ra) in map.iter().enumerate() {
            let Some(ra) = *ra else { continue };
            rhs[ra] += rg[a];
            for (b, rb) in map.iter().enumerate() {
                match rb {
                    Some(rb) => triplets.push((ra, *rb, schur[(a, b)])),
                    None => {
                        let v = constraints.get(local.global_dofs[b]).unwrap_or(0.0);
                        rhs[ra] -= schur[(a, b)] * v;
                    }
                }
            }
        }
        recoveries.push(rec);
    }
    Ok(CondensedSystem {
        matrix: SparseMatrix::from_triplets(dim, dim, &triplets),
        rhs,
        rows,
        constraints: constraints.clone(),
        recoveries,
    })
}

/// Keeps a sparse factorization alive between solves with the same pattern.
#[derive(Default)]
pub struct FactorCache {
    lu: Option<SparseLu>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        match &mut self.lu {
            Some(lu) => lu.refactor(a)?,
            None => self.lu = Some(SparseLu::factor(a)?),
        }
        self.lu.as_ref().expect("factorization present").solve(b)
    }
}

/// `(∫ p_h, |Ω|)`.
fn pressure_mean_data(disc: &Discretization, state: &State) -> (f64, f64) {
    let (mut integral, mut area) = (0.0, 0.0);
    for cell in 0..disc.mesh.num_cells() {
        let jac = CellGeometry::new(&disc.mesh, cell).det.abs();
        let pc = state.cell_pressure(&disc.dofs, cell);
        for (q, &w) in disc.tables.cell_weights.iter().enumerate() {
            let p: f64 = disc.tables.psi[q].iter().zip(pc).map(|(a, b)| a * b).sum();
            integral += w * jac * p;
            area += w * jac;
        }
    }
    (integral, area)
}

/// Assembles, solves and recovers one linear problem.
///
/// With `mean_pressure = Some(c)` the constant-pressure mode is removed by
/// anchoring the last free facet pressure DOF at zero; the solution is then
/// shifted by a constant so that `∫ p_h = c`. This gives the same discrete
/// solution as a mean-value multiplier whenever the problem has no other
/// pressure constraint.
pub fn solve_linear(
    disc: &Discretization,
    params: &Params,
    forcing: &Forcing,
    mode: &Assembly,
    constraints: &Constraints,
    mean_pressure: Option<f64>,
    cache: &mut FactorCache,
) -> Result<State> {
    let mut constraints = constraints.clone();
    if mean_pressure.is_some() {
        let first = disc.dofs.num_facet_velocity_dofs();
        let anchor = (first..disc.dofs.num_facet_dofs())
            .rev()
            .find(|&d| !constraints.is_fixed(d))
            .ok_or_else(|| Error::InvalidArgument("no free facet pressure to anchor".into()))?;
        if (first..disc.dofs.num_facet_dofs()).any(|d| constraints.is_fixed(d)) {
            return Err(Error::InvalidArgument("mean-pressure constraint combined with pressure pins".into()));
        }
        constraints.fix(anchor, 0.0);
    }
    let sys = assemble(disc, params, forcing, mode, &constraints)?;
    let x = cache.solve(&sys.matrix, &sys.rhs)?;
    let mut state = sys.recover(disc, &sys.expand(&x));
    if let Some(c) = mean_pressure {
        let (integral, area) = pressure_mean_data(disc, &state);
        let shift = (c - integral) / area;
        for v in state.p.iter_mut().chain(state.pbar.iter_mut()) {
            *v += shift;
        }
    }
    Ok(state)
}
