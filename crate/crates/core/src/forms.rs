//! Numerical fluxes and cell-level tensors of the hybrid formulation.
//!
//! Local unknown order of a cell: cell velocity (`2 nk`, interleaved), cell
//! pressure (`nm`), facet velocity (`2 · 3kbar`), facet pressure (`3mbar`) and,
//! when a mean-pressure constraint is active, one multiplier. The first two
//! groups are the "local" block, the rest the "global" block.
//!
//! Rows tested with facet velocity functions are assembled with the sign
//! flipped, which makes the Stokes operator symmetric.

use crate::basis::{gauss_legendre_unit, make_quadrature, trace_points, LagrangeBasis, ReferenceElement};
use crate::linalg::DenseMatrix;
use crate::mesh::{Mesh, Point};
use crate::spaces::{affine, local_facet_nodes, BoundaryCondition, BoundaryConditions, DofMap, VectorFn};
use crate::{Error, Result};

/// Scheme constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Kinematic viscosity.
    pub nu: f64,
    /// Interior penalty.
    pub alpha: f64,
    /// Pressure stabilization.
    pub beta: f64,
    /// Weight of the conservative form of advection.
    pub chi: f64,
    pub theta: f64,
    pub dt: f64,
}

impl Params {
    /// `alpha = 6k²`, `beta = 1e-4`, `chi = 1/2`, backward Euler with unit step.
    pub fn defaults(nu: f64, k: usize) -> Self {
        Params { nu, alpha: 6.0 * (k * k) as f64, beta: 1e-4, chi: 0.5, theta: 1.0, dt: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.nu >= 0.0) {
            return bad("viscosity must be non-negative");
        }
        if !(self.alpha > 0.0) {
            return bad("penalty parameter must be positive");
        }
        if !(self.beta >= 0.0) {
            return bad("pressure stabilization must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.chi) {
            return bad("chi must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]");
        }
        if !(self.dt > 0.0) {
            return bad("time step must be positive");
        }
        Ok(())
    }

    /// Coefficient of the pressure difference in the numerical mass flux.
    pub fn tau(&self, h: f64) -> f64 {
        self.beta * h / (self.nu + 1.0)
    }
}

/// Coefficient vectors of a discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub ubar: Vec<f64>,
    pub pbar: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn zeros(dofs: &DofMap) -> Self {
        State {
            u: vec![0.0; dofs.num_cells() * 2 * dofs.nk()],
            p: vec![0.0; dofs.num_cells() * dofs.nm()],
            ubar: vec![0.0; dofs.num_facet_velocity_dofs()],
            pbar: vec![0.0; dofs.num_facet_pressure_dofs()],
            t: 0.0,
        }
    }

    pub fn cell_velocity<'a>(&'a self, dofs: &DofMap, cell: usize) -> &'a [f64] {
        let n = 2 * dofs.nk();
        &self.u[cell * n..(cell + 1) * n]
    }

    pub fn cell_pressure<'a>(&'a self, dofs: &DofMap, cell: usize) -> &'a [f64] {
        let n = dofs.nm();
        &self.p[cell * n..(cell + 1) * n]
    }

    /// Facet vector `[ubar, pbar]` in global facet numbering.
    pub fn facet_vector(&self) -> Vec<f64> {
        let mut v = self.ubar.clone();
        v.extend_from_slice(&self.pbar);
        v
    }

    pub fn set_facet_vector(&mut self, x: &[f64]) {
        let nu = self.ubar.len();
        self.ubar.copy_from_slice(&x[..nu]);
        let np = self.pbar.len();
        self.pbar.copy_from_slice(&x[nu..nu + np]);
    }

    /// Local unknowns of a cell in local order (without multiplier).
    pub fn local_vector(&self, dofs: &DofMap, cell: usize) -> Vec<f64> {
        let mut v = self.cell_velocity(dofs, cell).to_vec();
        v.extend_from_slice(self.cell_pressure(dofs, cell));
        let nu = self.ubar.len();
        for &g in dofs.cell_facet_dofs(cell) {
            v.push(if g < nu { self.ubar[g] } else { self.pbar[g - nu] });
        }
        v
    }

    /// `(1 - theta) a + theta b`.
    pub fn blend(a: &State, b: &State, theta: f64) -> State {
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(x, y)| (1.0 - theta) * x + theta * y).collect()
        };
        State {
            u: mix(&a.u, &b.u),
            p: mix(&a.p, &b.p),
            ubar: mix(&a.ubar, &b.ubar),
            pbar: mix(&a.pbar, &b.pbar),
            t: (1.0 - theta) * a.t + theta * b.t,
        }
    }
}

/// Body force.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    Analytic(VectorFn),
    /// Piecewise-linear field from values at the mesh vertices.
    Nodal(Vec<[f64; 2]>),
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Analytic(_) => write!(f, "Analytic"),
            Forcing::Nodal(v) => write!(f, "Nodal({} vertices)", v.len()),
        }
    }
}

impl Forcing {
    /// Value at reference point `xi` of `cell` (physical point `x`) and time `t`.
    pub fn eval(&self, mesh: &Mesh, cell: usize, xi: [f64; 2], x: Point, t: f64) -> [f64; 2] {
        match self {
            Forcing::Zero => [0.0, 0.0],
            Forcing::Analytic(f) => f(x, t),
            Forcing::Nodal(v) => {
                let c = mesh.cells[cell];
                let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
                let mut out = [0.0; 2];
                for a in 0..3 {
                    out[0] += l[a] * v[c[a]][0];
                    out[1] += l[a] * v[c[a]][1];
                }
                out
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::Zero)
    }
}

// ---------------------------------------------------------------------------
// pointwise fluxes

/// Numerical mass flux `u - tau (pbar - p) n`.
pub fn mass_flux(u: [f64; 2], p: f64, pbar: f64, n: [f64; 2], h: f64, params: &Params) -> [f64; 2] {
    let s = params.tau(h) * (pbar - p);
    [u[0] - s * n[0], u[1] - s * n[1]]
}

/// 1 on inflow (`uhat·n < 0`), 0 otherwise.
pub fn upwind_switch(uhat_n: f64) -> f64 {
    if uhat_n < 0.0 {
        1.0
    } else {
        0.0
    }
}

pub type Tensor = [[f64; 2]; 2];

fn outer(a: [f64; 2], b: [f64; 2]) -> Tensor {
    [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
}

/// `u ⊗ uhat + lambda (ubar - u) ⊗ uhat`.
pub fn advective_flux(u: [f64; 2], ubar: [f64; 2], uhat: [f64; 2], lambda: f64) -> Tensor {
    let carried = [u[0] + lambda * (ubar[0] - u[0]), u[1] + lambda * (ubar[1] - u[1])];
    outer(carried, uhat)
}

/// `pbar I - 2 nu sym(grad u) - (alpha / h) 2 nu (ubar - u) ⊗ n`.
///
/// `grad_u[c][a] = d u_c / d x_a`.
pub fn diffusive_flux(
    grad_u: Tensor,
    u: [f64; 2],
    ubar: [f64; 2],
    pbar: f64,
    n: [f64; 2],
    h: f64,
    params: &Params,
) -> Tensor {
    let nu2 = 2.0 * params.nu;
    let pen = params.alpha / h * nu2;
    let mut s = [[0.0; 2]; 2];
    for c in 0..2 {
        for a in 0..2 {
            let sym = 0.5 * (grad_u[c][a] + grad_u[a][c]);
            s[c][a] = if c == a { pbar } else { 0.0 } - nu2 * sym - pen * (ubar[c] - u[c]) * n[a];
        }
    }
    s
}

/// Physical momentum flux `p I - 2 nu sym(grad u) + u ⊗ u`.
pub fn momentum_flux(grad_u: Tensor, u: [f64; 2], p: f64, nu: f64) -> Tensor {
    let mut s = outer(u, u);
    for c in 0..2 {
        for a in 0..2 {
            s[c][a] += if c == a { p } else { 0.0 } - nu * (grad_u[c][a] + grad_u[a][c]);
        }
    }
    s
}

// ---------------------------------------------------------------------------
// reference tables

/// Basis values on one local facet of the reference cell for one orientation.
#[derive(Debug, Clone)]
pub struct FacetTable {
    pub points: Vec<[f64; 2]>,
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<[f64; 2]>>,
    pub psi: Vec<Vec<f64>>,
}

/// Quadrature and tabulated bases shared by all cells.
#[derive(Debug, Clone)]
pub struct Tables {
    pub cell_points: Vec<[f64; 2]>,
    pub cell_weights: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<[f64; 2]>>,
    pub psi: Vec<Vec<f64>>,
    pub dpsi: Vec<Vec<[f64; 2]>>,
    /// Facet parameters and weights on `[0, 1]`.
    pub facet_t: Vec<f64>,
    pub facet_w: Vec<f64>,
    /// `[local facet][forward]`.
    pub facets: Vec<[FacetTable; 2]>,
    /// Facet velocity and pressure 1D bases at `facet_t`.
    pub phibar: Vec<Vec<f64>>,
    pub psibar: Vec<Vec<f64>>,
}

impl Tables {
    pub fn new(dofs: &DofMap) -> Result<Self> {
        let spec = dofs.spec;
        let p = spec.max_order();
        let cell_degree = (3 * p + 1).max(2 * p + 6);
        let facet_degree = 3 * p + 1;
        let q = make_quadrature(ReferenceElement::Triangle, cell_degree)?;
        let vb = &dofs.velocity_basis;
        let pb = &dofs.pressure_basis;
        let (facet_t, facet_w) = gauss_legendre_unit(facet_degree / 2 + 1);
        let facets = (0..3)
            .map(|f| {
                let make = |fwd: bool| {
                    let points = trace_points(f, fwd, &facet_t);
                    FacetTable {
                        phi: vb.tabulate(&points),
                        dphi: vb.tabulate_grad(&points),
                        psi: pb.tabulate(&points),
                        points,
                    }
                };
                [make(false), make(true)]
            })
            .collect();
        let line: Vec<[f64; 2]> = facet_t.iter().map(|&t| [t, 0.0]).collect();
        let phibar = LagrangeBasis::interval(spec.kbar)?.tabulate(&line);
        let psibar = LagrangeBasis::interval(spec.mbar)?.tabulate(&line);
        Ok(Tables {
            phi: vb.tabulate(&q.points),
            dphi: vb.tabulate_grad(&q.points),
            psi: pb.tabulate(&q.points),
            dpsi: pb.tabulate_grad(&q.points),
            cell_points: q.points,
            cell_weights: q.weights,
            facet_t,
            facet_w,
            facets,
            phibar,
            psibar,
        })
    }
}

/// Affine cell geometry.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub points: [Point; 3],
    pub det: f64,
    /// Inverse Jacobian, `jinv[r][c] = d xi_r / d x_c`.
    pub jinv: [[f64; 2]; 2],
}

impl CellGeometry {
    pub fn new(mesh: &Mesh, cell: usize) -> Self {
        let p = mesh.cell_points(cell);
        let j = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let jinv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        CellGeometry { points: p, det, jinv }
    }

    /// Physical gradient from a reference gradient.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jinv[0][0] * g[0] + self.jinv[1][0] * g[1],
            self.jinv[0][1] * g[0] + self.jinv[1][1] * g[1],
        ]
    }

    pub fn map(&self, xi: [f64; 2]) -> Point {
        affine(&self.points, xi)
    }
}

/// Everything needed to build cell tensors on one mesh and space.
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub bcs: BoundaryConditions,
    pub tables: Tables,
}

impl Discretization {
    pub fn new(mesh: Mesh, dofs: DofMap, bcs: BoundaryConditions) -> Result<Self> {
        let tables = Tables::new(&dofs)?;
        Ok(Discretization { mesh, dofs, bcs, tables })
    }

    /// Local layout sizes `(nl, ng_without_multiplier)`.
    pub fn local_sizes(&self) -> (usize, usize) {
        let s = self.dofs.spec;
        (self.dofs.cell_block(), 2 * 3 * s.kbar + 3 * s.mbar)
    }

    /// Whether facet `facet` carries a traction condition (Neumann or free-slip).
    pub fn is_traction_facet(&self, facet: usize) -> bool {
        self.mesh.is_boundary_facet(facet)
            && matches!(
                self.bcs.on_facet(&self.mesh, facet),
                Ok(BoundaryCondition::Neumann(_)) | Ok(BoundaryCondition::FreeSlip)
            )
    }

    /// Values of the cell fields of `state` at a reference point.
    pub fn eval_cell(&self, state: &State, cell: usize, phi: &[f64], psi: &[f64]) -> ([f64; 2], f64) {
        let uc = state.cell_velocity(&self.dofs, cell);
        let pc = state.cell_pressure(&self.dofs, cell);
        let mut u = [0.0; 2];
        for (i, v) in phi.iter().enumerate() {
            u[0] += v * uc[2 * i];
            u[1] += v * uc[2 * i + 1];
        }
        let p = psi.iter().zip(pc).map(|(a, b)| a * b).sum();
        (u, p)
    }

    /// Physical velocity gradient `g[c][a] = d u_c / d x_a` at a reference point.
    pub fn eval_cell_grad(&self, state: &State, cell: usize, geo: &CellGeometry, dphi: &[[f64; 2]]) -> Tensor {
        let uc = state.cell_velocity(&self.dofs, cell);
        let mut g = [[0.0; 2]; 2];
        for (i, d) in dphi.iter().enumerate() {
            let d = geo.grad(*d);
            for c in 0..2 {
                g[c][0] += uc[2 * i + c] * d[0];
                g[c][1] += uc[2 * i + c] * d[1];
            }
        }
        g
    }

    /// Facet velocity and pressure of `state` at facet quadrature point `q` of
    /// local facet `f` of `cell`.
    pub fn eval_facet(&self, state: &State, cell: usize, f: usize, q: usize) -> ([f64; 2], f64) {
        let facet = self.mesh.cell_facets[cell][f];
        let mut ub = [0.0; 2];
        for (j, v) in self.tables.phibar[q].iter().enumerate() {
            let node = self.dofs.velocity_lattice.facet_node(&self.mesh, facet, j);
            ub[0] += v * state.ubar[2 * node];
            ub[1] += v * state.ubar[2 * node + 1];
        }
        let mut pb = 0.0;
        for (j, v) in self.tables.psibar[q].iter().enumerate() {
            let node = self.dofs.pressure_lattice.facet_node(&self.mesh, facet, j);
            pb += v * state.pbar[node];
        }
        (ub, pb)
    }
}

/// Cell-local linear system, unknowns in local order.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub nl: usize,
    pub ng: usize,
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    /// Global facet DOF of each global-block entry; the multiplier (if any)
    /// is last and maps to `usize::MAX`.
    pub global_dofs: Vec<usize>,
}

impl LocalSystem {
    pub fn size(&self) -> usize {
        self.nl + self.ng
    }

    pub fn has_multiplier(&self) -> bool {
        self.global_dofs.last() == Some(&usize::MAX)
    }
}

/// Time-stepping data: the solution at `t_n`.
#[derive(Debug, Clone, Copy)]
pub struct Stepping<'a> {
    pub previous: &'a State,
}

/// How a cell system is built.
#[derive(Debug, Clone, Copy)]
pub struct Assembly<'a> {
    /// Frozen advective state (`None` drops advection: Stokes).
    pub advection: Option<&'a State>,
    /// Previous time level (`None`: steady problem).
    pub stepping: Option<Stepping<'a>>,
    /// Time at which steady loads are evaluated, or `t_n` when stepping.
    pub time: f64,
    /// Append a mean cell-pressure multiplier.
    pub mean_pressure: bool,
}

/// Operator of the steady problem and its parts that the θ-scheme needs.
struct Pieces {
    /// Steady operator over all local unknowns (multiplier included).
    a: DenseMatrix,
    /// Cell-velocity mass matrix (`2nk × 2nk`).
    mass: DenseMatrix,
    /// Loads: body force on cell-velocity rows, traction on facet rows.
    load_now: Vec<f64>,
    load_next: Vec<f64>,
}

/// Cell tensors of the (possibly time-discrete) hybrid problem.
pub fn cell_tensors(
    disc: &Discretization,
    cell: usize,
    params: &Params,
    forcing: &Forcing,
    mode: &Assembly,
) -> LocalSystem {
    let (nl, ng0) = disc.local_sizes();
    let ng = ng0 + mode.mean_pressure as usize;
    let n = nl + ng;
    let (t0, t1) = match mode.stepping {
        Some(_) => (mode.time, mode.time + params.dt),
        None => (mode.time, mode.time),
    };
    let pieces = steady_pieces(disc, cell, params, forcing, mode.advection, mode.mean_pressure, t0, t1);
    let nu2k = 2 * disc.dofs.nk();
    let kbar = disc.dofs.spec.kbar;
    let is_momentum_row = |r: usize| r < nu2k || (r >= nl && r < nl + 6 * kbar);

    let mut matrix = pieces.a.clone();
    let mut rhs = vec![0.0; n];
    match mode.stepping {
        None => {
            rhs.copy_from_slice(&pieces.load_next);
        }
        Some(step) => {
            let theta = params.theta;
            let inv_dt = 1.0 / params.dt;
            let mut x_prev = step.previous.local_vector(&disc.dofs, cell);
            if mode.mean_pressure {
                x_prev.push(0.0);
            }
            let a_prev = pieces.a.mul_vec(&x_prev);
            let u_prev = &x_prev[..nu2k];
            let m_prev = pieces.mass.mul_vec(u_prev);
            for r in 0..n {
                if is_momentum_row(r) {
                    for v in matrix.row_mut(r) {
                        *v *= theta;
                    }
                    let load = (1.0 - theta) * pieces.load_now[r] + theta * pieces.load_next[r];
                    rhs[r] = load - (1.0 - theta) * a_prev[r];
                    if r < nu2k {
                        rhs[r] += inv_dt * m_prev[r];
                        for c in 0..nu2k {
                            matrix[(r, c)] += inv_dt * pieces.mass[(r, c)];
                        }
                    }
                } else {
                    rhs[r] = pieces.load_next[r];
                }
            }
        }
    }
    let mut global_dofs = disc.dofs.cell_facet_dofs(cell).to_vec();
    if mode.mean_pressure {
        global_dofs.push(usize::MAX);
    }
    LocalSystem { nl, ng, matrix, rhs, global_dofs }
}

#[allow(clippy::too_many_arguments)]
fn steady_pieces(
    disc: &Discretization,
    cell: usize,
    params: &Params,
    forcing: &Forcing,
    advection: Option<&State>,
    mean_pressure: bool,
    t0: f64,
    t1: f64,
) -> Pieces {
    let mesh = &disc.mesh;
    let dofs = &disc.dofs;
    let tab = &disc.tables;
    let spec = dofs.spec;
    let nk = dofs.nk();
    let nm = dofs.nm();
    let (nl, ng0) = disc.local_sizes();
    let n = nl + ng0 + mean_pressure as usize;
    let iu = |i: usize, c: usize| 2 * i + c;
    let ip = |i: usize| 2 * nk + i;
    let iub = |pos: usize, c: usize| nl + 2 * pos + c;
    let ipb = |pos: usize| nl + 6 * spec.kbar + pos;
    let imu = nl + ng0;

    let nu = params.nu;
    let nu2 = 2.0 * nu;
    let chi = params.chi;
    let geo = CellGeometry::new(mesh, cell);
    let jac = geo.det.abs();

    let mut a = DenseMatrix::zeros(n, n);
    let mut mass = DenseMatrix::zeros(2 * nk, 2 * nk);
    let mut load_now = vec![0.0; n];
    let mut load_next = vec![0.0; n];

    // cell integrals
    let mut gphi = vec![[0.0; 2]; nk];
    let mut gpsi = vec![[0.0; 2]; nm];
    for (q, &wq) in tab.cell_weights.iter().enumerate() {
        let w = wq * jac;
        let phi = &tab.phi[q];
        let psi = &tab.psi[q];
        for i in 0..nk {
            gphi[i] = geo.grad(tab.dphi[q][i]);
        }
        for i in 0..nm {
            gpsi[i] = geo.grad(tab.dpsi[q][i]);
        }
        let wadv = advection.map(|s| disc.eval_cell(s, cell, phi, psi).0);
        let xi = tab.cell_points[q];
        let x = geo.map(xi);
        let f0 = forcing.eval(mesh, cell, xi, x, t0);
        let f1 = if t1 == t0 { f0 } else { forcing.eval(mesh, cell, xi, x, t1) };

        for i in 0..nk {
            for c in 0..2 {
                let r = iu(i, c);
                load_now[r] += w * f0[c] * phi[i];
                load_next[r] += w * f1[c] * phi[i];
                for j in 0..nk {
                    let mm = w * phi[i] * phi[j];
                    mass[(r, iu(j, c))] += mm;
                    let gg = gphi[i][0] * gphi[j][0] + gphi[i][1] * gphi[j][1];
                    for d in 0..2 {
                        let mut v = nu * gphi[i][d] * gphi[j][c];
                        if c == d {
                            v += nu * gg;
                        }
                        a[(r, iu(j, d))] += w * v;
                    }
                    if let Some(wv) = wadv {
                        let w_gi = wv[0] * gphi[i][0] + wv[1] * gphi[i][1];
                        let w_gj = wv[0] * gphi[j][0] + wv[1] * gphi[j][1];
                        a[(r, iu(j, c))] += w * (-chi * phi[j] * w_gi + (1.0 - chi) * w_gj * phi[i]);
                    }
                }
                for j in 0..nm {
                    a[(r, ip(j))] -= w * psi[j] * gphi[i][c];
                }
            }
        }
        for i in 0..nm {
            let r = ip(i);
            for j in 0..nk {
                for d in 0..2 {
                    a[(r, iu(j, d))] += w * phi[j] * gpsi[i][d];
                }
            }
            if mean_pressure {
                a[(r, imu)] += w * psi[i];
                a[(imu, r)] += w * psi[i];
            }
        }
    }

    // facet integrals
    let mut sn = vec![[[0.0; 2]; 2]; nk];
    for f in 0..3 {
        let facet = mesh.cell_facets[cell][f];
        let fwd = mesh.facet_is_forward(cell, f);
        let ft = &tab.facets[f][fwd as usize];
        let nrm = mesh.outward_normal(cell, f);
        let len = mesh.facet_length(facet);
        let h = mesh.facet_size(facet);
        let tau = params.tau(h);
        let pen = params.alpha / h * nu2;
        let vnodes = local_facet_nodes(spec.kbar, f, fwd);
        let pnodes = local_facet_nodes(spec.mbar, f, fwd);
        let boundary = mesh.is_boundary_facet(facet);
        let traction = disc.is_traction_facet(facet);
        let h_fn = match (traction, disc.bcs.on_facet(mesh, facet)) {
            (true, Ok(BoundaryCondition::Neumann(g))) => Some(g.clone()),
            _ => None,
        };
        for (q, &wq) in tab.facet_w.iter().enumerate() {
            let w = wq * len;
            let phi = &ft.phi[q];
            let psi = &ft.psi[q];
            let pbv = &tab.phibar[q];
            let psb = &tab.psibar[q];
            for i in 0..nk {
                let g = geo.grad(ft.dphi[q][i]);
                let dn = g[0] * nrm[0] + g[1] * nrm[1];
                // sn[i][d][c] = (sym grad(phi_i e_d) n)_c
                for d in 0..2 {
                    for c in 0..2 {
                        let mut v = 0.5 * nrm[d] * g[c];
                        if c == d {
                            v += 0.5 * dn;
                        }
                        sn[i][d][c] = v;
                    }
                }
            }
            let (an, lam) = match advection {
                Some(s) => {
                    let (wu, wp) = disc.eval_cell(s, cell, phi, psi);
                    let (_, wpb) = disc.eval_facet(s, cell, f, q);
                    let uh = mass_flux(wu, wp, wpb, nrm, h, params);
                    let an = uh[0] * nrm[0] + uh[1] * nrm[1];
                    (an, upwind_switch(an))
                }
                None => (0.0, 0.0),
            };

            // cell-velocity rows
            for i in 0..nk {
                for c in 0..2 {
                    let r = iu(i, c);
                    for j in 0..nk {
                        let pp = phi[i] * phi[j];
                        let mut v = (chi * an - lam * an + pen) * pp;
                        // consistency and adjoint terms
                        v -= nu2 * phi[i] * sn[j][c][c];
                        v -= nu2 * phi[j] * sn[i][c][c];
                        a[(r, iu(j, c))] += w * v;
                        let d = 1 - c;
                        let off = -nu2 * phi[i] * sn[j][d][c] - nu2 * phi[j] * sn[i][c][d];
                        a[(r, iu(j, d))] += w * off;
                    }
                    for (jb, &pos) in vnodes.iter().enumerate() {
                        let pb = pbv[jb];
                        a[(r, iub(pos, c))] += w * (lam * an - pen) * phi[i] * pb;
                        for d in 0..2 {
                            a[(r, iub(pos, d))] += w * nu2 * pb * sn[i][c][d];
                        }
                    }
                    for (jb, &pos) in pnodes.iter().enumerate() {
                        a[(r, ipb(pos))] += w * psb[jb] * nrm[c] * phi[i];
                    }
                }
            }

            // facet-velocity rows (sign flipped)
            for (ib, &posi) in vnodes.iter().enumerate() {
                let pbi = pbv[ib];
                for c in 0..2 {
                    let r = iub(posi, c);
                    for j in 0..nk {
                        let coef = chi * an + (1.0 - chi) * an - lam * an + pen;
                        a[(r, iu(j, c))] -= w * coef * phi[j] * pbi;
                        for d in 0..2 {
                            a[(r, iu(j, d))] += w * nu2 * pbi * sn[j][d][c];
                        }
                    }
                    for (jb, &posj) in vnodes.iter().enumerate() {
                        let coef = -(1.0 - chi) * an + lam * an - pen;
                        a[(r, iub(posj, c))] -= w * coef * pbi * pbv[jb];
                    }
                    for (jb, &posj) in pnodes.iter().enumerate() {
                        a[(r, ipb(posj))] -= w * psb[jb] * nrm[c] * pbi;
                    }
                }
            }

            // continuity rows
            for i in 0..nm {
                let r = ip(i);
                for j in 0..nk {
                    for d in 0..2 {
                        a[(r, iu(j, d))] -= w * nrm[d] * phi[j] * psi[i];
                    }
                }
                for (jb, &pos) in pnodes.iter().enumerate() {
                    a[(r, ipb(pos))] += w * tau * psb[jb] * psi[i];
                }
                for j in 0..nm {
                    a[(r, ip(j))] -= w * tau * psi[j] * psi[i];
                }
            }
            for (ib, &posi) in pnodes.iter().enumerate() {
                let r = ipb(posi);
                let qb = psb[ib];
                for j in 0..nk {
                    for d in 0..2 {
                        a[(r, iu(j, d))] += w * nrm[d] * phi[j] * qb;
                    }
                }
                for (jb, &posj) in pnodes.iter().enumerate() {
                    a[(r, ipb(posj))] -= w * tau * psb[jb] * qb;
                }
                for j in 0..nm {
                    a[(r, ip(j))] += w * tau * psi[j] * qb;
                }
                if boundary {
                    for (jb, &posj) in vnodes.iter().enumerate() {
                        for d in 0..2 {
                            a[(r, iub(posj, d))] -= w * nrm[d] * pbv[jb] * qb;
                        }
                    }
                }
            }

            if traction {
                // facet-velocity advection on the traction boundary, frozen normal flux
                if let Some(s) = advection {
                    let (ubn, _) = disc.eval_facet(s, cell, f, q);
                    let bn = ubn[0] * nrm[0] + ubn[1] * nrm[1];
                    let lam_n = upwind_switch(bn);
                    let coef = -(chi - lam_n) * bn;
                    for (ib, &posi) in vnodes.iter().enumerate() {
                        for (jb, &posj) in vnodes.iter().enumerate() {
                            for c in 0..2 {
                                a[(iub(posi, c), iub(posj, c))] -= w * coef * pbv[ib] * pbv[jb];
                            }
                        }
                    }
                }
                if let Some(g) = &h_fn {
                    let x = geo.map(ft.points[q]);
                    let h0 = g(x, t0);
                    let h1 = if t1 == t0 { h0 } else { g(x, t1) };
                    for (ib, &posi) in vnodes.iter().enumerate() {
                        for c in 0..2 {
                            load_now[iub(posi, c)] -= w * h0[c] * pbv[ib];
                            load_next[iub(posi, c)] -= w * h1[c] * pbv[ib];
                        }
                    }
                }
            }
        }
    }
    Pieces { a, mass, load_now, load_next }
}
