//! Broken cell spaces, continuous facet-skeleton spaces and their DOF maps.
//!
//! Cell unknowns of cell `c` form one contiguous block: velocity first
//! (node-major, components interleaved `2i + comp`), then pressure. Facet
//! unknowns are global: facet velocity at `2 · node + comp`, facet pressure at
//! `2 · N_vel + node`, where `node` indexes the respective skeleton lattice.

use std::sync::Arc;

use crate::basis::{LagrangeBasis, MAX_ORDER};
use crate::mesh::{local_facet_vertex_indices, BoundaryTag, Mesh, Point};
use crate::{Error, Result};

/// Polynomial orders: cell velocity `k`, facet velocity `kbar`, cell pressure
/// `m`, facet pressure `mbar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceSpec {
    pub k: usize,
    pub kbar: usize,
    pub m: usize,
    pub mbar: usize,
}

impl SpaceSpec {
    pub fn new(k: usize, kbar: usize, m: usize, mbar: usize) -> Result<Self> {
        if k < 1 || kbar < 1 || mbar < 1 {
            return Err(Error::InvalidArgument(format!(
                "orders k={k}, kbar={kbar}, mbar={mbar} must be at least 1"
            )));
        }
        for order in [k, kbar, m, mbar] {
            if order > MAX_ORDER {
                return Err(Error::UnsupportedOrder { order, max: MAX_ORDER });
            }
        }
        Ok(SpaceSpec { k, kbar, m, mbar })
    }

    pub fn equal_order(k: usize) -> Result<Self> {
        Self::new(k, k, k, k)
    }

    pub fn max_order(&self) -> usize {
        self.k.max(self.kbar).max(self.m).max(self.mbar)
    }
}

/// Continuous Lagrange lattice of order `r` on the facet skeleton.
///
/// Vertices come first, then `r - 1` interior nodes per facet ordered along
/// the facet's global orientation.
#[derive(Debug, Clone)]
pub struct SkeletonLattice {
    order: usize,
    num_vertices: usize,
    coords: Vec<Point>,
}

impl SkeletonLattice {
    pub fn new(mesh: &Mesh, order: usize) -> Self {
        assert!(order >= 1);
        let mut coords = mesh.vertices.clone();
        for &[a, b] in &mesh.facets {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            for j in 1..order {
                let t = j as f64 / order as f64;
                coords.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
            }
        }
        SkeletonLattice { order, num_vertices: mesh.num_vertices(), coords }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    /// Lattice node of the `j`-th point (`0..=order`) along `facet`.
    pub fn facet_node(&self, mesh: &Mesh, facet: usize, j: usize) -> usize {
        let [a, b] = mesh.facets[facet];
        if j == 0 {
            a
        } else if j == self.order {
            b
        } else {
            self.num_vertices + facet * (self.order - 1) + (j - 1)
        }
    }

    /// Nodes of `facet` ordered along its orientation.
    pub fn facet_nodes(&self, mesh: &Mesh, facet: usize) -> Vec<usize> {
        (0..=self.order).map(|j| self.facet_node(mesh, facet, j)).collect()
    }

    /// Nodes touched by a cell, in cell-local order: the three vertices, then
    /// the interior nodes of each local facet.
    pub fn cell_nodes(&self, mesh: &Mesh, cell: usize) -> Vec<usize> {
        let mut out: Vec<usize> = mesh.cells[cell].to_vec();
        for f in 0..3 {
            let facet = mesh.cell_facets[cell][f];
            out.extend((1..self.order).map(|j| self.facet_node(mesh, facet, j)));
        }
        out
    }
}

/// Number of skeleton nodes touched by one cell for a lattice of order `r`.
pub fn nodes_per_cell(order: usize) -> usize {
    3 * order
}

/// Positions in the cell-local node list (see [`SkeletonLattice::cell_nodes`])
/// of the `order + 1` nodes of local facet `f`, ordered along the global
/// facet orientation.
pub fn local_facet_nodes(order: usize, f: usize, forward: bool) -> Vec<usize> {
    let (a, b) = local_facet_vertex_indices(f);
    let (lo, hi) = if forward { (a, b) } else { (b, a) };
    let mut out = Vec::with_capacity(order + 1);
    out.push(lo);
    out.extend((1..order).map(|j| 3 + f * (order - 1) + (j - 1)));
    out.push(hi);
    out
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub spec: SpaceSpec,
    num_cells: usize,
    pub velocity_basis: LagrangeBasis,
    pub pressure_basis: LagrangeBasis,
    pub velocity_lattice: SkeletonLattice,
    pub pressure_lattice: SkeletonLattice,
    cell_facet_dofs: Vec<Vec<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, spec: SpaceSpec) -> Result<Self> {
        let velocity_basis = LagrangeBasis::triangle(spec.k)?;
        let pressure_basis = LagrangeBasis::triangle(spec.m)?;
        let velocity_lattice = SkeletonLattice::new(mesh, spec.kbar);
        let pressure_lattice = SkeletonLattice::new(mesh, spec.mbar);
        let nv = velocity_lattice.len();
        let cell_facet_dofs = (0..mesh.num_cells())
            .map(|c| {
                let mut d = Vec::with_capacity(2 * 3 * spec.kbar + 3 * spec.mbar);
                for n in velocity_lattice.cell_nodes(mesh, c) {
                    d.push(2 * n);
                    d.push(2 * n + 1);
                }
                d.extend(pressure_lattice.cell_nodes(mesh, c).into_iter().map(|n| 2 * nv + n));
                d
            })
            .collect();
        Ok(DofMap {
            spec,
            num_cells: mesh.num_cells(),
            velocity_basis,
            pressure_basis,
            velocity_lattice,
            pressure_lattice,
            cell_facet_dofs,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// Scalar basis functions per cell for velocity (`nk`) and pressure (`nm`).
    pub fn nk(&self) -> usize {
        self.velocity_basis.len()
    }

    pub fn nm(&self) -> usize {
        self.pressure_basis.len()
    }

    /// Cell unknowns per cell (velocity and pressure).
    pub fn cell_block(&self) -> usize {
        2 * self.nk() + self.nm()
    }

    pub fn num_cell_dofs(&self) -> usize {
        self.num_cells * self.cell_block()
    }

    pub fn num_facet_velocity_dofs(&self) -> usize {
        2 * self.velocity_lattice.len()
    }

    pub fn num_facet_pressure_dofs(&self) -> usize {
        self.pressure_lattice.len()
    }

    pub fn num_facet_dofs(&self) -> usize {
        self.num_facet_velocity_dofs() + self.num_facet_pressure_dofs()
    }

    /// Global facet DOFs of a cell in local order: facet velocity
    /// (`2 · 3kbar`) then facet pressure (`3mbar`).
    pub fn cell_facet_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_facet_dofs[cell]
    }

    /// Global facet pressure DOF of pressure-lattice node `node`.
    pub fn facet_pressure_dof(&self, node: usize) -> usize {
        self.num_facet_velocity_dofs() + node
    }

    /// Physical coordinates of the velocity (or pressure) nodes of a cell.
    pub fn cell_node_coords(&self, mesh: &Mesh, cell: usize, pressure: bool) -> Vec<Point> {
        let basis = if pressure { &self.pressure_basis } else { &self.velocity_basis };
        let p = mesh.cell_points(cell);
        basis.nodes().iter().map(|&x| affine(&p, x)).collect()
    }

    /// Nodal interpolant of a vector field in the broken velocity space
    /// (cell-major, node-major, components interleaved).
    pub fn interpolate_velocity<F: Fn(Point) -> [f64; 2]>(&self, mesh: &Mesh, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_cells * 2 * self.nk());
        for c in 0..self.num_cells {
            for x in self.cell_node_coords(mesh, c, false) {
                let v = f(x);
                out.extend_from_slice(&v);
            }
        }
        out
    }

    /// Nodal interpolant of a scalar field in the broken pressure space.
    pub fn interpolate_pressure<F: Fn(Point) -> f64>(&self, mesh: &Mesh, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_cells * self.nm());
        for c in 0..self.num_cells {
            out.extend(self.cell_node_coords(mesh, c, true).into_iter().map(&f));
        }
        out
    }

    /// Nodal interpolant of a vector field in the facet velocity space.
    pub fn interpolate_facet_velocity<F: Fn(Point) -> [f64; 2]>(&self, f: F) -> Vec<f64> {
        self.velocity_lattice.coords().iter().flat_map(|&x| f(x)).collect()
    }

    /// Nodal interpolant of a scalar field in the facet pressure space.
    pub fn interpolate_facet_pressure<F: Fn(Point) -> f64>(&self, f: F) -> Vec<f64> {
        self.pressure_lattice.coords().iter().map(|&x| f(x)).collect()
    }
}

/// Maps reference coordinates into the physical cell with vertices `p`.
pub fn affine(p: &[Point; 3], x: [f64; 2]) -> Point {
    let l0 = 1.0 - x[0] - x[1];
    [
        l0 * p[0][0] + x[0] * p[1][0] + x[1] * p[2][0],
        l0 * p[0][1] + x[0] * p[1][1] + x[1] * p[2][1],
    ]
}

/// Vector-valued function of position and time.
pub type VectorFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryCondition {
    /// Prescribed facet velocity.
    Dirichlet(VectorFn),
    /// Prescribed diffusive traction.
    Neumann(VectorFn),
    /// Zero normal velocity and zero tangential traction (axis-aligned walls).
    FreeSlip,
}

impl std::fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Dirichlet(_) => write!(f, "Dirichlet"),
            BoundaryCondition::Neumann(_) => write!(f, "Neumann"),
            BoundaryCondition::FreeSlip => write!(f, "FreeSlip"),
        }
    }
}

/// Boundary conditions keyed by boundary tag, plus pressure pins.
#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    entries: Vec<(BoundaryTag, BoundaryCondition)>,
    /// `(facet pressure lattice node, value)`.
    pub pressure_pins: Vec<(usize, f64)>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: &str, bc: BoundaryCondition) -> Self {
        self.entries.push((BoundaryTag::from(tag), bc));
        self
    }

    pub fn pin_pressure(mut self, node: usize, value: f64) -> Self {
        self.pressure_pins.push((node, value));
        self
    }

    pub fn get(&self, tag: &BoundaryTag) -> Option<&BoundaryCondition> {
        self.entries.iter().find(|(t, _)| t == tag).map(|(_, bc)| bc)
    }

    /// Condition on a boundary facet; untagged or unknown tags are an error.
    pub fn on_facet(&self, mesh: &Mesh, facet: usize) -> Result<&BoundaryCondition> {
        let tag = mesh
            .boundary_tag(facet)
            .ok_or_else(|| Error::Config(format!("boundary facet {facet} has no tag")))?;
        self.get(tag)
            .ok_or_else(|| Error::Config(format!("no boundary condition for tag '{}'", tag.as_str())))
    }

    pub fn has_neumann(&self) -> bool {
        self.entries.iter().any(|(_, bc)| matches!(bc, BoundaryCondition::Neumann(_)))
    }

    /// Whether no boundary facet lets the pressure level be fixed by a traction.
    pub fn all_velocity_constrained(&self) -> bool {
        !self.has_neumann()
    }
}

/// Fixed facet DOFs (global facet index → value) at a given time.
#[derive(Debug, Clone)]
pub struct Constraints {
    values: Vec<Option<f64>>,
}

impl Constraints {
    pub fn build(mesh: &Mesh, dofs: &DofMap, bcs: &BoundaryConditions, t: f64) -> Result<Self> {
        let mut values = vec![None; dofs.num_facet_dofs()];
        let lat = &dofs.velocity_lattice;
        // free-slip first so that Dirichlet values win at shared nodes
        for pass in 0..2 {
            for f in 0..mesh.num_facets() {
                if !mesh.is_boundary_facet(f) {
                    continue;
                }
                let bc = bcs.on_facet(mesh, f)?;
                match (pass, bc) {
                    (0, BoundaryCondition::FreeSlip) => {
                        let side = mesh.facet_sides(f)[0];
                        let n = mesh.outward_normal(side.cell, side.local);
                        let comp = if n[0].abs() > 1.0 - 1e-12 {
                            0
                        } else if n[1].abs() > 1.0 - 1e-12 {
                            1
                        } else {
                            return Err(Error::Config(format!(
                                "free-slip facet {f} is not axis-aligned"
                            )));
                        };
                        for node in lat.facet_nodes(mesh, f) {
                            values[2 * node + comp] = Some(0.0);
                        }
                    }
                    (1, BoundaryCondition::Dirichlet(g)) => {
                        for node in lat.facet_nodes(mesh, f) {
                            let v = g(lat.coords()[node], t);
                            values[2 * node] = Some(v[0]);
                            values[2 * node + 1] = Some(v[1]);
                        }
                    }
                    _ => {}
                }
            }
        }
        for &(node, v) in &bcs.pressure_pins {
            if node >= dofs.num_facet_pressure_dofs() {
                return Err(Error::Config(format!("pressure pin node {node} out of range")));
            }
            values[dofs.facet_pressure_dof(node)] = Some(v);
        }
        Ok(Constraints { values })
    }

    /// Prescribes `value` for `dof`.
    pub fn fix(&mut self, dof: usize, value: f64) {
        self.values[dof] = Some(value);
    }

    /// No constraints on `n` DOFs.
    pub fn none(n: usize) -> Self {
        Constraints { values: vec![None; n] }
    }

    pub fn get(&self, dof: usize) -> Option<f64> {
        self.values[dof]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_fixed(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.values[dof].is_some()
    }

    /// Writes prescribed values into a facet vector.
    pub fn apply(&self, x: &mut [f64]) {
        for (x, v) in x.iter_mut().zip(&self.values) {
            if let Some(v) = v {
                *x = *v;
            }
        }
    }
}

/// Index of the lattice node closest to `p` (lowest index on ties).
pub fn nearest_node(lattice: &SkeletonLattice, p: Point) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, q) in lattice.coords().iter().enumerate() {
        let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        if d < best.0 - 1e-14 {
            best = (d, i);
        }
    }
    best.1
}
