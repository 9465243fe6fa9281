//! Lagrange bases, quadrature and facet-to-cell trace maps.

mod lagrange;
mod quadrature;

pub use lagrange::{LagrangeBasis, ReferenceElement, MAX_ORDER};
pub use quadrature::{gauss_legendre_unit, make_quadrature, QuadratureRule, MAX_DEGREE};

use crate::mesh::local_facet_vertex_indices;

const REFERENCE_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Maps facet parameters `t ∈ [0, 1]` onto local facet `local_facet` of the
/// reference triangle.
///
/// `t = 0` is the facet endpoint with the lower global vertex index. `forward`
/// says whether that endpoint is the first of the counterclockwise pair (see
/// [`crate::mesh::Mesh::facet_is_forward`]).
pub fn trace_points(local_facet: usize, forward: bool, ts: &[f64]) -> Vec<[f64; 2]> {
    let (a, b) = local_facet_vertex_indices(local_facet);
    let (start, end) = if forward { (a, b) } else { (b, a) };
    let (p, q) = (REFERENCE_VERTICES[start], REFERENCE_VERTICES[end]);
    ts.iter()
        .map(|&t| [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])])
        .collect()
}
