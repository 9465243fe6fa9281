//! Structured triangulations of axis-aligned rectangles.
//!
//! Cells are stored counterclockwise. Local facet `f` of a cell is the edge
//! opposite its local vertex `f`, i.e. `(v1, v2)`, `(v2, v0)`, `(v0, v1)`.
//! Every facet carries a global orientation from its lower to its higher
//! vertex index; both adjacent cells parameterize it that way.

use std::collections::HashMap;
use std::io::Write;

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Symbolic boundary label (e.g. `"wall"`, `"outflow"`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoundaryTag(pub String);

impl BoundaryTag {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for BoundaryTag {
    fn from(s: &str) -> Self {
        BoundaryTag(s.to_string())
    }
}

/// A cell-side view of a facet: the cell and the local facet index in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacetSide {
    pub cell: usize,
    pub local: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
    /// Vertex pairs, lower index first.
    pub facets: Vec<[usize; 2]>,
    pub cell_facets: Vec<[usize; 3]>,
    adjacency: Vec<Vec<FacetSide>>,
    boundary_tags: Vec<Option<usize>>,
    tag_names: Vec<BoundaryTag>,
    cell_sizes: Vec<f64>,
    bbox: Rect,
}

impl Mesh {
    /// Uniform `nx × ny` grid of quads, each split along the diagonal from its
    /// lower-left to its upper-right corner.
    pub fn rectangle(nx: usize, ny: usize, bbox: Rect) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "cell counts must be positive, got {nx}×{ny}"
            )));
        }
        let (w, h) = (bbox.x1 - bbox.x0, bbox.y1 - bbox.y0);
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("degenerate bounding box {bbox:?}")));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // exact endpoints so that boundary predicates can compare coordinates
                let x = if i == nx { bbox.x1 } else { bbox.x0 + w * i as f64 / nx as f64 };
                let y = if j == ny { bbox.y1 } else { bbox.y0 + h * j as f64 / ny as f64 };
                vertices.push([x, y]);
            }
        }
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut cells = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }
        Ok(Mesh::from_cells(vertices, cells, bbox))
    }

    fn from_cells(vertices: Vec<Point>, cells: Vec<[usize; 3]>, bbox: Rect) -> Mesh {
        let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(cells.len() * 2);
        let mut facets = Vec::new();
        let mut adjacency: Vec<Vec<FacetSide>> = Vec::new();
        let mut cell_facets = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut cf = [0; 3];
            for (f, slot) in cf.iter_mut().enumerate() {
                let (a, b) = local_facet_vertices(cell, f);
                let key = [a.min(b), a.max(b)];
                let id = *index.entry(key).or_insert_with(|| {
                    facets.push(key);
                    adjacency.push(Vec::with_capacity(2));
                    facets.len() - 1
                });
                adjacency[id].push(FacetSide { cell: c, local: f });
                *slot = id;
            }
            cell_facets.push(cf);
        }
        let cell_sizes = cells
            .iter()
            .map(|cell| {
                (0..3)
                    .map(|f| {
                        let (a, b) = local_facet_vertices(cell, f);
                        dist(vertices[a], vertices[b])
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let nf = facets.len();
        Mesh {
            vertices,
            cells,
            facets,
            cell_facets,
            adjacency,
            boundary_tags: vec![None; nf],
            tag_names: Vec::new(),
            cell_sizes,
            bbox,
        }
    }

    /// Labels every boundary facet with the tag returned for its midpoint.
    pub fn tag_boundary<F>(&mut self, mut predicate: F)
    where
        F: FnMut(Point) -> BoundaryTag,
    {
        self.tag_names.clear();
        for f in 0..self.facets.len() {
            if !self.is_boundary_facet(f) {
                self.boundary_tags[f] = None;
                continue;
            }
            let tag = predicate(self.facet_midpoint(f));
            let id = match self.tag_names.iter().position(|t| *t == tag) {
                Some(id) => id,
                None => {
                    self.tag_names.push(tag);
                    self.tag_names.len() - 1
                }
            };
            self.boundary_tags[f] = Some(id);
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn facet_sides(&self, facet: usize) -> &[FacetSide] {
        &self.adjacency[facet]
    }

    pub fn is_boundary_facet(&self, facet: usize) -> bool {
        self.adjacency[facet].len() == 1
    }

    pub fn boundary_tag(&self, facet: usize) -> Option<&BoundaryTag> {
        self.boundary_tags[facet].map(|id| &self.tag_names[id])
    }

    pub fn tags(&self) -> &[BoundaryTag] {
        &self.tag_names
    }

    pub fn facet_midpoint(&self, facet: usize) -> Point {
        let [a, b] = self.facets[facet];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    pub fn facet_length(&self, facet: usize) -> f64 {
        let [a, b] = self.facets[facet];
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn cell_points(&self, cell: usize) -> [Point; 3] {
        let [a, b, c] = self.cells[cell];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, cell: usize) -> f64 {
        let [p0, p1, p2] = self.cell_points(cell);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    /// Cell diameter (longest edge).
    pub fn cell_size(&self, cell: usize) -> f64 {
        self.cell_sizes[cell]
    }

    /// Mean diameter of the cells adjacent to `facet`.
    pub fn facet_size(&self, facet: usize) -> f64 {
        let sides = &self.adjacency[facet];
        sides.iter().map(|s| self.cell_sizes[s.cell]).sum::<f64>() / sides.len() as f64
    }

    /// Outward unit normal of local facet `local` of `cell`.
    pub fn outward_normal(&self, cell: usize, local: usize) -> Point {
        let (a, b) = local_facet_vertices(&self.cells[cell], local);
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = dx.hypot(dy);
        [dy / len, -dx / len]
    }

    /// Whether local facet `local` of `cell` runs in the facet's global
    /// orientation when traversed counterclockwise.
    pub fn facet_is_forward(&self, cell: usize, local: usize) -> bool {
        let (a, b) = local_facet_vertices(&self.cells[cell], local);
        a < b
    }

    /// Plain-text dump: `v x y` per vertex, `c i j k` per cell.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {} {}", v[0], v[1])?;
        }
        for c in &self.cells {
            writeln!(out, "c {} {} {}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

/// Local vertex pair (counterclockwise) of local facet `f`.
pub fn local_facet_vertex_indices(f: usize) -> (usize, usize) {
    match f {
        0 => (1, 2),
        1 => (2, 0),
        2 => (0, 1),
        _ => panic!("local facet index {f} out of range"),
    }
}

fn local_facet_vertices(cell: &[usize; 3], f: usize) -> (usize, usize) {
    let (a, b) = local_facet_vertex_indices(f);
    (cell[a], cell[b])
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Mesh {
        Mesh::rectangle(n, n, Rect::unit()).unwrap()
    }

    #[test]
    fn smallest_mesh_counts() {
        let m = unit(1);
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_cells(), 2);
        assert_eq!(m.num_facets(), 5);
        let nb = (0..5).filter(|&f| m.is_boundary_facet(f)).count();
        assert_eq!(nb, 4);
    }

    #[test]
    fn euler_relation_two_by_two() {
        let m = unit(2);
        assert_eq!((m.num_vertices(), m.num_cells(), m.num_facets()), (9, 8, 16));
        let euler = m.num_vertices() as i64 - m.num_facets() as i64 + m.num_cells() as i64;
        assert_eq!(euler, 1);
    }

    #[test]
    fn backstep_mesh_size() {
        let m = Mesh::rectangle(300, 30, Rect::new(0.0, 0.0, 15.0, 1.0)).unwrap();
        assert_eq!(m.num_vertices(), 301 * 31);
        assert_eq!(m.num_cells(), 18000);
    }

    #[test]
    fn invalid_arguments() {
        assert!(Mesh::rectangle(0, 3, Rect::unit()).is_err());
        assert!(Mesh::rectangle(3, 0, Rect::unit()).is_err());
        assert!(Mesh::rectangle(2, 2, Rect::new(0.0, 0.0, 0.0, 1.0)).is_err());
        assert!(Mesh::rectangle(2, 2, Rect::new(1.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn normals_of_reference_aligned_cell() {
        let m = unit(1);
        // cell 0 = (0,0), (1,0), (1,1); cell 1 = (0,0), (1,1), (0,1)
        let n = m.outward_normal(0, 2);
        assert!((n[0]).abs() < 1e-15 && (n[1] + 1.0).abs() < 1e-15);
        let diag = m.cell_facets[1][2];
        assert_eq!(m.facets[diag], [0, 3]);
        let s = 0.5f64.sqrt();
        let n1 = m.outward_normal(1, 2);
        assert!((n1[0] - s).abs() < 1e-15 && (n1[1] + s).abs() < 1e-15);
        let n0 = m.outward_normal(0, 1);
        assert!((n0[0] + s).abs() < 1e-15 && (n0[1] - s).abs() < 1e-15);
    }

    #[test]
    fn interior_normals_antiparallel() {
        let m = Mesh::rectangle(5, 3, Rect::new(-1.0, 0.5, 2.0, 1.7)).unwrap();
        for f in 0..m.num_facets() {
            let sides = m.facet_sides(f);
            if sides.len() == 2 {
                let a = m.outward_normal(sides[0].cell, sides[0].local);
                let b = m.outward_normal(sides[1].cell, sides[1].local);
                assert!((a[0] + b[0]).abs() < 1e-14 && (a[1] + b[1]).abs() < 1e-14);
                assert!((a[0].hypot(a[1]) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sizes() {
        let m = unit(1);
        assert!((m.cell_size(0) - 2f64.sqrt()).abs() < 1e-15);
        let n = 4;
        let m = unit(n);
        for f in 0..m.num_facets() {
            assert!((m.facet_size(f) - 2f64.sqrt() / n as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn refinement_halves_sizes_and_area_is_preserved() {
        let bbox = Rect::new(0.0, 0.0, 3.0, 2.0);
        let coarse = Mesh::rectangle(3, 4, bbox).unwrap();
        let fine = Mesh::rectangle(6, 8, bbox).unwrap();
        assert!((fine.cell_size(0) - 0.5 * coarse.cell_size(0)).abs() < 1e-14);
        for m in [&coarse, &fine] {
            let area: f64 = (0..m.num_cells()).map(|c| m.signed_area(c)).sum();
            assert!((area - bbox.area()).abs() <= 1e-12 * bbox.area());
            assert!((0..m.num_cells()).all(|c| m.signed_area(c) > 0.0));
        }
    }

    #[test]
    fn adjacency_complete() {
        let m = Mesh::rectangle(4, 3, Rect::unit()).unwrap();
        let mut seen = vec![[false; 3]; m.num_cells()];
        for f in 0..m.num_facets() {
            let sides = m.facet_sides(f);
            assert!(sides.len() == 1 || sides.len() == 2);
            for s in sides {
                assert_eq!(m.cell_facets[s.cell][s.local], f);
                assert!(!seen[s.cell][s.local]);
                seen[s.cell][s.local] = true;
            }
        }
        assert!(seen.iter().all(|s| s.iter().all(|&b| b)));
    }

    #[test]
    fn boundary_tagging() {
        let mut m = unit(3);
        m.tag_boundary(|p| if p[0] > 1.0 - 1e-12 { "out".into() } else { "wall".into() });
        let mut count_out = 0;
        for f in 0..m.num_facets() {
            match m.boundary_tag(f) {
                Some(t) if t.as_str() == "out" => count_out += 1,
                Some(_) => {}
                None => assert!(!m.is_boundary_facet(f)),
            }
            if m.is_boundary_facet(f) {
                assert!(m.boundary_tag(f).is_some());
            }
        }
        assert_eq!(count_out, 3);
    }

    #[test]
    fn text_dump() {
        let m = unit(1);
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(s.lines().filter(|l| l.starts_with("c ")).count(), 2);
    }
}
