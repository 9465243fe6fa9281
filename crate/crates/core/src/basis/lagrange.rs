use crate::{Error, Result};

pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceElement {
    /// Vertices (0,0), (1,0), (0,1).
    Triangle,
    /// The interval [0, 1].
    Interval,
}

/// Nodal Lagrange basis on an equispaced lattice.
///
/// Triangle nodes are ordered lexicographically: row `j` (y = j/k) first,
/// then `i` (x = i/k). Interval nodes are `t_j = j/k`; order 0 has a single
/// node at the midpoint.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    element: ReferenceElement,
    order: usize,
    /// Barycentric multi-indices of the nodes (triangle: 3 entries, interval: 2).
    indices: Vec<[usize; 3]>,
    nodes: Vec<[f64; 2]>,
}

impl LagrangeBasis {
    pub fn new(element: ReferenceElement, order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder { order, max: MAX_ORDER });
        }
        let (indices, nodes) = match element {
            ReferenceElement::Triangle => triangle_lattice(order),
            ReferenceElement::Interval => interval_lattice(order),
        };
        Ok(LagrangeBasis { element, order, indices, nodes })
    }

    pub fn triangle(order: usize) -> Result<Self> {
        Self::new(ReferenceElement::Triangle, order)
    }

    pub fn interval(order: usize) -> Result<Self> {
        Self::new(ReferenceElement::Interval, order)
    }

    pub fn element(&self) -> ReferenceElement {
        self.element
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node coordinates in the reference element (interval nodes use `[t, 0]`).
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    fn barycentric(&self, x: [f64; 2]) -> [f64; 3] {
        match self.element {
            ReferenceElement::Triangle => [1.0 - x[0] - x[1], x[0], x[1]],
            ReferenceElement::Interval => [1.0 - x[0], x[0], 0.0],
        }
    }

    /// Values of all basis functions at `x`.
    pub fn eval(&self, x: [f64; 2]) -> Vec<f64> {
        if self.order == 0 {
            return vec![1.0];
        }
        let lam = self.barycentric(x);
        let k = self.order as f64;
        self.indices
            .iter()
            .map(|a| (0..3).map(|i| silvester(a[i], k, lam[i])).product())
            .collect()
    }

    /// Gradients of all basis functions at `x` with respect to the reference
    /// coordinates (interval: derivative in the first slot, second slot zero).
    pub fn eval_grad(&self, x: [f64; 2]) -> Vec<[f64; 2]> {
        if self.order == 0 {
            return vec![[0.0, 0.0]];
        }
        let lam = self.barycentric(x);
        let k = self.order as f64;
        self.indices
            .iter()
            .map(|a| {
                let vals = [silvester(a[0], k, lam[0]), silvester(a[1], k, lam[1]), silvester(a[2], k, lam[2])];
                let ders = [
                    silvester_deriv(a[0], k, lam[0]),
                    silvester_deriv(a[1], k, lam[1]),
                    silvester_deriv(a[2], k, lam[2]),
                ];
                // d phi / d lambda_i
                let d0 = ders[0] * vals[1] * vals[2];
                let d1 = vals[0] * ders[1] * vals[2];
                let d2 = vals[0] * vals[1] * ders[2];
                match self.element {
                    ReferenceElement::Triangle => [d1 - d0, d2 - d0],
                    ReferenceElement::Interval => [d1 - d0, 0.0],
                }
            })
            .collect()
    }

    /// Values table, `[point][basis]`.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        points.iter().map(|&p| self.eval(p)).collect()
    }

    /// Gradient table, `[point][basis]`.
    pub fn tabulate_grad(&self, points: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
        points.iter().map(|&p| self.eval_grad(p)).collect()
    }

    /// Checks that `x` lies in the reference element up to `1e-12`.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let tol = 1e-12;
        match self.element {
            ReferenceElement::Triangle => x[0] >= -tol && x[1] >= -tol && x[0] + x[1] <= 1.0 + tol,
            ReferenceElement::Interval => x[0] >= -tol && x[0] <= 1.0 + tol,
        }
    }
}

/// `prod_{s<a} (k*lam - s)/(s+1)`
fn silvester(a: usize, k: f64, lam: f64) -> f64 {
    let mut v = 1.0;
    for s in 0..a {
        v *= (k * lam - s as f64) / (s as f64 + 1.0);
    }
    v
}

fn silvester_deriv(a: usize, k: f64, lam: f64) -> f64 {
    let mut total = 0.0;
    for skip in 0..a {
        let mut term = k / (skip as f64 + 1.0);
        for s in 0..a {
            if s != skip {
                term *= (k * lam - s as f64) / (s as f64 + 1.0);
            }
        }
        total += term;
    }
    total
}

fn triangle_lattice(k: usize) -> (Vec<[usize; 3]>, Vec<[f64; 2]>) {
    if k == 0 {
        return (vec![[0, 0, 0]], vec![[1.0 / 3.0, 1.0 / 3.0]]);
    }
    let mut idx = Vec::new();
    let mut nodes = Vec::new();
    for j in 0..=k {
        for i in 0..=(k - j) {
            idx.push([k - i - j, i, j]);
            nodes.push([i as f64 / k as f64, j as f64 / k as f64]);
        }
    }
    (idx, nodes)
}

fn interval_lattice(k: usize) -> (Vec<[usize; 3]>, Vec<[f64; 2]>) {
    if k == 0 {
        return (vec![[0, 0, 0]], vec![[0.5, 0.0]]);
    }
    let idx = (0..=k).map(|j| [k - j, j, 0]).collect();
    let nodes = (0..=k).map(|j| [j as f64 / k as f64, 0.0]).collect();
    (idx, nodes)
}
