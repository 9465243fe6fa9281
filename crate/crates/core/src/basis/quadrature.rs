use super::lagrange::ReferenceElement;
use crate::{Error, Result};

pub const MAX_DEGREE: usize = 48;

/// Quadrature rule on a reference element. Weights are in reference measure
/// (they sum to 1/2 on the triangle and 1 on the interval).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Rule exact for polynomials of total degree `degree`.
///
/// Intervals use Gauss–Legendre; triangles use the collapsed (Duffy) product
/// of two Gauss–Legendre rules, which keeps every weight positive and every
/// point interior.
pub fn make_quadrature(element: ReferenceElement, degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree { degree, max: MAX_DEGREE });
    }
    match element {
        ReferenceElement::Interval => {
            let n = degree / 2 + 1;
            let (t, w) = gauss_legendre_unit(n);
            Ok(QuadratureRule {
                points: t.iter().map(|&t| [t, 0.0]).collect(),
                weights: w,
                degree,
            })
        }
        ReferenceElement::Triangle => {
            if degree <= 1 {
                return Ok(QuadratureRule {
                    points: vec![[1.0 / 3.0, 1.0 / 3.0]],
                    weights: vec![0.5],
                    degree,
                });
            }
            // the collapsed direction carries one extra power of (1 - eta)
            let n = (degree + 1) / 2 + 1;
            let (t, w) = gauss_legendre_unit(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (&eta, &weta) in t.iter().zip(&w) {
                for (&xi, &wxi) in t.iter().zip(&w) {
                    points.push([xi * (1.0 - eta), eta]);
                    weights.push(wxi * weta * (1.0 - eta));
                }
            }
            Ok(QuadratureRule { points, weights, degree })
        }
    }
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d.is_finite() {
            dp = d;
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// P_n(z) and P_n'(z).
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    #[test]
    fn centroid_rule() {
        let q = make_quadrature(ReferenceElement::Triangle, 1).unwrap();
        let s: f64 = q.weights.iter().sum();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interval_monomials() {
        for d in 0..=30 {
            let q = make_quadrature(ReferenceElement::Interval, d).unwrap();
            for p in 0..=d {
                let v: f64 = q.points.iter().zip(&q.weights).map(|(x, w)| w * x[0].powi(p as i32)).sum();
                assert!((v - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "d={d} p={p}");
            }
            assert!(q.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn triangle_monomials() {
        for d in 0..=24 {
            let q = make_quadrature(ReferenceElement::Triangle, d).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d {
                for b in 0..=(d - a) {
                    let v: f64 = q
                        .points
                        .iter()
                        .zip(&q.weights)
                        .map(|(x, w)| w * x[0].powi(a as i32) * x[1].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((v - exact).abs() < 1e-13, "d={d} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn degree_limit() {
        assert!(matches!(
            make_quadrature(ReferenceElement::Triangle, MAX_DEGREE + 1),
            Err(Error::UnsupportedDegree { .. })
        ));
    }
}
