use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub n_basis: usize,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self { degree: 3, n_basis: 12 }
    }
}

/// Clamped B-spline basis with uniform interior knots, sampled on the integer
/// grid `0..n_points` and paired with its least-squares projector.
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    spec: BasisSpec,
    knots: Vec<f64>,
    design: DMatrix<f64>,
    projector: DMatrix<f64>,
}

fn eval_basis(knots: &[f64], degree: usize, n_basis: usize, t: f64) -> Vec<f64> {
    let last = *knots.last().expect("knots");
    let n0 = knots.len() - 1;
    let mut n: Vec<f64> = (0..n0)
        .map(|i| {
            let (a, b) = (knots[i], knots[i + 1]);
            let inside = if t == last { a < b && b == last } else { a <= t && t < b };
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for p in 1..=degree {
        let next: Vec<f64> = (0..n0 - p)
            .map(|i| {
                let mut v = 0.0;
                let d1 = knots[i + p] - knots[i];
                if d1 > 0.0 {
                    v += (t - knots[i]) / d1 * n[i];
                }
                let d2 = knots[i + p + 1] - knots[i + 1];
                if d2 > 0.0 {
                    v += (knots[i + p + 1] - t) / d2 * n[i + 1];
                }
                v
            })
            .collect();
        n = next;
    }
    n.truncate(n_basis);
    n
}

impl BSplineBasis {
    pub fn new(spec: BasisSpec, n_points: usize) -> Result<Self, ClusterError> {
        let BasisSpec { degree, n_basis } = spec;
        if n_basis < degree + 1 {
            return Err(ClusterError::Argument(format!(
                "{n_basis} basis functions cannot carry degree {degree}"
            )));
        }
        if n_points < n_basis {
            return Err(ClusterError::Argument(format!("{n_points} samples cannot fit {n_basis} coefficients")));
        }
        let (a, b) = (0.0, (n_points - 1) as f64);
        let n_interior = n_basis - degree - 1;
        let mut knots = vec![a; degree + 1];
        knots.extend((1..=n_interior).map(|i| a + (b - a) * i as f64 / (n_interior + 1) as f64));
        knots.extend(std::iter::repeat_n(b, degree + 1));

        let mut design = DMatrix::zeros(n_points, n_basis);
        for t in 0..n_points {
            for (j, v) in eval_basis(&knots, degree, n_basis, t as f64).into_iter().enumerate() {
                design[(t, j)] = v;
            }
        }
        let gram = design.transpose() * &design;
        let chol = gram
            .cholesky()
            .ok_or_else(|| ClusterError::Numerical("basis Gram matrix is not positive definite".into()))?;
        let projector = chol.solve(&design.transpose());
        Ok(Self { spec, knots, design, projector })
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_points(&self) -> usize {
        self.design.nrows()
    }

    /// Basis values at an arbitrary `t` in the domain.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        eval_basis(&self.knots, self.spec.degree, self.spec.n_basis, t)
    }

    /// Least-squares coefficients of a sampled curve.
    pub fn project(&self, curve: &[f64]) -> Result<Vec<f64>, ClusterError> {
        if curve.len() != self.n_points() {
            return Err(ClusterError::Shape(format!(
                "curve has {} samples, basis expects {}",
                curve.len(),
                self.n_points()
            )));
        }
        let y = DVector::from_column_slice(curve);
        Ok((&self.projector * y).iter().copied().collect())
    }

    pub fn reconstruct(&self, coefficients: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coefficients);
        (&self.design * c).iter().copied().collect()
    }
}
