use serde::{Deserialize, Serialize};

use super::{CostKind, CostModel};
use crate::{Error, Matrix, Result, Vector};

/// Time-varying LQR cost `xᵀ Q_t x + uᵀ R_t u` with `σ(x) = ‖x‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    q: Vec<Matrix>,
    r: Vec<Matrix>,
}

impl QuadraticCost {
    pub fn new(q: Vec<Matrix>, r: Vec<Matrix>) -> Result<Self> {
        if q.len() != r.len() {
            return Err(Error::Length {
                arg: "R_seq",
                expected: q.len(),
                found: r.len(),
            });
        }
        if q.is_empty() {
            return Err(Error::invalid("Q_seq", "empty cost sequence"));
        }
        let q = q
            .into_iter()
            .enumerate()
            .map(|(t, m)| positive_definite("Q_t", t, m))
            .collect::<Result<Vec<_>>>()?;
        let r = r
            .into_iter()
            .enumerate()
            .map(|(t, m)| positive_definite("R_t", t, m))
            .collect::<Result<Vec<_>>>()?;
        let (n, m) = (q[0].nrows(), r[0].nrows());
        if q.iter().any(|x| x.nrows() != n) || r.iter().any(|x| x.nrows() != m) {
            return Err(Error::invalid(
                "Q_seq/R_seq",
                "inconsistent sizes across time",
            ));
        }
        Ok(Self { q, r })
    }

    pub fn constant(q: Matrix, r: Matrix, len: usize) -> Result<Self> {
        Self::new(vec![q; len], vec![r; len])
    }

    /// Diagonal weights, one diagonal per stage.
    pub fn diagonal(q_diag: &[Vector], r_diag: &[Vector]) -> Result<Self> {
        Self::new(
            q_diag.iter().map(Matrix::from_diagonal).collect(),
            r_diag.iter().map(Matrix::from_diagonal).collect(),
        )
    }

    pub fn q(&self, t: usize) -> &Matrix {
        &self.q[t]
    }

    pub fn r(&self, t: usize) -> &Matrix {
        &self.r[t]
    }

    pub fn stages(&self) -> usize {
        self.q.len()
    }
}

fn positive_definite(arg: &'static str, t: usize, m: Matrix) -> Result<Matrix> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension {
            arg,
            expected: "square".into(),
            found: format!("{}×{} at t={t}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(arg, format!("non-finite entry at t={t}")));
    }
    let sym = (&m + m.transpose()) * 0.5;
    let lmin = sym.clone().symmetric_eigenvalues().min();
    if lmin <= 0.0 {
        return Err(Error::invalid(
            arg,
            format!("not positive definite at t={t} (λ_min = {lmin})"),
        ));
    }
    Ok(sym)
}

impl CostModel for QuadraticCost {
    fn kind(&self) -> CostKind {
        CostKind::Quadratic
    }

    fn len(&self) -> Option<usize> {
        Some(self.q.len())
    }

    fn eval(&self, t: usize, x: &Vector, u: &Vector) -> f64 {
        self.q[t].quadform(x) + self.r[t].quadform(u)
    }

    fn gradient(&self, t: usize, x: &Vector, u: &Vector) -> Option<(Vector, Vector)> {
        Some((&self.q[t] * x * 2.0, &self.r[t] * u * 2.0))
    }

    fn sigma(&self, x: &Vector) -> f64 {
        x.norm_squared()
    }

    fn certified_alpha_lower(&self) -> Option<f64> {
        Some(
            self.q
                .iter()
                .map(|q| q.clone().symmetric_eigenvalues().min())
                .fold(f64::INFINITY, f64::min),
        )
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        Some(self)
    }

    fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.q[0].nrows() != n {
            return Err(Error::Dimension {
                arg: "Q_t",
                expected: format!("{n}×{n}"),
                found: format!("{0}×{0}", self.q[0].nrows()),
            });
        }
        if self.r[0].nrows() != m {
            return Err(Error::Dimension {
                arg: "R_t",
                expected: format!("{m}×{m}"),
                found: format!("{0}×{0}", self.r[0].nrows()),
            });
        }
        Ok(())
    }
}

trait QuadForm {
    fn quadform(&self, v: &Vector) -> f64;
}

impl QuadForm for Matrix {
    #[inline]
    fn quadform(&self, v: &Vector) -> f64 {
        v.dot(&(self * v))
    }
}

/// `|x(1) − b|³ + (x(2) − b)² + uᵀu`, time invariant.
/// `σ(x) = |x(1) − b|³ + (x(2) − b)²`, so `c ≥ σ` holds with equality at `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonConvexCost {
    pub b: f64,
}

impl NonConvexCost {
    pub fn new(b: f64) -> Self {
        Self { b }
    }
}

impl CostModel for NonConvexCost {
    fn kind(&self) -> CostKind {
        CostKind::Nonconvex
    }

    fn len(&self) -> Option<usize> {
        None
    }

    fn eval(&self, _t: usize, x: &Vector, u: &Vector) -> f64 {
        self.sigma(x) + u.norm_squared()
    }

    fn gradient(&self, _t: usize, x: &Vector, u: &Vector) -> Option<(Vector, Vector)> {
        let mut gx = Vector::zeros(x.len());
        let d0 = x[0] - self.b;
        gx[0] = 3.0 * d0.abs() * d0;
        gx[1] = 2.0 * (x[1] - self.b);
        Some((gx, u * 2.0))
    }

    fn sigma(&self, x: &Vector) -> f64 {
        (x[0] - self.b).abs().powi(3) + (x[1] - self.b).powi(2)
    }

    fn check_dims(&self, n: usize, _m: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::Dimension {
                arg: "x",
                expected: "n ≥ 2 (cost reads x(1) and x(2))".into(),
                found: n.to_string(),
            });
        }
        Ok(())
    }
}

/// `a_t · dist(x, ball)² + uᵀu` with `σ(x) = dist(x, ball)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDistanceCost {
    a: Vec<f64>,
    center: Vector,
    radius: f64,
}

impl SetDistanceCost {
    pub fn new(a: Vec<f64>, center: Vector, radius: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::invalid("a_seq", "empty cost sequence"));
        }
        if let Some(bad) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(
                "a_seq",
                format!("coefficient {bad} outside [0, 1]"),
            ));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("radius", "must be positive"));
        }
        Ok(Self { a, center, radius })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn excess(&self, x: &Vector) -> (f64, f64) {
        let d = (x - &self.center).norm();
        ((d - self.radius).max(0.0), d)
    }
}

impl CostModel for SetDistanceCost {
    fn kind(&self) -> CostKind {
        CostKind::SetDistance
    }

    fn len(&self) -> Option<usize> {
        Some(self.a.len())
    }

    fn eval(&self, t: usize, x: &Vector, u: &Vector) -> f64 {
        self.a[t] * self.sigma(x) + u.norm_squared()
    }

    fn gradient(&self, t: usize, x: &Vector, u: &Vector) -> Option<(Vector, Vector)> {
        let (e, d) = self.excess(x);
        let gx = if e > 0.0 {
            (x - &self.center) * (2.0 * self.a[t] * e / d)
        } else {
            Vector::zeros(x.len())
        };
        Some((gx, u * 2.0))
    }

    fn sigma(&self, x: &Vector) -> f64 {
        self.excess(x).0.powi(2)
    }

    fn certified_alpha_lower(&self) -> Option<f64> {
        Some(self.a.iter().copied().fold(f64::INFINITY, f64::min))
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn control_convexity(&self) -> Option<f64> {
        Some(2.0)
    }

    fn check_dims(&self, n: usize, _m: usize) -> Result<()> {
        if self.center.len() != n {
            return Err(Error::Dimension {
                arg: "center",
                expected: n.to_string(),
                found: self.center.len().to_string(),
            });
        }
        Ok(())
    }
}

/// Closed set of the cost models the harness knows how to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cost {
    Quadratic(QuadraticCost),
    Nonconvex(NonConvexCost),
    SetDistance(SetDistanceCost),
}

impl Cost {
    fn inner(&self) -> &dyn CostModel {
        match self {
            Cost::Quadratic(c) => c,
            Cost::Nonconvex(c) => c,
            Cost::SetDistance(c) => c,
        }
    }
}

impl CostModel for Cost {
    fn kind(&self) -> CostKind {
        self.inner().kind()
    }
    fn len(&self) -> Option<usize> {
        self.inner().len()
    }
    fn eval(&self, t: usize, x: &Vector, u: &Vector) -> f64 {
        self.inner().eval(t, x, u)
    }
    fn gradient(&self, t: usize, x: &Vector, u: &Vector) -> Option<(Vector, Vector)> {
        self.inner().gradient(t, x, u)
    }
    fn sigma(&self, x: &Vector) -> f64 {
        self.inner().sigma(x)
    }
    fn certified_alpha_lower(&self) -> Option<f64> {
        self.inner().certified_alpha_lower()
    }
    fn is_convex(&self) -> bool {
        self.inner().is_convex()
    }
    fn control_convexity(&self) -> Option<f64> {
        self.inner().control_convexity()
    }
    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        self.inner().as_quadratic()
    }
    fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        self.inner().check_dims(n, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn quadratic_rejects_indefinite() {
        assert!(QuadraticCost::constant(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![1.0], 2).is_err());
        assert!(QuadraticCost::constant(dmatrix![1.0], dmatrix![-1.0], 2).is_err());
        assert!(QuadraticCost::new(vec![dmatrix![1.0]], vec![]).is_err());
    }

    #[test]
    fn quadratic_alpha_is_min_eigenvalue() {
        let q = QuadraticCost::constant(dmatrix![2.0, 0.0; 0.0, 3.0], dmatrix![1.0], 4).unwrap();
        assert!((q.certified_alpha_lower().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn set_distance_alpha_is_min_coefficient() {
        let c = SetDistanceCost::new(vec![0.4, 0.9, 0.7], dvector![0.5], 0.25).unwrap();
        assert_eq!(c.certified_alpha_lower(), Some(0.4));
        assert!(SetDistanceCost::new(vec![1.2], dvector![0.5], 0.25).is_err());
        assert!(SetDistanceCost::new(vec![0.2], dvector![0.5], 0.0).is_err());
    }

    #[test]
    fn nonconvex_needs_two_states() {
        assert!(NonConvexCost::new(0.2).check_dims(1, 1).is_err());
        assert!(NonConvexCost::new(0.2).check_dims(3, 1).is_ok());
    }

    #[test]
    fn enum_delegates() {
        let c = Cost::Nonconvex(NonConvexCost::new(0.2));
        assert_eq!(c.kind(), CostKind::Nonconvex);
        assert_eq!(c.eval(0, &dvector![0.2, 0.2], &dvector![1.0]), 1.0);
        assert!(c.as_quadratic().is_none());
    }
}
