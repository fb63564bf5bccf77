//! Linear time-invariant dynamics `x_{t+1} = A x_t + B u_t + w_t`.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// Slack allowed on the disturbance norm cap.
pub const CAP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension {
                arg: "A",
                expected: "square n×n with n ≥ 1".into(),
                found: format!("{}×{}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension {
                arg: "B",
                expected: format!("{n}×m with m ≥ 1"),
                found: format!("{}×{}", b.nrows(), b.ncols()),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("A/B", "entries must be finite"));
        }
        Ok(Self { a, b })
    }

    /// Scalar system `x' = a x + b u + w`.
    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(Matrix::from_element(1, 1, a), Matrix::from_element(1, 1, b))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub(crate) fn check_state(&self, arg: &'static str, x: &Vector) -> Result<()> {
        check_len(arg, self.n(), x)
    }

    pub(crate) fn check_input(&self, arg: &'static str, u: &Vector) -> Result<()> {
        check_len(arg, self.m(), u)
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        self.check_state("x", x)?;
        self.check_input("u", u)?;
        self.check_state("w", w)?;
        Ok(self.step_unchecked(x, u, w))
    }

    #[inline]
    pub(crate) fn step_unchecked(&self, x: &Vector, u: &Vector, w: &Vector) -> Vector {
        let mut next = &self.a * x;
        next.gemv(1.0, &self.b, u, 1.0);
        next += w;
        next
    }

    /// Iterates [`step`](Self::step) from `x1`. Stage costs are left empty.
    pub fn rollout(
        &self,
        x1: &Vector,
        inputs: &[Vector],
        w: &DisturbanceSequence,
    ) -> Result<Trajectory> {
        self.check_state("x1", x1)?;
        if inputs.len() != w.len() {
            return Err(Error::Length {
                arg: "u_seq",
                expected: w.len(),
                found: inputs.len(),
            });
        }
        for u in inputs {
            self.check_input("u_seq", u)?;
        }
        for wk in w.iter() {
            self.check_state("w_seq", wk)?;
        }
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x1.clone());
        for (u, wk) in inputs.iter().zip(w.iter()) {
            let next = self.step_unchecked(states.last().unwrap(), u, wk);
            states.push(next);
        }
        Ok(Trajectory {
            states,
            inputs: inputs.to_vec(),
            disturbances: w.as_slice().to_vec(),
            stage_costs: Vec::new(),
        })
    }

    /// Batch prediction matrices for a horizon of `horizon` steps.
    pub fn stack(&self, horizon: usize) -> Result<StackedDynamics> {
        if horizon < 1 {
            return Err(Error::invalid("N", "horizon must be at least 1"));
        }
        let (n, m) = (self.n(), self.m());
        let mut f = Matrix::zeros(n * horizon, n);
        let mut g = Matrix::zeros(n * horizon, m * horizon);
        let mut h = Matrix::zeros(n * horizon, n * horizon);

        // powers[k] = A^k
        let mut powers = Vec::with_capacity(horizon);
        powers.push(Matrix::identity(n, n));
        for k in 1..horizon {
            let next = &self.a * &powers[k - 1];
            powers.push(next);
        }
        let bs: Vec<Matrix> = powers.iter().map(|p| p * &self.b).collect();

        for k in 0..horizon {
            f.view_mut((k * n, 0), (n, n)).copy_from(&powers[k]);
            for j in 0..k {
                g.view_mut((k * n, j * m), (n, m)).copy_from(&bs[k - 1 - j]);
                h.view_mut((k * n, j * n), (n, n))
                    .copy_from(&powers[k - 1 - j]);
            }
        }
        Ok(StackedDynamics { horizon, f, g, h })
    }
}

fn check_len(arg: &'static str, expected: usize, v: &Vector) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            arg,
            expected: expected.to_string(),
            found: v.len().to_string(),
        });
    }
    Ok(())
}

/// Disturbance samples with the norm cap `w_c` they are known to respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSequence {
    w: Vec<Vector>,
    cap: f64,
}

impl DisturbanceSequence {
    pub fn new(w: Vec<Vector>, cap: f64) -> Result<Self> {
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(Error::invalid("w_c", "cap must be finite and non-negative"));
        }
        if let Some(first) = w.first() {
            let n = first.len();
            for (t, wk) in w.iter().enumerate() {
                if wk.len() != n {
                    return Err(Error::Dimension {
                        arg: "w",
                        expected: n.to_string(),
                        found: format!("{} at t={t}", wk.len()),
                    });
                }
                if wk.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("w", format!("non-finite entry at t={t}")));
                }
                if wk.norm() > cap + CAP_TOLERANCE {
                    return Err(Error::invalid(
                        "w",
                        format!("‖w_{t}‖ = {} exceeds cap {cap}", wk.norm()),
                    ));
                }
            }
        }
        Ok(Self { w, cap })
    }

    /// Sequence whose cap is its own largest norm.
    pub fn tight(w: Vec<Vector>) -> Result<Self> {
        let cap = w.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Self::new(w, cap)
    }

    pub fn zeros(n: usize, len: usize) -> Self {
        Self {
            w: vec![Vector::zeros(n); len],
            cap: 0.0,
        }
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::tight(values.iter().map(|&v| Vector::from_element(1, v)).collect())
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn as_slice(&self) -> &[Vector] {
        &self.w
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector> {
        self.w.iter()
    }

    /// Sub-window `[start, start + len)`, same cap.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.w.len() {
            return Err(Error::Length {
                arg: "w preview",
                expected: start + len,
                found: self.w.len(),
            });
        }
        Ok(Self {
            w: self.w[start..start + len].to_vec(),
            cap: self.cap,
        })
    }

    /// `Σ ‖w_t‖²` over `[start, end)`, clamped to the sequence length.
    pub fn energy_range(&self, start: usize, end: usize) -> f64 {
        let end = end.min(self.w.len());
        if start >= end {
            return 0.0;
        }
        self.w[start..end].iter().map(|v| v.norm_squared()).sum()
    }

    pub fn energy(&self) -> f64 {
        self.energy_range(0, self.w.len())
    }
}

/// A closed- or open-loop rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub disturbances: Vec<Vector>,
    /// Filled by [`crate::costs::total_cost`]; empty until then.
    pub stage_costs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Re-checks lengths and `x_{t+1} = A x_t + B u_t + w_t` at every step,
    /// with tolerance `tol · (1 + ‖x_{t+1}‖)`.
    pub fn validate(&self, sys: &LinearSystem, tol: f64) -> Result<()> {
        if self.states.len() != self.inputs.len() + 1 {
            return Err(Error::Length {
                arg: "states",
                expected: self.inputs.len() + 1,
                found: self.states.len(),
            });
        }
        if self.disturbances.len() != self.inputs.len() {
            return Err(Error::Length {
                arg: "disturbances",
                expected: self.inputs.len(),
                found: self.disturbances.len(),
            });
        }
        for t in 0..self.inputs.len() {
            let next = sys.step(&self.states[t], &self.inputs[t], &self.disturbances[t])?;
            let gap = (&next - &self.states[t + 1]).amax();
            if gap > tol * (1.0 + self.states[t + 1].amax()) {
                return Err(Error::PredictionMismatch { t: t + 1, gap });
            }
        }
        Ok(())
    }
}

/// `x̃ = F x_t + G ũ + H w̃`, stacking offsets `0..N` of the horizon.
/// The terminal state `x_{t+N}` is not part of the stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDynamics {
    pub horizon: usize,
    pub f: Matrix,
    pub g: Matrix,
    pub h: Matrix,
}

impl StackedDynamics {
    pub fn predict(&self, x: &Vector, u: &Vector, w: &Vector) -> Vector {
        let mut out = &self.f * x;
        out.gemv(1.0, &self.g, u, 1.0);
        out.gemv(1.0, &self.h, w, 1.0);
        out
    }
}

/// Concatenates equally sized vectors.
pub fn stack_vectors(parts: &[Vector]) -> Vector {
    let total = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(total);
    let mut offset = 0;
    for p in parts {
        out.rows_mut(offset, p.len()).copy_from(p);
        offset += p.len();
    }
    out
}

/// Splits a stacked vector into blocks of `dim`.
pub fn unstack_vector(v: &Vector, dim: usize) -> Vec<Vector> {
    debug_assert!(dim > 0 && v.len().is_multiple_of(dim));
    (0..v.len() / dim)
        .map(|k| v.rows(k * dim, dim).into_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn step_examples() {
        let sys = LinearSystem::scalar(0.5, 1.0).unwrap();
        let x = sys
            .step(&dvector![0.0], &dvector![1.0], &dvector![0.2])
            .unwrap();
        assert!((x[0] - 1.2).abs() < 1e-15);

        let sys = LinearSystem::new(Matrix::identity(2, 2), Matrix::zeros(2, 1)).unwrap();
        let x = sys
            .step(&dvector![1.0, 2.0], &dvector![5.0], &dvector![0.0, 0.0])
            .unwrap();
        assert_eq!(x, dvector![1.0, 2.0]);

        let sys = LinearSystem::new(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0]).unwrap();
        let x = sys
            .step(&dvector![1.0, 0.0], &dvector![3.0], &dvector![0.1, -0.1])
            .unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15 && (x[1] - 2.9).abs() < 1e-15);
    }

    #[test]
    fn step_names_offending_argument() {
        let sys = LinearSystem::scalar(0.5, 1.0).unwrap();
        let err = sys
            .step(&dvector![0.0], &dvector![1.0, 2.0], &dvector![0.0])
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { arg: "u", .. }), "{err}");
        let err = sys
            .step(&dvector![0.0], &dvector![1.0], &dvector![0.0, 1.0])
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { arg: "w", .. }));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(LinearSystem::new(Matrix::zeros(2, 3), Matrix::zeros(2, 1)).is_err());
        assert!(LinearSystem::new(Matrix::zeros(2, 2), Matrix::zeros(3, 1)).is_err());
        assert!(LinearSystem::new(Matrix::zeros(2, 2), Matrix::zeros(2, 0)).is_err());
        assert!(LinearSystem::new(dmatrix![f64::NAN], dmatrix![1.0]).is_err());
    }

    #[test]
    fn rollout_examples() {
        let sys = LinearSystem::scalar(0.5, 1.0).unwrap();
        let w = DisturbanceSequence::from_scalars(&[0.2, 0.0]).unwrap();
        let traj = sys
            .rollout(&dvector![0.0], &[dvector![1.0], dvector![0.0]], &w)
            .unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|x| x[0]).collect();
        assert!((xs[1] - 1.2).abs() < 1e-15 && (xs[2] - 0.6).abs() < 1e-15 && xs[0] == 0.0);

        let w = DisturbanceSequence::zeros(1, 3);
        let traj = sys
            .rollout(&dvector![1.0], &vec![dvector![0.0]; 3], &w)
            .unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25, 0.125]);

        let sys = LinearSystem::new(dmatrix![0.3, 1.0; -0.2, 0.9], dmatrix![1.0; 0.5]).unwrap();
        let traj = sys
            .rollout(
                &Vector::zeros(2),
                &vec![dvector![0.0]; 4],
                &DisturbanceSequence::zeros(2, 4),
            )
            .unwrap();
        assert!(traj.states.iter().all(|x| x.iter().all(|&v| v == 0.0)));
        traj.validate(&sys, 1e-12).unwrap();
    }

    #[test]
    fn rollout_length_mismatch() {
        let sys = LinearSystem::scalar(0.5, 1.0).unwrap();
        let w = DisturbanceSequence::zeros(1, 2);
        let err = sys
            .rollout(&dvector![0.0], &[dvector![1.0]], &w)
            .unwrap_err();
        assert!(matches!(err, Error::Length { .. }));
    }

    #[test]
    fn validator_catches_tampering() {
        let sys = LinearSystem::scalar(0.5, 1.0).unwrap();
        let w = DisturbanceSequence::from_scalars(&[0.2, 0.1]).unwrap();
        let mut traj = sys
            .rollout(&dvector![0.3], &[dvector![1.0], dvector![-1.0]], &w)
            .unwrap();
        traj.validate(&sys, 1e-12).unwrap();
        traj.states[2][0] += 1e-6;
        assert!(matches!(
            traj.validate(&sys, 1e-12),
            Err(Error::PredictionMismatch { t: 2, .. })
        ));
    }

    #[test]
    fn stack_examples() {
        let sys = LinearSystem::new(dmatrix![0.3, 1.0; -0.2, 0.9], dmatrix![1.0; 0.5]).unwrap();
        let s = sys.stack(1).unwrap();
        assert_eq!(s.f, Matrix::identity(2, 2));
        assert!(s.g.iter().all(|&v| v == 0.0) && s.h.iter().all(|&v| v == 0.0));

        let sys = LinearSystem::scalar(0.5, 1.0).unwrap();
        let s = sys.stack(2).unwrap();
        assert_eq!(s.f, dmatrix![1.0; 0.5]);
        assert_eq!(s.g, dmatrix![0.0, 0.0; 1.0, 0.0]);
        assert_eq!(s.h, dmatrix![0.0, 0.0; 1.0, 0.0]);

        assert!(sys.stack(0).is_err());
    }

    #[test]
    fn disturbance_cap_enforced() {
        assert!(DisturbanceSequence::new(vec![dvector![3.0, 4.0]], 5.0).is_ok());
        assert!(DisturbanceSequence::new(vec![dvector![3.0, 4.0]], 5.0 + 0.5e-12).is_ok());
        assert!(DisturbanceSequence::new(vec![dvector![3.0, 4.0]], 4.99).is_err());
        assert!(DisturbanceSequence::new(vec![dvector![f64::INFINITY]], 5.0).is_err());
        let w = DisturbanceSequence::tight(vec![dvector![1.0, 0.0], dvector![0.0, 1.0]]).unwrap();
        assert_eq!(w.energy(), 2.0);
        assert_eq!(w.energy_range(1, 10), 1.0);
    }
}
