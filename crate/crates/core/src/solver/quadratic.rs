use super::{HorizonProblem, HorizonSolution};
use crate::costs::QuadraticCost;
use crate::linsys::{stack_vectors, unstack_vector, LinearSystem, StackedDynamics};
use crate::{Error, Matrix, Result, Vector};

/// Stacked quadratic program for one window:
/// `J(ũ) = (z + Gũ)ᵀ Q̄ (z + Gũ) + ũᵀ R̄ ũ` with `z = F x + H w̃`.
pub(crate) struct QuadraticBatch {
    pub stacked: StackedDynamics,
    pub q_bar: Matrix,
    pub normal: Matrix,
}

impl QuadraticBatch {
    pub fn new(
        sys: &LinearSystem,
        cost: &QuadraticCost,
        offset: usize,
        horizon: usize,
    ) -> Result<Self> {
        let (n, m) = (sys.n(), sys.m());
        let stacked = sys.stack(horizon)?;
        let mut q_bar = Matrix::zeros(n * horizon, n * horizon);
        let mut r_bar = Matrix::zeros(m * horizon, m * horizon);
        for k in 0..horizon {
            q_bar
                .view_mut((k * n, k * n), (n, n))
                .copy_from(cost.q(offset + k));
            r_bar
                .view_mut((k * m, k * m), (m, m))
                .copy_from(cost.r(offset + k));
        }
        let normal = stacked.g.transpose() * &q_bar * &stacked.g + r_bar;
        Ok(Self {
            stacked,
            q_bar,
            normal,
        })
    }

    /// Minimizer `ũ* = −(GᵀQ̄G + R̄)⁻¹ GᵀQ̄ z`.
    pub fn minimizer(&self, z: &Vector) -> Result<Vector> {
        let chol = self.normal.clone().cholesky().ok_or(Error::Singular)?;
        let rhs = self.stacked.g.transpose() * (&self.q_bar * z);
        Ok(-chol.solve(&rhs))
    }

    /// `S = Q̄ − Q̄G(GᵀQ̄G + R̄)⁻¹GᵀQ̄`, so that `min_ũ J = zᵀ S z`.
    pub fn reduced_weight(&self) -> Result<Matrix> {
        let chol = self.normal.clone().cholesky().ok_or(Error::Singular)?;
        let gtq = self.stacked.g.transpose() * &self.q_bar;
        let s = &self.q_bar - gtq.transpose() * chol.solve(&gtq);
        Ok((&s + s.transpose()) * 0.5)
    }
}

/// Exact minimizer for quadratic stage costs.
pub fn solve_quadratic(p: &HorizonProblem<'_>) -> Result<HorizonSolution> {
    let cost = p
        .costs
        .as_quadratic()
        .ok_or_else(|| Error::invalid("costs", "closed-form solve needs a quadratic cost"))?;
    let batch = QuadraticBatch::new(p.sys, cost, p.offset, p.horizon())?;
    let w = stack_vectors(&p.w);
    let z = &batch.stacked.f * &p.x0 + &batch.stacked.h * w;
    let u_stacked = batch.minimizer(&z)?;
    if u_stacked.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "closed-form control",
            iterate: 0,
        });
    }
    let u = unstack_vector(&u_stacked, p.sys.m());
    let value = p.evaluate(&u)?;
    Ok(HorizonSolution {
        u,
        value,
        converged: true,
        iterations: 0,
        stationarity: 0.0,
    })
}
