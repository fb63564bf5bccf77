use super::HorizonProblem;
use crate::{Error, Result, Vector};

const FD_STEP: f64 = 1e-6;

/// Gradient of `Σ_k c_k` with respect to every `ũ_k`, by the backward
/// costate recursion
///
/// ```text
/// λ_N = 0,  ∂J/∂u_k = ∂c_k/∂u + Bᵀ λ_{k+1},  λ_k = ∂c_k/∂x + Aᵀ λ_{k+1}.
/// ```
pub fn adjoint_gradient(p: &HorizonProblem<'_>, u: &[Vector]) -> Result<Vec<Vector>> {
    value_and_gradient(p, u).map(|(_, g)| g)
}

pub(crate) fn value_and_gradient(
    p: &HorizonProblem<'_>,
    u: &[Vector],
) -> Result<(f64, Vec<Vector>)> {
    let horizon = p.horizon();
    if u.len() != horizon {
        return Err(Error::Length {
            arg: "u",
            expected: horizon,
            found: u.len(),
        });
    }
    let states = p.predict(u);
    let mut value = 0.0;
    let mut grads = vec![Vector::zeros(p.sys.m()); horizon];
    let mut costate = Vector::zeros(p.sys.n());
    let (a_t, b_t) = (p.sys.a().transpose(), p.sys.b().transpose());

    for k in (0..horizon).rev() {
        let t = p.offset + k;
        let (x, uk) = (&states[k], &u[k]);
        value += p.costs.eval(t, x, uk);
        let (gx, gu) = match p.costs.gradient(t, x, uk) {
            Some(g) => g,
            None => finite_difference(p, t, x, uk),
        };
        let gu_total = gu + &b_t * &costate;
        costate = gx + &a_t * &costate;
        if gu_total
            .iter()
            .chain(costate.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                what: "adjoint gradient",
                iterate: k,
            });
        }
        grads[k] = gu_total;
    }
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "horizon cost",
            iterate: 0,
        });
    }
    Ok((value, grads))
}

/// Central differences on a stage cost that has no analytic gradient.
fn finite_difference(p: &HorizonProblem<'_>, t: usize, x: &Vector, u: &Vector) -> (Vector, Vector) {
    let c = |x: &Vector, u: &Vector| p.costs.eval(t, x, u);
    let mut gx = Vector::zeros(x.len());
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        gx[i] = (c(&xp, u) - c(&xm, u)) / (2.0 * h);
    }
    let mut gu = Vector::zeros(u.len());
    for i in 0..u.len() {
        let h = FD_STEP * u[i].abs().max(1.0);
        let (mut up, mut um) = (u.clone(), u.clone());
        up[i] += h;
        um[i] -= h;
        gu[i] = (c(x, &up) - c(x, &um)) / (2.0 * h);
    }
    (gx, gu)
}
