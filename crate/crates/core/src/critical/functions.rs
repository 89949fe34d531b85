//! The functions whose common zero set is the solution curve, and the chart
//! Jacobians used to detect degenerate points.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pgf::OffspringModel;
use crate::tilting::ConditionSpec;

fn reduced(condition: &ConditionSpec) -> Result<(&[u64], usize)> {
    let gamma = condition.require_reduced()?;
    Ok((gamma, condition.anchor().expect("reduced γ has a unit entry")))
}

/// `G_{i,j}(b) = b_j^{γ_i} φ⁽ⁱ⁾(b)^{γ_j} − b_i^{γ_j} φ⁽ʲ⁾(b)^{γ_i}`, defined on
/// all of `R^K`.
pub fn g_pair(model: &OffspringModel, gamma: &[u64], i: usize, j: usize, b: &[f64]) -> Result<f64> {
    let (gi, gj) = (gamma[i] as i32, gamma[j] as i32);
    let phi_i = model.eval_pgf(i, b)?;
    let phi_j = model.eval_pgf(j, b)?;
    Ok(b[j].powi(gi) * phi_i.powi(gj) - b[i].powi(gj) * phi_j.powi(gi))
}

/// `(G_{a,j}(b))_{j ≠ a}` for the anchor `a`, in increasing order of `j`.
pub fn g_functions(model: &OffspringModel, condition: &ConditionSpec, b: &[f64]) -> Result<Vec<f64>> {
    let (gamma, anchor) = reduced(condition)?;
    (0..model.num_types())
        .filter(|&j| j != anchor)
        .map(|j| g_pair(model, gamma, anchor, j, b))
        .collect()
}

/// Values of `H_{i,j}` for all ordered pairs, the chart Jacobians
/// `I⁽ⁱ⁾ = (∂H_{i,j}/∂b_{j'})_{j,j' ≠ i}` and their determinants.
#[derive(Clone, Debug)]
pub struct Charts {
    pub h: DMatrix<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub dets: Vec<f64>,
}

impl Charts {
    /// `max_i |det I⁽ⁱ⁾| < 1e-10 · max_i ‖I⁽ⁱ⁾‖_F^{K−1}`.
    pub fn is_degenerate(&self) -> bool {
        let k = self.h.nrows();
        if k < 2 {
            return false;
        }
        let scale = self
            .jacobians
            .iter()
            .map(|m| m.norm().powi(k as i32 - 1))
            .fold(0.0, f64::max);
        let max_det = self.dets.iter().map(|d| d.abs()).fold(0.0, f64::max);
        scale.is_finite() && max_det.is_finite() && max_det < 1e-10 * scale
    }
}

pub fn h_functions_and_charts(
    model: &OffspringModel,
    condition: &ConditionSpec,
    b: &[f64],
) -> Result<Charts> {
    let (gamma, _) = reduced(condition)?;
    if let Some(index) = b.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive { index, point: b.to_vec() });
    }
    let k = model.num_types();
    let delta: Vec<f64> = gamma.iter().map(|&g| 1.0 / g as f64).collect();
    let phi: Vec<f64> = (0..k).map(|i| model.eval_pgf(i, b)).collect::<Result<_>>()?;
    let grad: Vec<Vec<f64>> = (0..k).map(|i| model.eval_pgf_gradient(i, b)).collect::<Result<_>>()?;
    // u_i = b_i^{δ_i}, v_i = φ_i^{δ_i}
    let u: Vec<f64> = (0..k).map(|i| b[i].powf(delta[i])).collect();
    let v: Vec<f64> = (0..k).map(|i| phi[i].powf(delta[i])).collect();
    let h = DMatrix::from_fn(k, k, |i, j| u[j] * v[i] - u[i] * v[j]);
    // ∂u_i/∂b_l = δ_{il} δ_i u_i / b_i ; ∂v_i/∂b_l = δ_i v_i ∂_l φ_i / φ_i
    let du = |i: usize, l: usize| if i == l { delta[i] * u[i] / b[i] } else { 0.0 };
    let dv = |i: usize, l: usize| delta[i] * v[i] * grad[i][l] / phi[i];
    let dh = |i: usize, j: usize, l: usize| {
        du(j, l) * v[i] + u[j] * dv(i, l) - du(i, l) * v[j] - u[i] * dv(j, l)
    };
    let mut jacobians = Vec::with_capacity(k);
    let mut dets = Vec::with_capacity(k);
    for i in 0..k {
        let rest: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        let m = DMatrix::from_fn(k - 1, k - 1, |r, c| dh(i, rest[r], rest[c]));
        dets.push(if k == 1 { 1.0 } else { m.determinant() });
        jacobians.push(m);
    }
    Ok(Charts { h, jacobians, dets })
}

/// Scaled system used by the continuation: for `j ≠ a`,
/// `F_j(b) = q_j(b) − q_a(b)^{γ_j}` with `q_i = b_i / φ⁽ⁱ⁾(b)`.
///
/// `F_j = G_{a,j} / (φ⁽ᵃ⁾^{γ_j} φ⁽ʲ⁾)`, so on the positive orthant its zero set
/// is that of `G`, and Newton iterates on it are unaffected by the huge
/// magnitudes `G` reaches for exp-polynomial laws.
pub(crate) struct CurveSystem<'a> {
    pub model: &'a OffspringModel,
    pub gamma: &'a [u64],
    pub anchor: usize,
}

impl<'a> CurveSystem<'a> {
    pub fn new(model: &'a OffspringModel, condition: &'a ConditionSpec) -> Result<Self> {
        let (gamma, anchor) = reduced(condition)?;
        if gamma.len() != model.num_types() {
            return Err(Error::InvalidCondition("γ and model differ in number of types".into()));
        }
        Ok(CurveSystem { model, gamma, anchor })
    }

    pub fn k(&self) -> usize {
        self.model.num_types()
    }

    pub fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k()).filter(move |&j| j != self.anchor)
    }

    /// `(q_i, ∇q_i)` for every type.
    fn q_and_grad(&self, b: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let k = self.k();
        let mut q = Vec::with_capacity(k);
        let mut dq = Vec::with_capacity(k);
        for i in 0..k {
            let inv_phi = (-self.model.log_pgf(i, b)?).exp();
            let qi = b[i] * inv_phi;
            let dl = self.model.log_pgf_gradient(i, b)?;
            let row = (0..k)
                .map(|l| if l == i { inv_phi } else { 0.0 } - qi * dl[l])
                .collect();
            q.push(qi);
            dq.push(row);
        }
        Ok((q, dq))
    }

    /// `F(b)` and its `(K−1)×K` Jacobian.
    pub fn eval(&self, b: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let k = self.k();
        let (q, dq) = self.q_and_grad(b)?;
        let a = self.anchor;
        let rows: Vec<usize> = self.others().collect();
        let mut f = Vec::with_capacity(k - 1);
        let mut jac = DMatrix::zeros(k - 1, k);
        for (r, &j) in rows.iter().enumerate() {
            let g = self.gamma[j] as i32;
            f.push(q[j] - q[a].powi(g));
            for l in 0..k {
                jac[(r, l)] = dq[j][l] - g as f64 * q[a].powi(g - 1) * dq[a][l];
            }
        }
        Ok((f, jac))
    }

    /// `β` from the anchor and the eq:casesbis-style residuals
    /// `β (φ_i/b_i)^{1/γ_i} − 1`.
    pub fn residuals(&self, b: &[f64]) -> Result<(f64, Vec<f64>)> {
        if let Some(index) = b.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositive { index, point: b.to_vec() });
        }
        let a = self.anchor;
        let log_beta = b[a].ln() - self.model.log_pgf(a, b)?;
        let res = (0..self.k())
            .map(|i| {
                let l = self.model.log_pgf(i, b)?;
                Ok((log_beta + (l - b[i].ln()) / self.gamma[i] as f64).exp_m1())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((log_beta.exp(), res))
    }
}
