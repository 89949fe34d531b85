//! Exponential tiltings `μ̃⁽ⁱ⁾(k) = a_i ∏_j b_j^{k_j} μ⁽ⁱ⁾(k)`.

pub mod condition;

use nalgebra::DMatrix;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Scalar;
use crate::pgf::{spectral_radius, OffspringModel, OrderedLaw, Polynomial, Prob, Projection};

pub use condition::{rref, ConditionB, ConditionSpec};

/// Tolerance on `a_i φ⁽ⁱ⁾(b) = 1` accepted by [`apply_tilt`].
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Residual threshold of the row-space membership test.
pub const GOOD_TILT_TOL: f64 = 1e-9;
/// Residual threshold for a point to count as on the solution curve.
pub const ON_CURVE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct TiltParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `exp(c_anchor)`; present for tilts built in the rank-1 reduction.
    pub beta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TiltParamsFile {
    a: Vec<String>,
    b: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<String>,
}

impl TiltParamsFile {
    fn from_params(p: &TiltParams) -> Self {
        TiltParamsFile {
            a: p.a.iter().map(|v| v.to_string()).collect(),
            b: p.b.iter().map(|v| v.to_string()).collect(),
            beta: p.beta.map(|v| v.to_string()),
        }
    }
}

impl Serialize for TiltParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TiltParamsFile::from_params(self).serialize(s)
    }
}

fn parse_decimal(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidModel(format!("not a decimal number: {s:?}")))
}

impl TiltParams {
    /// Normalized tilt for a given `b`: `a_i = 1/φ⁽ⁱ⁾(b)`.
    pub fn from_b(model: &OffspringModel, b: &[f64], beta: Option<f64>) -> Result<Self> {
        let a = (0..model.num_types())
            .map(|i| model.log_pgf(i, b).map(|l| (-l).exp()))
            .collect::<Result<Vec<_>>>()?;
        Ok(TiltParams { a, b: b.to_vec(), beta })
    }

    pub fn identity(num_types: usize) -> Self {
        TiltParams {
            a: vec![1.0; num_types],
            b: vec![1.0; num_types],
            beta: Some(1.0),
        }
    }

    /// `c_i = log(a_i b_i)`.
    pub fn log_weights(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| (a * b).ln()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TiltParamsFile::from_params(self)).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TiltParamsFile = serde_json::from_str(text)?;
        let a = file.a.iter().map(|s| parse_decimal(s)).collect::<Result<Vec<_>>>()?;
        let b = file.b.iter().map(|s| parse_decimal(s)).collect::<Result<Vec<_>>>()?;
        if a.len() != b.len() {
            return Err(Error::InvalidModel("a and b differ in length".into()));
        }
        let beta = file.beta.as_deref().map(parse_decimal).transpose()?;
        Ok(TiltParams { a, b, beta })
    }

    /// `|a_i φ⁽ⁱ⁾(b) − 1|` for each type.
    pub fn normalization_residuals(&self, model: &OffspringModel) -> Result<Vec<f64>> {
        (0..model.num_types())
            .map(|i| {
                let l = model.log_pgf(i, &self.b)?;
                Ok((self.a[i].ln() + l).exp_m1().abs())
            })
            .collect()
    }
}

fn check_shape(model: &OffspringModel, params: &TiltParams) -> Result<()> {
    let k = model.num_types();
    if params.a.len() != k || params.b.len() != k {
        return Err(Error::InvalidModel(format!(
            "tilt parameters of length {}/{} for a {k}-type model",
            params.a.len(),
            params.b.len()
        )));
    }
    if let Some(i) = params.a.iter().chain(&params.b).position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            index: i % k,
            point: params.b.clone(),
        });
    }
    Ok(())
}

/// Tilts a model. Finite laws are reweighted term by term (ordered law
/// included); exp-polynomial laws get `f̃_i(x) = f_i(b ⊙ x)`.
pub fn apply_tilt(model: &OffspringModel, params: &TiltParams) -> Result<OffspringModel> {
    check_shape(model, params)?;
    let residuals = params.normalization_residuals(model)?;
    if residuals.iter().any(|&r| r > NORMALIZATION_TOL) {
        return Err(Error::Normalization { residuals });
    }
    let k = model.num_types();
    let weight = |i: usize, counts: &[u32]| -> f64 {
        params.a[i]
            * counts
                .iter()
                .zip(&params.b)
                .filter(|(&e, _)| e > 0)
                .map(|(&e, &b)| b.powi(e as i32))
                .product::<f64>()
    };
    match model.projection() {
        Projection::ExpPoly(polys) => {
            let tilted: Vec<Polynomial> = polys.iter().map(|f| f.rescaled(&params.b)).collect();
            OffspringModel::exp_poly(k, tilted)
        }
        Projection::Finite(mu) => match model.ordered_law() {
            Some(ordered) => {
                let laws = (0..k)
                    .map(|i| {
                        ordered
                            .law(i)
                            .iter()
                            .map(|(w, p)| {
                                (w.clone(), Prob::Float(weight(i, &w.projection(k)) * p.to_f64()))
                            })
                            .collect()
                    })
                    .collect();
                OffspringModel::from_ordered(k, laws)
            }
            None => {
                let laws = mu
                    .iter()
                    .enumerate()
                    .map(|(i, law)| {
                        law.iter()
                            .map(|(c, p)| (c.clone(), Prob::Float(weight(i, c) * p.to_f64())))
                            .collect()
                    })
                    .collect();
                OffspringModel::from_projection(k, laws)
            }
        },
    }
}

/// Exact tilt with rational `b`; `a_i = 1/φ⁽ⁱ⁾(b)` is computed exactly.
pub fn apply_tilt_exact(model: &OffspringModel, b: &[BigRational]) -> Result<OffspringModel> {
    let k = model.num_types();
    if b.len() != k {
        return Err(Error::InvalidModel("b has the wrong length".into()));
    }
    let a: Vec<BigRational> = (0..k)
        .map(|i| {
            model
                .eval_pgf_exact::<BigRational>(i, b)
                .map(|phi| phi.recip())
                .ok_or_else(|| Error::Unsupported("exact tilt needs an exact finite law".into()))
        })
        .collect::<Result<_>>()?;
    let weight = |i: usize, counts: &[u32]| -> BigRational {
        counts
            .iter()
            .zip(b)
            .fold(a[i].clone(), |acc, (&e, bj)| acc * bj.powu(e))
    };
    let exact = |p: &Prob| p.exact().cloned().expect("checked exact above");
    match model.ordered_law() {
        Some(ordered) => {
            let laws = (0..k)
                .map(|i| {
                    ordered
                        .law(i)
                        .iter()
                        .map(|(w, p)| (w.clone(), Prob::Exact(weight(i, &w.projection(k)) * exact(p))))
                        .collect()
                })
                .collect();
            OffspringModel::from_ordered(k, laws)
        }
        None => {
            let Projection::Finite(mu) = model.projection() else {
                unreachable!("eval_pgf_exact succeeded")
            };
            let laws = mu
                .iter()
                .enumerate()
                .map(|(i, law)| {
                    law.iter()
                        .map(|(c, p)| (c.clone(), Prob::Exact(weight(i, c) * exact(p))))
                        .collect()
                })
                .collect();
            OffspringModel::from_projection(k, laws)
        }
    }
}

/// Verdict of the criterion `c ∈ (Ker Γ)^⊥`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodTilting {
    pub good: bool,
    pub c: Vec<f64>,
    pub residual: f64,
    /// Coefficients of `c` over the echelon basis of Γ's row space.
    pub coefficients: Vec<f64>,
}

pub fn is_good_tilting(params: &TiltParams, condition: &ConditionSpec) -> GoodTilting {
    let c = params.log_weights();
    let (residual, coefficients) = condition.row_space_residual(&c);
    let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    GoodTilting {
        good: residual <= GOOD_TILT_TOL * scale,
        c,
        residual,
        coefficients,
    }
}

fn reduced(condition: &ConditionSpec) -> Result<(&[u64], usize)> {
    let gamma = condition.require_reduced()?;
    let anchor = condition.anchor().expect("reduced γ has a unit entry");
    Ok((gamma, anchor))
}

fn check_positive(b: &[f64]) -> Result<()> {
    match b.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::NonPositive {
            index,
            point: b.to_vec(),
        }),
        None => Ok(()),
    }
}

/// `β = b_a / φ⁽ᵃ⁾(b)` for the anchor coordinate `a` (γ_a = 1).
pub fn beta_from_anchor(model: &OffspringModel, condition: &ConditionSpec, b: &[f64]) -> Result<f64> {
    let (_, anchor) = reduced(condition)?;
    check_positive(b)?;
    Ok((b[anchor].ln() - model.log_pgf(anchor, b)?).exp())
}

/// `β (φ⁽ⁱ⁾(b)/b_i)^{1/γ_i} − 1` for every type.
pub fn solve_beta_system_residual(
    model: &OffspringModel,
    condition: &ConditionSpec,
    b: &[f64],
    beta: f64,
) -> Result<Vec<f64>> {
    let (gamma, _) = reduced(condition)?;
    check_positive(b)?;
    let lb = beta.ln();
    (0..model.num_types())
        .map(|i| {
            let l = model.log_pgf(i, b)?;
            Ok((lb + (l - b[i].ln()) / gamma[i] as f64).exp_m1())
        })
        .collect()
}

/// `M′_{i,j} = β^{γ_i} ∂φ⁽ⁱ⁾/∂x_j(b)` at an on-curve point, with β read from
/// the anchor coordinate.
pub fn tilted_prime_matrix(
    model: &OffspringModel,
    condition: &ConditionSpec,
    b: &[f64],
) -> Result<DMatrix<f64>> {
    let (gamma, _) = reduced(condition)?;
    let beta = beta_from_anchor(model, condition, b)?;
    let residuals = solve_beta_system_residual(model, condition, b, beta)?;
    if residuals.iter().any(|r| r.abs() > ON_CURVE_TOL) {
        return Err(Error::OffCurve { residuals });
    }
    let k = model.num_types();
    let lb = beta.ln();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        // β^{γ_i} ∂_j φ = exp(γ_i log β + log φ) ∂_j log φ
        let scale = (gamma[i] as f64 * lb + model.log_pgf(i, b)?).exp();
        for (j, d) in model.log_pgf_gradient(i, b)?.into_iter().enumerate() {
            m[(i, j)] = scale * d;
        }
    }
    Ok(m)
}

/// ρ̃(b): spectral radius of the tilted mean matrix, computed as ρ(M′).
pub fn tilted_mean_spectral_radius(
    model: &OffspringModel,
    condition: &ConditionSpec,
    b: &[f64],
) -> Result<f64> {
    spectral_radius(&tilted_prime_matrix(model, condition, b)?)
}

/// Ordered-law support of two models agrees exactly.
pub fn same_support(a: &OrderedLaw, b: &OrderedLaw) -> bool {
    a.num_types() == b.num_types()
        && (0..a.num_types()).all(|i| {
            a.law(i).len() == b.law(i).len()
                && a.law(i).iter().zip(b.law(i)).all(|((wa, pa), (wb, pb))| {
                    wa == wb && pa.is_zero() == pb.is_zero()
                })
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::pgf::fixtures::*;
    use crate::pgf::{OffspringModel, Term};
    use proptest::prelude::*;

    fn law_values(m: &OffspringModel) -> Vec<Vec<(Vec<u32>, f64)>> {
        let Projection::Finite(mu) = m.projection() else { panic!() };
        mu.iter()
            .map(|l| l.iter().map(|(k, p)| (k.clone(), p.to_f64())).collect())
            .collect()
    }

    #[test]
    fn identity_tilt_is_noop() {
        let m = subcritical_binary();
        let t = apply_tilt(&m, &TiltParams::identity(1)).unwrap();
        assert_eq!(law_values(&t), law_values(&m));
    }

    #[test]
    fn binary_tilt_to_critical() {
        let m = subcritical_binary();
        let s = 2f64.sqrt();
        let p = TiltParams::from_b(&m, &[s], None).unwrap();
        assert!((p.a[0] - 0.75).abs() < 1e-15);
        let t = apply_tilt(&m, &p).unwrap();
        let v = law_values(&t);
        assert!((v[0][0].1 - 0.5).abs() < 1e-15);
        assert!((v[0][1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn poisson_tilt() {
        let m = poisson(2.0);
        let p = TiltParams::from_b(&m, &[0.5], None).unwrap();
        let t = apply_tilt(&m, &p).unwrap();
        let Projection::ExpPoly(f) = t.projection() else { panic!() };
        assert_eq!(f[0].terms, vec![Term { exponents: vec![1], coeff: 1.0 }]);
    }

    #[test]
    fn rejects_unnormalized() {
        let m = subcritical_binary();
        let p = TiltParams { a: vec![1.0], b: vec![2.0], beta: None };
        assert!(matches!(apply_tilt(&m, &p), Err(Error::Normalization { .. })));
    }

    #[test]
    fn good_tilting_examples() {
        let cond = ConditionSpec::from_integer_rows(&[vec![1, 1]]).unwrap();
        assert!(is_good_tilting(&TiltParams::identity(2), &cond).good);
        let p = TiltParams { a: vec![1.0, 0.5], b: vec![2.0, 4.0], beta: None };
        assert!(is_good_tilting(&p, &cond).good);
        let p = TiltParams { a: vec![1.0, 0.75], b: vec![2.0, 4.0], beta: None };
        let v = is_good_tilting(&p, &cond);
        assert!(!v.good);
        // (log2, log3) projects onto span(1,1) with residual |log3 - log2|/sqrt2
        assert!((v.residual - (1.5f64).ln() / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn beta_system_examples() {
        let cond = ConditionSpec::weighted(&[1]).unwrap();
        let r = solve_beta_system_residual(&critical_binary(), &cond, &[1.0], 1.0).unwrap();
        assert!(r[0].abs() < 1e-15);
        let s = 2f64.sqrt();
        let r = solve_beta_system_residual(&subcritical_binary(), &cond, &[s], 3.0 * s / 4.0).unwrap();
        assert!(r[0].abs() < 1e-15);
        let r = solve_beta_system_residual(&subcritical_binary(), &cond, &[s], 1.0).unwrap();
        assert!(r[0].abs() > 1e-3);
    }

    #[test]
    fn tilted_spectral_radius_examples() {
        let cond = ConditionSpec::weighted(&[1]).unwrap();
        let rho = tilted_mean_spectral_radius(&critical_binary(), &cond, &[1.0]).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        let m = subcritical_binary();
        let rho = tilted_mean_spectral_radius(&m, &cond, &[2f64.sqrt()]).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        let b: f64 = 0.1;
        let rho = tilted_mean_spectral_radius(&m, &cond, &[b]).unwrap();
        assert!((rho - 2.0 * b * b / (2.0 + b * b)).abs() < 1e-12);
        assert!(rho < 1.0);
    }

    #[test]
    fn off_curve_rejected() {
        // two types, γ = (1,1): b = (1, 2) is not on the curve of the remark model
        let cond = ConditionSpec::weighted(&[1, 1]).unwrap();
        let e = tilted_mean_spectral_radius(&remark_zeta(), &cond, &[1.0, 2.0]);
        assert!(matches!(e, Err(Error::OffCurve { .. })));
    }

    #[test]
    fn tilt_json_roundtrip() {
        let p = TiltParams { a: vec![0.75, 0.1], b: vec![2f64.sqrt(), 3.5], beta: Some(1.0606601717798212) };
        assert_eq!(TiltParams::from_json(&p.to_json()).unwrap(), p);
    }

    /// Random exact two- or three-type finite model.
    fn random_exact_model() -> impl Strategy<Value = OffspringModel> {
        (2usize..=3).prop_flat_map(|k| {
            proptest::collection::vec(
                proptest::collection::vec((proptest::collection::vec(0usize..k, 0..4), 1u32..6), 1..5),
                k,
            )
            .prop_map(move |laws| {
                let laws = laws
                    .into_iter()
                    .map(|law| {
                        let total: u32 = law.iter().map(|(_, c)| c).sum();
                        law.into_iter()
                            .map(|(w, c)| {
                                (crate::pgf::OrderedWord::new(w), Prob::Exact(rat(c as i64, total as i64)))
                            })
                            .collect()
                    })
                    .collect();
                OffspringModel::from_ordered(k, laws).unwrap()
            })
        })
    }

    /// Coefficients `c_1..c_k` of `det(λI − A) = λ^k + c_1 λ^{k−1} + … + c_k`
    /// by Faddeev–LeVerrier.
    fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
        let k = a.nrows();
        let mut m = DMatrix::<f64>::identity(k, k);
        let mut c = Vec::with_capacity(k);
        for j in 1..=k {
            let am = a * &m;
            let cj = -am.trace() / j as f64;
            c.push(cj);
            m = am + DMatrix::identity(k, k) * cj;
        }
        c
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_tilt_involution(m in random_exact_model(), bs in proptest::collection::vec(1i64..6, 3)) {
            let k = m.num_types();
            let b: Vec<BigRational> = bs[..k].iter().map(|&n| rat(n, 2)).collect();
            let t = apply_tilt_exact(&m, &b).unwrap();
            let back: Vec<BigRational> = b.iter().map(|x| x.recip()).collect();
            let r = apply_tilt_exact(&t, &back).unwrap();
            prop_assert_eq!(r, m);
        }

        #[test]
        fn tilt_preserves_normalization_and_support(
            m in random_exact_model(),
            bs in proptest::collection::vec(0.2f64..3.0, 3),
        ) {
            let k = m.num_types();
            let p = TiltParams::from_b(&m, &bs[..k], None).unwrap();
            let t = apply_tilt(&m, &p).unwrap();
            for i in 0..k {
                prop_assert!((t.eval_pgf(i, &t.ones()).unwrap() - 1.0).abs() <= 1e-12);
            }
            prop_assert!(same_support(m.ordered_law().unwrap(), t.ordered_law().unwrap()));
        }

        #[test]
        fn tilted_mean_similar_to_prime_matrix(
            m in random_exact_model(),
            bs in proptest::collection::vec(0.2f64..3.0, 3),
        ) {
            // M′ with β^{γ_i} replaced by a_i b_i, its value on the curve
            let k = m.num_types();
            let b = &bs[..k];
            let p = TiltParams::from_b(&m, b, None).unwrap();
            let t = apply_tilt(&m, &p).unwrap();
            let mt = t.mean_matrix().0;
            let mut mp = DMatrix::zeros(k, k);
            for i in 0..k {
                let g = m.eval_pgf_gradient(i, b).unwrap();
                for j in 0..k {
                    mp[(i, j)] = p.a[i] * b[i] * g[j];
                }
            }
            let sim = DMatrix::from_fn(k, k, |i, j| mp[(i, j)] * b[j] / b[i]);
            prop_assert!((&mt - &sim).abs().max() <= 1e-10 * mt.abs().max().max(1.0));
            // characteristic polynomials agree: same eigenvalue multiset, and
            // well conditioned even where eigenvalues are defective
            let scale = mt.abs().max().max(mp.abs().max()).max(1.0);
            for (j, (x, y)) in char_poly(&mt).iter().zip(char_poly(&mp)).enumerate() {
                prop_assert!((x - y).abs() <= 1e-10 * scale.powi(j as i32 + 1) * 10f64.powi(j as i32));
            }
        }
    }
}
