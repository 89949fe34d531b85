use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

/// Multivariate polynomial in `K` variables with real coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

fn monomial(exponents: &[u32], x: &[f64]) -> f64 {
    exponents
        .iter()
        .zip(x)
        .filter(|(&e, _)| e > 0)
        .map(|(&e, &xi)| xi.powi(e as i32))
        .product()
}

impl Polynomial {
    pub fn new(terms: Vec<Term>) -> Self {
        Polynomial { terms }
    }

    pub fn num_vars(&self) -> Option<usize> {
        self.terms.first().map(|t| t.exponents.len())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coeff * monomial(&t.exponents, x)).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        for t in &self.terms {
            for (j, &e) in t.exponents.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut rest = t.coeff * e as f64;
                for (l, &el) in t.exponents.iter().enumerate() {
                    let pow = if l == j { el - 1 } else { el };
                    if pow > 0 {
                        rest *= x[l].powi(pow as i32);
                    }
                }
                grad[j] += rest;
            }
        }
        grad
    }

    /// Substitutes `x -> scale ⊙ x`.
    pub fn rescaled(&self, scale: &[f64]) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    exponents: t.exponents.clone(),
                    coeff: t.coeff * monomial(&t.exponents, scale),
                })
                .collect(),
        }
    }

    /// True when the polynomial contains a monomial `c x_i^e` with `c > 0`,
    /// `e ≥ 1` and no other variable.
    pub fn has_pure_power_in(&self, i: usize) -> bool {
        self.terms.iter().any(|t| {
            t.coeff > 0.0
                && t.exponents[i] > 0
                && t.exponents.iter().enumerate().all(|(l, &e)| l == i || e == 0)
        })
    }
}
