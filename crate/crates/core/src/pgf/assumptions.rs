//! Executable versions of the structural assumptions on a model and its
//! conditioning.

use serde::Serialize;

use crate::pgf::{OffspringModel, Projection};
use crate::tilting::{ConditionB, ConditionSpec};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass {
        #[serde(skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Fail { witness: String },
    Undetermined { reason: String },
}

impl Verdict {
    pub fn pass() -> Self {
        Verdict::Pass { note: None }
    }

    pub fn pass_with(note: impl Into<String>) -> Self {
        Verdict::Pass { note: Some(note.into()) }
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }
}

/// Grid used by the sampling check of the escape condition on polynomial
/// generating functions.
#[derive(Clone, Debug)]
pub struct EscapeGrid {
    /// Largest value of the coordinate under test.
    pub bound: f64,
    /// Points per decade on the geometric grids.
    pub per_decade: usize,
}

impl Default for EscapeGrid {
    fn default() -> Self {
        EscapeGrid { bound: 1e4, per_decade: 3 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    /// Entire generating functions (true for both supported families).
    pub entire: Verdict,
    /// ζ⁽ʲ⁾(∅) > 0 for every type.
    pub empty_word: Verdict,
    /// Escape condition, one verdict per type.
    pub escape: Vec<Verdict>,
    /// Positive integer γ in (Ker Γ)^⊥ with a unit entry.
    pub condition_b: Verdict,
    pub reduced_gamma: Option<Vec<u64>>,
    pub nondegenerate: Verdict,
    pub irreducible: Verdict,
    pub spectral_radius: Option<f64>,
}

impl AssumptionReport {
    /// A.2 and B must pass; A.3 may be undetermined but not failed.
    pub fn permits_criticalization(&self) -> bool {
        self.empty_word.is_pass()
            && self.condition_b.is_pass()
            && !self.escape.iter().any(Verdict::is_fail)
    }

    pub fn all_pass(&self) -> bool {
        self.entire.is_pass()
            && self.empty_word.is_pass()
            && self.escape.iter().all(Verdict::is_pass)
            && self.condition_b.is_pass()
    }
}

fn geometric(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil() as usize;
    (0..=n)
        .map(|s| lo * 10f64.powf(decades * s as f64 / n as f64))
        .collect()
}

/// `b_i ∂_iφ⁽ⁱ⁾(b) ≥ φ⁽ⁱ⁾(b)` sampled on a grid. The coordinate under test
/// runs over `[1, bound]`; the others over `{0} ∪ [1e-3, bound²]` so that
/// "uniformly in the other coordinates" is probed beyond the range of `b_i`.
fn escape_by_grid(model: &OffspringModel, i: usize, grid: &EscapeGrid) -> Verdict {
    let k = model.num_types();
    let own = geometric(1.0, grid.bound, grid.per_decade);
    let mut others = vec![0.0];
    others.extend(geometric(1e-3, grid.bound * grid.bound, grid.per_decade));
    let other_axes = k - 1;
    let combos = others.len().pow(other_axes as u32);
    // first own-grid index of the top third
    let top = own.len() - own.len().div_ceil(3);
    let mut violation_in_top = false;
    for (si, &bi) in own.iter().enumerate() {
        let mut witness = None;
        for c in 0..combos {
            let mut b = vec![0.0; k];
            let mut rest = c;
            for (j, slot) in b.iter_mut().enumerate() {
                if j == i {
                    *slot = bi;
                } else {
                    *slot = others[rest % others.len()];
                    rest /= others.len();
                }
            }
            // b_i ∂_i φ ≥ φ  ⇔  b_i ∂_i log φ ≥ 1 on the positive orthant
            let Ok(dlog) = model.log_pgf_gradient(i, &b) else {
                return Verdict::Undetermined {
                    reason: format!("generating function overflow at {b:?}"),
                };
            };
            if bi * dlog[i] < 1.0 - 1e-12 {
                witness = Some(b);
                break;
            }
        }
        if let Some(b) = witness {
            if si == own.len() - 1 {
                return Verdict::Fail {
                    witness: format!("b = {b:?}: b_{0} dφ/db_{0} < φ", i + 1),
                };
            }
            if si >= top {
                violation_in_top = true;
            }
        }
    }
    if violation_in_top {
        Verdict::Undetermined {
            reason: format!(
                "violations for b_{} in the upper third of [1, {}] but not at the bound",
                i + 1,
                grid.bound
            ),
        }
    } else {
        Verdict::pass_with(format!("grid check up to b_{} = {}", i + 1, grid.bound))
    }
}

pub fn check_assumptions(model: &OffspringModel, condition: &ConditionSpec) -> AssumptionReport {
    check_assumptions_with(model, condition, &EscapeGrid::default())
}

pub fn check_assumptions_with(
    model: &OffspringModel,
    condition: &ConditionSpec,
    grid: &EscapeGrid,
) -> AssumptionReport {
    let k = model.num_types();
    let entire = Verdict::pass_with(match model.projection() {
        Projection::Finite(_) => "polynomial generating functions",
        Projection::ExpPoly(_) => "exponentials of polynomials",
    });

    let empty_word = match (0..k).find(|&j| model.empty_word_prob(j) <= 0.0) {
        Some(j) => Verdict::Fail {
            witness: format!("type {}: ζ(∅) = 0", j + 1),
        },
        None => Verdict::pass(),
    };

    let escape = (0..k)
        .map(|i| match model.projection() {
            Projection::ExpPoly(f) if f[i].has_pure_power_in(i) => {
                Verdict::pass_with(format!("f_{0}(0,…,b_{0},…,0) → ∞", i + 1))
            }
            _ => escape_by_grid(model, i, grid),
        })
        .collect();

    let (condition_b, reduced_gamma) = if condition.num_types() != k {
        (
            Verdict::Fail {
                witness: format!("Γ has {} columns for {k} types", condition.num_types()),
            },
            None,
        )
    } else {
        match condition.condition_b() {
            ConditionB::Holds(g) => (Verdict::pass(), Some(g)),
            ConditionB::Fails(w) => (Verdict::Fail { witness: w }, None),
            ConditionB::NotFound(r) => (Verdict::Undetermined { reason: r }, None),
        }
    };

    let nondegenerate = if model.is_nondegenerate() {
        Verdict::pass()
    } else {
        Verdict::Fail {
            witness: "every vertex has exactly one child almost surely".into(),
        }
    };

    let mean = model.mean_matrix();
    let irreducible = if mean.is_irreducible() {
        Verdict::pass()
    } else {
        Verdict::Fail {
            witness: "support digraph of M is not strongly connected".into(),
        }
    };

    AssumptionReport {
        entire,
        empty_word,
        escape,
        condition_b,
        reduced_gamma,
        nondegenerate,
        irreducible,
        spectral_radius: mean.spectral_radius().ok(),
    }
}
