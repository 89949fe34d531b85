//! Exhaustive enumeration of the trees satisfying `Γ N(T) = g`, with their
//! weights `w(T) = ∏_v ζ⁽ˡ⁽ᵛ⁾⁾(word(v))`.

use std::collections::BTreeMap;
use std::io::Write;

use num_rational::BigRational;
use num_traits::ToPrimitive;

use super::TypedTree;
use crate::error::{Error, Result};
use crate::exact::Scalar;
use crate::pgf::{OffspringModel, OrderedLaw};
use crate::tilting::ConditionSpec;

#[derive(Clone, Debug)]
pub struct WeightedEnsemble<F> {
    pub root_type: usize,
    pub g: Vec<BigRational>,
    pub trees: Vec<(TypedTree, F)>,
    /// `Z = Σ w(T)`.
    pub z: F,
}

impl<F: Scalar> WeightedEnsemble<F> {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Conditioned law `w(T)/Z`, keyed by serialized tree.
    pub fn conditioned_law(&self) -> BTreeMap<String, F> {
        self.trees
            .iter()
            .map(|(t, w)| (t.serialize(), w.clone() / self.z.clone()))
            .collect()
    }

    /// Conditioned law of the ball of the given radius around the root.
    pub fn ball_law(&self, radius: usize) -> BTreeMap<String, F> {
        let mut out: BTreeMap<String, F> = BTreeMap::new();
        for (t, w) in &self.trees {
            let p = w.clone() / self.z.clone();
            let e = out.entry(t.ball(radius).serialize()).or_insert_with(F::zero);
            *e = e.clone() + p;
        }
        out
    }
}

impl WeightedEnsemble<BigRational> {
    /// CSV with columns `serialized_tree, weight_num, weight_den`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["serialized_tree", "weight_num", "weight_den"])?;
        for (t, q) in &self.trees {
            w.write_record([t.serialize(), q.numer().to_string(), q.denom().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Enumerator<'a, F> {
    law: &'a OrderedLaw,
    weights: &'a [Vec<F>],
    condition: &'a ConditionSpec,
    g: &'a [BigRational],
    rows: Vec<Vec<f64>>,
    bound: Vec<f64>,
    budget: usize,
    types: Vec<usize>,
    outdeg: Vec<usize>,
    counts: Vec<usize>,
    pending: Vec<usize>,
    out: Vec<(TypedTree, F)>,
}

impl<F: Scalar> Enumerator<'_, F> {
    /// Γ has nonnegative entries, so the counts of placed and pending nodes
    /// bound Γ·N from below.
    fn exceeds(&self) -> bool {
        self.rows.iter().zip(&self.bound).any(|(row, &g)| {
            row.iter().zip(&self.counts).map(|(a, &c)| a * c as f64).sum::<f64>() > g
        })
    }

    fn run(&mut self, weight: F) -> Result<()> {
        let Some(t) = self.pending.pop() else {
            if self.condition.apply(&self.counts) == self.g {
                let tree = TypedTree::from_preorder(self.law.num_types(), self.types.clone(), &self.outdeg)?;
                self.out.push((tree, weight));
            }
            return Ok(());
        };
        for (idx, (word, _)) in self.law.law(t).iter().enumerate() {
            let letters = word.letters();
            for &c in letters {
                self.counts[c] += 1;
            }
            if !self.exceeds() {
                let nodes = self.types.len() + 1 + self.pending.len() + letters.len();
                if nodes > self.budget {
                    return Err(Error::BudgetExceeded {
                        budget: self.budget,
                        trees_found: self.out.len(),
                    });
                }
                self.types.push(t);
                self.outdeg.push(letters.len());
                let depth = self.pending.len();
                self.pending.extend(letters.iter().rev());
                self.run(weight.clone() * self.weights[t][idx].clone())?;
                self.pending.truncate(depth);
                self.types.pop();
                self.outdeg.pop();
            }
            for &c in letters {
                self.counts[c] -= 1;
            }
        }
        self.pending.push(t);
        Ok(())
    }
}

/// Enumerates with caller-supplied weights, `weights[i][n]` belonging to
/// the `n`-th word of `law.law(i)`. Trees never exceed `node_budget` nodes;
/// an unpruned branch that would is an error.
pub fn enumerate_with_weights<F: Scalar>(
    law: &OrderedLaw,
    weights: &[Vec<F>],
    root_type: usize,
    condition: &ConditionSpec,
    g: &[BigRational],
    node_budget: usize,
) -> Result<WeightedEnsemble<F>> {
    let k = law.num_types();
    if condition.num_types() != k {
        return Err(Error::InvalidCondition("Γ and model differ in number of types".into()));
    }
    if g.len() != condition.gamma_matrix().len() {
        return Err(Error::InvalidCondition("g must have one entry per row of Γ".into()));
    }
    if !condition.is_nonnegative() {
        return Err(Error::Unsupported("enumeration needs Γ with nonnegative entries".into()));
    }
    if root_type >= k {
        return Err(Error::InvalidModel(format!("root type {} out of range", root_type + 1)));
    }
    let rows = condition
        .gamma_matrix()
        .iter()
        .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::INFINITY)).collect())
        .collect();
    let bound = g
        .iter()
        .map(|v| {
            let x = v.to_f64().unwrap_or(f64::INFINITY);
            x + 1e-9 * (1.0 + x.abs())
        })
        .collect();
    let mut counts = vec![0; k];
    counts[root_type] = 1;
    let mut e = Enumerator {
        law,
        weights,
        condition,
        g,
        rows,
        bound,
        budget: node_budget,
        types: Vec::new(),
        outdeg: Vec::new(),
        counts,
        pending: vec![root_type],
        out: Vec::new(),
    };
    if !e.exceeds() {
        e.run(F::one())?;
    }
    let z = e.out.iter().fold(F::zero(), |acc, (_, w)| acc + w.clone());
    Ok(WeightedEnsemble {
        root_type,
        g: g.to_vec(),
        trees: e.out,
        z,
    })
}

/// Exact enumeration under the model's own probabilities.
pub fn enumerate_conditioned(
    model: &OffspringModel,
    root_type: usize,
    condition: &ConditionSpec,
    g: &[BigRational],
    node_budget: usize,
) -> Result<WeightedEnsemble<BigRational>> {
    let law = model.ordered_or_canonical()?;
    let weights = exact_weights(&law)?;
    enumerate_with_weights(&law, &weights, root_type, condition, g, node_budget)
}

/// Probabilities of an ordered law as elements of `F`.
pub fn exact_weights<F: Scalar>(law: &OrderedLaw) -> Result<Vec<Vec<F>>> {
    (0..law.num_types())
        .map(|i| {
            law.law(i)
                .iter()
                .map(|(_, p)| {
                    p.in_field()
                        .ok_or_else(|| Error::Unsupported("exact enumeration needs rational probabilities".into()))
                })
                .collect()
        })
        .collect()
}

/// Float version of [`enumerate_conditioned`].
pub fn enumerate_conditioned_f64(
    model: &OffspringModel,
    root_type: usize,
    condition: &ConditionSpec,
    g: &[BigRational],
    node_budget: usize,
) -> Result<WeightedEnsemble<f64>> {
    let law = model.ordered_or_canonical()?;
    let weights: Vec<Vec<f64>> = (0..law.num_types())
        .map(|i| law.law(i).iter().map(|(_, p)| p.to_f64()).collect())
        .collect();
    enumerate_with_weights(&law, &weights, root_type, condition, g, node_budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::pgf::fixtures::*;
    use crate::pgf::Prob;
    use num_bigint::BigInt;
    use num_traits::{One, Zero};

    fn int(n: i64) -> BigRational {
        rat(n, 1)
    }

    #[test]
    fn leaf_only_law() {
        let m = OffspringModel::from_ordered(2, vec![vec![(w(&[]), p(1, 1))], vec![(w(&[]), p(1, 1))]]).unwrap();
        let c = ConditionSpec::weighted(&[1, 1]).unwrap();
        let e = enumerate_conditioned(&m, 0, &c, &[int(1)], 10).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.z, BigRational::one());
        assert_eq!(e.trees[0].0.serialize(), "1:0");
    }

    #[test]
    fn binary_size_five() {
        let c = ConditionSpec::weighted(&[1]).unwrap();
        let e = enumerate_conditioned(&critical_binary(), 0, &c, &[int(5)], 20).unwrap();
        assert_eq!(e.len(), 2);
        for (_, p) in e.conditioned_law() {
            assert_eq!(p, rat(1, 2));
        }
        assert!(enumerate_conditioned(&critical_binary(), 0, &c, &[int(4)], 20).unwrap().is_empty());
    }

    #[test]
    fn remark_first_count() {
        let c = ConditionSpec::from_integer_rows(&[vec![1, 0]]).unwrap();
        let e = enumerate_conditioned(&remark_zeta(), 0, &c, &[int(2)], 20).unwrap();
        assert!(!e.is_empty());
        assert!(e.trees.iter().all(|(t, _)| t.counts()[1] == 1));
    }

    #[test]
    fn budget_is_reported() {
        // Γ = (1, 0) never bounds type-2 chains
        let m = OffspringModel::from_ordered(
            2,
            vec![vec![(w(&[]), p(1, 2)), (w(&[1]), p(1, 2))], vec![(w(&[]), p(1, 2)), (w(&[1]), p(1, 2))]],
        )
        .unwrap();
        let c = ConditionSpec::from_integer_rows(&[vec![1, 0]]).unwrap();
        let err = enumerate_conditioned(&m, 0, &c, &[int(1)], 6).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 6, .. }), "{err}");
    }

    #[test]
    fn csv_output() {
        let c = ConditionSpec::weighted(&[1]).unwrap();
        let e = enumerate_conditioned(&subcritical_binary(), 0, &c, &[int(3)], 20).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "serialized_tree,weight_num,weight_den\n1:2 1:0 1:0,4,27\n"
        );
    }

    /// `Z_j(s)` for weighted sizes `s ≤ max` by convolution over offspring
    /// words, independent of any tree enumeration.
    fn partition_by_recursion(model: &OffspringModel, gamma: &[u64], max: usize) -> Vec<Vec<BigRational>> {
        let law = model.ordered_or_canonical().unwrap();
        let k = law.num_types();
        let mut z = vec![vec![BigRational::zero(); max + 1]; k];
        for s in 1..=max {
            for j in 0..k {
                let gj = gamma[j] as usize;
                if gj > s {
                    continue;
                }
                let mut total = BigRational::zero();
                for (word, p) in law.law(j) {
                    // distribute s − γ_j over the children
                    let mut conv = vec![BigRational::zero(); s - gj + 1];
                    conv[0] = BigRational::one();
                    for &c in word.letters() {
                        let mut next = vec![BigRational::zero(); s - gj + 1];
                        for (a, x) in conv.iter().enumerate() {
                            if x.is_zero() {
                                continue;
                            }
                            for b in 1..=(s - gj - a) {
                                if b < s {
                                    next[a + b] += x * &z[c][b];
                                }
                            }
                        }
                        conv = next;
                    }
                    total += p.exact().unwrap() * &conv[s - gj];
                }
                z[j][s] = total;
            }
        }
        z
    }

    fn two_type_exact() -> OffspringModel {
        OffspringModel::from_projection(
            2,
            vec![
                vec![(vec![0, 0], Prob::Exact(rat(1, 2))), (vec![2, 0], Prob::Exact(rat(1, 4))), (vec![2, 1], Prob::Exact(rat(1, 4)))],
                vec![(vec![0, 0], Prob::Exact(rat(1, 3))), (vec![0, 2], Prob::Exact(rat(1, 3))), (vec![1, 2], Prob::Exact(rat(1, 3)))],
            ],
        )
        .unwrap()
    }

    #[test]
    fn partition_function_matches_recursion() {
        let cases: Vec<(OffspringModel, Vec<u64>)> = vec![
            (subcritical_binary(), vec![1]),
            (two_type_exact(), vec![1, 1]),
            (two_type_exact(), vec![1, 2]),
            (remark_zeta(), vec![1, 1]),
        ];
        for (m, gamma) in cases {
            let oracle = partition_by_recursion(&m, &gamma, 12);
            let c = ConditionSpec::weighted(&gamma).unwrap();
            for j in 0..m.num_types() {
                for s in 1..=12 {
                    let e = enumerate_conditioned(&m, j, &c, &[BigRational::from_integer(BigInt::from(s))], 64).unwrap();
                    assert_eq!(e.z, oracle[j][s as usize], "γ={gamma:?} root {j} size {s}");
                }
            }
        }
    }
}
