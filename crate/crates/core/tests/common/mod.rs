#![allow(dead_code)]

use bgwtilt::exact::rat;
use bgwtilt::pgf::{OffspringModel, OrderedWord, Polynomial, Prob, Term};
use bgwtilt::tilting::ConditionSpec;

pub fn p(n: i64, d: i64) -> Prob {
    Prob::Exact(rat(n, d))
}

/// Word from 1-based type labels.
pub fn w(labels: &[usize]) -> OrderedWord {
    OrderedWord::new(labels.iter().map(|l| l - 1).collect())
}

pub fn weighted(gamma: &[u64]) -> ConditionSpec {
    ConditionSpec::weighted(gamma).unwrap()
}

/// μ(0) = 2/3, μ(2) = 1/3.
pub fn subcritical_binary() -> OffspringModel {
    OffspringModel::from_ordered(1, vec![vec![(w(&[]), p(2, 3)), (w(&[1, 1]), p(1, 3))]]).unwrap()
}

/// μ(0) = μ(2) = 1/2.
pub fn critical_binary() -> OffspringModel {
    OffspringModel::from_ordered(1, vec![vec![(w(&[]), p(1, 2)), (w(&[1, 1]), p(1, 2))]]).unwrap()
}

pub fn poisson(lambda: f64) -> OffspringModel {
    OffspringModel::exp_poly(1, vec![Polynomial::new(vec![Term { exponents: vec![1], coeff: lambda }])]).unwrap()
}

/// φ¹ = 1/2 + x₁²/4 + x₁²x₂/4, φ² = 1/3 + x₂²/3 + x₁x₂²/3; irreducible and
/// supercritical.
pub fn two_type() -> OffspringModel {
    OffspringModel::from_projection(
        2,
        vec![
            vec![(vec![0, 0], p(1, 2)), (vec![2, 0], p(1, 4)), (vec![2, 1], p(1, 4))],
            vec![(vec![0, 0], p(1, 3)), (vec![0, 2], p(1, 3)), (vec![1, 2], p(1, 3))],
        ],
    )
    .unwrap()
}

/// Type 1 → ∅, (1), (1,1), (1,2) with probabilities 3/8, 1/4, 1/8, 1/4, and
/// the same with the types swapped: critical, M = [[3/4,1/4],[1/4,3/4]].
pub fn symmetric_two_type() -> OffspringModel {
    OffspringModel::from_ordered(
        2,
        vec![
            vec![(w(&[]), p(3, 8)), (w(&[1]), p(1, 4)), (w(&[1, 1]), p(1, 8)), (w(&[1, 2]), p(1, 4))],
            vec![(w(&[]), p(3, 8)), (w(&[2]), p(1, 4)), (w(&[2, 2]), p(1, 8)), (w(&[2, 1]), p(1, 4))],
        ],
    )
    .unwrap()
}

/// Both types have offspring counts ∅ 1/2, the pure pair 1/4 and one of each 1/4.
pub fn mixed_pairs() -> OffspringModel {
    OffspringModel::from_projection(
        2,
        vec![
            vec![(vec![0, 0], p(1, 2)), (vec![2, 0], p(1, 4)), (vec![1, 1], p(1, 4))],
            vec![(vec![0, 0], p(1, 2)), (vec![0, 2], p(1, 4)), (vec![1, 1], p(1, 4))],
        ],
    )
    .unwrap()
}

/// ζ of the equivalence counterexample: ∅ or (1,2), 1/2 each, both types.
pub fn remark_zeta() -> OffspringModel {
    let law = vec![(w(&[]), p(1, 2)), (w(&[1, 2]), p(1, 2))];
    OffspringModel::from_ordered(2, vec![law.clone(), law]).unwrap()
}

/// ζ̃ of the counterexample: ∅, (1,2), (1,1,1,1,2), 1/3 each.
pub fn remark_zeta_tilde() -> OffspringModel {
    let law = vec![(w(&[]), p(1, 3)), (w(&[1, 2]), p(1, 3)), (w(&[1, 1, 1, 1, 2]), p(1, 3))];
    OffspringModel::from_ordered(2, vec![law.clone(), law]).unwrap()
}

/// Rank-one suite: models with their weight vectors.
pub fn suite() -> Vec<(&'static str, OffspringModel, ConditionSpec)> {
    vec![
        ("subcritical binary", subcritical_binary(), weighted(&[1])),
        ("critical binary", critical_binary(), weighted(&[1])),
        ("poisson(2)", poisson(2.0), weighted(&[1])),
        ("poisson(0.5)", poisson(0.5), weighted(&[1])),
        ("two types, γ=(1,1)", two_type(), weighted(&[1, 1])),
        ("two types, γ=(1,2)", two_type(), weighted(&[1, 2])),
        ("two types, γ=(2,1)", two_type(), weighted(&[2, 1])),
        ("symmetric two types, γ=(1,1)", symmetric_two_type(), weighted(&[1, 1])),
    ]
}
