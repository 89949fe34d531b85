mod common;

use bgwtilt::exact::rat;
use bgwtilt::pgf::OffspringModel;
use bgwtilt::tilting::ConditionSpec;
use bgwtilt::trees::enumerate_conditioned;
use num_rational::BigRational;
use num_traits::Zero;

use common::{remark_zeta, remark_zeta_tilde};

/// P(N₂ = n − 1 | N₁ = n) from the root of type 1.
fn prob(model: &OffspringModel, n: i64) -> BigRational {
    let first = ConditionSpec::from_integer_rows(&[vec![1, 0]]).unwrap();
    let ens = enumerate_conditioned(model, 0, &first, &[rat(n, 1)], 256).unwrap();
    let hit = ens
        .trees
        .iter()
        .filter(|(t, _)| t.counts()[1] as i64 == n - 1)
        .fold(BigRational::zero(), |acc, (_, w)| acc + w);
    hit / &ens.z
}

#[test]
fn zeta_pins_second_count() {
    for n in 1..=8 {
        assert_eq!(prob(&remark_zeta(), n), rat(1, 1), "n = {n}");
    }
}

// The long word of ζ̃ carries four type-1 children, so it cannot appear
// before N₁ = 5.
#[test]
fn zeta_tilde_separates_from_five_on() {
    for n in 1..=4 {
        assert_eq!(prob(&remark_zeta_tilde(), n), rat(1, 1), "n = {n}");
    }
    assert_eq!(prob(&remark_zeta_tilde(), 5), rat(14, 41));
    assert_eq!(prob(&remark_zeta_tilde(), 6), rat(2, 11));
}
