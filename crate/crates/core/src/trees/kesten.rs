//! Balls of the Kesten-type tree: a spine reproducing by the biased law ζ̂,
//! with independent BGW trees grafted on the other children.
//!
//! For exp-polynomial laws the children counts are compound Poisson, and
//! biasing by `Σ_ℓ r_{x_ℓ}` amounts to one extra block `e_t` drawn with
//! weight `c_t (r · e_t)`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::sample::{BgwSampler, Sampled};
use super::TypedTree;
use crate::error::{Error, Result};
use crate::pgf::{perron_vector, OffspringModel, OrderedWord, Projection};
use crate::trees::sample::CRITICALITY_TOL;

#[derive(Clone, Debug, Serialize)]
pub struct KestenSpec {
    /// Right Perron eigenvector of `M`, `r_1 = 1`.
    pub r: Vec<f64>,
    /// `ζ̂⁽ʲ⁾(x) = (Σ_ℓ r_{x_ℓ} / r_j) ζ⁽ʲ⁾(x)` on the support, empty word
    /// dropped. Empty for exp-polynomial laws.
    #[serde(skip)]
    pub hat: Vec<Vec<(OrderedWord, f64)>>,
    /// Exp-polynomial laws: per type, each monomial's exponents with weight
    /// `c_t (r · e_t) / r_j`.
    #[serde(skip)]
    pub blocks: Vec<Vec<(Vec<u32>, f64)>>,
    /// `‖M r − r‖_∞`.
    pub eigen_residual: f64,
    pub rho: f64,
}

impl KestenSpec {
    /// Total mass of ζ̂⁽ʲ⁾, which is `(M r)_j / r_j`.
    pub fn hat_mass(&self, j: usize) -> f64 {
        if self.blocks.is_empty() {
            self.hat[j].iter().map(|(_, p)| p).sum()
        } else {
            self.blocks[j].iter().map(|(_, p)| p).sum()
        }
    }

    /// Probability that the `l`-th child of `word` continues the spine.
    pub fn spine_child_probs(&self, word: &OrderedWord) -> Vec<f64> {
        let total: f64 = word.letters().iter().map(|&c| self.r[c]).sum();
        word.letters().iter().map(|&c| self.r[c] / total).collect()
    }
}

pub fn build_kesten_spec(model: &OffspringModel) -> Result<KestenSpec> {
    let m = model.mean_matrix();
    let rho = m.spectral_radius()?;
    if (rho - 1.0).abs() > CRITICALITY_TOL {
        return Err(Error::NotCritical { rho });
    }
    let (rho, r) = perron_vector(m.entries())?;
    let mr = m.entries() * &r;
    let eigen_residual = (mr - &r).amax();
    let r: Vec<f64> = r.iter().copied().collect();
    if let Projection::ExpPoly(polys) = model.projection() {
        let blocks = polys
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.terms
                    .iter()
                    .filter(|t| t.coeff > 0.0 && t.exponents.iter().any(|&e| e > 0))
                    .map(|t| {
                        let s: f64 = t.exponents.iter().zip(&r).map(|(&e, rc)| e as f64 * rc).sum();
                        (t.exponents.clone(), t.coeff * s / r[j])
                    })
                    .collect()
            })
            .collect();
        return Ok(KestenSpec { r, hat: Vec::new(), blocks, eigen_residual, rho });
    }
    let law = model.ordered_or_canonical()?;
    let hat = (0..model.num_types())
        .map(|j| {
            law.law(j)
                .iter()
                .filter(|(w, _)| !w.is_empty())
                .map(|(w, p)| {
                    let s: f64 = w.letters().iter().map(|&c| r[c]).sum();
                    (w.clone(), s / r[j] * p.to_f64())
                })
                .collect()
        })
        .collect();
    Ok(KestenSpec { r, hat, blocks: Vec::new(), eigen_residual, rho })
}

/// Samples balls around the root of the Kesten-type tree.
#[derive(Clone, Debug)]
pub struct KestenBallSampler {
    spec: KestenSpec,
    bgw: BgwSampler,
    spine_index: Vec<WeightedIndex<f64>>,
    num_types: usize,
}

/// A sampled ball and the number of grafts redrawn after overflow.
#[derive(Clone, Debug)]
pub struct KestenBall {
    pub tree: TypedTree,
    pub resamples: u64,
}

impl KestenBallSampler {
    pub fn new(spec: KestenSpec, model: &OffspringModel) -> Result<Self> {
        let weights: Vec<Vec<f64>> = if spec.blocks.is_empty() {
            spec.hat.iter().map(|h| h.iter().map(|(_, p)| *p).collect()).collect()
        } else {
            spec.blocks.iter().map(|h| h.iter().map(|(_, p)| *p).collect()).collect()
        };
        let spine_index = weights
            .iter()
            .enumerate()
            .map(|(j, h)| {
                WeightedIndex::new(h)
                    .map_err(|e| Error::InvalidModel(format!("biased law of type {}: {e}", j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KestenBallSampler {
            bgw: BgwSampler::new(model)?,
            spine_index,
            num_types: model.num_types(),
            spec,
        })
    }

    pub fn spec(&self) -> &KestenSpec {
        &self.spec
    }

    /// The ball of radius `radius`. Grafted trees are grown only down to the
    /// ball's boundary; one exceeding `size_cap` nodes inside the ball is
    /// redrawn.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        root_type: usize,
        radius: usize,
        rng: &mut R,
        size_cap: usize,
    ) -> Result<KestenBall> {
        let mut types = Vec::new();
        let mut outdeg = Vec::new();
        let mut resamples = 0;
        self.spine(root_type, 0, radius, rng, size_cap, &mut types, &mut outdeg, &mut resamples)?;
        Ok(KestenBall {
            tree: TypedTree::from_preorder(self.num_types, types, &outdeg)?,
            resamples,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn spine<R: Rng + ?Sized>(
        &self,
        t: usize,
        depth: usize,
        radius: usize,
        rng: &mut R,
        size_cap: usize,
        types: &mut Vec<usize>,
        outdeg: &mut Vec<usize>,
        resamples: &mut u64,
    ) -> Result<()> {
        types.push(t);
        if depth == radius {
            outdeg.push(0);
            return Ok(());
        }
        let word = if self.spec.blocks.is_empty() {
            self.spec.hat[t][self.spine_index[t].sample(rng)].0.clone()
        } else {
            let mut letters = Vec::new();
            self.bgw.draw_word(t, rng, &mut letters);
            let (exps, _) = &self.spec.blocks[t][self.spine_index[t].sample(rng)];
            for (ty, &e) in exps.iter().enumerate() {
                letters.extend(std::iter::repeat_n(ty, e as usize));
            }
            letters.shuffle(rng);
            OrderedWord::new(letters)
        };
        let letters = word.letters();
        outdeg.push(letters.len());
        let probs = self.spec.spine_child_probs(&word);
        let chosen = WeightedIndex::new(&probs).expect("positive weights").sample(rng);
        for (l, &c) in letters.iter().enumerate() {
            if l == chosen {
                self.spine(c, depth + 1, radius, rng, size_cap, types, outdeg, resamples)?;
                continue;
            }
            let graft = loop {
                match self.bgw.sample_truncated(c, rng, radius - depth - 1, size_cap) {
                    Sampled::Tree(g) => break g,
                    _ => {
                        *resamples += 1;
                        if *resamples > 1_000_000 {
                            return Err(Error::Numerical("grafted trees keep exceeding the size cap".into()));
                        }
                    }
                }
            };
            for v in 0..graft.len() {
                types.push(graft.node_type(v));
                outdeg.push(graft.outdegree(v));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgf::fixtures::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn monotype_size_biasing() {
        let spec = build_kesten_spec(&critical_binary()).unwrap();
        assert_eq!(spec.r, vec![1.0]);
        assert_eq!(spec.hat[0].len(), 1);
        assert!((spec.hat[0][0].1 - 1.0).abs() < 1e-15);
        assert_eq!(spec.spine_child_probs(&spec.hat[0][0].0), vec![0.5, 0.5]);
    }

    #[test]
    fn swap_model() {
        // M = [[0,1],[1,0]]: type 1 → (2) or (2,2) or ∅ etc.
        let m = OffspringModel::from_ordered(
            2,
            vec![
                vec![(w(&[]), p(1, 2)), (w(&[1, 1]), p(1, 2))],
                vec![(w(&[]), p(1, 2)), (w(&[0, 0]), p(1, 2))],
            ],
        )
        .unwrap();
        let spec = build_kesten_spec(&m).unwrap();
        assert!((spec.r[1] - 1.0).abs() < 1e-12);
        assert!(spec.eigen_residual < 1e-10);
        for j in 0..2 {
            assert!((spec.hat_mass(j) - 1.0).abs() < 1e-12);
            assert!(spec.hat[j].iter().all(|(w, _)| !w.is_empty()));
        }
    }

    #[test]
    fn rejects_noncritical() {
        assert!(matches!(build_kesten_spec(&subcritical_binary()), Err(Error::NotCritical { .. })));
    }

    #[test]
    fn balls() {
        let m = critical_binary();
        let s = KestenBallSampler::new(build_kesten_spec(&m).unwrap(), &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(s.sample(0, 0, &mut rng, 1000).unwrap().tree.serialize(), "1:0");
        for _ in 0..200 {
            let b = s.sample(0, 1, &mut rng, 1000).unwrap();
            assert_eq!(b.tree.serialize(), "1:2 1:0 1:0");
        }
        for _ in 0..200 {
            let b = s.sample(0, 4, &mut rng, 1_000_000).unwrap();
            assert!(b.tree.height() == 4);
        }
    }

    #[test]
    fn poisson_spine_is_size_biased() {
        // critical Poisson(1): the spine outdegree is 1 + Poisson(1)
        let m = poisson(1.0);
        let spec = build_kesten_spec(&m).unwrap();
        assert!((spec.hat_mass(0) - 1.0).abs() < 1e-12);
        let s = KestenBallSampler::new(spec, &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 20_000;
        let mut hist = [0usize; 4];
        for _ in 0..n {
            let d = s.sample(0, 1, &mut rng, 1000).unwrap().tree.outdegree(0);
            assert!(d >= 1);
            if d <= 3 {
                hist[d] += 1;
            }
        }
        // P(1 + Poisson(1) = d) = e^{-1}/(d-1)!
        for (d, expected) in [(1, 0.36788), (2, 0.36788), (3, 0.18394)] {
            let f = hist[d] as f64 / n as f64;
            assert!((f - expected).abs() < 0.015, "{d}: {f}");
        }
    }

    #[test]
    fn root_outdegree_follows_biased_law() {
        // μ(0) = 1/2, μ(1) = 1/4, μ(3) = 1/4 is critical; ζ̂(1) = 1/4, ζ̂(3) = 3/4
        let m = OffspringModel::from_ordered(
            1,
            vec![vec![(w(&[]), p(1, 2)), (w(&[0]), p(1, 4)), (w(&[0, 0, 0]), p(1, 4))]],
        )
        .unwrap();
        let s = KestenBallSampler::new(build_kesten_spec(&m).unwrap(), &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let ones = (0..n).filter(|_| s.sample(0, 1, &mut rng, 1000).unwrap().tree.outdegree(0) == 1).count();
        let f = ones as f64 / n as f64;
        // TV between the two-point laws is |f − 1/4|
        assert!((f - 0.25).abs() < 0.02, "{f}");
    }
}
