//! Sampling BGW trees, unconditioned and conditioned by rejection.

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Poisson;

use super::TypedTree;
use crate::critical::{find_critical_tilting, CriticalOptions};
use crate::error::{Error, Result};
use crate::pgf::{OffspringModel, Projection};
use crate::tilting::{apply_tilt, ConditionSpec, TiltParams};

/// Criticality tolerance re-checked before sampling from a tilted model.
pub const CRITICALITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum Sampled {
    Tree(TypedTree),
    /// More than `size_cap` nodes.
    Overflow { nodes: usize },
    /// Stopped early because the partial counts already violate the
    /// conditioning.
    Rejected,
}

#[derive(Clone, Debug)]
enum TypeSampler {
    Finite { words: Vec<Vec<usize>>, index: WeightedIndex<f64> },
    /// Independent Poisson multiplicities for each monomial of `f`, children
    /// then shuffled uniformly.
    Compound { terms: Vec<(Vec<u32>, Poisson<f64>)> },
}

/// Upper bounds `Γ·N ≤ g` checked while a tree grows (Γ nonnegative).
#[derive(Clone, Debug)]
struct CountBound {
    rows: Vec<Vec<f64>>,
    g: Vec<f64>,
}

impl CountBound {
    fn new(condition: &ConditionSpec, g: &[BigRational]) -> Option<Self> {
        condition.is_nonnegative().then(|| CountBound {
            rows: condition
                .gamma_matrix()
                .iter()
                .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::INFINITY)).collect())
                .collect(),
            g: g.iter().map(|v| {
                let x = v.to_f64().unwrap_or(f64::INFINITY);
                x + 1e-9 * (1.0 + x.abs())
            }).collect(),
        })
    }

    fn exceeded(&self, counts: &[usize]) -> bool {
        self.rows.iter().zip(&self.g).any(|(row, &g)| {
            row.iter().zip(counts).map(|(a, &c)| a * c as f64).sum::<f64>() > g
        })
    }
}

#[derive(Clone, Debug)]
pub struct BgwSampler {
    num_types: usize,
    per_type: Vec<TypeSampler>,
}

impl BgwSampler {
    pub fn new(model: &OffspringModel) -> Result<Self> {
        let k = model.num_types();
        let per_type = match model.projection() {
            Projection::Finite(_) => {
                let law = model.ordered_or_canonical()?;
                (0..k)
                    .map(|i| {
                        let entries = law.law(i);
                        let words = entries.iter().map(|(w, _)| w.letters().to_vec()).collect();
                        let index = WeightedIndex::new(entries.iter().map(|(_, p)| p.to_f64()))
                            .map_err(|e| Error::InvalidModel(format!("type {}: {e}", i + 1)))?;
                        Ok(TypeSampler::Finite { words, index })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Projection::ExpPoly(polys) => polys
                .iter()
                .map(|f| {
                    let terms = f
                        .terms
                        .iter()
                        .filter(|t| t.coeff > 0.0 && t.exponents.iter().any(|&e| e > 0))
                        .map(|t| {
                            let p = Poisson::new(t.coeff)
                                .map_err(|e| Error::InvalidModel(format!("Poisson rate {}: {e}", t.coeff)))?;
                            Ok((t.exponents.clone(), p))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(TypeSampler::Compound { terms })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(BgwSampler { num_types: k, per_type })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub(crate) fn draw_word<R: Rng + ?Sized>(&self, t: usize, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        match &self.per_type[t] {
            TypeSampler::Finite { words, index } => out.extend_from_slice(&words[index.sample(rng)]),
            TypeSampler::Compound { terms } => {
                for (exps, pois) in terms {
                    let n = pois.sample(rng) as u64;
                    for _ in 0..n {
                        for (ty, &e) in exps.iter().enumerate() {
                            out.extend(std::iter::repeat_n(ty, e as usize));
                        }
                    }
                }
                out.shuffle(rng);
            }
        }
    }

    fn grow<R: Rng + ?Sized>(
        &self,
        root_type: usize,
        rng: &mut R,
        size_cap: usize,
        max_depth: Option<usize>,
        bound: Option<&CountBound>,
    ) -> Sampled {
        let mut types = Vec::new();
        let mut outdeg = Vec::new();
        let mut counts = vec![0usize; self.num_types];
        counts[root_type] = 1;
        let mut stack = vec![(root_type, 0usize)];
        let mut word = Vec::new();
        let mut total = 1;
        while let Some((t, depth)) = stack.pop() {
            types.push(t);
            if max_depth.is_some_and(|d| depth >= d) {
                outdeg.push(0);
                continue;
            }
            self.draw_word(t, rng, &mut word);
            outdeg.push(word.len());
            total += word.len();
            if total > size_cap {
                return Sampled::Overflow { nodes: total };
            }
            for &c in &word {
                counts[c] += 1;
            }
            if bound.is_some_and(|b| b.exceeded(&counts)) {
                return Sampled::Rejected;
            }
            stack.extend(word.iter().rev().map(|&c| (c, depth + 1)));
        }
        Sampled::Tree(TypedTree::from_preorder(self.num_types, types, &outdeg).expect("grown in preorder"))
    }

    /// One BGW tree from `root_type`, or overflow past `size_cap` nodes.
    pub fn sample<R: Rng + ?Sized>(&self, root_type: usize, rng: &mut R, size_cap: usize) -> Sampled {
        self.grow(root_type, rng, size_cap, None, None)
    }

    /// The tree restricted to depth ≤ `max_depth`; only those nodes are
    /// drawn.
    pub fn sample_truncated<R: Rng + ?Sized>(
        &self,
        root_type: usize,
        rng: &mut R,
        max_depth: usize,
        size_cap: usize,
    ) -> Sampled {
        self.grow(root_type, rng, size_cap, Some(max_depth), None)
    }
}

#[derive(Clone, Debug)]
pub struct ConditionedOptions {
    pub attempt_cap: u64,
    pub size_cap: usize,
    /// Replace the model by its critical Γ-equivalent tilt before sampling.
    pub tilt_to_critical: bool,
}

impl Default for ConditionedOptions {
    fn default() -> Self {
        ConditionedOptions {
            attempt_cap: 10_000_000,
            size_cap: 1_000_000,
            tilt_to_critical: true,
        }
    }
}

/// Rejection sampler for `Γ N(T) = g` from a fixed root type.
#[derive(Clone, Debug)]
pub struct ConditionedSampler {
    sampler: BgwSampler,
    root_type: usize,
    condition: ConditionSpec,
    g: Vec<BigRational>,
    bound: Option<CountBound>,
    opts: ConditionedOptions,
    /// The tilt applied, when `tilt_to_critical` was set.
    pub tilt: Option<TiltParams>,
}

impl ConditionedSampler {
    pub fn new(
        model: &OffspringModel,
        root_type: usize,
        condition: &ConditionSpec,
        g: &[BigRational],
        opts: ConditionedOptions,
    ) -> Result<Self> {
        if g.len() != condition.gamma_matrix().len() {
            return Err(Error::InvalidCondition("g must have one entry per row of Γ".into()));
        }
        if root_type >= model.num_types() {
            return Err(Error::InvalidModel(format!("root type {} out of range", root_type + 1)));
        }
        let (sampler, tilt) = if opts.tilt_to_critical {
            let found = find_critical_tilting(model, condition, &CriticalOptions::default())?;
            let tilted = apply_tilt(model, &found.params)?;
            let rho = tilted.mean_matrix().spectral_radius()?;
            if (rho - 1.0).abs() > CRITICALITY_TOL {
                return Err(Error::NotCritical { rho });
            }
            (BgwSampler::new(&tilted)?, Some(found.params))
        } else {
            (BgwSampler::new(model)?, None)
        };
        Ok(ConditionedSampler {
            sampler,
            root_type,
            condition: condition.clone(),
            g: g.to_vec(),
            bound: CountBound::new(condition, g),
            opts,
            tilt,
        })
    }

    /// A conditioned tree and the number of attempts it took.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(TypedTree, u64)> {
        for attempt in 1..=self.opts.attempt_cap {
            let s = self.sampler.grow(self.root_type, rng, self.opts.size_cap, None, self.bound.as_ref());
            if let Sampled::Tree(t) = s {
                if self.condition.apply(t.counts()) == self.g {
                    return Ok((t, attempt));
                }
            }
        }
        Err(Error::AttemptCap {
            attempts: self.opts.attempt_cap,
            acceptance_rate: 1.0 / self.opts.attempt_cap as f64,
        })
    }
}
