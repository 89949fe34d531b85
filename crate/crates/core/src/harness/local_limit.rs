//! Distance between balls of size-conditioned trees and balls of the
//! Kesten-type tree, across growing sizes.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::critical::{find_critical_tilting, CriticalOptions};
use crate::error::{Error, Result};
use crate::pgf::{OffspringModel, Projection};
use crate::tilting::{apply_tilt, ConditionSpec, TiltParams};
use crate::trees::sample::CRITICALITY_TOL;
use crate::trees::{build_kesten_spec, ConditionedOptions, ConditionedSampler, KestenBallSampler};

/// Environment variable capping the number of cells run in parallel.
pub const THREADS_VAR: &str = "BGWTILT_THREADS";
/// Final TV below this passes the trend test on its own.
pub const FINAL_TV_PASS: f64 = 0.05;
/// Spearman correlation at or below this passes the trend test.
pub const SPEARMAN_PASS: f64 = -0.9;

#[derive(Clone, Debug)]
pub struct LocalLimitOptions {
    pub root_type: usize,
    pub radius: usize,
    /// Weighted sizes `γ · N(T)` to condition on.
    pub sizes: Vec<u64>,
    pub samples_per_size: usize,
    /// Kesten balls drawn for the reference law.
    pub kesten_samples: usize,
    pub seed: u64,
    pub sampler: ConditionedOptions,
    /// Threads for the cells; `None` reads [`THREADS_VAR`].
    pub threads: Option<usize>,
}

impl Default for LocalLimitOptions {
    fn default() -> Self {
        LocalLimitOptions {
            root_type: 0,
            radius: 1,
            sizes: vec![21, 41, 81],
            samples_per_size: 10_000,
            kesten_samples: 40_000,
            seed: 0,
            sampler: ConditionedOptions { tilt_to_critical: false, ..ConditionedOptions::default() },
            threads: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeCell {
    pub size: u64,
    pub achievable: bool,
    pub samples: usize,
    /// Empirical total variation between the two ball laws.
    pub tv: Option<f64>,
    pub std_error: Option<f64>,
    pub mean_attempts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalLimitReport {
    /// Numbered from 1.
    pub root_type: usize,
    pub radius: usize,
    pub tilt: TiltParams,
    pub kesten_samples: usize,
    /// Grafts redrawn while sampling Kesten balls.
    pub resamples: u64,
    pub cells: Vec<SizeCell>,
    /// Rank correlation of size against TV over achievable sizes; absent
    /// when fewer than two sizes or when either side is constant.
    pub spearman: Option<f64>,
    pub final_tv: Option<f64>,
    pub trend_pass: bool,
}

impl LocalLimitReport {
    /// TV values over achievable sizes, in size order.
    pub fn tvs(&self) -> Vec<f64> {
        self.cells.iter().filter_map(|c| c.tv).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.tvs().windows(2).all(|w| w[1] < w[0])
    }
}

/// Weighted sizes `γ · N(T) ≤ max` reachable from each root type.
pub fn achievable_sizes(model: &OffspringModel, gamma: &[u64], max: u64) -> Vec<Vec<bool>> {
    let k = model.num_types();
    let n = max as usize + 1;
    // child multisets available in one draw; for exp-poly, any sum of blocks
    let (blocks, repeat): (Vec<Vec<Vec<u32>>>, bool) = match model.projection() {
        Projection::Finite(p) => (
            p.iter()
                .map(|law| law.iter().filter(|(_, q)| !q.is_zero()).map(|(c, _)| c.clone()).collect())
                .collect(),
            false,
        ),
        Projection::ExpPoly(f) => (
            f.iter()
                .map(|poly| {
                    let mut b: Vec<Vec<u32>> = poly.terms.iter().filter(|t| t.coeff > 0.0).map(|t| t.exponents.clone()).collect();
                    b.push(vec![0; k]);
                    b
                })
                .collect(),
            true,
        ),
    };
    let mut reach = vec![vec![false; n]; k];
    loop {
        let mut changed = false;
        for j in 0..k {
            // sizes of the children's forests
            let mut forest = vec![false; n];
            for counts in &blocks[j] {
                let mut s = vec![false; n];
                s[0] = true;
                for (c, &m) in counts.iter().enumerate() {
                    for _ in 0..m {
                        s = sumset(&s, &reach[c]);
                    }
                }
                for (f, x) in forest.iter_mut().zip(&s) {
                    *f |= *x;
                }
            }
            if repeat {
                // closure under adding further blocks
                let mut acc = forest.clone();
                loop {
                    let next = sumset(&acc, &forest);
                    let merged: Vec<bool> = acc.iter().zip(&next).map(|(a, b)| *a || *b).collect();
                    if merged == acc {
                        break;
                    }
                    acc = merged;
                }
                forest = acc;
            }
            let g = gamma[j] as usize;
            for s in 0..n {
                if forest[s] && s + g < n && !reach[j][s + g] {
                    reach[j][s + g] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return reach;
        }
    }
}

fn sumset(a: &[bool], b: &[bool]) -> Vec<bool> {
    let mut out = vec![false; a.len()];
    for (i, &x) in a.iter().enumerate() {
        if x {
            for (j, &y) in b.iter().enumerate() {
                if y && i + j < out.len() {
                    out[i + j] = true;
                }
            }
        }
    }
    out
}

fn empirical(forms: impl IntoIterator<Item = String>) -> (BTreeMap<String, f64>, usize) {
    let mut m = BTreeMap::new();
    let mut n = 0;
    for f in forms {
        *m.entry(f).or_insert(0.0) += 1.0;
        n += 1;
    }
    for v in m.values_mut() {
        *v /= n as f64;
    }
    (m, n)
}

/// Total variation between two empirical laws, with a standard error from
/// the multinomial variances of both samples (covariances ignored).
fn tv_with_error(p: &BTreeMap<String, f64>, n: usize, q: &BTreeMap<String, f64>, m: usize) -> (f64, f64) {
    let keys: std::collections::BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let mut tv = 0.0;
    let mut var = 0.0;
    for key in keys {
        let a = p.get(key).copied().unwrap_or(0.0);
        let b = q.get(key).copied().unwrap_or(0.0);
        tv += (a - b).abs();
        var += a * (1.0 - a) / n as f64 + b * (1.0 - b) / m as f64;
    }
    (0.5 * tv, 0.5 * var.sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant side.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Parallel pool sized by `threads`, or by [`THREADS_VAR`] when unset.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = threads.or_else(|| std::env::var(THREADS_VAR).ok().and_then(|v| v.trim().parse().ok()));
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = n.filter(|&n| n > 0) {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

/// Stream `s` of the ChaCha generator seeded by `seed`.
pub fn stream_rng(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

/// Criticalizes `model`, then compares ball laws of trees conditioned on
/// each weighted size with the ball law of the Kesten-type tree of the
/// critical tilt. Needs a rank-one condition.
pub fn local_limit_experiment(
    model: &OffspringModel,
    condition: &ConditionSpec,
    opts: &LocalLimitOptions,
) -> Result<LocalLimitReport> {
    let gamma = condition.require_reduced()?.to_vec();
    if opts.root_type >= model.num_types() {
        return Err(Error::InvalidModel(format!("root type {} out of range", opts.root_type + 1)));
    }
    let found = find_critical_tilting(model, condition, &CriticalOptions::default())?;
    let tilted = apply_tilt(model, &found.params)?;
    let rho = tilted.mean_matrix().spectral_radius()?;
    if (rho - 1.0).abs() > CRITICALITY_TOL {
        return Err(Error::NotCritical { rho });
    }
    let weighted = ConditionSpec::weighted(&gamma)?;
    let max = opts.sizes.iter().copied().max().unwrap_or(0);
    let reach = achievable_sizes(&tilted, &gamma, max);
    let kesten = KestenBallSampler::new(build_kesten_spec(&tilted)?, &tilted)?;
    let pool = thread_pool(opts.threads)?;
    let sampler_opts = ConditionedOptions { tilt_to_critical: false, ..opts.sampler.clone() };

    // stream 0 is the Kesten reference, stream i + 1 the i-th size
    let (kesten_law, kesten_n, resamples) = pool.install(|| -> Result<_> {
        let mut rng = stream_rng(opts.seed, 0);
        let mut resamples = 0;
        let mut forms = Vec::with_capacity(opts.kesten_samples);
        for _ in 0..opts.kesten_samples {
            let b = kesten.sample(opts.root_type, opts.radius, &mut rng, sampler_opts.size_cap)?;
            resamples += b.resamples;
            forms.push(b.tree.serialize());
        }
        let (law, n) = empirical(forms);
        Ok((law, n, resamples))
    })?;

    let cells = pool.install(|| {
        opts.sizes
            .par_iter()
            .enumerate()
            .map(|(i, &size)| -> Result<SizeCell> {
                if !reach[opts.root_type][size as usize] {
                    return Ok(SizeCell {
                        size,
                        achievable: false,
                        samples: 0,
                        tv: None,
                        std_error: None,
                        mean_attempts: None,
                        note: Some("no tree has this weighted size".into()),
                    });
                }
                let g = [BigRational::from_integer(BigInt::from(size))];
                let sampler = ConditionedSampler::new(&tilted, opts.root_type, &weighted, &g, sampler_opts.clone())?;
                let mut rng = stream_rng(opts.seed, i as u64 + 1);
                let mut forms = Vec::with_capacity(opts.samples_per_size);
                let mut attempts = 0;
                for _ in 0..opts.samples_per_size {
                    let (t, a) = sampler.sample(&mut rng)?;
                    attempts += a;
                    forms.push(t.ball(opts.radius).serialize());
                }
                let (law, n) = empirical(forms);
                let (tv, se) = tv_with_error(&law, n, &kesten_law, kesten_n);
                Ok(SizeCell {
                    size,
                    achievable: true,
                    samples: n,
                    tv: Some(tv),
                    std_error: Some(se),
                    mean_attempts: Some(attempts as f64 / n.max(1) as f64),
                    note: None,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let tested: Vec<&SizeCell> = cells.iter().filter(|c| c.tv.is_some()).collect();
    let xs: Vec<f64> = tested.iter().map(|c| c.size as f64).collect();
    let ys: Vec<f64> = tested.iter().filter_map(|c| c.tv).collect();
    let rho_s = spearman(&xs, &ys);
    let final_tv = ys.last().copied();
    let trend_pass = (tested.len() >= 3 && rho_s.is_some_and(|r| r <= SPEARMAN_PASS))
        || final_tv.is_some_and(|t| t < FINAL_TV_PASS);
    Ok(LocalLimitReport {
        root_type: opts.root_type + 1,
        radius: opts.radius,
        tilt: found.params,
        kesten_samples: kesten_n,
        resamples,
        cells,
        spearman: rho_s,
        final_tv,
        trend_pass,
    })
}
