//! Path following on the solution curve from the origin, and location of the
//! critical tilt on it.

pub mod functions;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pgf::assumptions::check_assumptions;
use crate::pgf::OffspringModel;
use crate::tilting::{tilted_mean_spectral_radius, ConditionSpec, TiltParams};

pub use functions::{g_functions, g_pair, h_functions_and_charts, Charts};
use functions::CurveSystem;

/// Default seed offset along the anchor axis.
pub const SEED_EPS: f64 = 1e-3;
/// Smallest offset tried before the seed is declared failed.
pub const SEED_EPS_FLOOR: f64 = 1e-6;
const SEED_G_TOL: f64 = 1e-12;
/// Residual bound met by every corrected point.
pub const CORRECTOR_TOL: f64 = 1e-11;
const NEWTON_CAP: usize = 15;

#[derive(Clone, Debug, Serialize)]
pub struct CurvePoint {
    pub b: Vec<f64>,
    pub beta: f64,
    pub rho_tilde: f64,
    pub arclength: f64,
    pub jacobian_dets: Vec<f64>,
    pub degenerate_flag: bool,
}

#[derive(Clone, Debug)]
pub struct TraceOptions {
    pub eps: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub growth: f64,
    pub step_cap: usize,
    pub domain_bound: f64,
    /// Stop at the first bracket `ρ̃ < 1 ≤ ρ̃`; otherwise keep going to the
    /// domain bound (used to count crossings).
    pub stop_at_crossing: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            eps: SEED_EPS,
            initial_step: 1e-2,
            min_step: 1e-8,
            max_step: 0.1,
            growth: 1.3,
            step_cap: 200_000,
            domain_bound: 1e3,
            stop_at_crossing: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEnd {
    Crossing,
    DomainExit,
    StepCap,
    Degenerate,
    CurveLost { reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub points: Vec<CurvePoint>,
    pub end: TraceEnd,
    #[serde(skip)]
    tangents: Vec<Vec<f64>>,
}

impl Trace {
    /// Indices `n` with `ρ̃(p_n) − 1` and `ρ̃(p_{n+1}) − 1` on different sides
    /// of zero (zero counts as the upper side).
    pub fn crossing_indices(&self) -> Vec<usize> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[0].rho_tilde >= 1.0) != (w[1].rho_tilde >= 1.0))
            .map(|(n, _)| n)
            .collect()
    }

    pub fn crossings(&self) -> usize {
        self.crossing_indices().len()
    }

    /// Points other than the seed with a coordinate below `1e-10` while
    /// another exceeds `1e-3`.
    pub fn boundary_violations(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, p)| {
                p.b.iter().any(|&v| v < 1e-10) && p.b.iter().any(|&v| v > 1e-3)
            })
            .map(|(n, _)| n)
            .collect()
    }

    /// CSV with columns `arclength, b_1..b_K, beta, rho_tilde, detI_1..detI_K,
    /// degenerate_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.points.first().map_or(0, |p| p.b.len());
        let mut header = vec!["arclength".to_string()];
        header.extend((1..=k).map(|i| format!("b_{i}")));
        header.push("beta".into());
        header.push("rho_tilde".into());
        header.extend((1..=k).map(|i| format!("detI_{i}")));
        header.push("degenerate_flag".into());
        w.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![p.arclength.to_string()];
            row.extend(p.b.iter().map(f64::to_string));
            row.push(p.beta.to_string());
            row.push(p.rho_tilde.to_string());
            row.extend(p.jacobian_dets.iter().map(f64::to_string));
            row.push(p.degenerate_flag.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn solve(a: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    let x = a.lu().solve(&rhs)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `F(b) = 0` with `b_fixed` held at its current value.
fn newton_fixed(sys: &CurveSystem, mut b: Vec<f64>, fixed: usize) -> Option<Vec<f64>> {
    let k = sys.k();
    let free: Vec<usize> = (0..k).filter(|&l| l != fixed).collect();
    for _ in 0..3 * NEWTON_CAP {
        let (f, jac) = sys.eval(&b).ok()?;
        let a = DMatrix::from_fn(k - 1, k - 1, |r, c| jac[(r, free[c])]);
        let delta = solve(a, -DVector::from_vec(f))?;
        for (c, &l) in free.iter().enumerate() {
            b[l] += delta[c];
        }
        if b.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        if max_abs(delta.as_slice()) <= 1e-15 * max_abs(&b) {
            break;
        }
    }
    let (_, res) = sys.residuals(&b).ok()?;
    (max_abs(&res) <= CORRECTOR_TOL).then_some(b)
}

fn taylor_seed(model: &OffspringModel, gamma: &[u64], anchor: usize, eps: f64) -> Vec<f64> {
    let phi_a = model.empty_word_prob(anchor);
    (0..model.num_types())
        .map(|j| {
            if j == anchor {
                eps
            } else {
                let g = gamma[j] as i32;
                phi_a.powi(-g) * model.empty_word_prob(j) * eps.powi(g)
            }
        })
        .collect()
}

fn seed_once(sys: &CurveSystem, condition: &ConditionSpec, eps: f64) -> Option<Vec<f64>> {
    let b0 = taylor_seed(sys.model, sys.gamma, sys.anchor, eps);
    let b = if sys.k() == 1 { b0 } else { newton_fixed(sys, b0, sys.anchor)? };
    let g = g_functions(sys.model, condition, &b).ok()?;
    (max_abs(&g) <= SEED_G_TOL).then_some(b)
}

/// Point of the curve with anchor coordinate `eps`: leading Taylor term of
/// the curve at the origin, then Newton with the anchor held fixed. Retries
/// with `eps/10` down to [`SEED_EPS_FLOOR`].
pub fn seed_near_origin(model: &OffspringModel, condition: &ConditionSpec, eps: f64) -> Result<Vec<f64>> {
    let sys = CurveSystem::new(model, condition)?;
    if let Some(j) = (0..model.num_types()).find(|&j| model.empty_word_prob(j) <= 0.0) {
        return Err(Error::InvalidModel(format!("type {}: ζ(∅) = 0", j + 1)));
    }
    let mut e = eps;
    while e >= SEED_EPS_FLOOR * (1.0 - 1e-12) {
        if let Some(b) = seed_once(&sys, condition, e) {
            return Ok(b);
        }
        e /= 10.0;
    }
    Err(Error::SeedFailed { eps: e * 10.0 })
}

/// Leading Taylor term alone, without correction.
pub fn taylor_seed_uncorrected(model: &OffspringModel, condition: &ConditionSpec, eps: f64) -> Result<Vec<f64>> {
    let sys = CurveSystem::new(model, condition)?;
    Ok(taylor_seed(model, sys.gamma, sys.anchor, eps))
}

struct Tracer<'a> {
    sys: CurveSystem<'a>,
    condition: &'a ConditionSpec,
}

impl Tracer<'_> {
    /// Unit tangent `t` with `J t = 0` and `t · prev > 0`.
    fn tangent(&self, b: &[f64], prev: &[f64]) -> Option<Vec<f64>> {
        let k = self.sys.k();
        let (_, jac) = self.sys.eval(b).ok()?;
        let a = DMatrix::from_fn(k, k, |r, c| if r + 1 < k { jac[(r, c)] } else { prev[c] });
        let mut rhs = DVector::zeros(k);
        rhs[k - 1] = 1.0;
        let t = solve(a, rhs)?;
        let n = t.norm();
        Some(t.iter().map(|v| v / n).collect())
    }

    /// Newton on `F(b) = 0, t · (b − pred) = 0`. Returns the point and the
    /// number of iterations.
    fn correct(&self, pred: &[f64], t: &[f64]) -> Option<(Vec<f64>, usize)> {
        let k = self.sys.k();
        let mut b = pred.to_vec();
        for it in 1..=NEWTON_CAP {
            let (f, jac) = self.sys.eval(&b).ok()?;
            let a = DMatrix::from_fn(k, k, |r, c| if r + 1 < k { jac[(r, c)] } else { t[c] });
            let mut rhs = DVector::zeros(k);
            for (r, v) in f.iter().enumerate() {
                rhs[r] = -v;
            }
            rhs[k - 1] = -t.iter().zip(b.iter().zip(pred)).map(|(ti, (x, p))| ti * (x - p)).sum::<f64>();
            let delta = solve(a, rhs)?;
            for l in 0..k {
                b[l] += delta[l];
            }
            if b.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            if max_abs(delta.as_slice()) <= 1e-13 * max_abs(&b).max(1e-3) {
                let (_, res) = self.sys.residuals(&b).ok()?;
                return (max_abs(&res) <= CORRECTOR_TOL).then_some((b, it));
            }
        }
        let (_, res) = self.sys.residuals(&b).ok()?;
        (max_abs(&res) <= CORRECTOR_TOL).then_some((b, NEWTON_CAP))
    }

    fn point(&self, b: Vec<f64>, arclength: f64) -> Result<CurvePoint> {
        let (beta, _) = self.sys.residuals(&b)?;
        let rho_tilde = tilted_mean_spectral_radius(self.sys.model, self.condition, &b)?;
        let (jacobian_dets, degenerate_flag) = match h_functions_and_charts(self.sys.model, self.condition, &b) {
            Ok(ch) => {
                let flag = ch.is_degenerate();
                (ch.dets, flag)
            }
            Err(_) => (vec![f64::NAN; b.len()], false),
        };
        Ok(CurvePoint { b, beta, rho_tilde, arclength, jacobian_dets, degenerate_flag })
    }

    /// After the arclength corrector stalls: step a coordinate directly and
    /// solve for the others (graph chart over that coordinate).
    fn chart_switch(&self, b: &[f64], t: &[f64], step: f64) -> Option<Vec<f64>> {
        let k = self.sys.k();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| t[y].abs().total_cmp(&t[x].abs()));
        for l in order {
            if t[l].abs() < 1e-6 {
                continue;
            }
            let s = step / t[l].abs();
            let guess: Vec<f64> = b.iter().zip(t).map(|(x, ti)| x + s * ti).collect();
            if guess.iter().any(|&v| !(v > 0.0)) {
                continue;
            }
            if let Some(nb) = newton_fixed(&self.sys, guess, l) {
                return Some(nb);
            }
        }
        None
    }

    fn run(&self, opts: &TraceOptions) -> Result<Trace> {
        let k = self.sys.k();
        let seed = seed_near_origin(self.sys.model, self.condition, opts.eps)?;
        let mut axis = vec![0.0; k];
        axis[self.sys.anchor] = 1.0;
        let mut t = self
            .tangent(&seed, &axis)
            .ok_or_else(|| Error::Numerical("singular Jacobian at the seed".into()))?;
        let mut points = vec![self.point(seed, 0.0)?];
        let mut tangents = vec![t.clone()];
        let mut h = opts.initial_step.clamp(opts.min_step, opts.max_step);
        let mut easy = 0;
        let finish = |points, tangents, end| Ok(Trace { points, end, tangents });
        loop {
            if points.len() > opts.step_cap {
                return finish(points, tangents, TraceEnd::StepCap);
            }
            let last: &CurvePoint = points.last().expect("seeded");
            let b = last.b.clone();
            let pred: Vec<f64> = b.iter().zip(&t).map(|(x, ti)| x + h * ti).collect();
            let mut accepted = None;
            if pred.iter().all(|&v| v > 0.0) {
                if let Some((nb, iters)) = self.correct(&pred, &t) {
                    let dist = nb.iter().zip(&pred).map(|(x, p)| (x - p).powi(2)).sum::<f64>().sqrt();
                    if dist <= 0.5 * h {
                        if let Some(nt) = self.tangent(&nb, &t) {
                            let cos: f64 = nt.iter().zip(&t).map(|(x, y)| x * y).sum();
                            if cos > 0.9 {
                                accepted = Some((nb, nt, iters, h));
                            }
                        }
                    }
                }
            }
            if accepted.is_none() && h <= opts.min_step {
                let step = opts.min_step;
                if let Some(nb) = self.chart_switch(&b, &t, step) {
                    if let Some(nt) = self.tangent(&nb, &t) {
                        let ds = nb.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                        accepted = Some((nb, nt, NEWTON_CAP, ds));
                    }
                }
                if accepted.is_none() {
                    let reason = format!("corrector stalled at minimal step {} from b = {:?}", opts.min_step, b);
                    return finish(points, tangents, TraceEnd::CurveLost { reason });
                }
            }
            let Some((nb, nt, iters, ds)) = accepted else {
                h = (h / 2.0).max(opts.min_step);
                easy = 0;
                continue;
            };
            let prev_rho = last.rho_tilde;
            let arclength = last.arclength + ds;
            let p = match self.point(nb, arclength) {
                Ok(p) => p,
                Err(e) => {
                    let reason = format!("{e}");
                    return finish(points, tangents, TraceEnd::CurveLost { reason });
                }
            };
            let crossed = prev_rho < 1.0 && p.rho_tilde >= 1.0;
            let degenerate = p.degenerate_flag;
            let outside = max_abs(&p.b) > opts.domain_bound;
            points.push(p);
            tangents.push(nt.clone());
            t = nt;
            if crossed && opts.stop_at_crossing {
                return finish(points, tangents, TraceEnd::Crossing);
            }
            if degenerate {
                return finish(points, tangents, TraceEnd::Degenerate);
            }
            if outside {
                return finish(points, tangents, TraceEnd::DomainExit);
            }
            if iters <= 3 {
                easy += 1;
                if easy >= 3 {
                    h = (h * opts.growth).min(opts.max_step);
                    easy = 0;
                }
            } else {
                easy = 0;
            }
        }
    }

    /// Bisection in arclength between `points[n]` and `points[n+1]`,
    /// re-correcting each midpoint onto the curve, until the bracket
    /// collapses.
    fn refine(&self, trace: &Trace, n: usize, rho_tol: f64) -> Result<CurvePoint> {
        let p0 = &trace.points[n];
        let t = &trace.tangents[n];
        let p1 = &trace.points[n + 1];
        // parametrize by the predictor distance along the tangent at p_n
        let width: f64 = p1.b.iter().zip(&p0.b).zip(t).map(|((x, y), ti)| (x - y) * ti).sum();
        let (mut lo, mut hi) = (0.0, width);
        let mut best = if (p1.rho_tilde - 1.0).abs() < (p0.rho_tilde - 1.0).abs() { p1.clone() } else { p0.clone() };
        // run the bracket down to rounding level; rho_tol is checked at the end
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let pred: Vec<f64> = p0.b.iter().zip(t).map(|(x, ti)| x + mid * ti).collect();
            let (nb, _) = self
                .correct(&pred, t)
                .ok_or_else(|| Error::Numerical(format!("corrector failed during bisection at {pred:?}")))?;
            let p = self.point(nb, p0.arclength + mid)?;
            let gap = p.rho_tilde - 1.0;
            if gap.abs() < (best.rho_tilde - 1.0).abs() {
                best = p;
            }
            if gap == 0.0 {
                break;
            }
            if gap < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * width.abs() {
                break;
            }
        }
        if (best.rho_tilde - 1.0).abs() <= rho_tol {
            Ok(best)
        } else {
            Err(Error::Numerical(format!(
                "bisection stalled with |ρ̃ − 1| = {:e}",
                (best.rho_tilde - 1.0).abs()
            )))
        }
    }
}

pub fn trace_curve(model: &OffspringModel, condition: &ConditionSpec, opts: &TraceOptions) -> Result<Trace> {
    let tracer = Tracer { sys: CurveSystem::new(model, condition)?, condition };
    tracer.run(opts)
}

#[derive(Clone, Debug)]
pub struct CriticalOptions {
    pub trace: TraceOptions,
    pub rho_tol: f64,
    /// Trace on to the domain bound after the first crossing and count all
    /// crossings.
    pub count_crossings: bool,
    /// Proceed even if the escape condition fails on the sampling grid.
    pub force: bool,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            trace: TraceOptions::default(),
            rho_tol: 1e-9,
            count_crossings: false,
            force: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalTilt {
    pub params: TiltParams,
    pub point: CurvePoint,
    pub trace: Trace,
    /// Crossings seen along the trace; meaningful when the trace was run to
    /// the domain bound.
    pub crossings: usize,
    pub warnings: Vec<String>,
}

/// Why criticalization failed, with everything traced so far.
#[derive(Clone, Debug)]
pub struct CriticalFailure {
    pub reason: String,
    pub trace: Option<Trace>,
}

impl std::fmt::Display for CriticalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.reason)?;
        if let Some(t) = &self.trace {
            write!(f, " ({} curve points traced)", t.points.len())?;
        }
        Ok(())
    }
}

fn fail(reason: impl Into<String>, trace: Option<Trace>) -> Error {
    Error::Critical(Box::new(CriticalFailure { reason: reason.into(), trace }))
}

/// Traces the curve and bisects the first `ρ̃`-crossing down to
/// `|ρ̃ − 1| ≤ rho_tol`.
pub fn find_critical_tilting(
    model: &OffspringModel,
    condition: &ConditionSpec,
    opts: &CriticalOptions,
) -> Result<CriticalTilt> {
    let report = check_assumptions(model, condition);
    if !report.empty_word.is_pass() {
        return Err(fail("every type needs ζ(∅) > 0", None));
    }
    if !report.condition_b.is_pass() {
        return Err(fail("condition (B) does not hold for Γ", None));
    }
    let mut warnings = Vec::new();
    for (i, v) in report.escape.iter().enumerate() {
        match v {
            crate::pgf::Verdict::Fail { witness } if !opts.force => {
                return Err(fail(format!("escape condition fails for type {}: {witness}", i + 1), None));
            }
            crate::pgf::Verdict::Fail { witness } => {
                warnings.push(format!("escape condition fails for type {}: {witness}", i + 1))
            }
            crate::pgf::Verdict::Undetermined { reason } => {
                warnings.push(format!("escape condition undetermined for type {}: {reason}", i + 1))
            }
            crate::pgf::Verdict::Pass { .. } => {}
        }
    }
    let tracer = Tracer { sys: CurveSystem::new(model, condition)?, condition };
    let mut topts = opts.trace.clone();
    topts.stop_at_crossing = !opts.count_crossings;
    let trace = tracer.run(&topts)?;
    for p in trace.points.iter().filter(|p| p.degenerate_flag) {
        if p.rho_tilde < 1.0 - 1e-6 {
            warnings.push(format!("degenerate point {:?} has ρ̃ = {} < 1", p.b, p.rho_tilde));
        }
    }
    let crossings = trace.crossing_indices();
    let Some(&first) = crossings.iter().find(|&&n| trace.points[n].rho_tilde < 1.0) else {
        let reason = match &trace.end {
            TraceEnd::DomainExit => "no crossing found within bound".to_string(),
            TraceEnd::StepCap => "no crossing found before the step cap".to_string(),
            TraceEnd::Degenerate => "degenerate point reached with no crossing bracket".to_string(),
            TraceEnd::CurveLost { reason } => format!("curve lost: {reason}"),
            TraceEnd::Crossing => unreachable!("crossing end implies a bracket"),
        };
        return Err(fail(reason, Some(trace)));
    };
    let point = match tracer.refine(&trace, first, opts.rho_tol) {
        Ok(p) => p,
        Err(e) => return Err(fail(e.to_string(), Some(trace))),
    };
    let params = TiltParams::from_b(model, &point.b, Some(point.beta))?;
    Ok(CriticalTilt {
        params,
        point,
        crossings: crossings.len(),
        trace,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::pgf::fixtures::*;
    use crate::pgf::Prob;
    use crate::tilting::{apply_tilt, is_good_tilting};

    fn two_type(gamma: &[u64]) -> (OffspringModel, ConditionSpec) {
        let m = OffspringModel::from_projection(
            2,
            vec![
                vec![
                    (vec![0, 0], Prob::Exact(rat(1, 2))),
                    (vec![2, 0], Prob::Exact(rat(1, 4))),
                    (vec![2, 1], Prob::Exact(rat(1, 4))),
                ],
                vec![
                    (vec![0, 0], Prob::Exact(rat(1, 3))),
                    (vec![0, 2], Prob::Exact(rat(1, 3))),
                    (vec![1, 2], Prob::Exact(rat(1, 3))),
                ],
            ],
        )
        .unwrap();
        (m, ConditionSpec::weighted(gamma).unwrap())
    }

    fn mono() -> ConditionSpec {
        ConditionSpec::weighted(&[1]).unwrap()
    }

    #[test]
    fn seeds() {
        assert_eq!(seed_near_origin(&subcritical_binary(), &mono(), 1e-3).unwrap(), vec![1e-3]);
        // φ¹(0) = φ²(0) = 1/2 → b₂ ≈ eps
        let m = OffspringModel::from_projection(
            2,
            vec![
                vec![(vec![0, 0], p(1, 2)), (vec![1, 1], p(1, 2))],
                vec![(vec![0, 0], p(1, 2)), (vec![1, 1], p(1, 2))],
            ],
        )
        .unwrap();
        let c = ConditionSpec::weighted(&[1, 1]).unwrap();
        assert_eq!(taylor_seed_uncorrected(&m, &c, 1e-3).unwrap(), vec![1e-3, 1e-3]);
        let b = seed_near_origin(&m, &c, 1e-3).unwrap();
        assert!(max_abs(&g_functions(&m, &c, &b).unwrap()) <= 1e-12);
    }

    #[test]
    fn monotype_binary_curve_is_the_axis() {
        let tr = trace_curve(&subcritical_binary(), &mono(), &TraceOptions::default()).unwrap();
        assert_eq!(tr.end, TraceEnd::Crossing);
        for p in &tr.points {
            let b = p.b[0];
            assert!((p.rho_tilde - 2.0 * b * b / (2.0 + b * b)).abs() < 1e-12);
        }
        let last = &tr.points[tr.points.len() - 2..];
        assert!(last[0].b[0] < 2f64.sqrt() && last[1].b[0] >= 2f64.sqrt());
    }

    #[test]
    fn monotype_binary_critical_tilt() {
        let r = find_critical_tilting(&subcritical_binary(), &mono(), &CriticalOptions::default()).unwrap();
        assert!((r.params.b[0] - 2f64.sqrt()).abs() < 1e-8);
        let tilted = apply_tilt(&subcritical_binary(), &r.params).unwrap();
        let law = tilted.ordered_law().unwrap().law(0);
        for (_, q) in law {
            assert!((q.to_f64() - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn poisson_critical_tilt() {
        let r = find_critical_tilting(&poisson(2.0), &mono(), &CriticalOptions::default()).unwrap();
        assert!((r.params.b[0] - 0.5).abs() < 1e-8, "{:?}", r.params);
    }

    #[test]
    fn critical_input_recovers_identity() {
        let m = critical_binary();
        let r = find_critical_tilting(&m, &mono(), &CriticalOptions::default()).unwrap();
        assert!((r.params.b[0] - 1.0).abs() < 1e-6);
        assert!((r.params.a[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_type_output_is_critical_and_good() {
        for gamma in [[1, 1], [1, 2]] {
            let (m, c) = two_type(&gamma);
            let opts = CriticalOptions { count_crossings: true, ..Default::default() };
            let r = find_critical_tilting(&m, &c, &opts).unwrap();
            let tilted = apply_tilt(&m, &r.params).unwrap();
            let rho = tilted.mean_matrix().spectral_radius().unwrap();
            assert!((rho - 1.0).abs() < 1e-8, "γ={gamma:?}: ρ = {rho}");
            assert!(is_good_tilting(&r.params, &c).good);
            assert_eq!(r.crossings, 1);
            assert!(r.trace.boundary_violations().is_empty());
            assert!(r.trace.points[0].rho_tilde < 1.0);
            for p in &r.trace.points {
                let (_, res) = CurveSystem::new(&m, &c).unwrap().residuals(&p.b).unwrap();
                assert!(max_abs(&res) <= 1e-9);
            }
        }
    }

    #[test]
    fn rho_tilde_continuity_under_step_halving() {
        let (m, c) = two_type(&[1, 2]);
        let jump = |max_step: f64| {
            let opts = TraceOptions { max_step, ..Default::default() };
            let tr = trace_curve(&m, &c, &opts).unwrap();
            tr.points.windows(2).map(|w| (w[1].rho_tilde - w[0].rho_tilde).abs()).fold(0.0, f64::max)
        };
        let (j1, j2, j3) = (jump(0.1), jump(0.05), jump(0.025));
        assert!(j2 < j1 && j3 < j2, "{j1} {j2} {j3}");
    }

    #[test]
    fn taylor_order_near_origin() {
        let (m, c) = two_type(&[1, 2]);
        let err = |eps: f64| {
            let b = seed_near_origin(&m, &c, eps).unwrap();
            let t = taylor_seed_uncorrected(&m, &c, eps).unwrap();
            (b[1] - t[1]).abs()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let order = (e1 / e2).log2();
        assert!(order >= 2.9, "observed order {order}");
    }

    #[test]
    fn csv_header() {
        let (m, c) = two_type(&[1, 1]);
        let tr = trace_curve(&m, &c, &TraceOptions::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("arclength,b_1,b_2,beta,rho_tilde,detI_1,detI_2,degenerate_flag\n"));
        assert_eq!(text.lines().count(), tr.points.len() + 1);
    }

    #[test]
    fn escape_failure_is_refused() {
        let c = ConditionSpec::weighted(&[1, 1]).unwrap();
        let e = find_critical_tilting(&remark_zeta(), &c, &CriticalOptions::default()).unwrap_err();
        assert!(e.to_string().contains("escape"), "{e}");
    }
}
