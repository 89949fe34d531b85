//! The `bgwtilt` command line.
//!
//! Exit codes: 0 pass, 1 usage or input error, 2 verification failure,
//! 3 assumption failure, 4 numerical failure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use super::equivalence::{certify_equivalence, compare_families};
use super::local_limit::{local_limit_experiment, stream_rng, LocalLimitOptions};
use super::model_file::ModelFile;
use crate::critical::{find_critical_tilting, CriticalOptions};
use crate::error::{Error, Result};
use crate::exact::parse_rational;
use crate::pgf::check_assumptions;
use crate::tilting::{apply_tilt, is_good_tilting, TiltParams, NORMALIZATION_TOL};
use crate::trees::sample::CRITICALITY_TOL;
use crate::trees::{
    build_kesten_spec, enumerate_conditioned, enumerate_conditioned_f64, ConditionedOptions, ConditionedSampler,
    KestenBallSampler,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "bgwtilt", version, about = "Critical exponential tilts of multitype BGW offspring laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural assumptions on a model and its Γ.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Find the critical Γ-equivalent tilt.
    Criticalize {
        #[command(flatten)]
        common: Common,
        /// Write the tilt parameters here.
        #[arg(long)]
        params_out: Option<PathBuf>,
        /// Write the traced curve as CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Trace to the domain bound and count every crossing.
        #[arg(long)]
        count_crossings: bool,
        /// Proceed when the escape condition fails.
        #[arg(long)]
        force: bool,
    },
    /// Apply given tilt parameters.
    Tilt {
        #[command(flatten)]
        common: Common,
        /// Tilt parameters (JSON).
        #[arg(long)]
        params: PathBuf,
        /// Write the tilted model here.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Draw trees conditioned on Γ N(T) = g.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Root type, from 1.
        #[arg(long, default_value_t = 1)]
        root: usize,
        /// Target g, one comma-separated entry per row of Γ.
        #[arg(long)]
        g: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample from the model itself rather than its critical tilt.
        #[arg(long)]
        no_tilt: bool,
        #[arg(long, default_value_t = 10_000_000)]
        attempt_cap: u64,
    },
    /// Enumerate every tree with Γ N(T) = g.
    Enumerate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        root: usize,
        #[arg(long)]
        g: String,
        /// Largest tree considered, in nodes.
        #[arg(long, default_value_t = 64)]
        budget: usize,
        /// Write the ensemble as CSV here (exact models only).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Certify that the conditioned laws of a model and a tilt agree.
    EquivTest {
        #[command(flatten)]
        common: Common,
        /// Tilt parameters; the critical tilt when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Compare with this second model instead of a tilt.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, default_value_t = 9)]
        max_size: u64,
        #[arg(long, default_value_t = 64)]
        budget: usize,
    },
    /// Sample balls of the Kesten-type tree of the critical tilt.
    KestenSample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        root: usize,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the model as given; it must already be critical.
        #[arg(long)]
        no_tilt: bool,
    },
    /// Compare conditioned balls with Kesten balls across sizes.
    LocalLimit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        root: usize,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        /// Weighted sizes, comma-separated.
        #[arg(long, default_value = "21,41,81")]
        sizes: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 40_000)]
        kesten_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotCritical { .. } | Error::Reducible => EXIT_ASSUMPTION,
        Error::Critical(f) if f.trace.is_none() => EXIT_ASSUMPTION,
        Error::Critical(_)
        | Error::NoConvergence { .. }
        | Error::SeedFailed { .. }
        | Error::Numerical(_)
        | Error::Overflow { .. }
        | Error::AttemptCap { .. }
        | Error::BudgetExceeded { .. }
        | Error::OffCurve { .. }
        | Error::NonPositive { .. } => EXIT_NUMERICAL,
        Error::Normalization { .. } => EXIT_VERIFICATION,
        Error::InvalidModel(_)
        | Error::InvalidCondition(_)
        | Error::Parse { .. }
        | Error::Unsupported(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => EXIT_USAGE,
    }
}

struct Outcome {
    code: i32,
    report: Value,
    summary: String,
}

fn report(command: &str, body: Value) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), 1.into());
    doc.insert("command".into(), command.into());
    if let Value::Object(m) = body {
        doc.extend(m);
    }
    Value::Object(doc)
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report data serializes")
}

fn parse_g(text: &str, rows: usize) -> Result<Vec<BigRational>> {
    let g = text.split(',').map(parse_rational).collect::<Result<Vec<_>>>()?;
    if g.len() != rows {
        return Err(Error::InvalidCondition(format!("g needs {rows} entries, got {}", g.len())));
    }
    Ok(g)
}

fn root_index(root: usize, k: usize) -> Result<usize> {
    if root == 0 || root > k {
        return Err(Error::InvalidModel(format!("root type {root} out of range 1..={k}")));
    }
    Ok(root - 1)
}

fn load(common: &Common) -> Result<ModelFile> {
    ModelFile::load(&common.model.to_string_lossy())
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn run_check(common: &Common) -> Result<Outcome> {
    let f = load(common)?;
    let r = check_assumptions(&f.model, &f.condition);
    let fatal = !r.empty_word.is_pass() || !r.condition_b.is_pass();
    let verdict = |v: &crate::pgf::Verdict| match v {
        crate::pgf::Verdict::Pass { .. } => "pass",
        crate::pgf::Verdict::Fail { .. } => "fail",
        crate::pgf::Verdict::Undetermined { .. } => "undetermined",
    };
    let mut summary = format!(
        "A.1 entire: {}\nA.2 empty word: {}\n",
        verdict(&r.entire),
        verdict(&r.empty_word)
    );
    for (i, v) in r.escape.iter().enumerate() {
        summary += &format!("A.3 escape, type {}: {}\n", i + 1, verdict(v));
    }
    summary += &format!(
        "B: {}\nnondegenerate: {}\nirreducible: {}\n",
        verdict(&r.condition_b),
        verdict(&r.nondegenerate),
        verdict(&r.irreducible)
    );
    if let Some(rho) = r.spectral_radius {
        summary += &format!("spectral radius: {rho}\n");
    }
    Ok(Outcome {
        code: if fatal { EXIT_ASSUMPTION } else { EXIT_PASS },
        report: json!({ "assumptions": to_value(&r), "permits_criticalization": r.permits_criticalization() }),
        summary,
    })
}

fn run_criticalize(
    common: &Common,
    params_out: &Option<PathBuf>,
    trace: &Option<PathBuf>,
    count_crossings: bool,
    force: bool,
) -> Result<Outcome> {
    let f = load(common)?;
    let opts = CriticalOptions { count_crossings, force, ..CriticalOptions::default() };
    let found = match find_critical_tilting(&f.model, &f.condition, &opts) {
        Ok(t) => t,
        Err(Error::Critical(failure)) => {
            if let (Some(path), Some(t)) = (trace, &failure.trace) {
                t.write_csv(BufWriter::new(File::create(path)?))?;
            }
            return Err(Error::Critical(failure));
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = trace {
        found.trace.write_csv(BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = params_out {
        write_text(path, &found.params.to_json())?;
    }
    let tilted = apply_tilt(&f.model, &found.params)?;
    let rho = tilted.mean_matrix().spectral_radius()?;
    let good = is_good_tilting(&found.params, &f.condition);
    let ok = (rho - 1.0).abs() <= CRITICALITY_TOL && good.good;
    let summary = format!(
        "b = {:?}\na = {:?}\nspectral radius of the tilt: {rho}\ngood tilt: {}\ncurve points: {}, crossings: {}\n",
        found.params.b,
        found.params.a,
        good.good,
        found.trace.points.len(),
        found.crossings
    );
    Ok(Outcome {
        code: if ok { EXIT_PASS } else { EXIT_VERIFICATION },
        report: json!({
            "params": to_value(&found.params),
            "point": to_value(&found.point),
            "tilted_spectral_radius": rho,
            "good": to_value(&good),
            "crossings": found.crossings,
            "curve_points": found.trace.points.len(),
            "trace_end": format!("{:?}", found.trace.end),
            "warnings": found.warnings,
        }),
        summary,
    })
}

fn run_tilt(common: &Common, params: &PathBuf, model_out: &Option<PathBuf>) -> Result<Outcome> {
    let f = load(common)?;
    let p = TiltParams::from_json(&std::fs::read_to_string(params)?)?;
    let residuals = p.normalization_residuals(&f.model)?;
    let tilted = apply_tilt(&f.model, &p)?;
    let rho = tilted.mean_matrix().spectral_radius()?;
    let good = is_good_tilting(&p, &f.condition);
    if let Some(path) = model_out {
        let out = ModelFile { name: f.name.clone(), model: tilted, condition: f.condition.clone() };
        write_text(path, &out.to_json())?;
    }
    let normalized = residuals.iter().all(|r| *r <= NORMALIZATION_TOL);
    Ok(Outcome {
        code: if good.good && normalized { EXIT_PASS } else { EXIT_VERIFICATION },
        report: json!({
            "params": to_value(&p),
            "normalization_residuals": residuals,
            "good": to_value(&good),
            "tilted_spectral_radius": rho,
        }),
        summary: format!("good tilt: {}\nspectral radius of the tilt: {rho}\n", good.good),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_sample(
    common: &Common,
    root: usize,
    g: &str,
    count: usize,
    seed: u64,
    no_tilt: bool,
    attempt_cap: u64,
) -> Result<Outcome> {
    let f = load(common)?;
    let root = root_index(root, f.model.num_types())?;
    let g = parse_g(g, f.condition.gamma_matrix().len())?;
    let opts = ConditionedOptions { attempt_cap, tilt_to_critical: !no_tilt, ..ConditionedOptions::default() };
    let sampler = ConditionedSampler::new(&f.model, root, &f.condition, &g, opts)?;
    let mut rng = stream_rng(seed, 0);
    let mut trees = Vec::with_capacity(count);
    let mut attempts = 0;
    for _ in 0..count {
        let (t, a) = sampler.sample(&mut rng)?;
        attempts += a;
        trees.push(t.serialize());
    }
    let mean_attempts = attempts as f64 / count.max(1) as f64;
    Ok(Outcome {
        code: EXIT_PASS,
        report: json!({
            "root_type": root + 1,
            "g": g.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "seed": seed,
            "tilt": sampler.tilt.as_ref().map(to_value),
            "mean_attempts": mean_attempts,
            "trees": trees,
        }),
        summary: format!("{count} trees, {mean_attempts:.2} attempts per tree\n"),
    })
}

fn run_enumerate(common: &Common, root: usize, g: &str, budget: usize, csv: &Option<PathBuf>) -> Result<Outcome> {
    let f = load(common)?;
    let root = root_index(root, f.model.num_types())?;
    let g = parse_g(g, f.condition.gamma_matrix().len())?;
    let (body, n) = if f.model.is_exact() {
        let ens = enumerate_conditioned(&f.model, root, &f.condition, &g, budget)?;
        if let Some(path) = csv {
            ens.write_csv(BufWriter::new(File::create(path)?))?;
        }
        let law: BTreeMap<String, String> = if ens.is_empty() {
            BTreeMap::new()
        } else {
            ens.conditioned_law().into_iter().map(|(k, v)| (k, v.to_string())).collect()
        };
        (json!({ "arithmetic": "rational", "z": ens.z.to_string(), "trees": ens.len(), "law": law }), ens.len())
    } else {
        if csv.is_some() {
            return Err(Error::Unsupported("CSV ensembles need rational probabilities".into()));
        }
        let ens = enumerate_conditioned_f64(&f.model, root, &f.condition, &g, budget)?;
        let law: BTreeMap<String, f64> = if ens.is_empty() { BTreeMap::new() } else { ens.conditioned_law() };
        (json!({ "arithmetic": "float", "z": ens.z, "trees": ens.len(), "law": law }), ens.len())
    };
    let summary = if n == 0 {
        "no tree satisfies the condition; Z = 0\n".to_string()
    } else {
        format!("{n} trees, Z = {}\n", body["z"])
    };
    let mut body = body;
    body["root_type"] = json!(root + 1);
    body["g"] = json!(g.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    body["empty"] = json!(n == 0);
    Ok(Outcome { code: EXIT_PASS, report: body, summary })
}

fn run_equiv(
    common: &Common,
    params: &Option<PathBuf>,
    against: &Option<PathBuf>,
    max_size: u64,
    budget: usize,
) -> Result<Outcome> {
    let f = load(common)?;
    let id = f.name.clone().unwrap_or_else(|| common.model.to_string_lossy().into_owned());
    let r = match against {
        Some(path) => {
            let other = ModelFile::load(&path.to_string_lossy())?;
            compare_families(&f.model, &other.model, &f.condition, max_size, budget, &id)?
        }
        None => {
            let p = params
                .as_ref()
                .map(|path| -> Result<TiltParams> { TiltParams::from_json(&std::fs::read_to_string(path)?) })
                .transpose()?;
            certify_equivalence(&f.model, &f.condition, p.as_ref(), max_size, budget, &id)?
        }
    };
    let failed = r.cells.iter().filter(|c| !c.verdict.is_pass()).count();
    Ok(Outcome {
        code: if r.passed() { EXIT_PASS } else { EXIT_VERIFICATION },
        summary: format!(
            "verdict: {:?}\narithmetic: {}\nsupport condition: {}\ncells: {} ({} not passing)\n",
            r.verdict,
            r.arithmetic,
            r.support_condition,
            r.cells.len(),
            failed
        ),
        report: to_value(&r),
    })
}

fn run_kesten(common: &Common, root: usize, radius: usize, count: usize, seed: u64, no_tilt: bool) -> Result<Outcome> {
    let f = load(common)?;
    let root = root_index(root, f.model.num_types())?;
    let (model, tilt) = if no_tilt {
        (f.model.clone(), None)
    } else {
        let found = find_critical_tilting(&f.model, &f.condition, &CriticalOptions::default())?;
        (apply_tilt(&f.model, &found.params)?, Some(found.params))
    };
    let spec = build_kesten_spec(&model)?;
    let sampler = KestenBallSampler::new(spec.clone(), &model)?;
    let mut rng = stream_rng(seed, 0);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut resamples = 0;
    for _ in 0..count {
        let b = sampler.sample(root, radius, &mut rng, 1_000_000)?;
        resamples += b.resamples;
        *counts.entry(b.tree.serialize()).or_default() += 1;
    }
    let ok = spec.eigen_residual <= 1e-10 && (0..model.num_types()).all(|j| (spec.hat_mass(j) - 1.0).abs() <= 1e-10);
    Ok(Outcome {
        code: if ok { EXIT_PASS } else { EXIT_VERIFICATION },
        summary: format!("{} distinct balls among {count}\neigen residual: {:e}\n", counts.len(), spec.eigen_residual),
        report: json!({
            "root_type": root + 1,
            "radius": radius,
            "seed": seed,
            "tilt": tilt.as_ref().map(to_value),
            "spec": to_value(&spec),
            "resamples": resamples,
            "balls": counts,
        }),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_local_limit(
    common: &Common,
    root: usize,
    radius: usize,
    sizes: &str,
    samples: usize,
    kesten_samples: usize,
    seed: u64,
) -> Result<Outcome> {
    let f = load(common)?;
    let root = root_index(root, f.model.num_types())?;
    let sizes = sizes
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| Error::InvalidCondition(format!("bad size {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let opts = LocalLimitOptions {
        root_type: root,
        radius,
        sizes,
        samples_per_size: samples,
        kesten_samples,
        seed,
        ..LocalLimitOptions::default()
    };
    let r = local_limit_experiment(&f.model, &f.condition, &opts)?;
    let mut summary = String::new();
    for c in &r.cells {
        match (c.tv, c.std_error) {
            (Some(tv), Some(se)) => summary += &format!("size {}: TV {tv:.4} ± {se:.4}\n", c.size),
            _ => summary += &format!("size {}: not achievable\n", c.size),
        }
    }
    summary += &format!("trend test: {}\n", if r.trend_pass { "pass" } else { "fail" });
    let mut body = to_value(&r);
    body["seed"] = json!(seed);
    Ok(Outcome { code: if r.trend_pass { EXIT_PASS } else { EXIT_VERIFICATION }, report: body, summary })
}

fn dispatch(cmd: &Command) -> (&'static str, Option<&PathBuf>, Result<Outcome>) {
    match cmd {
        Command::Check { common } => ("check", common.out.as_ref(), run_check(common)),
        Command::Criticalize { common, params_out, trace, count_crossings, force } => (
            "criticalize",
            common.out.as_ref(),
            run_criticalize(common, params_out, trace, *count_crossings, *force),
        ),
        Command::Tilt { common, params, model_out } => ("tilt", common.out.as_ref(), run_tilt(common, params, model_out)),
        Command::Sample { common, root, g, count, seed, no_tilt, attempt_cap } => (
            "sample",
            common.out.as_ref(),
            run_sample(common, *root, g, *count, *seed, *no_tilt, *attempt_cap),
        ),
        Command::Enumerate { common, root, g, budget, csv } => {
            ("enumerate", common.out.as_ref(), run_enumerate(common, *root, g, *budget, csv))
        }
        Command::EquivTest { common, params, against, max_size, budget } => (
            "equiv-test",
            common.out.as_ref(),
            run_equiv(common, params, against, *max_size, *budget),
        ),
        Command::KestenSample { common, root, radius, count, seed, no_tilt } => (
            "kesten-sample",
            common.out.as_ref(),
            run_kesten(common, *root, *radius, *count, *seed, *no_tilt),
        ),
        Command::LocalLimit { common, root, radius, sizes, samples, kesten_samples, seed } => (
            "local-limit",
            common.out.as_ref(),
            run_local_limit(common, *root, *radius, sizes, *samples, *kesten_samples, *seed),
        ),
    }
}

fn error_body(e: &Error) -> Value {
    let mut body = json!({ "error": e.to_string() });
    if let Error::Parse { path, line, column, .. } = e {
        body["path"] = json!(path);
        body["line"] = json!(line);
        body["column"] = json!(column);
    }
    if let Error::Critical(f) = e {
        body["trace_points"] = json!(f.trace.as_ref().map(|t| t.points.len()));
    }
    body
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (name, out, result) = dispatch(&cli.command);
    let (code, body) = match result {
        Ok(o) => {
            print!("{}", o.summary);
            (o.code, o.report)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(&e), error_body(&e))
        }
    };
    let mut doc = report(name, body);
    doc["exit_code"] = json!(code);
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
        if let Err(e) = std::fs::write(path, text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }
    code
}
