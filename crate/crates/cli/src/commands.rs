use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use iterfield::config::{parse_experiment, parse_field_document, parse_glm_document, parse_json, FieldConfig};
use iterfield::conservatism::{check_ks, CheckOptions, ConservatismReport, ScanMode, Verdict, DEFAULT_THRESHOLD};
use iterfield::fedsim::{
    build_server_field, compare_minimizers, run_fedavg, verify_rate, ClientLoss, ClientSpec, FixedPointOptions,
};
use iterfield::sampling::{SampleConfig, DEFAULT_SEED};
use iterfield::spectral::{check_gd_propagation, check_propagation, classify, ClaimedClass};
use iterfield::{Error, Vector};
use serde_json::{json, Value};

use crate::manifest::RunManifest;
use crate::output::{canonical_json, to_value, trace_csv};
use crate::verify::{closed_form_check, surrogate_check};
use crate::{suite, Artifact, CliError, Outcome};

#[derive(Debug, Parser)]
#[command(name = "iterfield", version, about = "Conservatism of iterated vector fields and FedAvg server fields")]
pub struct Cli {
    /// Directory for report files (written atomically).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn out_dir(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check k-conservatism for each k in a range.
    Check(CheckArgs),
    /// Check k = 1..k_max.
    Scan(ScanArgs),
    /// Compare GLM closed-form iterates and surrogate potentials with direct computation.
    GlmVerify(GlmVerifyArgs),
    /// Sampled convexity class and eigenvalue propagation through iterates.
    Spectral(SpectralArgs),
    /// Simulate FedAvg from an experiment config.
    Fedavg(FedavgArgs),
    /// Run a named example set, `full` for all of them, or `list`.
    PaperSuite(SuiteArgs),
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct FieldSource {
    /// Linear field `x ↦ Ax`, as a JSON row-major matrix.
    #[arg(long)]
    pub linear: Option<String>,
    /// Planar rotation by `π/j`.
    #[arg(long)]
    pub rotation: Option<u32>,
    /// Field config file (`{"schema_version": 1, "field": {...}}`).
    #[arg(long)]
    pub field: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Sampling {
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Radius of the sampling ball.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, env = "ITERFIELD_SEED")]
    pub seed: Option<u64>,
}

impl Sampling {
    fn config(&self) -> SampleConfig {
        SampleConfig::ball(self.samples, self.radius, self.seed.unwrap_or(DEFAULT_SEED))
    }
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub source: FieldSource,
    /// `a..b` (inclusive), `a` or a comma list.
    #[arg(long)]
    pub k: String,
    #[command(flatten)]
    pub sampling: Sampling,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Skip exact paths even when available.
    #[arg(long)]
    pub numeric_only: bool,
    /// Expected verdicts, one `Y` or `N` per k; a mismatch exits 1.
    #[arg(long)]
    pub expect: Option<String>,
    /// Exit 1 unless every k is conservative.
    #[arg(long)]
    pub assert_conservative: bool,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub source: FieldSource,
    #[arg(long)]
    pub k_max: u32,
    #[command(flatten)]
    pub sampling: Sampling,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub numeric_only: bool,
    #[arg(long)]
    pub assert_conservative: bool,
}

#[derive(Debug, Args)]
pub struct GlmVerifyArgs {
    /// GLM spec file (`{"schema_version": 1, "activation": ..., "directions": [...]}`).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub k: u32,
    /// Also check the gradient-descent form with this step size.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Points used for the surrogate-potential check.
    #[arg(long, default_value_t = 20)]
    pub surrogate_points: usize,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, env = "ITERFIELD_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClaimedArg {
    StronglyConvex,
    Convex,
    StrictlyConvex,
    WeaklyConvex,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub source: FieldSource,
    #[arg(long)]
    pub k: u32,
    #[command(flatten)]
    pub sampling: Sampling,
    /// Step size for the gradient-descent propagation check.
    #[arg(long, requires = "claimed")]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, requires = "gamma")]
    pub claimed: Option<ClaimedArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Critical points of the potential, as a JSON array of points.
    #[arg(long)]
    pub critical: Option<String>,
}

#[derive(Debug, Args)]
pub struct FedavgArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "ITERFIELD_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    pub id: String,
    #[arg(long, env = "ITERFIELD_SEED")]
    pub seed: Option<u64>,
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Check(a) => check(a),
        Command::Scan(a) => scan(a),
        Command::GlmVerify(a) => glm_verify(a),
        Command::Spectral(a) => spectral(a),
        Command::Fedavg(a) => fedavg(a),
        Command::PaperSuite(a) => suite::run(&a.id, a.seed.unwrap_or(DEFAULT_SEED), cli.out.is_some()),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn usage(e: Error) -> CliError {
    match e {
        Error::Config(_) | Error::Parse(_) => CliError::Usage(e.to_string()),
        other => CliError::Core(other),
    }
}

impl FieldSource {
    fn resolve(&self) -> Result<FieldConfig, CliError> {
        if let Some(m) = &self.linear {
            let matrix: Vec<Vec<f64>> = parse_json(m).map_err(usage)?;
            return Ok(FieldConfig::Linear { matrix });
        }
        if let Some(j) = self.rotation {
            return Ok(FieldConfig::Rotation2d { j });
        }
        let path = self.field.as_ref().expect("clap enforces one source");
        Ok(parse_field_document(&read(path)?).map_err(usage)?.field)
    }
}

/// Builds the report document: `body` plus the manifest, under `name.json`.
pub fn document(name: &str, config: &Value, seed: u64, mut body: Value, extra: Vec<Artifact>, pass: bool) -> Outcome {
    let mut outputs: Vec<String> = extra.iter().map(|a| a.name.clone()).collect();
    outputs.push(format!("{name}.json"));
    outputs.sort();
    let manifest = RunManifest::new(config, seed, outputs);
    let obj = body.as_object_mut().expect("report bodies are objects");
    obj.insert("config".into(), config.clone());
    obj.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serializes"));
    obj.insert("pass".into(), Value::Bool(pass));
    let text = canonical_json(&body);
    let mut artifacts = extra;
    artifacts.push(Artifact {
        name: format!("{name}.json"),
        contents: text.clone(),
    });
    Outcome {
        stdout: text,
        artifacts,
        pass,
    }
}

/// `a..b` or `a..=b` (both inclusive), `a`, or `a,b,c`. A range with
/// `b < a` is empty.
pub fn parse_k_range(s: &str) -> Result<Vec<u32>, CliError> {
    let bad = || CliError::Usage(format!("invalid k range '{s}'"));
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (num(a)?, num(b)?);
        if a == 0 {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let ks = s.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    if ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad());
    }
    Ok(ks)
}

fn verdict_word(yes: bool) -> &'static str {
    if yes {
        "yes"
    } else {
        "no"
    }
}

fn conservatism_body(
    command: &str,
    field: &FieldConfig,
    ks: &[u32],
    opts: &CheckOptions,
    expect: Option<&str>,
    assert_all: bool,
) -> Result<(Value, Value, bool), CliError> {
    let built = field.build().map_err(usage)?;
    let report = if ks.is_empty() {
        ConservatismReport {
            field: built.describe(),
            threshold: opts.threshold,
            sampling: opts.samples,
            results: Vec::new(),
        }
    } else {
        check_ks(&built, ks, opts)?
    };
    let pattern = report.pattern();
    let mut pass = true;
    let mut expectation = Value::Null;
    if let Some(e) = expect {
        let want: Vec<bool> = e
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'Y' => Ok(true),
                'N' => Ok(false),
                _ => Err(CliError::Usage(format!("--expect takes Y/N letters, got '{e}'"))),
            })
            .collect::<Result<_, _>>()?;
        if want.len() != pattern.len() {
            return Err(CliError::Usage(format!(
                "--expect has {} letters for {} values of k",
                want.len(),
                pattern.len()
            )));
        }
        let ok = want == pattern;
        pass &= ok;
        expectation = json!({ "expected": want.iter().map(|y| verdict_word(*y)).collect::<Vec<_>>(), "pass": ok });
    }
    if assert_all {
        pass &= pattern.iter().all(|y| *y);
    }
    let config = json!({
        "command": command,
        "field": to_value(field)?,
        "k": ks,
        "sampling": to_value(&opts.samples)?,
        "threshold": opts.threshold,
        "numeric_only": opts.mode == ScanMode::NumericOnly,
        "expect": expect,
        "assert_conservative": assert_all,
    });
    let conservative_ks: Vec<u32> = report.results.iter().filter(|r| r.verdict.is_yes()).map(|r| r.k).collect();
    let body = json!({
        "command": command,
        "report": to_value(&report)?,
        "pattern": pattern.iter().map(|y| verdict_word(*y)).collect::<Vec<_>>(),
        "conservative_ks": conservative_ks,
        "expectation": expectation,
    });
    Ok((config, body, pass))
}

fn options(sampling: &Sampling, threshold: f64, numeric_only: bool) -> CheckOptions {
    CheckOptions {
        samples: sampling.config(),
        threshold,
        mode: if numeric_only { ScanMode::NumericOnly } else { ScanMode::ExactIfPossible },
        ..CheckOptions::default()
    }
}

fn check(a: &CheckArgs) -> Result<Outcome, CliError> {
    let field = a.source.resolve()?;
    let ks = parse_k_range(&a.k)?;
    let opts = options(&a.sampling, a.threshold, a.numeric_only);
    let (config, body, pass) = conservatism_body("check", &field, &ks, &opts, a.expect.as_deref(), a.assert_conservative)?;
    Ok(document("check", &config, opts.samples.seed, body, vec![], pass))
}

fn scan(a: &ScanArgs) -> Result<Outcome, CliError> {
    if a.k_max == 0 {
        return Err(CliError::Usage("--k-max must be at least 1".into()));
    }
    let field = a.source.resolve()?;
    let ks: Vec<u32> = (1..=a.k_max).collect();
    let opts = options(&a.sampling, a.threshold, a.numeric_only);
    let (config, body, pass) = conservatism_body("scan", &field, &ks, &opts, None, a.assert_conservative)?;
    Ok(document("scan", &config, opts.samples.seed, body, vec![], pass))
}

fn glm_verify(a: &GlmVerifyArgs) -> Result<Outcome, CliError> {
    let doc = parse_glm_document(&read(&a.spec)?).map_err(usage)?;
    let spec = doc.spec().map_err(usage)?;
    let gamma = a.gamma.or(doc.gamma);
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let points = SampleConfig::ball(a.points, a.radius, seed).points(spec.dim());
    let surrogate_pts = SampleConfig::ball(a.surrogate_points, a.radius, seed.wrapping_add(1)).points(spec.dim());
    let mut checks = vec![to_value(&closed_form_check(&spec, None, a.k, &points)?)?];
    let mut surrogates = vec![to_value(&surrogate_check(&spec, None, a.k, &surrogate_pts)?)?];
    if let Some(g) = gamma {
        checks.push(to_value(&closed_form_check(&spec, Some(g), a.k, &points)?)?);
        surrogates.push(to_value(&surrogate_check(&spec, Some(g), a.k, &surrogate_pts)?)?);
    }
    let pass = checks.iter().chain(&surrogates).all(|c| c["pass"] == Value::Bool(true));
    let mut spec_cfg = to_value(&doc)?;
    spec_cfg["gamma"] = json!(gamma);
    let config = json!({
        "command": "glm-verify",
        "spec": spec_cfg,
        "k": a.k,
        "points": a.points,
        "surrogate_points": a.surrogate_points,
        "radius": a.radius,
        "seed": seed,
    });
    let body = json!({
        "command": "glm-verify",
        "activation": spec.activation().name(),
        "gram_residual": spec.gram_residual(),
        "closed_form": checks,
        "surrogate": surrogates,
    });
    Ok(document("glm-verify", &config, seed, body, vec![], pass))
}

fn claimed_class(a: &SpectralArgs) -> Result<Option<ClaimedClass>, CliError> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Usage(format!("--claimed needs --{name}")));
    Ok(match a.claimed {
        None => None,
        Some(ClaimedArg::StronglyConvex) => Some(ClaimedClass::StronglyConvex {
            alpha: need(a.alpha, "alpha")?,
            beta: need(a.beta, "beta")?,
        }),
        Some(ClaimedArg::Convex) => Some(ClaimedClass::Convex { beta: need(a.beta, "beta")? }),
        Some(ClaimedArg::StrictlyConvex) => Some(ClaimedClass::StrictlyConvex { beta: need(a.beta, "beta")? }),
        Some(ClaimedArg::WeaklyConvex) => Some(ClaimedClass::WeaklyConvex {
            delta: need(a.delta, "delta")?,
            beta: need(a.beta, "beta")?,
        }),
    })
}

fn refusal_or<T: serde::Serialize>(r: Result<T, Error>) -> Result<(Value, Option<bool>), CliError> {
    match r {
        Ok(v) => {
            let v = to_value(&v)?;
            let pass = v["pass"].as_bool();
            Ok((v, pass))
        }
        Err(Error::Refused(why)) => Ok((json!({ "refused": why }), None)),
        Err(e) => Err(e.into()),
    }
}

fn spectral(a: &SpectralArgs) -> Result<Outcome, CliError> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let field_cfg = a.source.resolve()?;
    let field = field_cfg.build().map_err(usage)?;
    let samples = a.sampling.config();
    let points = samples.points(field.dim());
    let critical: Vec<Vec<f64>> = match &a.critical {
        Some(s) => parse_json(s).map_err(usage)?,
        None => Vec::new(),
    };
    let critical: Vec<Vector> = critical.iter().map(|p| Vector::from_column_slice(p)).collect();
    let claimed = claimed_class(a)?;

    let classification = match classify(&field, &points) {
        Ok(c) => to_value(&c)?,
        Err(Error::Refused(why)) => return Err(CliError::Usage(format!("not a gradient field: {why}"))),
        Err(e) => return Err(e.into()),
    };
    let (propagation, prop_pass) = refusal_or(check_propagation(&field, a.k, &points))?;
    let mut pass = prop_pass.unwrap_or(true);
    let gd = match (a.gamma, claimed) {
        (Some(g), Some(c)) => {
            let r = check_gd_propagation(&field, g, a.k, &points, c, &critical).map_err(|e| match e {
                Error::Refused(why) | Error::InvalidParameter(why) => CliError::Usage(why),
                other => other.into(),
            })?;
            pass &= r.pass;
            to_value(&r)?
        }
        _ => Value::Null,
    };
    let config = json!({
        "command": "spectral",
        "field": to_value(&field_cfg)?,
        "k": a.k,
        "sampling": to_value(&samples)?,
        "gamma": a.gamma,
        "claimed": claimed.map(|c| to_value(&c)).transpose()?,
        "critical": critical.iter().map(|p| p.as_slice().to_vec()).collect::<Vec<_>>(),
    });
    let body = json!({
        "command": "spectral",
        "classification": classification,
        "propagation": propagation,
        "gd_propagation": gd,
    });
    Ok(document("spectral", &config, samples.seed, body, vec![], pass))
}

fn verdict_value(v: &Verdict) -> Value {
    json!({ "verdict": v.label(), "residual": v.residual() })
}

fn strong_convexity(c: &ClientSpec) -> Option<f64> {
    match c.loss() {
        ClientLoss::Quadratic { a, .. } => Some(a.symmetric_eigenvalues().min()),
        _ => None,
    }
}

fn fedavg(a: &FedavgArgs) -> Result<Outcome, CliError> {
    let mut exp = parse_experiment(&read(&a.config)?).map_err(usage)?;
    if let Some(s) = a.seed {
        exp.seed = s;
    }
    let cfg = exp.fedavg().map_err(|e| CliError::Usage(e.to_string()))?;
    let n = cfg.x0.len();
    let radius = cfg.x0.norm().max(1.0);
    let info = build_server_field(&cfg.clients, cfg.gamma, cfg.k, Some(&SampleConfig::ball(50, radius, exp.seed)))?;
    let trace = run_fedavg(&cfg)?;

    let mut pass = trace.truncated.is_none();
    let rate = match exp.mode.rate_mode() {
        None => Value::Null,
        Some(mode) => {
            let beta = exp
                .beta
                .or_else(|| cfg.clients.iter().map(ClientSpec::smoothness).try_fold(0.0f64, |m, b| Some(m.max(b?))))
                .ok_or_else(|| CliError::Usage("beta is not known for these clients; set \"beta\"".into()))?;
            let alpha = match exp.alpha {
                Some(v) => v,
                None => cfg
                    .clients
                    .iter()
                    .map(strong_convexity)
                    .try_fold(f64::INFINITY, |m, a| Some(m.min(a?)))
                    .unwrap_or(0.0),
            };
            let r = verify_rate(&trace, alpha, beta, mode).map_err(|e| match e {
                Error::Refused(why) => CliError::Usage(why),
                other => other.into(),
            })?;
            pass &= r.pass;
            to_value(&r)?
        }
    };
    let minimizers = match compare_minimizers(&cfg.clients, cfg.gamma, cfg.k, &FixedPointOptions::default()) {
        Ok(m) => to_value(&m)?,
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let last = trace.rounds.last();
    let body = json!({
        "command": "fedavg",
        "server_field": {
            "description": info.field.describe(),
            "conservatism": info.conservatism.as_ref().map(verdict_value),
            "surrogate_available": info.surrogate_available,
        },
        "oracle": to_value(&trace.oracle)?,
        "fs_star": trace.fs_star,
        "rounds_completed": trace.rounds.len().saturating_sub(1),
        "final_x": last.map(|r| r.x.as_slice().to_vec()),
        "final_dist": last.and_then(|r| r.dist),
        "max_average_gap": trace.max_average_gap,
        "truncated": trace.truncated,
        "rate": rate,
        "minimizers": minimizers,
    });
    let config = to_value(&exp)?;
    let csv = Artifact {
        name: "trace.csv".into(),
        contents: trace_csv(&trace, n),
    };
    Ok(document("fedavg", &config, exp.seed, body, vec![csv], pass))
}
