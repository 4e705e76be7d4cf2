//! `sigsel` command-line tool.
//!
//! Subcommands: `gendata`, `enroll`, `verify`, `evaluate`, `sweep`. Exit
//! status is 0 on success, 1 when the command fails and 2 when the
//! arguments cannot be parsed.

pub mod error;
pub mod knowledgebase;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sigsel_core::dataset::{load_probes, GeneratorConfig, Protocol};
use sigsel_core::evaluation::{enroll_all, run_protocol, tau_grid, write_sweep_csv, FeatureSweepRow, ProtocolConfig, ProtocolReport};
use sigsel_core::{generate_synthetic, load_dataset, make_trial_split, verify, Weighting};

pub use error::{CliError, CliResult};
pub use knowledgebase::{load_knowledgebase, save_knowledgebase, Knowledgebase, KB_VERSION};

/// Timestamp written when `--fixed-time` is given.
pub const FIXED_TIME: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Parser)]
#[command(name = "sigsel", version, about = "Writer-dependent online signature verification")]
pub struct Cli {
    /// Worker threads for enrollment (default: all cores). Results do not
    /// depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Write a constant creation time so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub fixed_time: bool,

    /// JSON file whose keys override the corresponding flags, shaped as
    /// {"seed": n, "generator": {...}, "protocol": {...}}.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted per-user features.
    Gendata(GendataArgs),
    /// Enroll every user from one trial's training split.
    Enroll(EnrollArgs),
    /// Verify signatures against a user's enrolled model.
    Verify(VerifyArgs),
    /// Run a protocol over several randomized trials.
    Evaluate(EvaluateArgs),
    /// Mean EER of a protocol for several feature counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub genuine: Option<usize>,
    #[arg(long)]
    pub forgery: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub planted: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth sidecar (default: next to the corpus, `.truth.json`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Flags shared by every command that enrolls users.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_protocol)]
    pub protocol: Protocol,
    /// Selected features per user (default: 60 for *_05, 50 for *_20).
    #[arg(long)]
    pub d: Option<usize>,
    /// Fuzzy clusters per user (default: 3 with 15+ training signatures, else 1).
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Interval half-width in standard deviations.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Neighbours in the affinity graph.
    #[arg(long)]
    pub p: Option<usize>,
    /// Embedding vectors used for feature scoring.
    #[arg(long)]
    pub kc: Option<usize>,
    #[arg(long, value_parser = parse_weighting)]
    pub weighting: Option<Weighting>,
    #[arg(long)]
    pub heat_sigma: Option<f64>,
    #[arg(long)]
    pub fuzzifier: Option<f64>,
    /// Stored decision threshold (fraction of d).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Reuse one training draw for the skilled and random variants.
    #[arg(long)]
    pub shared_training: bool,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Which trial's training split to enroll from.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Claimed identity (default: the sample's user_id column).
    #[arg(long)]
    pub user: Option<String>,
    /// CSV with the corpus columns; the label column is optional.
    #[arg(long)]
    pub sample: PathBuf,
    /// Threshold overriding the stored one.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tau_step: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Mean FAR/FRR curve as CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated feature counts, e.g. 5,10,20,50.
    #[arg(long, value_delimiter = ',', required = true)]
    pub d_list: Vec<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// `d,mean_eer` table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse()
}

/// Everything a command can be configured with; `--config` files use the
/// same shape.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub protocol: ProtocolConfig,
}

#[derive(Serialize)]
struct EnrollEcho<'a> {
    data: &'a Path,
    protocol: Protocol,
    trial: usize,
    trial_seed: u64,
    settings: &'a ProtocolConfig,
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    version: &'static str,
    created: &'a str,
    data: &'a Path,
    mean_eer_percent: f64,
    report: &'a ProtocolReport,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    version: &'static str,
    created: &'a str,
    data: &'a Path,
    protocol: Protocol,
    rows: &'a [FeatureSweepRow],
    reports: &'a [ProtocolReport],
}

/// Parses `args` (program name first) and runs the command, printing to
/// the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// As [`run`], writing to the given streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let created = if cli.fixed_time {
        FIXED_TIME.to_string()
    } else {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    };
    let ctx = Context {
        created,
        config_file: cli.config.clone(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Invalid("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker threads: {e}")))?;
    // The worker pool needs a `Send` sink, so output is collected first.
    let mut buf = Vec::new();
    let result = pool.install(|| {
        let sink: &mut dyn Write = &mut buf;
        match &cli.command {
            Command::Gendata(a) => gendata(&ctx, a, sink),
            Command::Enroll(a) => enroll(&ctx, a, sink),
            Command::Verify(a) => verify_cmd(a, sink),
            Command::Evaluate(a) => evaluate(&ctx, a, sink),
            Command::Sweep(a) => sweep(&ctx, a, sink),
        }
    });
    out.write_all(&buf).map_err(|e| CliError::io("<stdout>", e))?;
    result
}

struct Context {
    created: String,
    config_file: Option<PathBuf>,
}

impl Context {
    /// Applies the `--config` file, if any, on top of the flag values.
    fn resolve(&self, from_flags: RunConfig) -> CliResult<RunConfig> {
        let Some(path) = &self.config_file else {
            return Ok(from_flags);
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let json = |source| CliError::Json {
            path: path.clone(),
            source,
        };
        let overrides: serde_json::Value = serde_json::from_str(&text).map_err(json)?;
        if !overrides.is_object() {
            return Err(CliError::Invalid(format!(
                "{}: configuration must be a JSON object",
                path.display()
            )));
        }
        let mut merged = serde_json::to_value(&from_flags).map_err(json)?;
        merge(&mut merged, overrides);
        serde_json::from_value(merged).map_err(json)
    }
}

fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_csv_file<F, E>(path: &Path, write: F) -> CliResult<()>
where
    F: FnOnce(BufWriter<File>) -> Result<(), E>,
    E: std::fmt::Display,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write(BufWriter::new(file)).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.json"))
}

fn gendata(ctx: &Context, a: &GendataArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut g = GeneratorConfig::default();
    if let Some(v) = a.users {
        g.n_users = v;
    }
    if let Some(v) = a.genuine {
        g.genuine_per_user = v;
    }
    if let Some(v) = a.forgery {
        g.forgery_per_user = v;
    }
    if let Some(v) = a.features {
        g.features = v;
    }
    if let Some(v) = a.planted {
        g.planted = v;
    }
    if let Some(v) = a.separation {
        g.separation = v;
    }
    if let Some(v) = a.noise {
        g.noise = v;
    }
    let cfg = ctx.resolve(RunConfig {
        seed: a.seed,
        generator: g,
        ..Default::default()
    })?;
    let (dataset, truth) = generate_synthetic(&cfg.generator, cfg.seed)?;
    dataset.save_csv(&a.out)?;
    let truth_out = a.truth.clone().unwrap_or_else(|| truth_path(&a.out));
    truth.save(&truth_out)?;
    writeln_out(
        out,
        format_args!(
            "wrote {} signatures of {} users ({} features) to {}; planted features to {}",
            dataset.len(),
            dataset.user_count(),
            dataset.feature_count(),
            a.out.display(),
            truth_out.display()
        ),
    )
}

fn writeln_out(out: &mut dyn Write, args: std::fmt::Arguments<'_>) -> CliResult<()> {
    writeln!(out, "{args}").map_err(|e| CliError::io("<stdout>", e))
}

fn protocol_config(ctx: &Context, p: &PipelineArgs, trials: Option<usize>, grid: Option<Vec<f64>>) -> CliResult<ProtocolConfig> {
    let mut c = ProtocolConfig {
        features: p.d,
        master_seed: p.seed,
        shared_training: p.shared_training,
        ..Default::default()
    };
    if let Some(t) = trials {
        c.trials = t;
    }
    if let Some(g) = grid {
        c.tau_grid = g;
    }
    let e = &mut c.enroll;
    if p.clusters.is_some() {
        e.clusters = p.clusters;
    }
    if let Some(v) = p.alpha {
        e.alpha = v;
    }
    if let Some(v) = p.fuzzifier {
        e.fuzzifier = v;
    }
    if let Some(v) = p.tau {
        e.tau = v;
    }
    if let Some(v) = p.p {
        e.selection.neighbors = v;
    }
    if let Some(v) = p.kc {
        e.selection.eigenvectors = v;
    }
    if let Some(v) = p.weighting {
        e.selection.weighting = v;
    }
    if p.heat_sigma.is_some() {
        e.selection.heat_sigma = p.heat_sigma;
    }
    let resolved = ctx.resolve(RunConfig {
        seed: p.seed,
        protocol: c,
        ..Default::default()
    })?;
    Ok(resolved.protocol)
}

fn grid_of(g: &GridArgs) -> CliResult<Vec<f64>> {
    Ok(tau_grid(g.tau_min, g.tau_max, g.tau_step)?)
}

fn enroll(ctx: &Context, a: &EnrollArgs, out: &mut dyn Write) -> CliResult<()> {
    let p = &a.pipeline;
    let config = protocol_config(ctx, p, None, None)?;
    let dataset = load_dataset(&p.data)?;
    let trial_seed = config.trial_seed(p.protocol, a.trial);
    let split = make_trial_split(&dataset, p.protocol, trial_seed)?;
    let params = config.enroll_params(p.protocol, a.trial);
    if params.selection.features > dataset.feature_count() {
        return Err(CliError::Invalid(format!(
            "cannot select {} of {} features",
            params.selection.features,
            dataset.feature_count()
        )));
    }
    let models = enroll_all(&dataset, &split, &params)?;
    let echo = EnrollEcho {
        data: &p.data,
        protocol: p.protocol,
        trial: a.trial,
        trial_seed,
        settings: &config,
    };
    let echo = serde_json::to_value(&echo).map_err(|source| CliError::Json {
        path: a.out.clone(),
        source,
    })?;
    let kb = Knowledgebase::new(ctx.created.clone(), echo, models);
    save_knowledgebase(&kb, &a.out)?;
    let refs: usize = kb.models.iter().map(|m| m.references.len()).sum();
    writeln_out(
        out,
        format_args!(
            "enrolled {} users ({} reference signatures, d = {}) into {}",
            kb.models.len(),
            refs,
            params.selection.features,
            a.out.display()
        ),
    )
}

fn verify_cmd(a: &VerifyArgs, out: &mut dyn Write) -> CliResult<()> {
    let kb = load_knowledgebase(&a.kb)?;
    let probes = load_probes(&a.sample)?;
    for probe in &probes {
        let claimed = a.user.as_deref().unwrap_or(&probe.user_id);
        let model = kb
            .model(claimed)
            .ok_or_else(|| sigsel_core::Error::UnknownUser(claimed.to_string()))?;
        let r = verify(&probe.features, model, a.tau)?;
        writeln_out(
            out,
            format_args!(
                "user {claimed} sample {}: A_c = {} d = {} tau = {} required = {} cluster = {} {}",
                probe.sample_id,
                r.acceptance_count,
                r.d,
                r.tau_used,
                r.required,
                r.best_cluster,
                if r.accepted { "ACCEPT" } else { "REJECT" }
            ),
        )?;
    }
    Ok(())
}

fn evaluate(ctx: &Context, a: &EvaluateArgs, out: &mut dyn Write) -> CliResult<()> {
    let p = &a.pipeline;
    let config = protocol_config(ctx, p, a.grid.trials, Some(grid_of(&a.grid)?))?;
    let dataset = load_dataset(&p.data)?;
    let report = run_protocol(&dataset, p.protocol, &config)?;
    for t in &report.trials {
        writeln_out(out, format_args!("trial {:>2}: EER {:.2}%", t.trial, 100.0 * t.eer))?;
    }
    writeln_out(
        out,
        format_args!(
            "{} (d = {}): mean EER {:.2}% over {} trials",
            report.protocol,
            report.params.features,
            100.0 * report.mean_eer,
            report.trials.len()
        ),
    )?;
    if let Some(path) = &a.report {
        write_json(
            &EvaluationReport {
                version: KB_VERSION,
                created: &ctx.created,
                data: &p.data,
                mean_eer_percent: 100.0 * report.mean_eer,
                report: &report,
            },
            path,
        )?;
    }
    if let Some(path) = &a.curves {
        write_csv_file(path, |w| report.mean_curve.write_csv(w))?;
    }
    Ok(())
}

fn sweep(ctx: &Context, a: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let p = &a.pipeline;
    let config = protocol_config(ctx, p, a.grid.trials, Some(grid_of(&a.grid)?))?;
    let dataset = load_dataset(&p.data)?;
    let mut reports = Vec::with_capacity(a.d_list.len());
    for &d in &a.d_list {
        let cfg = ProtocolConfig {
            features: Some(d),
            ..config.clone()
        };
        let report = run_protocol(&dataset, p.protocol, &cfg)?;
        writeln_out(out, format_args!("d = {d:>3}: mean EER {:.2}%", 100.0 * report.mean_eer))?;
        reports.push(report);
    }
    let rows: Vec<FeatureSweepRow> = reports
        .iter()
        .map(|r| FeatureSweepRow {
            d: r.params.features,
            mean_eer: r.mean_eer,
        })
        .collect();
    if let Some(path) = &a.report {
        write_json(
            &SweepReport {
                version: KB_VERSION,
                created: &ctx.created,
                data: &p.data,
                protocol: p.protocol,
                rows: &rows,
                reports: &reports,
            },
            path,
        )?;
    }
    if let Some(path) = &a.table {
        write_csv_file(path, |w| write_sweep_csv(&rows, w))?;
    }
    Ok(())
}
