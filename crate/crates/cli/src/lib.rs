//! Experiment runner: every invocation becomes an [`ExperimentConfig`], which
//! [`run`] re-parses, dispatches and wraps into a [`Report`].

use std::fs::File;
use std::io::{BufReader, Write};
use std::sync::Arc;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use shortcode::alphared::{self, FoldedFunction, Gadget, OuterInstance, PsiInstance};
use shortcode::fourier::CodeFunction;
use shortcode::invariance::{self, MultilinearPoly, PointDist, PolySpec, Psi};
use shortcode::mc;
use shortcode::rm::{CodePair, RmCode};
use shortcode::spectrum::{self, CayleyGraph, ExpansionOptions, HyperOptions, SetSpec};
use shortcode::tester::{CanonicalTester, CurveMode, DEFAULT_CURVE_BUDGET};
use shortcode::uggap::{self, CurveSample, GammaInstance, ImplicitSdp, Labeling};
use shortcode::{BitWord, Error};

pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_UNKNOWN_COMMAND: i32 = 64;
pub const EXIT_MALFORMED: i32 = 65;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn malformed(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_MALFORMED,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExceeded { .. } => EXIT_BUDGET,
            Error::Parse(_) => EXIT_MALFORMED,
            _ => EXIT_PRECONDITION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "shortcode", version, about = "Reed-Muller testers, their Cayley graphs, and gap instances")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Base seed for every randomized step.
    #[arg(long, global = true, env = "SHORTCODE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; changes wall-clock time only.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output path, `-` for stdout.
    #[arg(long, global = true, default_value = "-")]
    pub out: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Code parameters.
    #[command(subcommand)]
    Code(CodeCmd),
    /// Soundness curves and smoothness.
    #[command(subcommand)]
    Tester(TesterCmd),
    /// Cayley graph spectrum, expansion and hypercontractivity.
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
    /// Fourier analysis of functions on the vertex code.
    #[command(subcommand)]
    Fourier(FourierCmd),
    /// Invariance gaps, the MZ sampler and the Gaussian stability curve.
    #[command(subcommand)]
    Invariance(InvarianceCmd),
    /// Max-2Lin gap instances.
    #[command(subcommand)]
    Ug(UgCmd),
    /// The folded dictatorship test.
    #[command(subcommand)]
    Dict(DictCmd),
    /// Composed instances over an outer Max-2Lin instance.
    #[command(subcommand)]
    Psi(PsiCmd),
    /// Runs a JSON experiment config.
    Run(RunArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum CodeCmd {
    Info(CodeInfoArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum TesterCmd {
    Curve(CurveArgs),
    Smooth(SmoothArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum SpectrumCmd {
    Profile(ProfileArgs),
    Expansion(ExpansionArgs),
    Hyper(HyperArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum FourierCmd {
    Influences(InfluenceArgs),
    Stability(StabilityArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum InvarianceCmd {
    Gap(GapArgs),
    MzCheck(MzArgs),
    Gamma(GammaArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum UgCmd {
    Gen(UgGenArgs),
    Sdp(UgSdpArgs),
    Eval(UgEvalArgs),
    Bound(UgBoundArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum DictCmd {
    Test(DictArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum PsiCmd {
    Gen(PsiGenArgs),
    Eval(PsiEvalArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RunArgs {
    /// Path to an experiment config (JSON).
    #[arg(long)]
    pub config: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CodeInfoArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
}

/// Code pair and tester choice shared by most commands.
#[derive(Args, Debug, Clone, Serialize)]
pub struct TesterArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    /// `rm`, `xor:<r>` or `walk:<time>` (the latter two over `rm`).
    #[arg(long, default_value = "rm")]
    pub tester: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sampled,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CurveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    #[arg(long, default_value_t = 3)]
    pub kmax: usize,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long, default_value_t = DEFAULT_CURVE_BUDGET)]
    pub budget: u128,
    /// Random words per distance in sampled mode.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Tester draws per word in sampled mode.
    #[arg(long, default_value_t = 4000)]
    pub samples: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SmoothArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    /// Estimate marginals from this many draws instead of the support.
    #[arg(long)]
    pub samples: Option<u64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    #[arg(long, default_value_t = 3)]
    pub kmax: usize,
    #[arg(long, default_value_t = DEFAULT_CURVE_BUDGET)]
    pub budget: u128,
    #[arg(long)]
    pub walk_time: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExpansionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    /// `random:<size>`, `dictator:<coordinate>` or `vertices:<v,v,...>`.
    #[arg(long, default_value = "dictator:0")]
    pub set: String,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 50_000_000)]
    pub budget: u128,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HyperArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub ell: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 8)]
    pub sparsity: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InfluenceArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    /// `cut:<coordinate>`, `char:<hex word>`, `random:<tag>` or `file:<dump>`.
    #[arg(long = "fn", default_value = "cut:0")]
    #[serde(rename = "fn")]
    pub function: String,
    #[arg(long, default_value_t = 2)]
    pub ell: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    #[arg(long = "fn", default_value = "cut:0")]
    #[serde(rename = "fn")]
    pub function: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiKind {
    Zeta,
    Sign,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Cube,
    Rm,
    Gaussian,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GapArgs {
    #[arg(long, default_value_t = 7)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// `random` (regular degree-2), `linear` (normalized sum) or `file:<json>`.
    #[arg(long, default_value = "random")]
    pub poly: String,
    /// Perfect matchings of pair terms in `random`.
    #[arg(long, default_value_t = 4)]
    pub matchings: usize,
    /// Pair coefficient before normalization in `random`.
    #[arg(long, default_value_t = 0.316_227_766_016_837_94)]
    pub pair_scale: f64,
    /// Multiplies the polynomial after normalization.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, value_enum, default_value_t = PsiKind::Zeta)]
    pub psi: PsiKind,
    #[arg(long, value_enum, default_value_t = DistKind::Cube)]
    pub dist_a: DistKind,
    #[arg(long, value_enum, default_value_t = DistKind::Rm)]
    pub dist_b: DistKind,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MzArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    /// Variables fixed per bucket; defaults to `min(d-1, 4)`.
    #[arg(long)]
    pub block_bits: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GammaArgs {
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub mu: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct UgGenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    #[arg(long, value_enum, default_value_t = Materialize::Sampler)]
    pub mode: Materialize,
    #[arg(long, default_value_t = 100_000_000)]
    pub budget: u128,
    /// Write the materialized instance here instead of embedding it.
    #[arg(long)]
    pub instance_out: Option<String>,
    /// Constraints to draw as a preview in sampler mode.
    #[arg(long, default_value_t = 5)]
    pub preview: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Materialize {
    Materialize,
    Sampler,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct UgSdpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    /// Feasibility probes.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Draws for the objective when the tester has no explicit support.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct UgEvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    /// `constant:<hex>`, `hash:<seed>`, `folded-hash:<seed>` or `best-symmetric`.
    #[arg(long, default_value = "constant:0")]
    pub labeling: String,
    #[arg(long, value_enum, default_value_t = Mode::Sampled)]
    pub mode: Mode,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 100_000_000)]
    pub budget: u128,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct UgBoundArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub tester: TesterArgs,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long, default_value_t = DEFAULT_CURVE_BUDGET)]
    pub budget: u128,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 4000)]
    pub samples: u64,
    /// Also evaluate the XOR-curve parameter check at this delta.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of variables for the parameter check (a power of two).
    #[arg(long, default_value_t = 1024)]
    pub check_n: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DictArgs {
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub t: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// `dictator:<point>`, `constant:<hex>` or `random:<seed>`.
    #[arg(long = "fn", default_value = "dictator:0")]
    #[serde(rename = "fn")]
    pub function: String,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PsiArgs {
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub t: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// `loop`, `path:<l,l,...>`, `cycle:<l,l,...>` (consistent shifts from
    /// the listed labels) or `file:<json>`.
    #[arg(long, default_value = "loop")]
    pub outer: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PsiGenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub psi: PsiArgs,
    #[arg(long, default_value_t = 3)]
    pub preview: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PsiEvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub psi: PsiArgs,
    /// `translated` (dictators at the outer labels), `dictators:<p,p,...>`
    /// or `random:<seed>`.
    #[arg(long, default_value = "translated")]
    pub labeling: String,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Space-separated command path such as `code info`.
    pub command: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default = "default_format")]
    pub format: Format,
}

fn default_out() -> String {
    "-".into()
}

fn default_format() -> Format {
    Format::Json
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub results: Value,
    pub tool_version: String,
    pub wall_clock_ms: u64,
}

impl Command {
    /// Command path and parameters with every default filled in.
    pub fn resolved(&self) -> CliResult<(String, Map<String, Value>)> {
        fn p<T: Serialize>(name: &str, args: &T) -> CliResult<(String, Map<String, Value>)> {
            match serde_json::to_value(args) {
                Ok(Value::Object(m)) => Ok((name.to_string(), m)),
                _ => Err(CliError::malformed("parameters do not serialize to an object")),
            }
        }
        match self {
            Command::Code(CodeCmd::Info(a)) => p("code info", a),
            Command::Tester(TesterCmd::Curve(a)) => p("tester curve", a),
            Command::Tester(TesterCmd::Smooth(a)) => p("tester smooth", a),
            Command::Spectrum(SpectrumCmd::Profile(a)) => p("spectrum profile", a),
            Command::Spectrum(SpectrumCmd::Expansion(a)) => p("spectrum expansion", a),
            Command::Spectrum(SpectrumCmd::Hyper(a)) => p("spectrum hyper", a),
            Command::Fourier(FourierCmd::Influences(a)) => p("fourier influences", a),
            Command::Fourier(FourierCmd::Stability(a)) => p("fourier stability", a),
            Command::Invariance(InvarianceCmd::Gap(a)) => p("invariance gap", a),
            Command::Invariance(InvarianceCmd::MzCheck(a)) => p("invariance mz-check", a),
            Command::Invariance(InvarianceCmd::Gamma(a)) => p("invariance gamma", a),
            Command::Ug(UgCmd::Gen(a)) => p("ug gen", a),
            Command::Ug(UgCmd::Sdp(a)) => p("ug sdp", a),
            Command::Ug(UgCmd::Eval(a)) => p("ug eval", a),
            Command::Ug(UgCmd::Bound(a)) => p("ug bound", a),
            Command::Dict(DictCmd::Test(a)) => p("dict test", a),
            Command::Psi(PsiCmd::Gen(a)) => p("psi gen", a),
            Command::Psi(PsiCmd::Eval(a)) => p("psi eval", a),
            Command::Run(_) => Err(CliError {
                code: EXIT_UNKNOWN_COMMAND,
                message: "`run` cannot be nested inside a config".into(),
            }),
        }
    }
}

fn clap_error(e: clap::Error) -> CliError {
    let code = match e.kind() {
        ErrorKind::InvalidSubcommand
        | ErrorKind::MissingSubcommand
        | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_UNKNOWN_COMMAND,
        _ => EXIT_MALFORMED,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

/// Builds the config for a parsed command line.
pub fn config_from_cli(cli: &Cli) -> CliResult<ExperimentConfig> {
    let (command, params) = cli.command.resolved()?;
    Ok(ExperimentConfig {
        command,
        params,
        seed: cli.global.seed,
        out: cli.global.out.clone(),
        format: cli.global.format,
    })
}

/// Reads a config file; unreadable or ill-formed files are malformed configs.
pub fn load_config(path: &str) -> CliResult<ExperimentConfig> {
    let file = File::open(path).map_err(|e| CliError::malformed(format!("{path}: {e}")))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::malformed(format!("{path}: {e}")))
}

/// Re-parses a config into a typed command, so configs and command lines go
/// through the same validation and defaults.
pub fn parse_config(config: &ExperimentConfig) -> CliResult<Command> {
    let mut argv: Vec<String> = vec!["shortcode".into()];
    argv.extend(config.command.split_whitespace().map(String::from));
    for (k, v) in &config.params {
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => argv.push(flag),
            Value::String(s) => {
                argv.push(flag);
                argv.push(s.clone());
            }
            Value::Number(x) => {
                argv.push(flag);
                argv.push(x.to_string());
            }
            other => return Err(CliError::malformed(format!("parameter {k} has unsupported value {other}"))),
        }
    }
    let cli = Cli::try_parse_from(argv).map_err(clap_error)?;
    if matches!(cli.command, Command::Run(_)) {
        return Err(CliError {
            code: EXIT_UNKNOWN_COMMAND,
            message: "`run` cannot be nested inside a config".into(),
        });
    }
    Ok(cli.command)
}

/// Runs one experiment. The `results` payload depends only on the config.
pub fn run(config: &ExperimentConfig) -> CliResult<Report> {
    let command = parse_config(config)?;
    let (name, params) = command.resolved()?;
    let start = Instant::now();
    let results = dispatch(&command, config.seed)?;
    Ok(Report {
        config: ExperimentConfig {
            command: name,
            params,
            seed: config.seed,
            out: config.out.clone(),
            format: config.format,
        },
        results,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_ms: start.elapsed().as_millis() as u64,
    })
}

/// Runs `f` on a pool with `workers` threads, or the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::malformed("--workers must be positive")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::malformed(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Serializes a report as pretty JSON or projects its results to CSV.
pub fn render(report: &Report, format: Format) -> CliResult<Vec<u8>> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|e| CliError::malformed(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => csv_projection(&report.results),
    }
}

/// `results.rows` as a table, or the top-level scalars as a single row.
pub fn csv_projection(results: &Value) -> CliResult<Vec<u8>> {
    let rows: Vec<Map<String, Value>> = match results.get("rows") {
        Some(Value::Array(rows)) => rows
            .iter()
            .filter_map(|r| r.as_object().cloned())
            .collect(),
        _ => match results {
            Value::Object(m) => vec![m
                .iter()
                .filter(|(_, v)| !v.is_object() && !v.is_array())
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()],
            _ => return Err(CliError::malformed("results have no tabular form")),
        },
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        let header: Vec<&String> = first.keys().collect();
        w.write_record(header.iter().map(|s| s.as_str()))
            .map_err(|e| CliError::malformed(e.to_string()))?;
        for r in &rows {
            let cells: Vec<String> = header
                .iter()
                .map(|k| match r.get(*k) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                })
                .collect();
            w.write_record(&cells).map_err(|e| CliError::malformed(e.to_string()))?;
        }
    }
    w.into_inner().map_err(|e| CliError::malformed(e.to_string()))
}

/// Writes bytes to `path`, or stdout for `-`.
pub fn write_output(path: &str, bytes: &[u8]) -> CliResult<()> {
    let res = if path == "-" {
        std::io::stdout().lock().write_all(bytes)
    } else {
        File::create(path).and_then(|mut f| f.write_all(bytes))
    };
    res.map_err(|e| CliError {
        code: 1,
        message: format!("{path}: {e}"),
    })
}

fn to_json<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::malformed(e.to_string()))
}

fn build_tester(a: &TesterArgs) -> CliResult<CanonicalTester> {
    let pair = Arc::new(CodePair::new(a.n, a.d)?);
    let base = CanonicalTester::rm(pair)?;
    let spec = a.tester.as_str();
    let tester = match spec.split_once(':') {
        None if spec == "rm" => base,
        Some(("xor", r)) => {
            let r: u32 = r
                .parse()
                .map_err(|_| CliError::malformed(format!("bad repetition count in {spec:?}")))?;
            if r == 0 {
                return Err(Error::Precondition("xor needs r >= 1".into()).into());
            }
            CanonicalTester::xor(&base, r)?
        }
        Some(("walk", t)) => {
            let t: f64 = t
                .parse()
                .map_err(|_| CliError::malformed(format!("bad walk time in {spec:?}")))?;
            CanonicalTester::walk(&base, t)?
        }
        _ => return Err(CliError::malformed(format!("unknown tester {spec:?}"))),
    };
    Ok(tester)
}

fn curve_mode(mode: Mode, budget: u128, trials: usize, samples: u64, seed: u64) -> CurveMode {
    match mode {
        Mode::Exact => CurveMode::Exact { budget },
        Mode::Sampled => CurveMode::Sampled { trials, samples, seed },
    }
}

fn bad(what: &str, spec: &str) -> CliError {
    CliError::malformed(format!("bad {what} {spec:?}"))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .filter(|x| !x.is_empty())
        .map(|x| x.trim().parse().map_err(|_| bad(what, s)))
        .collect()
}

fn build_function(pair: &Arc<CodePair>, spec: &str, seed: u64) -> CliResult<CodeFunction> {
    let (kind, arg) = spec.split_once(':').ok_or_else(|| bad("function", spec))?;
    let f = match kind {
        "cut" => {
            let i: usize = arg.parse().map_err(|_| bad("function", spec))?;
            if i >= pair.block_len() {
                return Err(Error::Precondition(format!("coordinate {i} outside the block")).into());
            }
            let col = pair.tested.column(i).as_u64();
            CodeFunction::from_fn(pair.clone(), |x| ((x & col).count_ones() % 2) as f64)?
        }
        "char" => {
            let alpha = BitWord::from_hex(pair.block_len(), arg)?;
            CodeFunction::sparse(pair.clone(), vec![(alpha, 1.0)])?
        }
        "random" => {
            let tag: u64 = arg.parse().map_err(|_| bad("function", spec))?;
            let s = mc::subseed(seed, tag);
            CodeFunction::from_fn(pair.clone(), |x| (mc::subseed(s, x) >> 11) as f64 / (1u64 << 53) as f64)?
        }
        "file" => {
            let file = File::open(arg).map_err(|e| CliError::malformed(format!("{arg}: {e}")))?;
            let f = CodeFunction::read_dump(BufReader::new(file))?;
            if f.pair().n != pair.n || f.pair().d != pair.d {
                return Err(Error::Precondition("dump parameters differ from --n/--d".into()).into());
            }
            f
        }
        _ => return Err(bad("function", spec)),
    };
    Ok(f)
}

fn build_outer(spec: &str) -> CliResult<(OuterInstance, Option<Vec<usize>>)> {
    if spec == "loop" {
        return Ok((OuterInstance::single_loop(), Some(vec![0])));
    }
    let (kind, arg) = spec.split_once(':').ok_or_else(|| bad("outer instance", spec))?;
    match kind {
        "path" | "cycle" => {
            let labels: Vec<usize> = parse_list(arg, "outer labels")?;
            if labels.len() < 2 {
                return Err(Error::Precondition("outer paths need two vertices".into()).into());
            }
            let mut edges: Vec<(usize, usize)> = (0..labels.len() - 1).map(|i| (i, i + 1)).collect();
            if kind == "cycle" && labels.len() > 2 {
                edges.push((labels.len() - 1, 0));
            }
            Ok((OuterInstance::satisfiable(&labels, &edges), Some(labels)))
        }
        "file" => {
            let file = File::open(arg).map_err(|e| CliError::malformed(format!("{arg}: {e}")))?;
            let outer: OuterInstance = serde_json::from_reader(BufReader::new(file))
                .map_err(|e| CliError::malformed(format!("{arg}: {e}")))?;
            Ok((outer, None))
        }
        _ => Err(bad("outer instance", spec)),
    }
}

fn dispatch(command: &Command, seed: u64) -> CliResult<Value> {
    match command {
        Command::Code(CodeCmd::Info(a)) => {
            let pair = CodePair::new(a.n, a.d)?;
            Ok(json!({
                "n": a.n,
                "d": a.d,
                "tested": pair.tested.name(),
                "dual": pair.dual.name(),
                "dim": pair.dual.dim(),
                "tested_dim": pair.tested.dim(),
                "block_len": pair.block_len(),
                "min_weight": pair.dual.min_distance(),
                "distance": pair.distance(),
            }))
        }
        Command::Tester(TesterCmd::Curve(a)) => {
            let tester = build_tester(&a.tester)?;
            let mode = curve_mode(a.mode, a.budget, a.trials, a.samples, seed);
            let curve = tester.soundness_curve(a.kmax, mode)?;
            let tau = tester.query_probability()?;
            let scale = 0.5 / (1u64 << a.tester.d) as f64;
            let rows: Vec<Value> = curve
                .iter()
                .map(|p| {
                    json!({
                        "k": p.k,
                        "s_lower": p.s_lower,
                        "s_at_k": p.s_at_k,
                        "linear_lower": p.k as f64 * scale,
                        "union_upper": p.k as f64 * tau,
                        "witness_hex": p.witness.as_ref().map(|w| w.to_hex()),
                    })
                })
                .collect();
            Ok(json!({ "tester": tester.describe(), "tau": tau, "rows": rows }))
        }
        Command::Tester(TesterCmd::Smooth(a)) => {
            let tester = build_tester(&a.tester)?;
            let report = tester.smoothness_report(a.samples.map(|s| (s, seed)))?;
            to_json(&report)
        }
        Command::Spectrum(SpectrumCmd::Profile(a)) => {
            let graph = CayleyGraph::new(build_tester(&a.tester)?)?;
            let rows = graph.eigenvalue_profile(a.kmax, a.budget, a.walk_time)?;
            Ok(json!({ "tester": graph.tester().describe(), "rows": to_json(&rows)? }))
        }
        Command::Spectrum(SpectrumCmd::Expansion(a)) => {
            let graph = CayleyGraph::new(build_tester(&a.tester)?)?;
            let (kind, arg) = a.set.split_once(':').ok_or_else(|| bad("set", &a.set))?;
            let set = match kind {
                "random" => SetSpec::Random {
                    size: arg.parse().map_err(|_| bad("set", &a.set))?,
                    seed: mc::subseed(seed, 1),
                },
                "dictator" => SetSpec::DictatorCut {
                    coordinate: arg.parse().map_err(|_| bad("set", &a.set))?,
                },
                "vertices" => SetSpec::Vertices {
                    vertices: parse_list(arg, "vertex list")?,
                },
                _ => return Err(bad("set", &a.set)),
            };
            let opts = ExpansionOptions {
                budget: a.budget,
                samples: a.samples,
                seed: mc::subseed(seed, 2),
            };
            to_json(&graph.expansion(&set, opts)?)
        }
        Command::Spectrum(SpectrumCmd::Hyper(a)) => {
            let pair = CodePair::new(a.n, a.d)?;
            let report = spectrum::hypercontractivity_check(
                &pair,
                HyperOptions {
                    ell: a.ell,
                    trials: a.trials,
                    sparsity: a.sparsity,
                    seed,
                },
            )?;
            to_json(&report)
        }
        Command::Fourier(FourierCmd::Influences(a)) => {
            let pair = Arc::new(CodePair::new(a.n, a.d)?);
            let f = build_function(&pair, &a.function, seed)?;
            let table = f.influences(a.ell)?;
            let rows: Vec<Value> = table
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| json!({ "coordinate": i, "influence": v }))
                .collect();
            Ok(json!({
                "ell": table.ell,
                "total": table.total,
                "variance": table.variance,
                "bound": table.ell as f64 * table.variance,
                "rows": rows,
            }))
        }
        Command::Fourier(FourierCmd::Stability(a)) => {
            let graph = CayleyGraph::new(build_tester(&a.tester)?)?;
            let f = build_function(graph.pair(), &a.function, seed)?;
            Ok(json!({
                "tester": graph.tester().describe(),
                "mean": f.mean()?,
                "variance": f.variance()?,
                "stability": f.noise_stability(&graph)?,
            }))
        }
        Command::Invariance(InvarianceCmd::Gap(a)) => {
            let n_vars = 1usize << a.n;
            let poly = match a.poly.as_str() {
                "random" => {
                    let mut rng = mc::stream_rng(mc::subseed(seed, 7), 0);
                    invariance::random_regular_poly(n_vars, a.matchings, a.pair_scale, &mut rng)?
                }
                "linear" => {
                    let s = 1.0 / (n_vars as f64).sqrt();
                    MultilinearPoly::new(n_vars, (0..n_vars).map(|i| (vec![i], s)).collect())?
                }
                other => match other.split_once(':') {
                    Some(("file", path)) => {
                        let file = File::open(path).map_err(|e| CliError::malformed(format!("{path}: {e}")))?;
                        let spec: PolySpec = serde_json::from_reader(BufReader::new(file))
                            .map_err(|e| CliError::malformed(format!("{path}: {e}")))?;
                        MultilinearPoly::from_spec(n_vars, &spec)?
                    }
                    _ => return Err(bad("polynomial", other)),
                },
            }
            .scaled(a.scale);
            let dist = |k: DistKind| match k {
                DistKind::Cube => PointDist::Cube,
                DistKind::Rm => PointDist::Rm { n: a.n, d: a.d },
                DistKind::Gaussian => PointDist::Gaussian,
            };
            let psi = match a.psi {
                PsiKind::Zeta => Psi::Zeta,
                PsiKind::Sign => Psi::Sign,
            };
            let gap = invariance::invariance_gap(&poly, &psi, dist(a.dist_a), dist(a.dist_b), a.samples, seed)?;
            Ok(json!({
                "degree": poly.degree(),
                "terms": poly.terms().len(),
                "regularity": to_json(&poly.regularity()?)?,
                "psi": psi.name(),
                "gap": to_json(&gap)?,
            }))
        }
        Command::Invariance(InvarianceCmd::MzCheck(a)) => mz_check(a, seed),
        Command::Invariance(InvarianceCmd::Gamma(a)) => Ok(json!({
            "rho": a.rho,
            "mu": a.mu,
            "gamma": invariance::gamma_rho(a.rho, a.mu)?,
        })),
        Command::Ug(UgCmd::Gen(a)) => {
            let gamma = GammaInstance::new(build_tester(&a.tester)?)?;
            let mut out = json!({
                "descriptor": gamma.descriptor(seed),
                "group_bits": gamma.group_bits(),
                "alphabet_size": gamma.alphabet_size(),
                "vars_log2": gamma.num_vars_log2(),
            });
            match a.mode {
                Materialize::Materialize => {
                    let inst = gamma.materialize(a.budget)?;
                    let mut text = Vec::new();
                    inst.write(&mut text)?;
                    out["constraints"] = json!(inst.constraints.len());
                    match &a.instance_out {
                        Some(path) => {
                            write_output(path, &text)?;
                            out["instance_path"] = json!(path);
                        }
                        None => out["instance"] = json!(String::from_utf8_lossy(&text)),
                    }
                }
                Materialize::Sampler => {
                    let mut rng = mc::stream_rng(seed, 0);
                    let preview: Vec<Value> = (0..a.preview)
                        .map(|_| {
                            let c = gamma.sample(&mut rng);
                            json!({ "u": c.u, "v": c.v, "shift": format!("{:x}", c.shift) })
                        })
                        .collect();
                    out["preview"] = json!(preview);
                }
            }
            Ok(out)
        }
        Command::Ug(UgCmd::Sdp(a)) => {
            let tester = build_tester(&a.tester)?;
            let value = uggap::sdp_value(&tester, Some((a.samples, seed)))?;
            let sdp = ImplicitSdp::new(GammaInstance::new(tester)?);
            let feas = sdp.feasibility_check(a.trials, mc::subseed(seed, 3));
            Ok(json!({ "sdp_value": to_json(&value)?, "feasibility": to_json(&feas)? }))
        }
        Command::Ug(UgCmd::Eval(a)) => {
            let gamma = GammaInstance::new(build_tester(&a.tester)?)?;
            let r = gamma.alphabet_size() as f64;
            if a.labeling == "best-symmetric" {
                let inst = gamma.materialize(a.budget)?;
                let found = uggap::best_symmetric_labeling(&gamma, &inst, a.budget)?;
                return Ok(json!({
                    "labeling": a.labeling,
                    "value": found.value.to_string(),
                    "best_folded": found.best_folded.to_string(),
                    "best_invariant": found.best_invariant.to_string(),
                    "searched": found.searched.to_string(),
                    "one_over_r": 1.0 / r,
                }));
            }
            let labeling: Labeling = uggap::parse_labeling(&a.labeling, &gamma)?;
            let value = match a.mode {
                Mode::Exact => uggap::evaluate_exact(&gamma.materialize(a.budget)?, &labeling).1,
                Mode::Sampled => uggap::evaluate_sampled(&gamma, &labeling, a.samples, seed),
            };
            Ok(json!({ "labeling": a.labeling, "value": to_json(&value)?, "one_over_r": 1.0 / r }))
        }
        Command::Ug(UgCmd::Bound(a)) => {
            let tester = build_tester(&a.tester)?;
            let pair = tester.pair().clone();
            let k_max = pair.distance() / 5;
            let mode = curve_mode(a.mode, a.budget, a.trials, a.samples, seed);
            let curve: Vec<CurveSample> = tester.soundness_curve(k_max, mode)?.iter().map(CurveSample::from).collect();
            let bound = uggap::soundness_bound(&curve, pair.n as f64, pair.distance())?;
            let check = a.delta.map(|delta| uggap::parameter_check(a.check_n, delta)).transpose()?;
            Ok(json!({ "bound": to_json(&bound)?, "parameter_check": to_json(&check)? }))
        }
        Command::Dict(DictCmd::Test(a)) => {
            let gadget = Gadget::new(build_tester(&TesterArgs { n: a.n, d: a.d, tester: "rm".into() })?, a.t)?;
            let f = FoldedFunction::parse(&a.function, &gadget)?;
            let est = alphared::dict_test(&gadget, &f, a.eps, a.samples, seed)?;
            let q = gadget.q() as f64;
            let cap = q * invariance::gamma_rho((-a.eps).exp(), 1.0 / q)?;
            Ok(json!({
                "function": to_json(&f)?,
                "acceptance": to_json(&est)?,
                "dictator_prediction": alphared::dictator_acceptance(a.eps, a.t),
                "completeness_floor": 1.0 - 4.0 * a.eps,
                "soundness_cap": cap,
            }))
        }
        Command::Psi(PsiCmd::Gen(a)) => {
            let gadget = psi_gadget(&a.psi)?;
            let (outer, _) = build_outer(&a.psi.outer)?;
            let psi = PsiInstance::new(&gadget, outer, a.psi.eps)?;
            let mut rng = mc::stream_rng(seed, 0);
            let preview: Vec<Value> = (0..a.preview)
                .map(|_| {
                    let c = psi.sample(&mut rng);
                    let hex = |w: &alphared::QWord| w.coeffs.iter().map(|b| format!("{b:x}")).collect::<Vec<_>>();
                    json!({
                        "a": { "vertex": c.a.0, "coeffs_hex": hex(&c.a.1) },
                        "b": { "vertex": c.b.0, "coeffs_hex": hex(&c.b.1) },
                        "shift": format!("{:x}", c.shift),
                    })
                })
                .collect();
            Ok(json!({ "descriptor": to_json(&psi.descriptor(seed))?, "preview": preview }))
        }
        Command::Psi(PsiCmd::Eval(a)) => {
            let gadget = psi_gadget(&a.psi)?;
            let (outer, labels) = build_outer(&a.psi.outer)?;
            let vertices = outer.vertices;
            let psi = PsiInstance::new(&gadget, outer, a.psi.eps)?;
            let fs: Vec<FoldedFunction> = match a.labeling.split_once(':') {
                None if a.labeling == "translated" => labels
                    .ok_or_else(|| Error::Precondition("translated labeling needs outer labels".into()))?
                    .into_iter()
                    .map(|point| FoldedFunction::Dictator { point })
                    .collect(),
                Some(("dictators", pts)) => parse_list::<usize>(pts, "dictator list")?
                    .into_iter()
                    .map(|point| FoldedFunction::Dictator { point })
                    .collect(),
                Some(("random", s)) => {
                    let s: u64 = s.parse().map_err(|_| bad("labeling", &a.labeling))?;
                    (0..vertices as u64)
                        .map(|v| FoldedFunction::RandomHash { seed: mc::subseed(s, v) })
                        .collect()
                }
                _ => return Err(bad("labeling", &a.labeling)),
            };
            if let Some(FoldedFunction::Dictator { point }) = fs
                .iter()
                .find(|f| matches!(f, FoldedFunction::Dictator { point } if *point >= gadget.pair().block_len()))
            {
                return Err(Error::Precondition(format!("point {point} outside the domain")).into());
            }
            let est = psi.evaluate(&fs, a.samples, seed)?;
            Ok(json!({
                "labeling": a.labeling,
                "acceptance": to_json(&est)?,
                "dictator_prediction": alphared::dictator_acceptance(a.psi.eps, a.psi.t),
            }))
        }
        Command::Run(_) => Err(CliError {
            code: EXIT_UNKNOWN_COMMAND,
            message: "`run` cannot be nested".into(),
        }),
    }
}

fn psi_gadget(a: &PsiArgs) -> CliResult<Gadget> {
    Ok(Gadget::new(
        build_tester(&TesterArgs {
            n: a.n,
            d: a.d,
            tester: "rm".into(),
        })?,
        a.t,
    )?)
}

/// Coefficient-vector histogram of the MZ sampler against a uniform target
/// and against direct uniform sampling. Codes with more than 12 coefficients
/// are projected onto their first 12.
fn mz_check(a: &MzArgs, seed: u64) -> CliResult<Value> {
    let code = RmCode::new(a.n, a.d)?;
    let c = a.block_bits.unwrap_or_else(|| a.d.saturating_sub(1).min(4));
    let sampler = invariance::MzSampler::new(a.n, a.d, c)?;
    let bits = code.dim().min(12);
    let cells = 1usize << bits;
    let mask = (cells - 1) as u64;
    let histogram = |tag: u64, direct: bool| {
        let parts = mc::run_chunks(a.samples, mc::subseed(seed, tag), |rng, count| {
            let mut h = vec![0u64; cells];
            for _ in 0..count {
                let idx = if direct {
                    rng.gen::<u64>() & mask
                } else {
                    let w = sampler.sample(rng);
                    code.coefficients(&w).expect("sampler emits codewords").as_u64() & mask
                };
                h[idx as usize] += 1;
            }
            h
        });
        parts.into_iter().fold(vec![0u64; cells], |mut acc, h| {
            for (a, b) in acc.iter_mut().zip(h) {
                *a += b;
            }
            acc
        })
    };
    let mz = histogram(1, false);
    let direct = histogram(2, true);
    let (stat, p_uniform) = mc::chi_square_uniform(&mz);
    let (stat2, p_two) = mc::chi_square_two_sample(&mz, &direct);
    let p = 1.0 / cells as f64;
    let sigma = (a.samples as f64 * p * (1.0 - p)).sqrt();
    let max_dev = mz
        .iter()
        .map(|&x| (x as f64 - a.samples as f64 * p).abs() / sigma)
        .fold(0.0, f64::max);
    Ok(json!({
        "code": code.name(),
        "block_bits": c,
        "projected_bits": bits,
        "cells": cells,
        "chi_square_uniform": { "statistic": stat, "p_value": p_uniform },
        "chi_square_vs_direct": { "statistic": stat2, "p_value": p_two },
        "max_sigma_deviation": max_dev,
    }))
}
