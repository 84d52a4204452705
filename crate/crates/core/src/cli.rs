//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage, 3 missing data,
//! 4 mismatched inputs.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dsp::{self, ActivationKind, SignalConfig, UtilityConfig, UtilityCurve};
use crate::experiment::{self, CurveConfig, CurveReport, SweepConfig, SweepReport, PUBLISHED_IMPROVEMENT};
use crate::mnist::{self, DataError, Mnist};
use crate::nn::{InitScale, NetworkConfig};
use crate::report::{self, RunManifest};
use crate::stats;
use crate::svg::{self, Chart, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_DATA: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "demodnet",
    version,
    about = "Biased-sigmoid demodulation analysis and MNIST beta sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Demodulation ratio and utility of a synthetic AM signal over a bias grid.
    Analyze(AnalyzeArgs),
    /// Train one network per bias for a few epochs and correlate test error with utility.
    Sweep(SweepArgs),
    /// Test error after every epoch for a handful of biases.
    Curve(CurveArgs),
    /// Spearman correlation between a saved utility CSV and a saved sweep CSV.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render an SVG chart here.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta_step: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>, String> {
        if self.beta_step.is_nan() || self.beta_step <= 0.0 {
            return Err(format!("--beta-step must be positive, got {}", self.beta_step));
        }
        if self.beta_max < self.beta_min {
            return Err(format!(
                "--beta-max {} is below --beta-min {}",
                self.beta_max, self.beta_min
            ));
        }
        Ok(dsp::beta_grid(self.beta_min, self.beta_max, self.beta_step))
    }
}

#[derive(Debug, Args)]
pub struct UtilityArgs {
    /// Measurement frequency in Hz (default: twice the modulator frequency).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Include the DC bin in the spectral mean.
    #[arg(long)]
    pub include_dc: bool,
}

impl UtilityArgs {
    fn config(&self, signal: &SignalConfig) -> UtilityConfig {
        UtilityConfig {
            omega_hz: self.omega.unwrap_or(2.0 * signal.modulator_hz),
            exclude_dc: !self.include_dc,
            ..UtilityConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding the four MNIST IDX files (optionally .gz).
    #[arg(long, env = "DEMODNET_DATA_DIR", default_value = "data/mnist")]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    /// Hidden-layer weight scale: `fan_in` (1/sqrt(784)) or a number.
    #[arg(long, default_value = "fan_in")]
    pub init_scale: InitScale,
    /// Give the hidden layer a trainable additive bias.
    #[arg(long)]
    pub hidden_bias: bool,
    /// Train grid points one after another instead of concurrently.
    #[arg(long)]
    pub serial: bool,
}

impl TrainArgs {
    fn network(&self) -> NetworkConfig {
        NetworkConfig {
            seed: self.seed,
            learning_rate: self.lr,
            batch_size: self.batch,
            init_scale: self.init_scale,
            hidden_trainable_bias: self.hidden_bias,
            ..NetworkConfig::default()
        }
    }

    fn describe(&self, m: &mut RunManifest, net: &NetworkConfig) {
        m.push("seed", self.seed);
        m.push(
            "layer_sizes",
            format!("{}x{}x{}", net.layer_sizes[0], net.layer_sizes[1], net.layer_sizes[2]),
        );
        m.push("lr", self.lr);
        m.push("batch", self.batch);
        m.push("init_scale", self.init_scale);
        m.push("hidden_bias", self.hidden_bias);
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub utility: UtilityArgs,
    #[arg(long, default_value = "biased_sigmoid")]
    pub activation: ActivationKind,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub utility: UtilityArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Full training sweeps per run.
    #[arg(long, default_value_t = 1)]
    pub epochs: u64,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated biases.
    #[arg(long, value_delimiter = ',', default_value = "0,6", allow_hyphen_values = true)]
    pub betas: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    pub epochs: u64,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub utility: PathBuf,
    #[arg(long)]
    pub sweep: PathBuf,
}

/// A failed command: exit code plus message for standard error.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_FAILURE, e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Curve(a) => cmd_curve(a, stdout),
        Command::Correlate(a) => cmd_correlate(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn emit(out: &OutputArgs, csv: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match &out.out {
        Some(path) => {
            report::write_atomic(path, csv.as_bytes()).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
        }
        None => stdout.write_all(csv.as_bytes()).map_err(Failure::runtime),
    }
}

fn emit_svg(path: Option<&Path>, series: &[Series], chart: &Chart) -> Result<(), Failure> {
    let Some(path) = path else { return Ok(()) };
    let doc = svg::render_svg(series, chart).map_err(Failure::runtime)?;
    report::write_atomic(path, doc.as_bytes()).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn describe_dsp(m: &mut RunManifest, signal: &SignalConfig, utility: &UtilityConfig) {
    m.push("carrier_hz", signal.carrier_hz);
    m.push("modulator_hz", signal.modulator_hz);
    m.push("sample_rate_hz", signal.sample_rate_hz);
    m.push("n_samples", signal.n_samples);
    m.push("amplitude", signal.amplitude);
    m.push("omega_hz", utility.omega_hz);
    m.push("exclude_dc", utility.exclude_dc);
    m.push("alpha", utility.alpha);
    m.push("kappa", utility.kappa);
}

fn describe_grid(m: &mut RunManifest, grid: &GridArgs) {
    m.push("beta_min", grid.beta_min);
    m.push("beta_max", grid.beta_max);
    m.push("beta_step", grid.beta_step);
}

fn utility_series(curve: &UtilityCurve) -> Vec<Series> {
    let pts = |f: fn(&dsp::UtilityRow) -> f64| {
        curve
            .rows
            .iter()
            .filter(|r| !r.degenerate)
            .map(|r| (r.beta, f(r)))
            .collect::<Vec<_>>()
    };
    vec![
        Series::new("ratio", pts(|r| r.g_eq2)),
        Series::new("penalized utility", pts(|r| r.g_eq3)),
    ]
}

pub fn cmd_analyze(args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let grid = args.grid.grid().map_err(|m| Failure::new(EXIT_USAGE, m))?;
    let signal = SignalConfig::default();
    let utility = args.utility.config(&signal);
    let curve = dsp::utility_curve(&signal, &utility, args.activation, &grid)
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;

    let mut m = RunManifest::new("analyze");
    m.push("activation", args.activation);
    describe_grid(&mut m, &args.grid);
    describe_dsp(&mut m, &signal, &utility);
    emit(&args.output, &report::write_utility_csv(&curve, &m), stdout)?;
    emit_svg(
        args.output.svg.as_deref(),
        &utility_series(&curve),
        &Chart {
            title: format!("Demodulation utility ({})", args.activation),
            x_label: "beta".into(),
            y_label: "utility".into(),
            invert_y: true,
        },
    )
}

fn load_data(dir: &Path) -> Result<Mnist, Failure> {
    mnist::load_mnist(dir).map_err(|e| match e {
        DataError::MissingFile(p) => Failure::new(EXIT_MISSING_DATA, format!("missing data file {}", p.display())),
        other => Failure::runtime(other),
    })
}

fn describe_data(m: &mut RunManifest, data: &Mnist) {
    for c in &data.checksums {
        m.push(&format!("sha256_{}", c.name), &c.sha256);
    }
    m.push("train_mean_offset", data.train.mean_offset());
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let betas = args.grid.grid().map_err(|m| Failure::new(EXIT_USAGE, m))?;
    let network = args.train.network();
    network
        .validate()
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let data = load_data(&args.train.data_dir)?;
    let signal = SignalConfig::default();
    let cfg = SweepConfig {
        network,
        betas,
        epochs_per_run: args.epochs,
        signal,
        utility: args.utility.config(&signal),
        parallel: !args.train.serial,
    };
    let report = run_sweep(&data, &cfg)?;

    let mut m = RunManifest::new("sweep");
    args.train.describe(&mut m, &cfg.network);
    m.push("epochs", args.epochs);
    describe_grid(&mut m, &args.grid);
    describe_dsp(&mut m, &cfg.signal, &cfg.utility);
    describe_data(&mut m, &data);
    emit(&args.output, &report::write_sweep_csv(&report, &m), stdout)?;

    let pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| !r.failed)
        .map(|r| (r.beta, r.test_error))
        .collect();
    if pts.is_empty() {
        return Ok(());
    }
    emit_svg(
        args.output.svg.as_deref(),
        &[Series::new(format!("test error after {} epoch(s)", args.epochs), pts)],
        &Chart {
            title: "Test error vs bias".into(),
            x_label: "beta".into(),
            y_label: "test error".into(),
            invert_y: false,
        },
    )
}

fn run_sweep(data: &Mnist, cfg: &SweepConfig) -> Result<SweepReport, Failure> {
    experiment::run_beta_sweep(&data.train, &data.test, cfg).map_err(Failure::runtime)
}

pub fn cmd_curve(args: &CurveArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    if args.betas.is_empty() || args.betas.iter().any(|b| !b.is_finite()) {
        return Err(Failure::new(EXIT_USAGE, "--betas needs one or more finite values"));
    }
    let network = args.train.network();
    network
        .validate()
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let data = load_data(&args.train.data_dir)?;
    let cfg = CurveConfig {
        network,
        betas: args.betas.clone(),
        epochs: args.epochs,
        parallel: !args.train.serial,
    };
    let report = experiment::run_learning_curves(&data.train, &data.test, &cfg).map_err(Failure::runtime)?;

    let mut m = RunManifest::new("curve");
    args.train.describe(&mut m, &cfg.network);
    m.push("epochs", args.epochs);
    m.push(
        "betas",
        args.betas.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
    );
    describe_data(&mut m, &data);
    let mut csv = report::write_curve_csv(&report, &m);
    csv.push_str(&improvement_footer(&report));
    emit(&args.output, &csv, stdout)?;

    let series: Vec<Series> = report
        .series
        .iter()
        .filter(|s| !s.errors.is_empty())
        .map(|s| {
            Series::new(
                format!("beta = {}", s.beta),
                s.errors
                    .iter()
                    .enumerate()
                    .map(|(e, &err)| ((e + 1) as f64, err))
                    .collect(),
            )
        })
        .collect();
    if series.is_empty() {
        return Ok(());
    }
    emit_svg(
        args.output.svg.as_deref(),
        &series,
        &Chart {
            title: "Test error vs epoch".into(),
            x_label: "epoch".into(),
            y_label: "test error".into(),
            invert_y: false,
        },
    )
}

/// Relative final-error improvement of every series over the first one.
fn improvement_footer(report: &CurveReport) -> String {
    let mut out = String::new();
    let Some(base) = report.series.first() else { return out };
    for s in &report.series[1..] {
        if let Some(imp) = report.relative_improvement(base.beta, s.beta) {
            out.push_str(&format!(
                "# relative_improvement_beta_{}_vs_{}={imp}\n",
                s.beta, base.beta
            ));
        }
    }
    if report.series.len() > 1 {
        out.push_str(&format!("# published_improvement={PUBLISHED_IMPROVEMENT}\n"));
    }
    out
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_MISSING_DATA, format!("{}: {e}", path.display())))
}

pub fn cmd_correlate(args: &CorrelateArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let (_, utility) = report::parse_utility_csv(&read_text(&args.utility)?)
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.utility.display())))?;
    let (_, sweep) = report::parse_sweep_csv(&read_text(&args.sweep)?)
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.sweep.display())))?;

    let n = utility.rows.len().max(sweep.rows.len());
    for i in 0..n {
        let u = utility.rows.get(i).map(|r| r.beta);
        let s = sweep.rows.get(i).map(|r| r.beta);
        if u != s {
            let show = |b: Option<f64>| b.map_or("<none>".to_string(), |b| b.to_string());
            return Err(Failure::new(
                EXIT_MISMATCH,
                format!(
                    "beta grids differ at row {i}: utility has {}, sweep has {}",
                    show(u),
                    show(s)
                ),
            ));
        }
    }

    let (g, err): (Vec<f64>, Vec<f64>) = utility
        .rows
        .iter()
        .zip(&sweep.rows)
        .filter(|(u, s)| !u.degenerate && !s.failed && u.g_eq3.is_finite() && s.test_error.is_finite())
        .map(|(u, s)| (u.g_eq3, s.test_error))
        .unzip();
    let result = stats::spearman(&g, &err).map_err(Failure::runtime)?;
    writeln!(stdout, "rho={} p={}", result.rho, result.p_value).map_err(Failure::runtime)
}
