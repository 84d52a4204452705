//! Beta sweeps and learning curves over identically seeded networks.

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsp::{self, ActivationKind, DspError, SignalConfig, UtilityConfig, UtilityCurve};
use crate::mnist::Dataset;
use crate::nn::{self, NetError, Network, NetworkConfig, TrainState};
use crate::stats::{self, Spearman, StatsError};

/// Correlation reported for the same comparison in the literature; printed
/// next to measured values and never used in a computation.
pub const PUBLISHED_RHO: f64 = -0.74;
pub const PUBLISHED_P_BELOW: f64 = 0.001;
/// Relative improvement of beta = 6 over beta = 0 reported in the literature.
pub const PUBLISHED_IMPROVEMENT: f64 = 0.80;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("empty {0} dataset")]
    EmptyData(&'static str),
    #[error("no betas given")]
    NoBetas,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Template for every run; `beta` is overwritten per grid point.
    pub network: NetworkConfig,
    pub betas: Vec<f64>,
    pub epochs_per_run: u64,
    pub signal: SignalConfig,
    pub utility: UtilityConfig,
    /// Train grid points concurrently. Results do not depend on this.
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            betas: dsp::default_beta_grid(),
            epochs_per_run: 1,
            signal: SignalConfig::default(),
            utility: UtilityConfig::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    /// NaN when the run failed.
    pub test_error: f64,
    pub g_eq2: f64,
    pub g_eq3: f64,
    pub failed: bool,
    /// SHA-256 over the initial parameters of this run.
    pub init_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub seed: u64,
    pub epochs_per_run: u64,
    /// Spearman correlation of `g_eq3` against `test_error` over the rows
    /// that neither failed nor had a degenerate spectrum.
    pub correlation: Result<Spearman, StatsError>,
    /// Rows left out of the correlation.
    pub excluded: usize,
}

impl SweepReport {
    /// Recomputes the correlation from the rows alone.
    pub fn correlate_rows(rows: &[SweepRow]) -> (Result<Spearman, StatsError>, usize) {
        let usable: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| !r.failed && r.test_error.is_finite() && r.g_eq3.is_finite())
            .collect();
        let utility: Vec<f64> = usable.iter().map(|r| r.g_eq3).collect();
        let error: Vec<f64> = usable.iter().map(|r| r.test_error).collect();
        (stats::spearman(&utility, &error), rows.len() - usable.len())
    }

    /// Row with the lowest test error; ties go to the lowest beta.
    pub fn min_error_row(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| !r.failed)
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.test_error <= r.test_error => Some(b),
                _ => Some(r),
            })
    }

    pub fn init_digests_agree(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].init_digest == w[1].init_digest)
    }
}

/// SHA-256 over `W1 | b1 | W2 | b2` as little-endian bytes.
pub fn parameter_digest(net: &Network) -> String {
    let mut hasher = Sha256::new();
    for part in [&net.w1, &net.b1, &net.w2, &net.b2] {
        for x in part.iter() {
            hasher.update(x.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

struct RunOutcome {
    errors: Vec<f64>,
    failure: Option<NetError>,
    init_digest: String,
}

/// Trains one network from the shared seed, evaluating after every epoch.
fn train_and_track(
    template: &NetworkConfig,
    beta: f64,
    epochs: u64,
    train: &Dataset,
    test: &Dataset,
) -> Result<RunOutcome, NetError> {
    let cfg = NetworkConfig { beta, ..*template };
    let net = nn::init_network(&cfg)?;
    let init_digest = parameter_digest(&net);
    let mut state = TrainState::new(net);
    let mut errors = Vec::with_capacity(epochs as usize);
    for _ in 0..epochs {
        let step = nn::sgd_epoch(state, train).and_then(|s| nn::evaluate(&s.network, test).map(|e| (s, e)));
        match step {
            Ok((next, error)) => {
                log::info!("beta={beta} epoch={} test_error={error}", next.epoch);
                errors.push(error);
                state = next;
            }
            Err(e) => {
                log::warn!("beta={beta} failed: {e}");
                return Ok(RunOutcome {
                    errors,
                    failure: Some(e),
                    init_digest,
                });
            }
        }
    }
    Ok(RunOutcome {
        errors,
        failure: None,
        init_digest,
    })
}

fn run_grid(
    template: &NetworkConfig,
    betas: &[f64],
    epochs: u64,
    train: &Dataset,
    test: &Dataset,
    parallel: bool,
) -> Result<Vec<RunOutcome>, NetError> {
    template.validate()?;
    let run = |&beta: &f64| train_and_track(template, beta, epochs, train, test);
    if parallel {
        betas.par_iter().map(run).collect()
    } else {
        betas.iter().map(run).collect()
    }
}

fn check_data(train: &Dataset, test: &Dataset) -> Result<(), ExperimentError> {
    if train.is_empty() {
        return Err(ExperimentError::EmptyData("training"));
    }
    if test.is_empty() {
        return Err(ExperimentError::EmptyData("test"));
    }
    Ok(())
}

/// Trains one network per beta from the same seed, scores each on the test
/// split and correlates the errors with the demodulation utility.
pub fn run_beta_sweep(train: &Dataset, test: &Dataset, cfg: &SweepConfig) -> Result<SweepReport, ExperimentError> {
    check_data(train, test)?;
    let curve = utility_for(cfg)?;
    let outcomes = run_grid(&cfg.network, &cfg.betas, cfg.epochs_per_run, train, test, cfg.parallel)?;

    let rows: Vec<SweepRow> = outcomes
        .into_iter()
        .zip(&curve.rows)
        .map(|(out, u)| {
            let failed = out.failure.is_some();
            SweepRow {
                beta: u.beta,
                test_error: if failed {
                    f64::NAN
                } else {
                    out.errors.last().copied().unwrap_or(f64::NAN)
                },
                g_eq2: u.g_eq2,
                g_eq3: u.g_eq3,
                failed,
                init_digest: out.init_digest,
            }
        })
        .collect();
    let (correlation, excluded) = SweepReport::correlate_rows(&rows);
    Ok(SweepReport {
        rows,
        seed: cfg.network.seed,
        epochs_per_run: cfg.epochs_per_run,
        correlation,
        excluded,
    })
}

/// The same sweep repeated for several seeds.
pub fn run_replicated_sweeps(
    train: &Dataset,
    test: &Dataset,
    cfg: &SweepConfig,
    seeds: &[u64],
) -> Result<Vec<SweepReport>, ExperimentError> {
    seeds
        .iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.network.seed = seed;
            run_beta_sweep(train, test, &c)
        })
        .collect()
}

pub fn utility_for(cfg: &SweepConfig) -> Result<UtilityCurve, ExperimentError> {
    if cfg.betas.is_empty() {
        return Err(ExperimentError::NoBetas);
    }
    Ok(dsp::utility_curve(
        &cfg.signal,
        &cfg.utility,
        ActivationKind::BiasedSigmoid,
        &cfg.betas,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub network: NetworkConfig,
    pub betas: Vec<f64>,
    pub epochs: u64,
    pub parallel: bool,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            betas: vec![0.0, 6.0],
            epochs: 30,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub beta: f64,
    /// `errors[e]` is the test error after epoch `e + 1`.
    pub errors: Vec<f64>,
    pub failure: Option<String>,
}

impl CurveSeries {
    pub fn final_error(&self) -> Option<f64> {
        self.errors.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveReport {
    pub seed: u64,
    pub epochs: u64,
    pub series: Vec<CurveSeries>,
}

impl CurveReport {
    pub fn series_for(&self, beta: f64) -> Option<&CurveSeries> {
        self.series.iter().find(|s| s.beta == beta)
    }

    /// `1 - final(biased) / final(baseline)`: the relative error reduction
    /// of `biased` over `baseline`.
    pub fn relative_improvement(&self, baseline: f64, biased: f64) -> Option<f64> {
        let base = self.series_for(baseline)?.final_error()?;
        let other = self.series_for(biased)?.final_error()?;
        Some(1.0 - other / base)
    }
}

/// Test error after each of `epochs` full sweeps, per beta.
pub fn run_learning_curves(train: &Dataset, test: &Dataset, cfg: &CurveConfig) -> Result<CurveReport, ExperimentError> {
    check_data(train, test)?;
    if cfg.betas.is_empty() {
        return Err(ExperimentError::NoBetas);
    }
    let outcomes = run_grid(&cfg.network, &cfg.betas, cfg.epochs, train, test, cfg.parallel)?;
    let series = cfg
        .betas
        .iter()
        .zip(outcomes)
        .map(|(&beta, out)| CurveSeries {
            beta,
            errors: out.errors,
            failure: out.failure.map(|e| e.to_string()),
        })
        .collect();
    Ok(CurveReport {
        seed: cfg.network.seed,
        epochs: cfg.epochs,
        series,
    })
}
