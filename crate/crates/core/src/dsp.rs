//! Idealized demodulation analysis.
//!
//! A suppressed-carrier product `A sin(2 pi f_c t) sin(2 pi f_m t)` is passed
//! through a memoryless nonlinearity and the power spectrum of the result is
//! scored by how much of its energy lands at the envelope frequency relative
//! to the spectral mean (the demodulation ratio), optionally penalized by the
//! overall power level (the demodulation utility).

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::fft;

/// Relative tolerance used when checking that a frequency sits on a DFT bin.
const BIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("signal length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("sample {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("{name} = {hz} Hz is not an integer multiple of the bin width {bin_width_hz} Hz")]
    NotBinAligned {
        name: &'static str,
        hz: f64,
        bin_width_hz: f64,
    },
    #[error("highest tone {highest_hz} Hz violates Nyquist for sample rate {sample_rate_hz} Hz")]
    Nyquist { highest_hz: f64, sample_rate_hz: f64 },
    #[error("omega {omega_hz} Hz lies outside the spectrum (max {max_hz} Hz)")]
    OmegaOutOfRange { omega_hz: f64, max_hz: f64 },
    #[error("degenerate spectrum: mean power is zero")]
    DegenerateSpectrum,
    #[error("beta grid must be strictly increasing and finite (violated at index {0})")]
    BadGrid(usize),
    #[error("beta grid is empty")]
    EmptyGrid,
}

/// Uniformly sampled real waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self, DspError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(DspError::NonPositive {
                name: "sample_rate_hz",
                value: sample_rate_hz,
            });
        }
        if !samples.len().is_power_of_two() {
            return Err(DspError::NotPowerOfTwo(samples.len()));
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DspError::NonFinite { index, value });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time-domain mean-square value.
    pub fn mean_square(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.len() as f64
    }
}

/// Parameters of the synthesized carrier x modulator test signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalConfig {
    pub carrier_hz: f64,
    pub modulator_hz: f64,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub amplitude: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 1000.0,
            modulator_hz: 10.0,
            sample_rate_hz: 16384.0,
            n_samples: 16384,
            amplitude: 1.0,
        }
    }
}

impl SignalConfig {
    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.n_samples as f64
    }

    /// Checks positivity, power-of-two length, Nyquist and that every tone
    /// the analysis relies on falls exactly on a DFT bin.
    pub fn validate(&self) -> Result<(), DspError> {
        for (name, value) in [
            ("carrier_hz", self.carrier_hz),
            ("modulator_hz", self.modulator_hz),
            ("sample_rate_hz", self.sample_rate_hz),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(DspError::NonPositive { name, value });
            }
        }
        if !self.amplitude.is_finite() {
            return Err(DspError::NonFinite {
                index: 0,
                value: self.amplitude,
            });
        }
        if !self.n_samples.is_power_of_two() {
            return Err(DspError::NotPowerOfTwo(self.n_samples));
        }
        let highest_hz = self.carrier_hz + self.modulator_hz;
        if self.carrier_hz >= self.sample_rate_hz / 2.0 || highest_hz >= self.sample_rate_hz / 2.0 {
            return Err(DspError::Nyquist {
                highest_hz,
                sample_rate_hz: self.sample_rate_hz,
            });
        }
        let bin_width_hz = self.bin_width_hz();
        for (name, hz) in [
            ("carrier_hz", self.carrier_hz),
            ("modulator_hz", self.modulator_hz),
            ("carrier_hz - modulator_hz", self.carrier_hz - self.modulator_hz),
            ("carrier_hz + modulator_hz", self.carrier_hz + self.modulator_hz),
            ("2 * modulator_hz", 2.0 * self.modulator_hz),
        ] {
            if bin_index(hz, bin_width_hz).is_none() {
                return Err(DspError::NotBinAligned { name, hz, bin_width_hz });
            }
        }
        Ok(())
    }
}

/// Exact bin index of `hz`, or `None` when it falls between bins.
fn bin_index(hz: f64, bin_width_hz: f64) -> Option<usize> {
    let k = hz / bin_width_hz;
    let rounded = k.round();
    if rounded < 0.0 || (k - rounded).abs() > BIN_TOLERANCE * rounded.max(1.0) {
        None
    } else {
        Some(rounded as usize)
    }
}

/// `amplitude * sin(2 pi f_c t_i) * sin(2 pi f_m t_i)` with `t_i = i / fs`.
pub fn synth_am_signal(cfg: &SignalConfig) -> Result<Signal, DspError> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let samples = (0..cfg.n_samples)
        .map(|i| {
            let t = i as f64 / fs;
            cfg.amplitude * (2.0 * PI * cfg.carrier_hz * t).sin() * (2.0 * PI * cfg.modulator_hz * t).sin()
        })
        .collect();
    Signal::new(samples, fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    BiasedSigmoid,
    Relu,
    Tanh,
    Abs,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [Self::BiasedSigmoid, Self::Relu, Self::Tanh, Self::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Self::BiasedSigmoid => "biased_sigmoid",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
            Self::Abs => "abs",
        }
    }

    pub fn with_beta(self, beta: f64) -> Activation {
        Activation { kind: self, beta }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown activation {s:?} (expected biased_sigmoid, relu, tanh or abs)"))
    }
}

/// A memoryless nonlinearity evaluated at `x + beta`.
///
/// For the biased sigmoid `beta` is the bias term itself; for the other
/// kinds it is an additive pre-activation shift so that curves over `beta`
/// are comparable across kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub kind: ActivationKind,
    pub beta: f64,
}

impl Activation {
    pub fn biased_sigmoid(beta: f64) -> Self {
        ActivationKind::BiasedSigmoid.with_beta(beta)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let u = x + self.beta;
        match self.kind {
            ActivationKind::BiasedSigmoid => sigmoid(u),
            ActivationKind::Relu => u.max(0.0),
            ActivationKind::Tanh => u.tanh(),
            ActivationKind::Abs => u.abs(),
        }
    }
}

/// Logistic function, evaluated on whichever branch avoids overflow.
#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `1 / (1 + exp(-x - beta))`.
#[inline]
pub fn biased_sigmoid(x: f64, beta: f64) -> f64 {
    sigmoid(x + beta)
}

pub fn apply_activation(signal: &Signal, act: Activation) -> Signal {
    Signal {
        samples: signal.samples.iter().map(|&x| act.eval(x)).collect(),
        sample_rate_hz: signal.sample_rate_hz,
    }
}

/// One-sided DFT power, `bins[k] = |X_k|^2 / L^2` for `k = 0..=L/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    bins: Vec<f64>,
    bin_width_hz: f64,
    n_samples: usize,
}

impl PowerSpectrum {
    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.bin_width_hz
    }

    /// Length of the transform the spectrum came from.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn frequency_of(&self, k: usize) -> f64 {
        k as f64 * self.bin_width_hz
    }

    pub fn bin_at(&self, hz: f64) -> Option<usize> {
        bin_index(hz, self.bin_width_hz).filter(|&k| k < self.bins.len())
    }

    /// Power summed over the full two-sided spectrum; by Parseval this
    /// equals the time-domain mean square.
    pub fn two_sided_total(&self) -> f64 {
        let last = self.bins.len() - 1;
        self.bins
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                if k == 0 || (k == last && self.n_samples > 1) {
                    p
                } else {
                    2.0 * p
                }
            })
            .sum()
    }

    /// Sum of one-sided bins excluding DC.
    pub fn non_dc_power(&self) -> f64 {
        self.bins[1..].iter().sum()
    }

    /// Sum of one-sided bins whose centre frequency lies in `[lo_hz, hi_hz]`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.bins
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = self.frequency_of(*k);
                f >= lo_hz && f <= hi_hz
            })
            .map(|(_, p)| p)
            .sum()
    }

    /// Mean of the bins entering the demodulation ratio.
    pub fn mean_power(&self, exclude_dc: bool) -> f64 {
        let bins = if exclude_dc && self.bins.len() > 1 {
            &self.bins[1..]
        } else {
            &self.bins[..]
        };
        bins.iter().sum::<f64>() / bins.len() as f64
    }
}

pub fn power_spectrum(signal: &Signal) -> Result<PowerSpectrum, DspError> {
    let l = signal.len();
    if !l.is_power_of_two() {
        return Err(DspError::NotPowerOfTwo(l));
    }
    let spectrum = fft::fft_real(signal.samples());
    let scale = 1.0 / (l as f64 * l as f64);
    let bins = spectrum[..=l / 2].iter().map(|c| c.norm_sqr() * scale).collect();
    Ok(PowerSpectrum {
        bins,
        bin_width_hz: signal.sample_rate_hz() / l as f64,
        n_samples: l,
    })
}

/// Constants of the demodulation ratio and its penalized form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityConfig {
    pub alpha: f64,
    pub kappa: u32,
    /// Measurement frequency. Defaults to twice the modulator frequency: the
    /// envelope of a suppressed-carrier product has its fundamental there,
    /// while the modulator bin itself carries no baseband energy.
    pub omega_hz: f64,
    pub exclude_dc: bool,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            alpha: 1.8e-13,
            kappa: 12,
            omega_hz: 2.0 * SignalConfig::default().modulator_hz,
            exclude_dc: true,
        }
    }
}

impl UtilityConfig {
    fn omega_bin(&self, spectrum: &PowerSpectrum) -> Result<usize, DspError> {
        if !(self.omega_hz.is_finite() && self.omega_hz > 0.0) {
            return Err(DspError::NonPositive {
                name: "omega_hz",
                value: self.omega_hz,
            });
        }
        let max_hz = spectrum.frequency_of(spectrum.bins.len() - 1);
        if self.omega_hz > max_hz {
            return Err(DspError::OmegaOutOfRange {
                omega_hz: self.omega_hz,
                max_hz,
            });
        }
        spectrum.bin_at(self.omega_hz).ok_or(DspError::NotBinAligned {
            name: "omega_hz",
            hz: self.omega_hz,
            bin_width_hz: spectrum.bin_width_hz,
        })
    }

    /// The subtractive overall-power term, `alpha * log10(mean)^kappa`.
    pub fn penalty(&self, mean_power: f64) -> f64 {
        self.alpha * mean_power.log10().powi(self.kappa as i32)
    }
}

/// `H(omega) / mean(H)`.
pub fn demod_ratio(spectrum: &PowerSpectrum, cfg: &UtilityConfig) -> Result<f64, DspError> {
    let k = cfg.omega_bin(spectrum)?;
    let mean = spectrum.mean_power(cfg.exclude_dc);
    if mean.is_nan() || mean <= 0.0 {
        return Err(DspError::DegenerateSpectrum);
    }
    Ok(spectrum.bins[k] / mean)
}

/// Demodulation ratio minus `alpha * log10(mean(H))^kappa`.
pub fn demod_utility(spectrum: &PowerSpectrum, cfg: &UtilityConfig) -> Result<f64, DspError> {
    let ratio = demod_ratio(spectrum, cfg)?;
    Ok(ratio - cfg.penalty(spectrum.mean_power(cfg.exclude_dc)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityRow {
    pub beta: f64,
    pub g_eq2: f64,
    pub g_eq3: f64,
    pub mean_power: f64,
    /// Set when the spectrum had zero mean power; the `g` columns are NaN.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityCurve {
    pub activation: ActivationKind,
    pub rows: Vec<UtilityRow>,
}

impl UtilityCurve {
    /// Row with the largest penalized utility, ignoring degenerate rows.
    /// Ties resolve to the lowest beta.
    pub fn argmax_g_eq3(&self) -> Option<&UtilityRow> {
        self.rows
            .iter()
            .filter(|r| !r.degenerate)
            .fold(None, |best: Option<&UtilityRow>, r| match best {
                Some(b) if b.g_eq3 >= r.g_eq3 => Some(b),
                _ => Some(r),
            })
    }

    pub fn row_at(&self, beta: f64) -> Option<&UtilityRow> {
        self.rows.iter().find(|r| r.beta == beta)
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<(), DspError> {
    if grid.is_empty() {
        return Err(DspError::EmptyGrid);
    }
    for (i, b) in grid.iter().enumerate() {
        if !b.is_finite() || (i > 0 && *b <= grid[i - 1]) {
            return Err(DspError::BadGrid(i));
        }
    }
    Ok(())
}

/// Evaluates the demodulation ratio and utility at each grid point.
///
/// Rows are computed in parallel and returned in grid order. A row whose
/// spectrum is degenerate is flagged instead of aborting the sweep.
pub fn utility_curve(
    scfg: &SignalConfig,
    ucfg: &UtilityConfig,
    kind: ActivationKind,
    beta_grid: &[f64],
) -> Result<UtilityCurve, DspError> {
    validate_grid(beta_grid)?;
    let signal = synth_am_signal(scfg)?;
    let rows = beta_grid
        .par_iter()
        .map(|&beta| utility_row(&signal, ucfg, kind.with_beta(beta)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(UtilityCurve { activation: kind, rows })
}

fn utility_row(signal: &Signal, ucfg: &UtilityConfig, act: Activation) -> Result<UtilityRow, DspError> {
    let spectrum = power_spectrum(&apply_activation(signal, act))?;
    let mean_power = spectrum.mean_power(ucfg.exclude_dc);
    match demod_ratio(&spectrum, ucfg) {
        Ok(g_eq2) => Ok(UtilityRow {
            beta: act.beta,
            g_eq2,
            g_eq3: g_eq2 - ucfg.penalty(mean_power),
            mean_power,
            degenerate: false,
        }),
        Err(DspError::DegenerateSpectrum) => Ok(UtilityRow {
            beta: act.beta,
            g_eq2: f64::NAN,
            g_eq3: f64::NAN,
            mean_power,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// `start, start + step, ...` up to and including `stop` (within a small
/// tolerance). Points are computed as `start + i * step` so they do not
/// accumulate rounding drift.
pub fn beta_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || stop < start {
        return if start == stop { vec![start] } else { Vec::new() };
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

/// The grid used throughout: -4 to 10 in steps of 0.5.
pub fn default_beta_grid() -> Vec<f64> {
    beta_grid(-4.0, 10.0, 0.5)
}
