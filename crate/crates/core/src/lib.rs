//! Demodulation analysis of biased-sigmoid activations and a seeded MNIST
//! harness that measures how the same bias affects learning.
//!
//! * [`dsp`]: synthetic carrier x modulator signals, power spectra and the
//!   demodulation ratio/utility over a bias grid.
//! * [`mnist`]: IDX parsing and zero-mean normalization.
//! * [`nn`]: a 784-784-10 biased-sigmoid network trained by SGD.
//! * [`experiment`]: bias sweeps, learning curves and their correlation
//!   with the utility curve.
//! * [`report`] and [`svg`]: CSV and chart output.
//! * [`cli`]: the `demodnet` command-line front end.

pub mod cli;
pub mod dsp;
pub mod experiment;
pub mod fft;
pub mod linalg;
pub mod mnist;
pub mod nn;
pub mod report;
pub mod rng;
pub mod stats;
pub mod svg;
