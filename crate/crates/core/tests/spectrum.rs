use demodnet::dsp::{
    self, apply_activation, power_spectrum, synth_am_signal, ActivationKind, Signal, SignalConfig, UtilityConfig,
};
use demodnet::fft::fft_real;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook O(L^2) DFT with each twiddle evaluated from its own angle.
fn direct_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    let angle = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                    Complex64::from_polar(v, angle)
                })
                .sum()
        })
        .collect()
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn radix2_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for log_n in 0..=8 {
        let n = 1usize << log_n;
        for _ in 0..5 {
            let x = random_signal(&mut rng, n);
            let fast = fft_real(&x);
            let slow = direct_dft(&x);
            let worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "L = {n}: max abs deviation {worst:e}");
        }
    }
}

#[test]
fn parseval_holds_for_every_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for log_n in 0..=14 {
        let n = 1usize << log_n;
        let x = random_signal(&mut rng, n);
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = fft_real(&x).iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        assert!(((time - freq) / time).abs() < 1e-9, "L = {n}");

        if n >= 2 {
            let s = Signal::new(x, n as f64).unwrap();
            let spec = power_spectrum(&s).unwrap();
            let rel = (spec.two_sided_total() - s.mean_square()).abs() / s.mean_square();
            assert!(rel < 1e-9, "one-sided total at L = {n}: {rel:e}");
        }
    }
}

#[test]
fn pure_tone_lands_in_one_bin() {
    let n = 1024;
    let fs = 1024.0;
    let x: Vec<f64> = (0..n)
        .map(|t| (2.0 * std::f64::consts::PI * 100.0 * t as f64 / fs).sin())
        .collect();
    let spec = power_spectrum(&Signal::new(x, fs).unwrap()).unwrap();
    let bins = spec.bins();
    // A unit sine has mean square 1/2, split over the two sides.
    assert!((bins[100] - 0.25).abs() < 1e-12);
    let rest: f64 = bins.iter().enumerate().filter(|(k, _)| *k != 100).map(|(_, p)| p).sum();
    assert!(rest < 1e-20);
}

#[test]
fn default_signal_has_no_baseband_at_zero_bias() {
    let scfg = SignalConfig::default();
    let s = synth_am_signal(&scfg).unwrap();
    let spec = power_spectrum(&apply_activation(&s, ActivationKind::BiasedSigmoid.with_beta(0.0))).unwrap();
    let g = dsp::demod_ratio(&spec, &UtilityConfig::default()).unwrap();
    assert!(g < 1e-10, "g_eq2(0) = {g:e}");
    assert!(spec.band_power(1.0, 100.0) < 1e-12 * spec.non_dc_power());
}

#[test]
fn positive_bias_recovers_the_envelope() {
    let scfg = SignalConfig::default();
    let s = synth_am_signal(&scfg).unwrap();
    let spec = power_spectrum(&apply_activation(&s, ActivationKind::BiasedSigmoid.with_beta(6.0))).unwrap();
    let k20 = spec.bin_at(20.0).unwrap();
    let bins = spec.bins();
    let (peak, _) = bins[1..200].iter().enumerate().fold(
        (0, f64::MIN),
        |(bk, bv), (k, &v)| if v > bv { (k + 1, v) } else { (bk, bv) },
    );
    assert_eq!(peak, k20);
}

fn spectrum_of(samples: Vec<f64>) -> Vec<f64> {
    power_spectrum(&Signal::new(samples, 256.0).unwrap())
        .unwrap()
        .bins()
        .to_vec()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #[test]
    fn circular_shift_leaves_power_unchanged(x in prop::collection::vec(-10.0f64..10.0, 64), shift in 0usize..64) {
        let mut y = x.clone();
        y.rotate_left(shift);
        prop_assert!(close(&spectrum_of(x), &spectrum_of(y), 1e-12));
    }

    #[test]
    fn complement_changes_only_dc(x in prop::collection::vec(-10.0f64..10.0, 128), beta in -8.0f64..8.0) {
        let s = Signal::new(x, 256.0).unwrap();
        let up = apply_activation(&s, ActivationKind::BiasedSigmoid.with_beta(beta));
        let comp: Vec<f64> = up.samples().iter().map(|v| 1.0 - v).collect();
        let a = spectrum_of(up.samples().to_vec());
        let b = spectrum_of(comp);
        prop_assert!(close(&a[1..], &b[1..], 1e-9));
    }

    #[test]
    fn mirrored_bias_mirrors_the_spectrum(x in prop::collection::vec(-10.0f64..10.0, 128), beta in -8.0f64..8.0) {
        // sigma(-x - beta) = 1 - sigma(x + beta): negating the input and the
        // bias gives the complement, whose non-DC spectrum is unchanged.
        let s = Signal::new(x.clone(), 256.0).unwrap();
        let neg = Signal::new(x.iter().map(|v| -v).collect(), 256.0).unwrap();
        let a = spectrum_of(apply_activation(&s, ActivationKind::BiasedSigmoid.with_beta(beta)).samples().to_vec());
        let b = spectrum_of(apply_activation(&neg, ActivationKind::BiasedSigmoid.with_beta(-beta)).samples().to_vec());
        prop_assert!(close(&a[1..], &b[1..], 1e-9));
    }

    #[test]
    fn zero_bias_null_for_any_amplitude(amplitude in 0.05f64..4.0) {
        let scfg = SignalConfig { amplitude, ..SignalConfig::default() };
        let s = synth_am_signal(&scfg).unwrap();
        let spec = power_spectrum(&apply_activation(&s, ActivationKind::BiasedSigmoid.with_beta(0.0))).unwrap();
        prop_assert!(spec.band_power(1.0, 100.0) < 1e-12 * spec.non_dc_power());
    }
}
