use std::f64::consts::TAU;

use num_complex::Complex;

use super::{apply_iq_imbalance, IqImbalance};
use crate::{Error, Real, Result};

/// Stand-in for `-inf` dB (perfect rejection, zero DC) so tables stay sortable.
pub const PERFECT_REJECTION_DB: f64 = -200.0;

pub(crate) fn floor_db(power_ratio: f64) -> f64 {
    if power_ratio > 0.0 {
        (10.0 * power_ratio.log10()).max(PERFECT_REJECTION_DB)
    } else {
        PERFECT_REJECTION_DB
    }
}

/// Image rejection ratio in dB for I/Q gain ratio `gamma` and phase error
/// `theta`: `(g^2 + 1 - 2 g cos t) / (g^2 + 1 + 2 g cos t)`.
pub fn imrr_from_gain_ratio(gamma: f64, theta: f64) -> f64 {
    let c = theta.cos();
    let g2 = gamma * gamma + 1.0;
    floor_db((g2 - 2.0 * gamma * c) / (g2 + 2.0 * gamma * c))
}

/// Closed-form IMRR of an [`IqImbalance`].
///
/// The I/Q gain ratio implied by `alpha = (a_I - a_Q)/(a_I + a_Q)` is
/// `(1 + alpha)/(1 - alpha)`; with that ratio the closed form agrees exactly
/// with the `|v|^2 / |mu|^2` image power of the distortion model.
pub fn imrr_analytic(imb: &IqImbalance) -> f64 {
    imrr_from_gain_ratio((1.0 + imb.alpha) / (1.0 - imb.alpha), imb.theta)
}

/// Normalised DFT bin powers (dB) at `+k` and `-k` of `y`.
pub fn tone_powers_db<T: Real>(y: &[Complex<T>], k: usize) -> (f64, f64) {
    let n = y.len();
    let mut main = Complex::new(0.0, 0.0);
    let mut image = Complex::new(0.0, 0.0);
    for (i, s) in y.iter().enumerate() {
        let s = Complex::new(s.re.as_f64(), s.im.as_f64());
        let ph = Complex::from_polar(1.0, TAU * ((i * k) % n) as f64 / n as f64);
        main += s * ph.conj();
        image += s * ph;
    }
    let nn = (n * n) as f64;
    (
        floor_db(main.norm_sqr() / nn),
        floor_db(image.norm_sqr() / nn),
    )
}

/// Checks a tone frequency (cycles/sample) and returns its DFT bin.
pub(crate) fn tone_bin(tone_freq: f64, n_samples: usize) -> Result<usize> {
    if n_samples < 1024 {
        return Err(Error::invalid(format!(
            "tone measurement needs >= 1024 samples, got {n_samples}"
        )));
    }
    if !(tone_freq > 0.0 && tone_freq < 0.5) {
        return Err(Error::invalid(format!(
            "tone frequency {tone_freq} outside (0, 0.5) cycles/sample"
        )));
    }
    let cycles = tone_freq * n_samples as f64;
    let k = cycles.round();
    if (cycles - k).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "tone at {tone_freq} cycles/sample completes {cycles} cycles in {n_samples} samples; need an integer"
        )));
    }
    Ok(k as usize)
}

/// Measures IMRR by distorting a complex exponential and comparing the DFT
/// power at the image and the desired frequency.
pub fn imrr_measured(imb: &IqImbalance, tone_freq: f64, n_samples: usize) -> Result<f64> {
    imb.validate()?;
    let k = tone_bin(tone_freq, n_samples)?;
    let (main, image) = tone_powers_db(&distorted_tone(imb, k, n_samples), k);
    Ok((image - main).max(PERFECT_REJECTION_DB))
}

pub(crate) fn distorted_tone(imb: &IqImbalance, k: usize, n: usize) -> Vec<Complex<f64>> {
    let tone: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::from_polar(1.0, TAU * ((i * k) % n) as f64 / n as f64))
        .collect();
    apply_iq_imbalance(&tone, imb)
}

/// Power of the sample mean (the DC tone) in dB.
pub fn dc_level_db<T: Real>(samples: &[Complex<T>]) -> f64 {
    if samples.is_empty() {
        return PERFECT_REJECTION_DB;
    }
    let mean = samples.iter().fold(Complex::new(0.0, 0.0), |acc, s| {
        acc + Complex::new(s.re.as_f64(), s.im.as_f64())
    }) / samples.len() as f64;
    floor_db(mean.norm_sqr())
}
