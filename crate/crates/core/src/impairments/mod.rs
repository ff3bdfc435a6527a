//! Transmitter-side hardware impairments: quadrature-mixer IQ imbalance and
//! LO-feedthrough DC offset.
//!
//! The canonical chain applies IQ imbalance first and DC offset second,
//! matching a mixer followed by its LO leakage.

mod calibration;
mod imrr;
mod levels;

pub use calibration::{calibration_sweep, write_calibration_csv, CalibrationEntry};
pub use imrr::{
    dc_level_db, imrr_analytic, imrr_from_gain_ratio, imrr_measured, tone_powers_db,
    PERFECT_REJECTION_DB,
};
pub use levels::{dc_offset_grid, iq_imbalance_for_imrr, iq_imbalance_grid, iq_imbalance_sweep};

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Amplitude imbalance `alpha = (a_I - a_Q) / (a_I + a_Q)` and phase
/// deviation `theta` (radians) from quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqImbalance {
    pub alpha: f64,
    pub theta: f64,
}

impl IqImbalance {
    pub const IDENTITY: IqImbalance = IqImbalance {
        alpha: 0.0,
        theta: 0.0,
    };

    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        let imb = IqImbalance { alpha, theta };
        imb.validate()?;
        Ok(imb)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.abs() < 1.0) || !(self.theta.abs() < FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "IQ imbalance out of range: |alpha| = {} (< 1), |theta| = {} (< pi/2)",
                self.alpha.abs(),
                self.theta.abs()
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.alpha == 0.0 && self.theta == 0.0
    }

    /// Direct-path coefficient `cos(theta/2) + j alpha sin(theta/2)`.
    pub fn mu(&self) -> Complex<f64> {
        let (s, c) = (self.theta / 2.0).sin_cos();
        Complex::new(c, self.alpha * s)
    }

    /// Conjugate-path coefficient `alpha cos(theta/2) - j sin(theta/2)`.
    pub fn v(&self) -> Complex<f64> {
        let (s, c) = (self.theta / 2.0).sin_cos();
        Complex::new(self.alpha * c, -s)
    }

    /// `v / mu`: the image left after a receiver normalises the direct path.
    pub fn image_coefficient(&self) -> Complex<f64> {
        self.v() / self.mu()
    }
}

impl Default for IqImbalance {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Additive complex baseband offset.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct DcOffset {
    pub offset: Complex<f64>,
}

impl DcOffset {
    pub const ZERO: DcOffset = DcOffset {
        offset: Complex { re: 0.0, im: 0.0 },
    };

    pub fn new(offset: Complex<f64>) -> Result<Self> {
        let dc = DcOffset { offset };
        dc.validate()?;
        Ok(dc)
    }

    /// Offset whose DC tone has power `level_db` relative to unit signal
    /// power, at angle `phase`.
    pub fn from_level_db(level_db: f64, phase: f64) -> Result<Self> {
        Self::new(Complex::from_polar(10f64.powf(level_db / 20.0), phase))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.offset.norm() < 1.0) {
            return Err(Error::invalid(format!(
                "DC offset magnitude {} must be < 1",
                self.offset.norm()
            )));
        }
        Ok(())
    }

    /// `20 log10 |offset|` (equivalently the DC tone power in dB), floored
    /// at [`PERFECT_REJECTION_DB`].
    pub fn level_db(&self) -> f64 {
        imrr::floor_db(self.offset.norm_sqr())
    }
}

/// One transmitter's impairment state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentConfig {
    pub iq: IqImbalance,
    pub dc: DcOffset,
    pub label: String,
}

impl ImpairmentConfig {
    pub fn new(iq: IqImbalance, dc: DcOffset, label: impl Into<String>) -> Result<Self> {
        let cfg = ImpairmentConfig {
            iq,
            dc,
            label: label.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn identity() -> Self {
        ImpairmentConfig {
            iq: IqImbalance::IDENTITY,
            dc: DcOffset::ZERO,
            label: "identity".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.iq.validate()?;
        self.dc.validate()
    }

    pub fn is_identity(&self) -> bool {
        self.iq.is_identity() && self.dc.offset == Complex::new(0.0, 0.0)
    }
}

fn to_t<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::lit(z.re), T::lit(z.im))
}

/// `s_d = mu * s + v * conj(s)` elementwise.
pub fn apply_iq_imbalance<T: Real>(s: &[Complex<T>], imb: &IqImbalance) -> Vec<Complex<T>> {
    if imb.is_identity() {
        return s.to_vec();
    }
    let (mu, v) = (to_t::<T>(imb.mu()), to_t::<T>(imb.v()));
    s.iter().map(|x| mu * x + v * x.conj()).collect()
}

pub fn apply_dc_offset<T: Real>(s: &[Complex<T>], dc: &DcOffset) -> Vec<Complex<T>> {
    let d = to_t::<T>(dc.offset);
    s.iter().map(|x| x + d).collect()
}

/// Full transmitter chain: IQ imbalance, then DC offset.
pub fn apply_impairments<T: Real>(s: &[Complex<T>], cfg: &ImpairmentConfig) -> Vec<Complex<T>> {
    let out = apply_iq_imbalance(s, &cfg.iq);
    if cfg.dc.offset == Complex::new(0.0, 0.0) {
        out
    } else {
        apply_dc_offset(&out, &cfg.dc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_imbalance_is_bit_exact() {
        let s: Vec<Complex<f32>> = vec![
            Complex::new(-0.0, 1.5),
            Complex::new(0.3, -0.0),
            Complex::new(1e-30, 7.0),
        ];
        let out = apply_iq_imbalance(&s, &IqImbalance::IDENTITY);
        for (a, b) in s.iter().zip(&out) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn amplitude_imbalance_on_imaginary_unit() {
        let imb = IqImbalance::new(0.2, 0.0).unwrap();
        assert_eq!(imb.mu(), Complex::new(1.0, 0.0));
        assert_eq!(imb.v(), Complex::new(0.2, 0.0));
        let out = apply_iq_imbalance(&[Complex::new(0.0f64, 1.0)], &imb);
        assert!((out[0] - Complex::new(0.0, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn quarter_turn_phase_imbalance() {
        let imb = IqImbalance {
            alpha: 0.0,
            theta: PI / 2.0,
        };
        let out = apply_iq_imbalance(&[Complex::new(1.0f64, 0.0)], &imb);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out[0] - Complex::new(h, -h)).norm() < 1e-12);
    }

    #[test]
    fn dc_offset_shifts_mean() {
        let s: Vec<Complex<f64>> = crate::baseband::known_preamble(64, 3).unwrap();
        assert_eq!(apply_dc_offset(&s, &DcOffset::ZERO), s);
        let out = apply_dc_offset(&s, &DcOffset::new(Complex::new(0.1, 0.0)).unwrap());
        let mean: Complex<f64> = out.iter().sum::<Complex<f64>>() / 64.0;
        assert!((mean - Complex::new(0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dc_level_from_db() {
        let s: Vec<Complex<f64>> = crate::baseband::known_preamble(256, 3).unwrap();
        let dc = DcOffset::from_level_db(-94.0, 0.7).unwrap();
        let out = apply_dc_offset(&s, &dc);
        assert!((dc_level_db(&out) - -94.0).abs() < 0.1);
        assert!((dc.level_db() - -94.0).abs() < 1e-9);
    }

    #[test]
    fn coefficient_energy_minimised_at_origin() {
        // |mu|^2 + |v|^2 = 1 + alpha^2 >= 1, with equality only at alpha = 0;
        // over the grid the unique minimiser must be the origin.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -10..=10 {
            for j in -10..=10 {
                let imb = IqImbalance::new(i as f64 * 0.05, j as f64 * 0.1).unwrap();
                let e = imb.mu().norm_sqr() + imb.v().norm_sqr();
                assert!(e >= 1.0 - 1e-12);
                if e < best.0 - 1e-12 {
                    best = (e, imb.alpha, imb.theta);
                }
            }
        }
        assert!(best.1.abs() < 1e-12 && (best.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_bounds() {
        assert!(IqImbalance::new(1.0, 0.0).is_err());
        assert!(IqImbalance::new(0.0, FRAC_PI_2).is_err());
        assert!(DcOffset::new(Complex::new(1.0, 0.0)).is_err());
        assert!(ImpairmentConfig::new(IqImbalance::IDENTITY, DcOffset::ZERO, "x").is_ok());
    }
}
