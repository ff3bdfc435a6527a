use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{complex_gaussian, db_to_power, stream_rng};
use crate::{Error, Real, Result};

/// One block-fading channel realization: a flat complex gain plus AWGN.
///
/// `noise_power_db` is relative to unit signal power; `-inf` means a
/// noiseless channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub gain: Complex<f64>,
    #[serde(with = "db_or_null")]
    pub noise_power_db: f64,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn new(gain: Complex<f64>, noise_power_db: f64, seed: u64) -> Result<Self> {
        let ch = ChannelRealization {
            gain,
            noise_power_db,
            seed,
        };
        ch.validate()?;
        Ok(ch)
    }

    /// Unit gain, no noise.
    pub fn identity() -> Self {
        ChannelRealization {
            gain: Complex::new(1.0, 0.0),
            noise_power_db: f64::NEG_INFINITY,
            seed: 0,
        }
    }

    /// Unit gain with AWGN.
    pub fn awgn(noise_power_db: f64, seed: u64) -> Self {
        ChannelRealization {
            gain: Complex::new(1.0, 0.0),
            noise_power_db,
            seed,
        }
    }

    /// Rayleigh block fading: `gain ~ CN(0, 1)`, redrawn while `|gain| < min_gain`.
    pub fn rayleigh<R: Rng + ?Sized>(
        rng: &mut R,
        noise_power_db: f64,
        min_gain: f64,
        seed: u64,
    ) -> Self {
        let gain = loop {
            let g: Complex<f64> = complex_gaussian(rng, 1.0);
            if g.norm() >= min_gain.max(1e-6) {
                break g;
            }
        };
        ChannelRealization {
            gain,
            noise_power_db,
            seed,
        }
    }

    /// Same gain, fresh noise seed (a new capture in an unchanged environment).
    pub fn with_seed(&self, seed: u64) -> Self {
        ChannelRealization {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain.norm() > 0.0) || !self.gain.re.is_finite() || !self.gain.im.is_finite() {
            return Err(Error::invalid(format!(
                "channel gain {} must be finite and non-zero",
                self.gain
            )));
        }
        if self.noise_power_db.is_nan() || self.noise_power_db == f64::INFINITY {
            return Err(Error::invalid("channel noise power must be finite or -inf"));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise_power_db == f64::NEG_INFINITY
    }
}

/// `y = gain * x + n`, `n ~ CN(0, 10^(noise_db/10))`, noise drawn from the
/// realization's seed.
pub fn apply_channel_samples<T: Real>(
    x: &[Complex<T>],
    ch: &ChannelRealization,
) -> Result<Vec<Complex<T>>> {
    ch.validate()?;
    if x.is_empty() {
        return Err(Error::invalid(
            "cannot apply a channel to an empty sequence",
        ));
    }
    let g = Complex::new(T::lit(ch.gain.re), T::lit(ch.gain.im));
    if ch.is_noiseless() {
        return Ok(x.iter().map(|&s| g * s).collect());
    }
    let power = db_to_power(ch.noise_power_db);
    let mut rng = stream_rng(ch.seed, 0xc4a2);
    Ok(x.iter()
        .map(|&s| g * s + complex_gaussian::<T, _>(&mut rng, power))
        .collect())
}

mod db_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
