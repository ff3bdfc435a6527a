//! Framed single-carrier QAM baseband: modulation, block-fading channels,
//! preamble-based least-squares equalization and bit error measurement.

mod channel;
mod constellation;

pub use channel::{apply_channel_samples, ChannelRealization};
pub use constellation::Constellation;

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::impairments::ImpairmentConfig;
use crate::rng::stream_rng;
use crate::{Error, Real, Result, WINDOW_LEN};

/// Preamble symbols plus payload; the payload symbols are always the
/// constellation mapping of `payload_bits`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub preamble: Vec<Complex<T>>,
    pub payload_symbols: Vec<Complex<T>>,
    pub payload_bits: Vec<u8>,
}

impl<T: Real> Frame<T> {
    pub fn new(
        preamble: &[Complex<T>],
        constellation: Constellation,
        payload_bits: Vec<u8>,
    ) -> Result<Self> {
        let payload_symbols = constellation.modulate(&payload_bits)?;
        Ok(Frame {
            preamble: preamble.to_vec(),
            payload_symbols,
            payload_bits,
        })
    }

    /// Frame with `payload_len` uniformly random symbols.
    pub fn random<R: Rng + ?Sized>(
        preamble: &[Complex<T>],
        constellation: Constellation,
        payload_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bits = (0..payload_len * constellation.bits_per_symbol())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        Self::new(preamble, constellation, bits)
    }

    /// Transmit order: preamble then payload.
    pub fn samples(&self) -> Vec<Complex<T>> {
        let mut out = Vec::with_capacity(self.preamble.len() + self.payload_symbols.len());
        out.extend_from_slice(&self.preamble);
        out.extend_from_slice(&self.payload_symbols);
        out
    }
}

/// Fixed frame geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub preamble_len: usize,
    pub payload_len: usize,
}

impl FrameLayout {
    pub fn frame_len(&self) -> usize {
        self.preamble_len + self.payload_len
    }
}

/// Known preamble: QPSK points in equal numbers, shuffled by `seed`.
///
/// Equal occupancy makes both `sum p` and `sum p^2` vanish, so the
/// least-squares gain estimate is blind to DC offset and to the conjugate
/// (image) term of IQ imbalance.
pub fn known_preamble<T: Real>(len: usize, seed: u64) -> Result<Vec<Complex<T>>> {
    balanced_symbols(Constellation::Qpsk, len, seed)
}

/// `len` symbols using every constellation point equally often, in seeded
/// random order.
pub fn balanced_symbols<T: Real>(
    constellation: Constellation,
    len: usize,
    seed: u64,
) -> Result<Vec<Complex<T>>> {
    let m = constellation.order();
    if len == 0 || !len.is_multiple_of(m) {
        return Err(Error::invalid(format!(
            "balanced sequence length {len} must be a positive multiple of {m}"
        )));
    }
    let pts = constellation.points::<T>();
    let mut out: Vec<Complex<T>> = (0..len).map(|k| pts[k % m]).collect();
    out.shuffle(&mut stream_rng(seed, 0x9a3b));
    Ok(out)
}

/// A captured stream of complex baseband samples plus how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct IqTrace<T> {
    pub samples: Vec<Complex<T>>,
    pub sample_rate_hz: f64,
    pub device_label: u32,
    pub channel: ChannelRealization,
    /// Intentionally configured impairment (identity when none).
    pub impairment: ImpairmentConfig,
    /// The device's own hardware variation.
    pub residual: ImpairmentConfig,
}

impl<T: Real> IqTrace<T> {
    pub fn new(
        samples: Vec<Complex<T>>,
        sample_rate_hz: f64,
        device_label: u32,
        channel: ChannelRealization,
        impairment: ImpairmentConfig,
        residual: ImpairmentConfig,
    ) -> Result<Self> {
        if samples.len() < WINDOW_LEN {
            return Err(Error::invalid(format!(
                "trace holds {} samples, fewer than the window length {WINDOW_LEN}",
                samples.len()
            )));
        }
        check_finite(&samples)?;
        Ok(IqTrace {
            samples,
            sample_rate_hz,
            device_label,
            channel,
            impairment,
            residual,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Converts the sample type, keeping metadata.
    pub fn cast<U: Real>(&self) -> IqTrace<U> {
        IqTrace {
            samples: self
                .samples
                .iter()
                .map(|s| Complex::new(U::lit(s.re.as_f64()), U::lit(s.im.as_f64())))
                .collect(),
            sample_rate_hz: self.sample_rate_hz,
            device_label: self.device_label,
            channel: self.channel.clone(),
            impairment: self.impairment.clone(),
            residual: self.residual.clone(),
        }
    }
}

pub(crate) fn check_finite<T: Real>(samples: &[Complex<T>]) -> Result<()> {
    match samples
        .iter()
        .position(|s| !s.re.is_finite() || !s.im.is_finite())
    {
        Some(k) => Err(Error::invalid(format!("non-finite sample at index {k}"))),
        None => Ok(()),
    }
}

/// Passes a trace through a channel realization; the result records `ch`.
pub fn apply_channel<T: Real>(trace: &IqTrace<T>, ch: &ChannelRealization) -> Result<IqTrace<T>> {
    let samples = apply_channel_samples(&trace.samples, ch)?;
    Ok(IqTrace {
        samples,
        channel: ch.clone(),
        ..trace.clone()
    })
}

/// Least-squares channel estimate and the equalized payload of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Equalized<T> {
    pub gain_estimate: Complex<T>,
    pub symbols: Vec<Complex<T>>,
}

/// Mean received preamble energy under which the channel is declared lost.
pub const MIN_PREAMBLE_ENERGY: f64 = 1e-10;

/// Fits `received[..L] ~ g * preamble` in the least-squares sense and
/// divides the remaining samples by the estimate.
pub fn estimate_and_equalize<T: Real>(
    received: &[Complex<T>],
    known_preamble: &[Complex<T>],
) -> Result<Equalized<T>> {
    let l = known_preamble.len();
    if l == 0 || received.len() < l {
        return Err(Error::invalid(format!(
            "received block of {} samples cannot hold a {l}-symbol preamble",
            received.len()
        )));
    }
    let rx_pre = &received[..l];
    let rx_energy = rx_pre.iter().map(|s| s.norm_sqr().as_f64()).sum::<f64>() / l as f64;
    let ref_energy: T = known_preamble.iter().map(|p| p.norm_sqr()).sum();
    if !(rx_energy >= MIN_PREAMBLE_ENERGY) || ref_energy.as_f64() <= 0.0 {
        return Err(Error::ChannelUnrecoverable(format!(
            "preamble energy {rx_energy:.3e} below {MIN_PREAMBLE_ENERGY:.0e}"
        )));
    }
    let corr: Complex<T> = rx_pre
        .iter()
        .zip(known_preamble)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (r, p)| {
            acc + r * p.conj()
        });
    let gain = corr / ref_energy;
    if gain.norm_sqr().as_f64() < MIN_PREAMBLE_ENERGY {
        return Err(Error::ChannelUnrecoverable(format!(
            "gain estimate {gain} is uncorrelated with the preamble"
        )));
    }
    let inv = Complex::new(T::one(), T::zero()) / gain;
    Ok(Equalized {
        gain_estimate: gain,
        symbols: received[l..].iter().map(|r| r * inv).collect(),
    })
}

/// Equalizes every frame of a frame-aligned stream and concatenates the
/// payloads. A trailing partial frame is ignored.
pub fn equalize_frames<T: Real>(
    samples: &[Complex<T>],
    known_preamble: &[Complex<T>],
    layout: FrameLayout,
) -> Result<Vec<Complex<T>>> {
    if layout.preamble_len != known_preamble.len() {
        return Err(Error::invalid(
            "preamble length disagrees with the frame layout",
        ));
    }
    let mut out = Vec::with_capacity(samples.len() / layout.frame_len() * layout.payload_len);
    for frame in samples.chunks_exact(layout.frame_len()) {
        out.extend(estimate_and_equalize(frame, known_preamble)?.symbols);
    }
    Ok(out)
}

/// Fraction of differing bits.
pub fn measure_ber(tx_bits: &[u8], rx_bits: &[u8]) -> Result<f64> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::invalid(format!(
            "bit sequences differ in length ({} vs {})",
            tx_bits.len(),
            rx_bits.len()
        )));
    }
    if tx_bits.is_empty() {
        return Ok(0.0);
    }
    let errors = tx_bits.iter().zip(rx_bits).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / tx_bits.len() as f64)
}
