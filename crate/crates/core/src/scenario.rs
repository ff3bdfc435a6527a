//! Simulated fleets of bit-similar transmitters and their captures.
//!
//! A device transmits framed symbols through its intentional impairment
//! (applied digitally, before the RF chain), then its own hardware
//! residual, then a block-fading channel.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baseband::{
    apply_channel_samples, equalize_frames, known_preamble, ChannelRealization, Constellation,
    Frame, FrameLayout, IqTrace,
};
use crate::classifier::{make_windows, windows_from_samples, IqWindow};
use crate::impairments::{apply_impairments, DcOffset, ImpairmentConfig, IqImbalance};
use crate::rng::{stream_id, stream_rng};
use crate::similarity::{extract_pattern, Pattern};
use crate::{Error, Real, Result};

/// Spread of manufacturing variation across a fleet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpread {
    pub alpha_std: f64,
    pub theta_std_deg: f64,
    /// Standard deviation of each DC component.
    pub dc_std: f64,
}

impl ResidualSpread {
    pub const NONE: ResidualSpread = ResidualSpread {
        alpha_std: 0.0,
        theta_std_deg: 0.0,
        dc_std: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let v = [self.alpha_std, self.theta_std_deg, self.dc_std];
        if v.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || self.alpha_std > 0.1
            || self.theta_std_deg > 10.0
            || self.dc_std > 0.1
        {
            return Err(Error::config(format!(
                "implausible residual spread {self:?}"
            )));
        }
        Ok(())
    }
}

/// One transmitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub label: u32,
    pub residual: ImpairmentConfig,
    pub assigned: ImpairmentConfig,
}

impl Device {
    pub fn with_assigned(&self, assigned: ImpairmentConfig) -> Device {
        Device {
            assigned,
            ..self.clone()
        }
    }
}

/// `count` devices with Gaussian residuals and no intentional impairment.
pub fn sample_devices(count: usize, spread: ResidualSpread, seed: u64) -> Result<Vec<Device>> {
    spread.validate()?;
    let mut rng = stream_rng(seed, 0xde71ce);
    let mut draw = |std: f64| -> f64 {
        if std == 0.0 {
            0.0
        } else {
            Normal::new(0.0, std).expect("finite std").sample(&mut rng)
        }
    };
    (0..count)
        .map(|k| {
            let iq = IqImbalance::new(
                draw(spread.alpha_std),
                draw(spread.theta_std_deg).to_radians(),
            )?;
            let dc = DcOffset::new(Complex::new(draw(spread.dc_std), draw(spread.dc_std)))?;
            Ok(Device {
                label: k as u32,
                residual: ImpairmentConfig::new(iq, dc, format!("residual-{k}"))?,
                assigned: ImpairmentConfig::identity(),
            })
        })
        .collect()
}

/// How channels are drawn for a capture campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Identity,
    Awgn,
    Rayleigh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub noise_power_db: f64,
    pub min_gain: f64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if self.noise_power_db.is_nan() || self.noise_power_db > 20.0 {
            return Err(Error::config(format!(
                "noise power {} dB",
                self.noise_power_db
            )));
        }
        if !(0.0..1.0).contains(&self.min_gain) {
            return Err(Error::config(format!(
                "minimum fading gain {} outside [0, 1)",
                self.min_gain
            )));
        }
        Ok(())
    }

    /// Realization for `(seed, tags)`, e.g. tags `[session, device]`.
    pub fn realize(&self, seed: u64, tags: &[u64]) -> ChannelRealization {
        let stream = stream_id(tags);
        let noise_seed = stream_rng(seed, stream).random();
        match self.kind {
            ChannelKind::Identity => ChannelRealization {
                noise_power_db: self.noise_power_db,
                seed: noise_seed,
                ..ChannelRealization::identity()
            },
            ChannelKind::Awgn => ChannelRealization::awgn(self.noise_power_db, noise_seed),
            ChannelKind::Rayleigh => {
                let mut rng = stream_rng(seed ^ 0xfade, stream);
                ChannelRealization::rayleigh(
                    &mut rng,
                    self.noise_power_db,
                    self.min_gain,
                    noise_seed,
                )
            }
        }
    }
}

/// Frame format shared by every device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub constellation: Constellation,
    pub layout: FrameLayout,
    pub preamble_seed: u64,
    pub sample_rate_hz: f64,
}

impl Link {
    pub fn preamble<T: Real>(&self) -> Result<Vec<Complex<T>>> {
        known_preamble(self.layout.preamble_len, self.preamble_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layout.payload_len == 0 || !(self.sample_rate_hz > 0.0) {
            return Err(Error::config(
                "payload length and sample rate must be positive",
            ));
        }
        self.preamble::<f64>()
            .map_err(|e| Error::config(e.to_string()))?;
        Ok(())
    }
}

/// Transmitted samples of `n_frames` random frames (before the channel).
pub fn transmit(
    device: &Device,
    link: &Link,
    n_frames: usize,
    data_seed: u64,
) -> Result<Vec<Complex<f64>>> {
    let preamble = link.preamble::<f64>()?;
    let mut rng = stream_rng(data_seed, stream_id(&[0xda7a, device.label as u64]));
    let mut out = Vec::with_capacity(n_frames * link.layout.frame_len());
    for _ in 0..n_frames {
        let frame = Frame::random(
            &preamble,
            link.constellation,
            link.layout.payload_len,
            &mut rng,
        )?;
        out.extend(frame.samples());
    }
    let intended = apply_impairments(&out, &device.assigned);
    Ok(apply_impairments(&intended, &device.residual))
}

/// What a receiver records from `device` over `channel`.
pub fn capture(
    device: &Device,
    channel: &ChannelRealization,
    link: &Link,
    n_frames: usize,
    data_seed: u64,
) -> Result<IqTrace<f32>> {
    let rx = apply_channel_samples(&transmit(device, link, n_frames, data_seed)?, channel)?;
    IqTrace::new(
        rx.iter()
            .map(|s| Complex::new(s.re as f32, s.im as f32))
            .collect(),
        link.sample_rate_hz,
        device.label,
        channel.clone(),
        device.assigned.clone(),
        device.residual.clone(),
    )
}

/// Frames needed for `windows` windows at `stride` over a stream of
/// `per_frame` samples per frame.
pub fn frames_for_windows(windows: usize, stride: usize, per_frame: usize) -> usize {
    let samples = (windows.max(1) - 1) * stride + crate::WINDOW_LEN;
    samples.div_ceil(per_frame.max(1))
}

/// Which representation the classifier sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Received samples as captured, preambles included.
    Raw,
    /// Per-frame least-squares equalized payload symbols.
    Equalized,
}

/// Windows of a capture in the requested representation, labelled with the
/// trace's device.
pub fn trace_windows(
    trace: &IqTrace<f32>,
    link: &Link,
    input: InputKind,
    stride: usize,
) -> Result<Vec<IqWindow<f32>>> {
    match input {
        InputKind::Raw => make_windows(trace, stride),
        InputKind::Equalized => {
            let eq = equalize_frames(&trace.samples, &link.preamble::<f32>()?, link.layout)?;
            windows_from_samples(&eq, stride, trace.device_label as usize)
        }
    }
}

/// Captures a device and returns its first `count` windows.
pub fn device_windows(
    device: &Device,
    channel: &ChannelRealization,
    link: &Link,
    input: InputKind,
    stride: usize,
    count: usize,
    data_seed: u64,
) -> Result<Vec<IqWindow<f32>>> {
    let per_frame = match input {
        InputKind::Raw => link.layout.frame_len(),
        InputKind::Equalized => link.layout.payload_len,
    };
    let frames = frames_for_windows(count, stride, per_frame);
    let mut w = trace_windows(
        &capture(device, channel, link, frames, data_seed)?,
        link,
        input,
        stride,
    )?;
    w.truncate(count);
    Ok(w)
}

/// Pattern of `n_pattern` equalized payload symbols of one capture.
pub fn device_pattern(
    device: &Device,
    channel: &ChannelRealization,
    link: &Link,
    n_pattern: usize,
    seed: u64,
) -> Result<Pattern<f64>> {
    let frames = n_pattern.div_ceil(link.layout.payload_len);
    let rx = apply_channel_samples(&transmit(device, link, frames, seed)?, channel)?;
    let eq = equalize_frames(&rx, &link.preamble::<f64>()?, link.layout)?;
    extract_pattern(&eq, n_pattern, seed)
}
