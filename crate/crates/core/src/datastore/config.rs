use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseband::{Constellation, FrameLayout};
use crate::classifier::MAX_AUGMENTATION_DB;
use crate::scenario::{ChannelKind, ChannelModel, InputKind, Link, ResidualSpread};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything an experiment depends on besides code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub link: LinkConfig,
    pub devices: DeviceConfig,
    pub channels: ChannelConfig,
    pub planner: PlannerConfig,
    pub classifier: ClassifierConfig,
    pub calibration: CalibrationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub constellation: Constellation,
    pub preamble_len: usize,
    pub payload_len: usize,
    pub sample_rate_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub count: usize,
    pub residual: ResidualSpread,
}

/// Session 0 is the training capture through `train`; sessions
/// `1..=test_sessions` use fresh `test` realizations, or reuse each
/// device's training realization when `static_channel` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub train: ChannelModel,
    pub test: ChannelModel,
    pub test_sessions: usize,
    pub static_channel: bool,
}

/// Magnitude x direction candidate grid, weakest magnitude first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelGrid {
    pub magnitudes: usize,
    pub directions: usize,
    pub weakest_db: f64,
    pub strongest_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub snr_grid_db: Vec<f64>,
    pub bits_per_point: usize,
    pub ber_bound: f64,
    pub emd_threshold: f64,
    pub n_pattern: usize,
    pub ref_snr_db: f64,
    pub n_required: usize,
    pub iq_levels: Option<LevelGrid>,
    pub dc_levels: Option<LevelGrid>,
    /// SNRs radios are drawn from when planning allocations.
    pub radio_snr_choices_db: Vec<f64>,
    /// SNR profiles drawn for the greedy-vs-random comparison.
    pub comparison_draws: usize,
    /// Random allocations per SNR profile.
    pub random_allocations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub input: InputKind,
    /// Give each device one member of the feasible set.
    pub impaired: bool,
    pub stride: usize,
    pub train_windows_per_device: usize,
    pub test_windows_per_device: usize,
    pub val_fraction: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub augmentation_db: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub levels: usize,
    pub weakest_db: f64,
    pub strongest_db: f64,
    pub direction_deg: f64,
    pub tone_freq: f64,
    pub n_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            link: LinkConfig::default(),
            devices: DeviceConfig::default(),
            channels: ChannelConfig::default(),
            planner: PlannerConfig::default(),
            classifier: ClassifierConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            constellation: Constellation::Qpsk,
            preamble_len: 64,
            payload_len: 448,
            sample_rate_hz: 1e6,
        }
    }
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            count: 16,
            residual: ResidualSpread {
                alpha_std: 0.005,
                theta_std_deg: 0.3,
                dc_std: 0.005,
            },
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            train: ChannelModel {
                kind: ChannelKind::Identity,
                noise_power_db: -25.0,
                min_gain: 0.5,
            },
            test: ChannelModel {
                kind: ChannelKind::Rayleigh,
                noise_power_db: -25.0,
                min_gain: 0.5,
            },
            test_sessions: 3,
            static_channel: false,
        }
    }
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            snr_grid_db: vec![15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            bits_per_point: 200_000,
            ber_bound: 1e-4,
            emd_threshold: 0.15,
            n_pattern: 64,
            ref_snr_db: 40.0,
            n_required: 16,
            iq_levels: Some(LevelGrid {
                magnitudes: 10,
                directions: 8,
                weakest_db: -30.0,
                strongest_db: -6.0,
            }),
            dc_levels: Some(LevelGrid {
                magnitudes: 10,
                directions: 12,
                weakest_db: -30.0,
                strongest_db: -4.0,
            }),
            radio_snr_choices_db: vec![20.0, 25.0, 30.0],
            comparison_draws: 200,
            random_allocations: 100,
        }
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input: InputKind::Equalized,
            impaired: true,
            stride: 128,
            train_windows_per_device: 1000,
            test_windows_per_device: 200,
            val_fraction: 0.1,
            batch_size: 128,
            max_epochs: 50,
            patience: 10,
            augmentation_db: Some(-16.0),
            learning_rate: 1e-4,
        }
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            levels: 80,
            weakest_db: -44.0,
            strongest_db: -9.0,
            direction_deg: 28.6,
            tone_freq: 0.0625,
            n_samples: 4096,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl LevelGrid {
    fn validate(&self, name: &str) -> Result<()> {
        if self.magnitudes == 0 || self.directions == 0 {
            return Err(bad(format!("{name}: empty level grid")));
        }
        if !(self.weakest_db.is_finite()
            && self.strongest_db.is_finite()
            && self.weakest_db <= self.strongest_db)
        {
            return Err(bad(format!(
                "{name}: level range must run from weakest to strongest"
            )));
        }
        Ok(())
    }
}

impl RunConfig {
    /// Reads and validates a JSON config.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn link(&self) -> Link {
        Link {
            constellation: self.link.constellation,
            layout: FrameLayout {
                preamble_len: self.link.preamble_len,
                payload_len: self.link.payload_len,
            },
            preamble_seed: self.seed,
            sample_rate_hz: self.link.sample_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(format!(
                "schema version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.link().validate()?;
        if self.devices.count == 0 {
            return Err(bad("device count must be positive"));
        }
        self.devices.residual.validate()?;
        self.channels.train.validate()?;
        self.channels.test.validate()?;

        let p = &self.planner;
        if p.snr_grid_db.is_empty()
            || p.snr_grid_db.iter().any(|s| !s.is_finite())
            || p.snr_grid_db.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(bad(
                "planner.snr_grid_db must be finite and strictly increasing",
            ));
        }
        if !(p.ber_bound > 0.0 && p.ber_bound <= 1.0) {
            return Err(bad("planner.ber_bound must lie in (0, 1]"));
        }
        if (p.bits_per_point as f64) < 10.0 / p.ber_bound {
            return Err(bad(format!(
                "planner.bits_per_point = {} cannot resolve ber_bound = {:e}",
                p.bits_per_point, p.ber_bound
            )));
        }
        if !(p.emd_threshold >= 0.0) {
            return Err(bad("planner.emd_threshold must be non-negative"));
        }
        let order = self.link.constellation.order();
        if p.n_pattern == 0 || !p.n_pattern.is_multiple_of(order) {
            return Err(bad(format!(
                "planner.n_pattern must be a positive multiple of {order}"
            )));
        }
        if p.ref_snr_db < p.snr_grid_db[0] || p.ref_snr_db > *p.snr_grid_db.last().unwrap() {
            return Err(bad("planner.ref_snr_db must lie within the SNR grid"));
        }
        if p.iq_levels.is_none() && p.dc_levels.is_none() {
            return Err(bad("planner needs at least one of iq_levels and dc_levels"));
        }
        if p.radio_snr_choices_db.is_empty()
            || p.radio_snr_choices_db.iter().any(|s| !s.is_finite())
        {
            return Err(bad(
                "planner.radio_snr_choices_db must be non-empty and finite",
            ));
        }
        if p.comparison_draws == 0 || p.random_allocations == 0 {
            return Err(bad("planner comparison counts must be positive"));
        }
        if let Some(g) = &p.iq_levels {
            g.validate("planner.iq_levels")?;
        }
        if let Some(g) = &p.dc_levels {
            g.validate("planner.dc_levels")?;
        }

        let c = &self.classifier;
        if c.stride == 0 || c.batch_size == 0 || c.max_epochs == 0 || c.patience == 0 {
            return Err(bad(
                "classifier stride, batch size, epochs and patience must be positive",
            ));
        }
        if c.train_windows_per_device < 2 || c.test_windows_per_device == 0 {
            return Err(bad("classifier window budgets too small"));
        }
        if !(c.val_fraction > 0.0 && c.val_fraction < 1.0) {
            return Err(bad("classifier.val_fraction must lie in (0, 1)"));
        }
        if let Some(db) = c.augmentation_db {
            if !(db <= MAX_AUGMENTATION_DB) {
                return Err(bad(format!(
                    "classifier.augmentation_db = {db} exceeds the {MAX_AUGMENTATION_DB} dB bound"
                )));
            }
        }
        if !(c.learning_rate > 0.0) {
            return Err(bad("classifier.learning_rate must be positive"));
        }

        let k = &self.calibration;
        if k.levels == 0
            || !(k.weakest_db <= k.strongest_db)
            || !(k.tone_freq > 0.0 && k.tone_freq < 0.5)
            || k.n_samples < 1024
        {
            return Err(bad("calibration settings out of range"));
        }
        Ok(())
    }
}
