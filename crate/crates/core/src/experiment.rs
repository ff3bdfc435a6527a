//! End-to-end pipelines driven by a [`RunConfig`]: planning, capture
//! campaigns, training and evaluation. Every step is a pure function of the
//! config (and therefore of its seed).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseband::ChannelRealization;
use crate::classifier::{
    evaluate, train, Architecture, CnnModel, ConfusionMatrix, Hyper, IqWindow, TrainLog,
    TrainRecipe,
};
use crate::datastore::{Dataset, DatasetRecord, RunConfig};
use crate::impairments::{
    calibration_sweep, dc_offset_grid, iq_imbalance_grid, iq_imbalance_sweep, CalibrationEntry,
};
use crate::planner::{
    build_impairment_map, select_feasible, FeasibleSet, ImpairmentKind, ImpairmentMap, LevelSet,
    MapSettings, PatternProbe, SelectionParams,
};
use crate::rng::stream_id;
use crate::scenario::{
    capture, frames_for_windows, sample_devices, trace_windows, Device, InputKind,
};
use crate::{Error, IqTraceF32, Result};

/// The fleet's devices with their residuals, before any assignment.
pub fn fleet(cfg: &RunConfig) -> Result<Vec<Device>> {
    sample_devices(cfg.devices.count, cfg.devices.residual, cfg.seed)
}

/// Candidate levels of every configured impairment type.
pub fn level_sets(cfg: &RunConfig) -> Result<Vec<LevelSet>> {
    let mut out = Vec::new();
    if let Some(g) = &cfg.planner.iq_levels {
        out.push(LevelSet {
            kind: ImpairmentKind::IqImbalance,
            levels: iq_imbalance_grid(g.magnitudes, g.directions, g.weakest_db, g.strongest_db)?,
        });
    }
    if let Some(g) = &cfg.planner.dc_levels {
        out.push(LevelSet {
            kind: ImpairmentKind::DcOffset,
            levels: dc_offset_grid(g.magnitudes, g.directions, g.weakest_db, g.strongest_db)?,
        });
    }
    Ok(out)
}

pub fn map_settings(cfg: &RunConfig) -> MapSettings {
    MapSettings {
        constellation: cfg.link.constellation,
        preamble_len: cfg.link.preamble_len,
        payload_len: cfg.link.payload_len,
        bits_per_point: cfg.planner.bits_per_point,
        ber_bound: cfg.planner.ber_bound,
        seed: cfg.seed,
    }
}

pub fn impairment_map(cfg: &RunConfig) -> Result<ImpairmentMap> {
    build_impairment_map(
        &level_sets(cfg)?,
        &cfg.planner.snr_grid_db,
        &map_settings(cfg),
    )
}

pub fn selection_params(cfg: &RunConfig) -> SelectionParams {
    SelectionParams {
        n_required: cfg.planner.n_required,
        emd_threshold: cfg.planner.emd_threshold,
        ref_snr_db: cfg.planner.ref_snr_db,
        ber_bound: cfg.planner.ber_bound,
    }
}

pub fn pattern_probe(cfg: &RunConfig) -> Result<PatternProbe> {
    PatternProbe::new(
        cfg.link.constellation,
        cfg.link.preamble_len,
        cfg.planner.n_pattern,
        cfg.planner.ref_snr_db,
        cfg.seed,
    )
}

pub fn feasible_set(cfg: &RunConfig, map: &ImpairmentMap) -> Result<FeasibleSet> {
    let probe = pattern_probe(cfg)?;
    select_feasible(map, &selection_params(cfg), |c| probe.pattern(c))
}

/// Gives device `k` the `k`-th member of `set`.
pub fn assign_members(devices: &[Device], set: &FeasibleSet) -> Result<Vec<Device>> {
    if set.len() < devices.len() {
        return Err(Error::Infeasible {
            required: devices.len(),
            found: set.len(),
            detail: "one distinct impairment per device".into(),
        });
    }
    Ok(devices
        .iter()
        .zip(&set.members)
        .map(|(d, m)| d.with_assigned(m.config.clone()))
        .collect())
}

/// The fleet as configured: impaired from `set` when the classifier
/// config asks for it.
pub fn configured_fleet(cfg: &RunConfig, set: Option<&FeasibleSet>) -> Result<Vec<Device>> {
    let devices = fleet(cfg)?;
    match (cfg.classifier.impaired, set) {
        (false, _) => Ok(devices),
        (true, Some(s)) => assign_members(&devices, s),
        (true, None) => Err(Error::config(
            "impaired fleet requested without a feasible set",
        )),
    }
}

/// Seed of the payload bits sent in `session`.
pub fn session_data_seed(cfg: &RunConfig, session: u32) -> u64 {
    stream_id(&[cfg.seed, 0xda7a_5e55, session as u64])
}

/// Channel seen by `device` in `session`.
///
/// Session 0 draws from the training model. Later sessions draw fresh
/// realizations from the test model, or, with a static channel, keep the
/// device's session-0 gain under fresh noise.
pub fn session_channel(cfg: &RunConfig, device: &Device, session: u32) -> ChannelRealization {
    let label = device.label as u64;
    let train = cfg.channels.train.realize(cfg.seed, &[0, label]);
    if session == 0 {
        train
    } else if cfg.channels.static_channel {
        train.with_seed(stream_id(&[cfg.seed, 0x57a7, session as u64, label]))
    } else {
        cfg.channels
            .test
            .realize(cfg.seed, &[session as u64, label])
    }
}

fn validation_windows(cfg: &RunConfig) -> usize {
    ((cfg.classifier.train_windows_per_device as f64 * cfg.classifier.val_fraction).ceil() as usize)
        .max(1)
}

/// Windows each device contributes to `session`; session 0 also carries
/// the validation tail.
pub fn session_window_count(cfg: &RunConfig, session: u32) -> usize {
    if session == 0 {
        cfg.classifier.train_windows_per_device + validation_windows(cfg)
    } else {
        cfg.classifier.test_windows_per_device
    }
}

/// Captures every device in one session, long enough for its window budget.
pub fn capture_session(
    cfg: &RunConfig,
    devices: &[Device],
    session: u32,
) -> Result<Vec<DatasetRecord>> {
    let link = cfg.link();
    let per_frame = match cfg.classifier.input {
        InputKind::Raw => link.layout.frame_len(),
        InputKind::Equalized => link.layout.payload_len,
    };
    let frames = frames_for_windows(
        session_window_count(cfg, session),
        cfg.classifier.stride,
        per_frame,
    );
    let data_seed = session_data_seed(cfg, session);
    devices
        .par_iter()
        .map(|d| {
            Ok(DatasetRecord {
                session,
                data_seed,
                trace: capture(
                    d,
                    &session_channel(cfg, d, session),
                    &link,
                    frames,
                    data_seed,
                )?,
            })
        })
        .collect()
}

/// Session 0 plus every configured test session.
pub fn generate_dataset(cfg: &RunConfig, devices: &[Device]) -> Result<Dataset> {
    let mut records = Vec::new();
    for s in 0..=cfg.channels.test_sessions as u32 {
        records.extend(capture_session(cfg, devices, s)?);
    }
    Ok(Dataset {
        config_hash: Some(cfg.hash()),
        records,
    })
}

/// Classifier input for `traces`, at most `per_trace` windows each.
pub fn windows_for(
    cfg: &RunConfig,
    traces: &[&IqTraceF32],
    per_trace: usize,
) -> Result<Vec<IqWindow<f32>>> {
    let link = cfg.link();
    let per: Vec<Vec<IqWindow<f32>>> = traces
        .par_iter()
        .map(|t| {
            let mut w = trace_windows(t, &link, cfg.classifier.input, cfg.classifier.stride)?;
            w.truncate(per_trace);
            Ok(w)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// `(train, validation)` windows.
pub type WindowSplit = (Vec<IqWindow<f32>>, Vec<IqWindow<f32>>);

/// Training and validation windows: per trace, the first
/// `train_windows_per_device` windows train and the tail validates.
pub fn train_val_windows(cfg: &RunConfig, traces: &[&IqTraceF32]) -> Result<WindowSplit> {
    let n_train = cfg.classifier.train_windows_per_device;
    let n_val = validation_windows(cfg);
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for t in traces {
        let mut w = windows_for(cfg, &[t], n_train + n_val)?;
        if w.len() < n_train + n_val {
            return Err(Error::invalid(format!(
                "device {} trace yields {} windows, {} needed",
                t.device_label,
                w.len(),
                n_train + n_val
            )));
        }
        va.extend(w.split_off(n_train));
        tr.extend(w);
    }
    Ok((tr, va))
}

pub fn recipe(cfg: &RunConfig) -> TrainRecipe {
    TrainRecipe {
        batch_size: cfg.classifier.batch_size,
        max_epochs: cfg.classifier.max_epochs,
        patience: cfg.classifier.patience,
        seed: cfg.seed,
        augmentation_db: cfg.classifier.augmentation_db,
    }
}

pub fn initial_model(cfg: &RunConfig, n_classes: usize) -> Result<CnnModel<f32>> {
    let hyper = Hyper {
        learning_rate: cfg.classifier.learning_rate,
        ..Hyper::default()
    };
    CnnModel::new(
        Architecture::standard(n_classes),
        hyper,
        stream_id(&[cfg.seed, 0x30de1]),
    )
}

/// Trains a fresh model on the given session-0 traces; classes are device labels.
pub fn train_on_traces(
    cfg: &RunConfig,
    traces: &[&IqTraceF32],
) -> Result<(CnnModel<f32>, TrainLog)> {
    let n_classes = traces
        .iter()
        .map(|t| t.device_label as usize + 1)
        .max()
        .unwrap_or(0);
    if n_classes < 2 {
        return Err(Error::invalid("training needs at least two devices"));
    }
    let (tr, va) = train_val_windows(cfg, traces)?;
    train(initial_model(cfg, n_classes)?, &tr, &va, &recipe(cfg))
}

/// Confusion matrix over the first `test_windows_per_device` windows of each trace.
pub fn evaluate_traces(
    cfg: &RunConfig,
    model: &CnnModel<f32>,
    traces: &[&IqTraceF32],
) -> Result<ConfusionMatrix> {
    evaluate(
        model,
        &windows_for(cfg, traces, cfg.classifier.test_windows_per_device)?,
    )
}

/// Calibration sweep along the configured IQ direction.
pub fn calibration(cfg: &RunConfig) -> Result<Vec<CalibrationEntry>> {
    let k = &cfg.calibration;
    let levels = iq_imbalance_sweep(
        k.levels,
        k.weakest_db,
        k.strongest_db,
        k.direction_deg * PI / 180.0,
    )?
    .into_iter()
    .enumerate()
    .map(|(i, iq)| {
        crate::impairments::ImpairmentConfig::new(
            iq,
            crate::impairments::DcOffset::ZERO,
            format!("level-{i}"),
        )
    })
    .collect::<Result<Vec<_>>>()?;
    calibration_sweep(&levels, k.tone_freq, k.n_samples)
}

/// Per-session accuracy of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: u32,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Evaluates every non-training session in `ds`.
pub fn evaluate_dataset(
    cfg: &RunConfig,
    model: &CnnModel<f32>,
    ds: &Dataset,
) -> Result<Vec<SessionResult>> {
    ds.sessions()
        .into_iter()
        .filter(|&s| s > 0)
        .map(|s| {
            let confusion = evaluate_traces(cfg, model, &ds.session(s))?;
            Ok(SessionResult {
                session: s,
                accuracy: confusion.accuracy(),
                confusion,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.devices.count = 3;
        c.channels.test_sessions = 2;
        c.classifier.train_windows_per_device = 20;
        c.classifier.test_windows_per_device = 10;
        c.classifier.impaired = false;
        c
    }

    #[test]
    fn dataset_layout_and_determinism() {
        let cfg = small();
        let devices = fleet(&cfg).unwrap();
        let ds = generate_dataset(&cfg, &devices).unwrap();
        assert_eq!(ds.records.len(), 9);
        assert_eq!(ds.sessions(), vec![0, 1, 2]);
        assert_eq!(ds, generate_dataset(&cfg, &devices).unwrap());
        let (tr, va) = train_val_windows(&cfg, &ds.session(0)).unwrap();
        assert_eq!(tr.len(), 60);
        assert_eq!(va.len(), 6);
        assert_eq!(windows_for(&cfg, &ds.session(1), 10).unwrap().len(), 30);
    }

    #[test]
    fn static_channel_keeps_gain() {
        let mut cfg = small();
        cfg.channels.train = cfg.channels.test;
        let d = &fleet(&cfg).unwrap()[1];
        let fresh = session_channel(&cfg, d, 1);
        assert_ne!(fresh.gain, session_channel(&cfg, d, 0).gain);
        cfg.channels.static_channel = true;
        let a = session_channel(&cfg, d, 0);
        let b = session_channel(&cfg, d, 1);
        assert_eq!(a.gain, b.gain);
        assert_ne!(a.seed, b.seed);
    }

    #[test]
    fn impaired_fleet_needs_enough_members() {
        let cfg = RunConfig::default();
        let empty = FeasibleSet {
            members: Vec::new(),
            patterns: Vec::new(),
            emd_threshold: 0.15,
        };
        assert!(matches!(
            configured_fleet(&cfg, Some(&empty)),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(
            configured_fleet(&cfg, None),
            Err(Error::Config(_))
        ));
    }
}
