use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ImpairmentKind;
use crate::baseband::{estimate_and_equalize, known_preamble, Constellation, Frame};
use crate::impairments::{apply_impairments, ImpairmentConfig};
use crate::rng::{complex_gaussian, db_to_power, stream_id, stream_rng};
use crate::{Error, Result};

/// Candidate levels of one impairment type, weakest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub kind: ImpairmentKind,
    pub levels: Vec<ImpairmentConfig>,
}

/// Link parameters of the BER Monte Carlo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSettings {
    pub constellation: Constellation,
    pub preamble_len: usize,
    pub payload_len: usize,
    pub bits_per_point: usize,
    pub ber_bound: f64,
    pub seed: u64,
}

/// Raw Monte Carlo BER and its non-increasing (in SNR) regularization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub raw: Vec<f64>,
    pub ber: Vec<f64>,
}

impl BerCurve {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let ber = isotonic_nonincreasing(&raw);
        BerCurve { raw, ber }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub kind: ImpairmentKind,
    pub index: usize,
    pub config: ImpairmentConfig,
    pub curve: BerCurve,
}

/// BER over an SNR grid for every candidate impairment level, plus the
/// unimpaired baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentMap {
    pub constellation: Constellation,
    pub snr_grid: Vec<f64>,
    pub bits_per_point: usize,
    pub baseline: BerCurve,
    pub entries: Vec<MapEntry>,
}

impl ImpairmentMap {
    /// Builds a map from externally supplied curves (one row per SNR grid
    /// point); curves are regularized like simulated ones.
    pub fn from_curves(
        constellation: Constellation,
        snr_grid: Vec<f64>,
        baseline: Vec<f64>,
        levels: Vec<(ImpairmentKind, ImpairmentConfig, Vec<f64>)>,
    ) -> Result<Self> {
        check_grid(&snr_grid)?;
        let check = |c: &[f64]| -> Result<()> {
            if c.len() != snr_grid.len() || c.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return Err(Error::invalid(
                    "BER curve must match the SNR grid and lie in [0, 1]",
                ));
            }
            Ok(())
        };
        check(&baseline)?;
        let mut counts = Vec::<(ImpairmentKind, usize)>::new();
        let mut entries = Vec::with_capacity(levels.len());
        for (kind, config, raw) in levels {
            check(&raw)?;
            let index = match counts.iter_mut().find(|(k, _)| *k == kind) {
                Some((_, n)) => {
                    *n += 1;
                    *n - 1
                }
                None => {
                    counts.push((kind, 1));
                    0
                }
            };
            entries.push(MapEntry {
                kind,
                index,
                config,
                curve: BerCurve::from_raw(raw),
            });
        }
        Ok(ImpairmentMap {
            constellation,
            snr_grid,
            bits_per_point: 0,
            baseline: BerCurve::from_raw(baseline),
            entries,
        })
    }

    /// Impairment types in the order they first appear.
    pub fn kinds(&self) -> Vec<ImpairmentKind> {
        let mut out = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.kind) {
                out.push(e.kind);
            }
        }
        out
    }

    pub fn levels(&self, kind: ImpairmentKind) -> impl Iterator<Item = &MapEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn entry(&self, kind: ImpairmentKind, index: usize) -> Option<&MapEntry> {
        self.levels(kind).find(|e| e.index == index)
    }

    /// Regularized BER at `snr_db`, interpolated linearly between grid
    /// points and clamped at the ends.
    pub fn ber_at(&self, curve: &BerCurve, snr_db: f64) -> f64 {
        interpolate(&self.snr_grid, &curve.ber, snr_db)
    }

    pub fn level_ber(&self, kind: ImpairmentKind, index: usize, snr_db: f64) -> Result<f64> {
        let e = self
            .entry(kind, index)
            .ok_or_else(|| Error::invalid(format!("no {kind} level {index} in map")))?;
        Ok(self.ber_at(&e.curve, snr_db))
    }

    pub fn baseline_ber(&self, snr_db: f64) -> f64 {
        self.ber_at(&self.baseline, snr_db)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty()
        || grid.iter().any(|g| !g.is_finite())
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::config(
            "SNR grid must be non-empty, finite and strictly increasing",
        ));
    }
    Ok(())
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&g| g <= x);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// Least-squares non-increasing fit (pool adjacent violators, equal weights).
pub fn isotonic_nonincreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 >= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s1 + s2, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

/// Simulated BER of one impairment at one SNR over an AWGN link with
/// per-frame least-squares equalization. SNR is relative to the unit
/// average energy of the unimpaired constellation.
///
/// Frames (bits and unit-variance noise) depend only on `seed`, so every
/// level and SNR sees the same random realization.
pub fn simulate_ber(cfg: &ImpairmentConfig, snr_db: f64, settings: &MapSettings) -> Result<f64> {
    let c = settings.constellation;
    let preamble = known_preamble::<f64>(settings.preamble_len, settings.seed)?;
    let bits_per_frame = settings.payload_len * c.bits_per_symbol();
    let frames = settings.bits_per_point.div_ceil(bits_per_frame);
    let amp = db_to_power(-snr_db).sqrt();
    let mut errors = 0usize;
    for f in 0..frames {
        let mut rng = stream_rng(settings.seed, stream_id(&[0xbe4, f as u64]));
        let frame = Frame::random(&preamble, c, settings.payload_len, &mut rng)?;
        let mut rx = apply_impairments(&frame.samples(), cfg);
        for s in rx.iter_mut() {
            let n: Complex<f64> = complex_gaussian(&mut rng, 1.0);
            *s += n * amp;
        }
        let eq = estimate_and_equalize(&rx, &preamble)?;
        let bits = c.demodulate(&eq.symbols);
        errors += bits
            .iter()
            .zip(&frame.payload_bits)
            .filter(|(a, b)| a != b)
            .count();
    }
    Ok(errors as f64 / (frames * bits_per_frame) as f64)
}

/// Monte Carlo BER map over `level_sets x snr_grid`, cells in parallel.
pub fn build_impairment_map(
    level_sets: &[LevelSet],
    snr_grid: &[f64],
    settings: &MapSettings,
) -> Result<ImpairmentMap> {
    check_grid(snr_grid)?;
    if !(settings.ber_bound > 0.0 && settings.ber_bound <= 1.0) {
        return Err(Error::config(format!(
            "BER bound {} outside (0, 1]",
            settings.ber_bound
        )));
    }
    let needed = (10.0 / settings.ber_bound).ceil();
    if (settings.bits_per_point as f64) < needed {
        return Err(Error::config(format!(
            "{} bits per point cannot resolve a BER bound of {:e}; need at least {needed}",
            settings.bits_per_point, settings.ber_bound
        )));
    }
    if settings.payload_len == 0 {
        return Err(Error::config("payload length must be positive"));
    }
    let mut rows: Vec<(Option<(ImpairmentKind, usize)>, ImpairmentConfig)> =
        vec![(None, ImpairmentConfig::identity())];
    for set in level_sets {
        for (i, cfg) in set.levels.iter().enumerate() {
            cfg.validate()?;
            rows.push((Some((set.kind, i)), cfg.clone()));
        }
    }
    let n_snr = snr_grid.len();
    let cells: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|r| (0..n_snr).map(move |q| (r, q)))
        .collect();
    let bers = cells
        .par_iter()
        .map(|&(r, q)| simulate_ber(&rows[r].1, snr_grid[q], settings))
        .collect::<Result<Vec<_>>>()?;
    let mut curves = bers.chunks(n_snr).map(|c| BerCurve::from_raw(c.to_vec()));
    let baseline = curves.next().expect("baseline row");
    let entries = rows
        .into_iter()
        .skip(1)
        .zip(curves)
        .map(|((key, config), curve)| {
            let (kind, index) = key.expect("level row");
            MapEntry {
                kind,
                index,
                config,
                curve,
            }
        })
        .collect();
    Ok(ImpairmentMap {
        constellation: settings.constellation,
        snr_grid: snr_grid.to_vec(),
        bits_per_point: settings.bits_per_point,
        baseline,
        entries,
    })
}

/// Largest level index of `kind` whose BER at the greatest grid SNR strictly
/// below `snr_db` is within `ber_bound`; `None` if no grid point lies below
/// `snr_db` or no level qualifies.
pub fn max_level(
    map: &ImpairmentMap,
    kind: ImpairmentKind,
    snr_db: f64,
    ber_bound: f64,
) -> Option<usize> {
    let q = map.snr_grid.iter().rposition(|&g| g < snr_db)?;
    map.levels(kind)
        .filter(|e| e.curve.ber[q] <= ber_bound)
        .map(|e| e.index)
        .max()
}
