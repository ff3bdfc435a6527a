use std::io::Write;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::imrr::{distorted_tone, tone_bin, tone_powers_db, PERFECT_REJECTION_DB};
use super::ImpairmentConfig;
use crate::{Error, Result};

/// One row of an emulated transmitter calibration table.
///
/// `correction` is the complex pre-distortion factor `c` that would null the
/// image when applied as `x + c conj(x)` ahead of the mixer, i.e. `-v/mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub label: String,
    pub correction: Complex<f64>,
    pub main_tone_db: f64,
    pub image_tone_db: f64,
    pub immr_db: f64,
    pub dc_level_db: f64,
}

impl CalibrationEntry {
    /// Entry from measured tone powers; IMMR is `image - main`.
    pub fn from_tone_powers(
        label: impl Into<String>,
        correction: Complex<f64>,
        main_db: f64,
        image_db: f64,
        dc_level_db: f64,
    ) -> Self {
        CalibrationEntry {
            label: label.into(),
            correction,
            main_tone_db: main_db,
            image_tone_db: image_db,
            immr_db: (image_db - main_db).max(PERFECT_REJECTION_DB),
            dc_level_db,
        }
    }
}

/// Emulates a calibration sweep: for each configured level a single tone is
/// sent through the distortion model and the desired/image tone powers are
/// measured. Rows come back least-rejected first.
pub fn calibration_sweep(
    levels: &[ImpairmentConfig],
    tone_freq: f64,
    n_samples: usize,
) -> Result<Vec<CalibrationEntry>> {
    if levels.is_empty() {
        return Err(Error::invalid("calibration sweep needs at least one level"));
    }
    let k = tone_bin(tone_freq, n_samples)?;
    let mut out = levels
        .iter()
        .map(|cfg| {
            cfg.validate()?;
            let (main, image) = tone_powers_db(&distorted_tone(&cfg.iq, k, n_samples), k);
            Ok(CalibrationEntry::from_tone_powers(
                cfg.label.clone(),
                -cfg.iq.image_coefficient(),
                main,
                image,
                cfg.dc.level_db(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.immr_db.total_cmp(&a.immr_db));
    Ok(out)
}

/// Writes `correction_real, correction_imag, main_tone_db, image_tone_db, immr_db`.
pub fn write_calibration_csv<W: Write>(entries: &[CalibrationEntry], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "correction_real",
        "correction_imag",
        "main_tone_db",
        "image_tone_db",
        "immr_db",
    ])?;
    for e in entries {
        wr.write_record(&[
            format!("{:.6}", e.correction.re),
            format!("{:.6}", e.correction.im),
            format!("{:.3}", e.main_tone_db),
            format!("{:.3}", e.image_tone_db),
            format!("{:.3}", e.immr_db),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::{iq_imbalance_sweep, DcOffset};

    #[test]
    fn recorded_row_arithmetic() {
        let e = CalibrationEntry::from_tone_powers(
            "row",
            Complex::new(-0.272, -0.636),
            -49.036,
            -66.138,
            PERFECT_REJECTION_DB,
        );
        assert!((e.immr_db - -17.102).abs() < 1e-9);
    }

    #[test]
    fn identity_level_is_perfect() {
        let rows = calibration_sweep(&[ImpairmentConfig::identity()], 0.0625, 4096).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].immr_db, PERFECT_REJECTION_DB);
        assert_eq!(rows[0].dc_level_db, PERFECT_REJECTION_DB);
    }

    #[test]
    fn eighty_levels_cover_range() {
        let levels: Vec<ImpairmentConfig> = iq_imbalance_sweep(80, -44.0, -9.0, 0.5)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, iq)| ImpairmentConfig::new(iq, DcOffset::ZERO, format!("L{i}")).unwrap())
            .collect();
        let rows = calibration_sweep(&levels, 0.0625, 4096).unwrap();
        assert_eq!(rows.len(), 80);
        assert!((rows[0].immr_db - -9.0).abs() < 0.1);
        assert!((rows[79].immr_db - -44.0).abs() < 0.1);
        for w in rows.windows(2) {
            let gap = w[0].immr_db - w[1].immr_db;
            assert!(gap > 0.0 && gap < 1.0, "{gap}");
        }
    }

    #[test]
    fn csv_layout() {
        let rows = calibration_sweep(&[ImpairmentConfig::identity()], 0.0625, 4096).unwrap();
        let mut buf = Vec::new();
        write_calibration_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .starts_with("correction_real,correction_imag,main_tone_db,image_tone_db,immr_db\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn empty_sweep_rejected() {
        assert!(calibration_sweep(&[], 0.0625, 4096).is_err());
    }
}
