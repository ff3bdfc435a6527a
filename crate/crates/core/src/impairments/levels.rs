//! Level grids obtained by numerically inverting the IMRR closed form.

use std::f64::consts::{FRAC_PI_2, TAU};

use super::{imrr_analytic, DcOffset, ImpairmentConfig, IqImbalance};
use crate::{Error, Result};

const EDGE: f64 = 0.999;

/// IQ imbalance on the ray `(alpha, theta/2) = t (cos phi, sin phi)` whose
/// IMRR equals `target_db`, found by bisection on `t`.
///
/// IMRR grows monotonically along any such ray, so the root is unique.
pub fn iq_imbalance_for_imrr(target_db: f64, direction: f64) -> Result<IqImbalance> {
    let (s, c) = direction.sin_cos();
    let t_alpha = if c.abs() > 1e-12 {
        EDGE / c.abs()
    } else {
        f64::INFINITY
    };
    let t_theta = if s.abs() > 1e-12 {
        EDGE * FRAC_PI_2 / (2.0 * s.abs())
    } else {
        f64::INFINITY
    };
    let t_max = t_alpha.min(t_theta);
    let at = |t: f64| IqImbalance {
        alpha: t * c,
        theta: 2.0 * t * s,
    };
    if imrr_analytic(&at(t_max)) < target_db {
        return Err(Error::invalid(format!(
            "IMRR {target_db} dB unreachable along direction {direction} rad"
        )));
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if imrr_analytic(&at(mid)) < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

fn db_steps(count: usize, weakest_db: f64, strongest_db: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("level count must be positive"));
    }
    if count == 1 {
        return Ok(vec![weakest_db]);
    }
    let step = (strongest_db - weakest_db) / (count - 1) as f64;
    Ok((0..count).map(|i| weakest_db + step * i as f64).collect())
}

/// `count` imbalances along one direction with IMRR evenly spaced from
/// `weakest_db` to `strongest_db`, weakest first.
pub fn iq_imbalance_sweep(
    count: usize,
    weakest_db: f64,
    strongest_db: f64,
    direction: f64,
) -> Result<Vec<IqImbalance>> {
    db_steps(count, weakest_db, strongest_db)?
        .into_iter()
        .map(|db| iq_imbalance_for_imrr(db, direction))
        .collect()
}

/// Magnitude x direction grid of IQ-imbalance configurations, weakest
/// magnitude first. Successive magnitude rings are rotated by half a
/// direction step so neighbouring rings interleave.
pub fn iq_imbalance_grid(
    magnitudes: usize,
    directions: usize,
    weakest_db: f64,
    strongest_db: f64,
) -> Result<Vec<ImpairmentConfig>> {
    if directions == 0 {
        return Err(Error::invalid("direction count must be positive"));
    }
    let step = TAU / directions as f64;
    let mut out = Vec::with_capacity(magnitudes * directions);
    for (m, db) in db_steps(magnitudes, weakest_db, strongest_db)?
        .into_iter()
        .enumerate()
    {
        let offset = if m % 2 == 1 { step / 2.0 } else { 0.0 };
        for d in 0..directions {
            let phi = offset + step * d as f64;
            let iq = iq_imbalance_for_imrr(db, phi)?;
            out.push(ImpairmentConfig::new(
                iq,
                DcOffset::ZERO,
                format!("iq:{db:.2}dB@{:.1}deg", phi.to_degrees()),
            )?);
        }
    }
    Ok(out)
}

/// Magnitude x phase grid of DC offsets, weakest first, rings interleaved
/// as in [`iq_imbalance_grid`].
pub fn dc_offset_grid(
    magnitudes: usize,
    phases: usize,
    weakest_db: f64,
    strongest_db: f64,
) -> Result<Vec<ImpairmentConfig>> {
    if phases == 0 {
        return Err(Error::invalid("phase count must be positive"));
    }
    let step = TAU / phases as f64;
    let mut out = Vec::with_capacity(magnitudes * phases);
    for (m, db) in db_steps(magnitudes, weakest_db, strongest_db)?
        .into_iter()
        .enumerate()
    {
        let offset = if m % 2 == 1 { step / 2.0 } else { 0.0 };
        for p in 0..phases {
            let phase = offset + step * p as f64;
            out.push(ImpairmentConfig::new(
                IqImbalance::IDENTITY,
                DcOffset::from_level_db(db, phase)?,
                format!("dc:{db:.2}dB@{:.1}deg", phase.to_degrees()),
            )?);
        }
    }
    Ok(out)
}
