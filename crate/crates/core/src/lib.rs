//! Simulation toolkit for RF fingerprinting with intentional transmitter
//! impairments: baseband links, IQ imbalance and DC offset injection,
//! constellation similarity, impairment planning, CNN classification and
//! on-disk datasets.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseband;
pub mod classifier;
pub mod datastore;
mod error;
pub mod experiment;
pub mod impairments;
pub mod planner;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod similarity;

pub use error::{Error, Result};
pub use scalar::Real;

/// Samples per classifier window.
pub const WINDOW_LEN: usize = 128;

pub type IqTraceF32 = baseband::IqTrace<f32>;
pub type IqTraceF64 = baseband::IqTrace<f64>;
pub type PatternF64 = similarity::Pattern<f64>;
pub type CnnF32 = classifier::CnnModel<f32>;
pub type CnnF64 = classifier::CnnModel<f64>;
pub type WindowF32 = classifier::IqWindow<f32>;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "ORACLE_LAB_THREADS";

/// Sizes the global worker pool from `ORACLE_LAB_THREADS` when set.
/// Later calls, or calls after the pool has started, have no effect.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize =
        v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::config(format!("{THREADS_ENV}={v:?} is not a positive integer"))
        })?;
    // Err only means a pool already exists.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}
