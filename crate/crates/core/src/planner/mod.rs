//! Impairment planning: BER maps over SNR, feasible impairment sets with
//! separated constellation patterns, and allocation of impairments to
//! radios.

mod allocate;
mod feasible;
mod map;

pub use allocate::{
    allocate_greedy, allocate_random, compare_allocations, radio_ber, total_ber, write_plan_csv,
    Allocation, AllocationComparison, RadioProfile,
};
pub use feasible::{select_feasible, FeasibleMember, FeasibleSet, PatternProbe, SelectionParams};
pub use map::{
    build_impairment_map, isotonic_nonincreasing, max_level, simulate_ber, BerCurve, ImpairmentMap,
    LevelSet, MapEntry, MapSettings,
};

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpairmentKind {
    IqImbalance,
    DcOffset,
}

impl fmt::Display for ImpairmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImpairmentKind::IqImbalance => "iq_imbalance",
            ImpairmentKind::DcOffset => "dc_offset",
        })
    }
}
