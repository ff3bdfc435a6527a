use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{max_level, FeasibleMember, FeasibleSet, ImpairmentMap};
use crate::impairments::ImpairmentConfig;
use crate::rng::{stream_id, stream_rng};
use crate::{Error, Result};

/// A transmitter to be fingerprinted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioProfile {
    pub id: String,
    pub snr_db: f64,
    pub residual: ImpairmentConfig,
}

impl RadioProfile {
    pub fn new(id: impl Into<String>, snr_db: f64) -> Self {
        RadioProfile {
            id: id.into(),
            snr_db,
            residual: ImpairmentConfig::identity(),
        }
    }
}

/// Radios with an intentional impairment (`classifiable`) and those left
/// unimpaired (`unclassifiable`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub assigned: BTreeMap<String, FeasibleMember>,
    pub classifiable: BTreeSet<String>,
    pub unclassifiable: BTreeSet<String>,
}

impl Allocation {
    fn assign(&mut self, radio: &RadioProfile, m: &FeasibleMember) {
        self.assigned.insert(radio.id.clone(), m.clone());
        self.classifiable.insert(radio.id.clone());
    }
}

fn check_ids(radios: &[RadioProfile]) -> Result<()> {
    let ids: BTreeSet<&str> = radios.iter().map(|r| r.id.as_str()).collect();
    if ids.len() != radios.len() {
        return Err(Error::invalid("radio ids must be unique"));
    }
    Ok(())
}

fn check_capacity(radios: &[RadioProfile], set: &FeasibleSet) -> Result<()> {
    if set.len() < radios.len() {
        return Err(Error::invalid(format!(
            "{} radios cannot share {} distinct impairments",
            radios.len(),
            set.len()
        )));
    }
    check_ids(radios)
}

/// SNR-aware greedy allocation.
///
/// For each impairment type in turn, the still-unserved radios are sorted
/// by how much of that impairment they tolerate (`c_max`, ascending; ties
/// by SNR then id) and handed the set's members of that type from weakest
/// to strongest. A radio whose next candidate exceeds its `c_max` is
/// deferred to the next type; radios left over at the end are
/// unclassifiable.
pub fn allocate_greedy(
    radios: &[RadioProfile],
    set: &FeasibleSet,
    map: &ImpairmentMap,
    ber_bound: f64,
) -> Result<Allocation> {
    check_capacity(radios, set)?;
    let mut alloc = Allocation::default();
    let mut pending: Vec<&RadioProfile> = radios.iter().collect();
    for kind in map.kinds() {
        let pool: Vec<&FeasibleMember> = set.members.iter().filter(|m| m.kind == kind).collect();
        if pool.is_empty() || pending.is_empty() {
            continue;
        }
        let mut ranked: Vec<(Option<usize>, &RadioProfile)> = pending
            .iter()
            .map(|r| (max_level(map, kind, r.snr_db, ber_bound), *r))
            .collect();
        ranked.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.snr_db.total_cmp(&b.1.snr_db))
                .then(a.1.id.cmp(&b.1.id))
        });
        let mut next = 0;
        let mut deferred = Vec::new();
        for (c_max, radio) in ranked {
            match (pool.get(next), c_max) {
                (Some(m), Some(c)) if m.index <= c => {
                    alloc.assign(radio, m);
                    next += 1;
                }
                _ => deferred.push(radio),
            }
        }
        pending = deferred;
    }
    alloc.unclassifiable = pending.iter().map(|r| r.id.clone()).collect();
    Ok(alloc)
}

/// Uniformly random distinct members, ignoring SNR.
pub fn allocate_random(
    radios: &[RadioProfile],
    set: &FeasibleSet,
    seed: u64,
) -> Result<Allocation> {
    check_capacity(radios, set)?;
    let picks = index::sample(&mut stream_rng(seed, 0xa110c), set.len(), radios.len());
    let mut alloc = Allocation::default();
    for (radio, k) in radios.iter().zip(picks.iter()) {
        alloc.assign(radio, &set.members[k]);
    }
    Ok(alloc)
}

/// Predicted BER of one radio under an allocation (unimpaired baseline if
/// it received nothing).
pub fn radio_ber(alloc: &Allocation, radio: &RadioProfile, map: &ImpairmentMap) -> Result<f64> {
    match alloc.assigned.get(&radio.id) {
        Some(m) => map.level_ber(m.kind, m.index, radio.snr_db),
        None => Ok(map.baseline_ber(radio.snr_db)),
    }
}

/// Sum of predicted per-radio BERs.
pub fn total_ber(alloc: &Allocation, radios: &[RadioProfile], map: &ImpairmentMap) -> Result<f64> {
    radios.iter().map(|r| radio_ber(alloc, r, map)).sum()
}

/// Plan report: one row per radio.
pub fn write_plan_csv<W: Write>(
    alloc: &Allocation,
    radios: &[RadioProfile],
    map: &ImpairmentMap,
    w: W,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["radio", "snr_db", "impairment", "predicted_ber"])?;
    for r in radios {
        let label = alloc
            .assigned
            .get(&r.id)
            .map_or("none", |m| m.config.label.as_str());
        wr.write_record([
            r.id.clone(),
            format!("{}", r.snr_db),
            label.to_string(),
            format!("{:e}", radio_ber(alloc, r, map)?),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Greedy against random allocation over repeated SNR draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationComparison {
    pub radios: usize,
    pub snr_draws: usize,
    pub random_per_draw: usize,
    pub greedy_mean_total_ber: f64,
    pub random_mean_total_ber: f64,
    /// Greedy assignments above the radio's `c_max` (must stay zero).
    pub greedy_violations: usize,
    pub greedy_unclassifiable_mean: f64,
}

/// Draws `snr_draws` SNR profiles for `n_radios` radios uniformly from
/// `snr_choices`; each is allocated greedily once and randomly
/// `random_per_draw` times, and total BERs are averaged.
#[allow(clippy::too_many_arguments)]
pub fn compare_allocations(
    map: &ImpairmentMap,
    set: &FeasibleSet,
    ber_bound: f64,
    n_radios: usize,
    snr_choices: &[f64],
    snr_draws: usize,
    random_per_draw: usize,
    seed: u64,
) -> Result<AllocationComparison> {
    if snr_choices.is_empty() || snr_draws == 0 || random_per_draw == 0 {
        return Err(Error::config(
            "allocation comparison needs SNR choices, draws and random allocations",
        ));
    }
    let (mut greedy_sum, mut random_sum, mut violations, mut unclassified) = (0.0, 0.0, 0, 0);
    for d in 0..snr_draws {
        let mut rng = stream_rng(seed, stream_id(&[0x5a12, d as u64]));
        let radios: Vec<RadioProfile> = (0..n_radios)
            .map(|i| {
                RadioProfile::new(
                    format!("r{i}"),
                    snr_choices[rng.random_range(0..snr_choices.len())],
                )
            })
            .collect();
        let g = allocate_greedy(&radios, set, map, ber_bound)?;
        for r in &radios {
            if let Some(m) = g.assigned.get(&r.id) {
                if max_level(map, m.kind, r.snr_db, ber_bound).is_none_or(|c| m.index > c) {
                    violations += 1;
                }
            }
        }
        unclassified += g.unclassifiable.len();
        greedy_sum += total_ber(&g, &radios, map)?;
        for k in 0..random_per_draw {
            let a = allocate_random(&radios, set, stream_id(&[seed, d as u64, k as u64]))?;
            random_sum += total_ber(&a, &radios, map)?;
        }
    }
    Ok(AllocationComparison {
        radios: n_radios,
        snr_draws,
        random_per_draw,
        greedy_mean_total_ber: greedy_sum / snr_draws as f64,
        random_mean_total_ber: random_sum / (snr_draws * random_per_draw) as f64,
        greedy_violations: violations,
        greedy_unclassifiable_mean: unclassified as f64 / snr_draws as f64,
    })
}
