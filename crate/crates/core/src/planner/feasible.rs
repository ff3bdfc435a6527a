use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{ImpairmentKind, ImpairmentMap};
use crate::baseband::{
    apply_channel_samples, balanced_symbols, estimate_and_equalize, known_preamble,
    ChannelRealization, Constellation,
};
use crate::impairments::{apply_impairments, ImpairmentConfig};
use crate::similarity::{emd, Pattern};
use crate::{Error, Result};

/// An admitted impairment: its map coordinates and BER at the reference SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleMember {
    pub kind: ImpairmentKind,
    pub index: usize,
    pub config: ImpairmentConfig,
    pub ber_at_ref: f64,
}

/// Impairments whose patterns are pairwise more than `emd_threshold` apart,
/// ordered by increasing BER impact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub members: Vec<FeasibleMember>,
    pub patterns: Vec<Pattern<f64>>,
    pub emd_threshold: f64,
}

impl FeasibleSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Recomputes every pairwise distance against the threshold.
    pub fn verify(&self) -> Result<()> {
        if self.members.len() != self.patterns.len() {
            return Err(Error::invalid("feasible set has a pattern count mismatch"));
        }
        for i in 0..self.patterns.len() {
            for j in i + 1..self.patterns.len() {
                let d = emd(&self.patterns[i], &self.patterns[j])?;
                if d <= self.emd_threshold {
                    return Err(Error::invalid(format!(
                        "members {} and {} are only {d:.4} apart (threshold {})",
                        self.members[i].config.label,
                        self.members[j].config.label,
                        self.emd_threshold
                    )));
                }
            }
        }
        Ok(())
    }

    /// The `k` lowest-impact members.
    pub fn truncate(&self, k: usize) -> FeasibleSet {
        FeasibleSet {
            members: self.members.iter().take(k).cloned().collect(),
            patterns: self.patterns.iter().take(k).cloned().collect(),
            emd_threshold: self.emd_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub n_required: usize,
    pub emd_threshold: f64,
    pub ref_snr_db: f64,
    pub ber_bound: f64,
}

/// Greedy scan of the map's candidates, one impairment type after another,
/// weakest BER impact first (ties by level index). A candidate is admitted
/// when its BER at the reference SNR is within the bound and its pattern is
/// more than the threshold away from every admitted pattern. Scanning stops
/// once `n_required` members are admitted.
pub fn select_feasible<F>(
    map: &ImpairmentMap,
    params: &SelectionParams,
    mut pattern_of: F,
) -> Result<FeasibleSet>
where
    F: FnMut(&ImpairmentConfig) -> Result<Pattern<f64>>,
{
    let grid = &map.snr_grid;
    if grid.is_empty() || params.ref_snr_db < grid[0] || params.ref_snr_db > grid[grid.len() - 1] {
        return Err(Error::config(format!(
            "reference SNR {} dB lies outside the map grid",
            params.ref_snr_db
        )));
    }
    let kinds = map.kinds();
    let mut members: Vec<FeasibleMember> = Vec::new();
    let mut patterns: Vec<Pattern<f64>> = Vec::new();
    let mut candidates_seen = 0usize;
    'kinds: for &kind in &kinds {
        let mut cands: Vec<(f64, usize, &ImpairmentConfig)> = map
            .levels(kind)
            .map(|e| (map.ber_at(&e.curve, params.ref_snr_db), e.index, &e.config))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (ber, index, config) in cands {
            if members.len() >= params.n_required {
                break 'kinds;
            }
            candidates_seen += 1;
            if ber > params.ber_bound {
                continue;
            }
            let p = pattern_of(config)?;
            let mut separated = true;
            for q in &patterns {
                if emd(&p, q)? <= params.emd_threshold {
                    separated = false;
                    break;
                }
            }
            if separated {
                members.push(FeasibleMember {
                    kind,
                    index,
                    config: config.clone(),
                    ber_at_ref: ber,
                });
                patterns.push(p);
            }
        }
    }
    if members.len() < params.n_required {
        return Err(Error::Infeasible {
            required: params.n_required,
            found: members.len(),
            detail: format!(
                "{candidates_seen} candidates over {} impairment types at T = {}, BER bound {:e}",
                kinds.len(),
                params.emd_threshold,
                params.ber_bound
            ),
        });
    }
    let kind_rank = |k: ImpairmentKind| kinds.iter().position(|&x| x == k).unwrap_or(usize::MAX);
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (&members[a], &members[b]);
        ma.ber_at_ref
            .total_cmp(&mb.ber_at_ref)
            .then(kind_rank(ma.kind).cmp(&kind_rank(mb.kind)))
            .then(ma.index.cmp(&mb.index))
    });
    Ok(FeasibleSet {
        members: order.iter().map(|&i| members[i].clone()).collect(),
        patterns: order.iter().map(|&i| patterns[i].clone()).collect(),
        emd_threshold: params.emd_threshold,
    })
}

/// Reference transmission for pattern extraction: a known preamble and a
/// payload visiting every constellation point equally often, sent over AWGN
/// with one fixed noise realization and equalized by least squares.
#[derive(Clone, Debug)]
pub struct PatternProbe {
    preamble: Vec<Complex<f64>>,
    payload: Vec<Complex<f64>>,
    channel: ChannelRealization,
}

impl PatternProbe {
    pub fn new(
        constellation: Constellation,
        preamble_len: usize,
        n_pattern: usize,
        snr_db: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(PatternProbe {
            preamble: known_preamble(preamble_len, seed)?,
            payload: balanced_symbols(constellation, n_pattern, seed ^ 0x5a5a)?,
            channel: ChannelRealization::awgn(-snr_db, seed),
        })
    }

    pub fn pattern(&self, cfg: &ImpairmentConfig) -> Result<Pattern<f64>> {
        let mut tx = self.preamble.clone();
        tx.extend_from_slice(&self.payload);
        let rx = apply_channel_samples(&apply_impairments(&tx, cfg), &self.channel)?;
        Pattern::from_symbols(&estimate_and_equalize(&rx, &self.preamble)?.symbols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::{iq_imbalance_for_imrr, DcOffset, IqImbalance};

    fn probe() -> PatternProbe {
        PatternProbe::new(Constellation::Qpsk, 32, 64, 40.0, 1).unwrap()
    }

    fn iq(db: f64, dir: f64) -> ImpairmentConfig {
        ImpairmentConfig::new(
            iq_imbalance_for_imrr(db, dir).unwrap(),
            DcOffset::ZERO,
            format!("{db}@{dir}"),
        )
        .unwrap()
    }

    fn flat_map(configs: Vec<(ImpairmentKind, ImpairmentConfig)>, ber: f64) -> ImpairmentMap {
        let levels = configs
            .into_iter()
            .map(|(k, c)| (k, c, vec![ber, ber]))
            .collect();
        ImpairmentMap::from_curves(
            Constellation::Qpsk,
            vec![30.0, 40.0],
            vec![0.0, 0.0],
            levels,
        )
        .unwrap()
    }

    fn params(n: usize, t: f64) -> SelectionParams {
        SelectionParams {
            n_required: n,
            emd_threshold: t,
            ref_snr_db: 40.0,
            ber_bound: 1e-4,
        }
    }

    #[test]
    fn singleton() {
        let map = flat_map(vec![(ImpairmentKind::IqImbalance, iq(-20.0, 0.0))], 0.0);
        let p = probe();
        let s = select_feasible(&map, &params(1, 0.15), |c| p.pattern(c)).unwrap();
        assert_eq!(s.len(), 1);
        s.verify().unwrap();
    }

    #[test]
    fn duplicate_pattern_rejected() {
        let c = iq(-20.0, 0.0);
        let map = flat_map(
            vec![
                (ImpairmentKind::IqImbalance, c.clone()),
                (ImpairmentKind::IqImbalance, c),
            ],
            0.0,
        );
        let p = probe();
        let err = select_feasible(&map, &params(2, 0.15), |c| p.pattern(c)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Infeasible {
                    required: 2,
                    found: 1,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn ber_bound_excludes() {
        let map = flat_map(vec![(ImpairmentKind::IqImbalance, iq(-20.0, 0.0))], 1e-3);
        let p = probe();
        assert!(select_feasible(&map, &params(1, 0.15), |c| p.pattern(c)).is_err());
    }

    #[test]
    fn continues_into_second_type() {
        let mut cands = vec![(ImpairmentKind::IqImbalance, iq(-14.0, 0.0))];
        for k in 0..4 {
            let dc = DcOffset::from_level_db(-8.0, k as f64 * std::f64::consts::FRAC_PI_2).unwrap();
            cands.push((
                ImpairmentKind::DcOffset,
                ImpairmentConfig::new(IqImbalance::IDENTITY, dc, format!("dc{k}")).unwrap(),
            ));
        }
        let map = flat_map(cands, 0.0);
        let p = probe();
        let s = select_feasible(&map, &params(4, 0.15), |c| p.pattern(c)).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.members[0].kind, ImpairmentKind::IqImbalance);
        assert!(s.members[1..]
            .iter()
            .all(|m| m.kind == ImpairmentKind::DcOffset));
        s.verify().unwrap();
        assert_eq!(s.truncate(2).len(), 2);
    }

    #[test]
    fn identity_probe_pattern_is_nearly_ideal() {
        let pat = probe().pattern(&ImpairmentConfig::identity()).unwrap();
        let ideal = Pattern::from_symbols(
            &balanced_symbols::<f64>(Constellation::Qpsk, 64, 1 ^ 0x5a5a).unwrap(),
        )
        .unwrap();
        assert!(emd(&pat, &ideal).unwrap() < 0.02);
    }

    #[test]
    fn reference_snr_outside_grid() {
        let map = flat_map(vec![(ImpairmentKind::IqImbalance, iq(-20.0, 0.0))], 0.0);
        let mut prm = params(1, 0.15);
        prm.ref_snr_db = 45.0;
        assert!(matches!(
            select_feasible(&map, &prm, |_| unreachable!()),
            Err(Error::Config(_))
        ));
    }
}
