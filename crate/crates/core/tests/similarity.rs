use num_complex::Complex;
use oracle_lab::baseband::{ChannelRealization, Constellation, FrameLayout};
use oracle_lab::classifier::{augment, IqWindow};
use oracle_lab::impairments::{iq_imbalance_for_imrr, DcOffset, ImpairmentConfig};
use oracle_lab::rng::{complex_gaussian, stream_rng};
use oracle_lab::scenario::{
    device_pattern, sample_devices, ChannelKind, ChannelModel, Link, ResidualSpread,
};
use oracle_lab::similarity::{emd, emd_bruteforce, emd_matrix, extract_pattern, Pattern};
use proptest::prelude::*;

fn cloud(n: usize) -> impl Strategy<Value = Pattern<f64>> {
    proptest::collection::vec([-3.0f64..3.0, -3.0f64..3.0], n)
        .prop_map(|p| Pattern::new(p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solver_matches_permutation_oracle(a in cloud(7), b in cloud(7)) {
        let fast = emd(&a, &b).unwrap();
        let slow = emd_bruteforce(&a, &b).unwrap();
        prop_assert!((fast - slow).abs() < 1e-9, "{} vs {}", fast, slow);
    }

    #[test]
    fn metric_axioms(a in cloud(6), b in cloud(6), c in cloud(6)) {
        let ab = emd(&a, &b).unwrap();
        prop_assert_eq!(emd(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - emd(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= emd(&a, &c).unwrap() + emd(&c, &b).unwrap() + 1e-9);
    }

    #[test]
    fn translation_bound(a in cloud(5), tx in -1.0f64..1.0, ty in -1.0f64..1.0) {
        let b = a.translated([tx, ty]);
        prop_assert!(emd(&a, &b).unwrap() <= tx.hypot(ty) + 1e-12);
    }

    #[test]
    fn full_extraction_keeps_the_multiset(pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..40), seed in any::<u64>()) {
        let syms: Vec<Complex<f64>> = pts.iter().map(|&(r, i)| Complex::new(r, i)).collect();
        let p = extract_pattern(&syms, syms.len(), seed).unwrap();
        let mut got: Vec<[f64; 2]> = p.points().to_vec();
        let mut want: Vec<[f64; 2]> = syms.iter().map(|s| [s.re, s.im]).collect();
        got.sort_by(|x, y| x.partial_cmp(y).unwrap());
        want.sort_by(|x, y| x.partial_cmp(y).unwrap());
        prop_assert_eq!(got, want);
    }
}

#[test]
fn copies_give_zero_matrix() {
    let p = Pattern::new(vec![[0.1, 0.2], [0.3, -0.4], [1.0, 1.0]]).unwrap();
    let m = emd_matrix(
        &(0..4)
            .map(|k| (format!("c{k}"), p.clone()))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    assert!(m.values.iter().flatten().all(|&v| v == 0.0));
}

fn link() -> Link {
    Link {
        constellation: Constellation::Qpsk,
        layout: FrameLayout {
            preamble_len: 64,
            payload_len: 448,
        },
        preamble_seed: 3,
        sample_rate_hz: 1e6,
    }
}

#[test]
fn same_impairment_is_closer_across_devices_and_channels() {
    let spread = ResidualSpread {
        alpha_std: 0.005,
        theta_std_deg: 0.3,
        dc_std: 0.005,
    };
    let devices = sample_devices(2, spread, 8).unwrap();
    let model = ChannelModel {
        kind: ChannelKind::Rayleigh,
        noise_power_db: -25.0,
        min_gain: 0.5,
    };
    let imps: Vec<ImpairmentConfig> = [(-12.0, 0.0), (-12.0, 1.6), (-20.0, 3.1)]
        .iter()
        .map(|&(db, dir)| {
            ImpairmentConfig::new(iq_imbalance_for_imrr(db, dir).unwrap(), DcOffset::ZERO, "x")
                .unwrap()
        })
        .collect();
    let mut pats = Vec::new();
    for (k, imp) in imps.iter().enumerate() {
        for d in &devices {
            for c in 0..2u64 {
                let ch = model.realize(5, &[c, d.label as u64]);
                let p = device_pattern(&d.with_assigned(imp.clone()), &ch, &link(), 64, 100 + c)
                    .unwrap();
                pats.push((k, p));
            }
        }
    }
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for i in 0..pats.len() {
        for j in i + 1..pats.len() {
            let d = emd(&pats[i].1, &pats[j].1).unwrap();
            if pats[i].0 == pats[j].0 {
                same.push(d)
            } else {
                diff.push(d)
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&same) < mean(&diff),
        "{} vs {}",
        mean(&same),
        mean(&diff)
    );
}

/// Per-point EMD between a demodulated pattern and a noisy copy grows with
/// the added noise. With noise relative to unit symbol energy, -17 dB stays
/// inside the 0.15 separation threshold and -9 dB does not.
#[test]
fn augmentation_noise_versus_emd() {
    let clean = ChannelRealization::awgn(-30.0, 4);
    let syms: Vec<Complex<f64>> =
        oracle_lab::baseband::balanced_symbols(Constellation::Qpsk, 128, 2).unwrap();
    let base = oracle_lab::baseband::apply_channel_samples(&syms, &clean).unwrap();
    let pattern = Pattern::from_symbols(&base).unwrap();
    let w = IqWindow::from_samples(&base, 0).unwrap();
    let at = |db: f64| {
        let noisy = if db <= -13.0 {
            augment(std::slice::from_ref(&w), db, 9).unwrap()[0].samples()
        } else {
            // beyond the augmentation bound: add the noise directly
            let mut rng = stream_rng(9, 1);
            base.iter()
                .map(|s| s + complex_gaussian::<f64, _>(&mut rng, 10f64.powf(db / 10.0)))
                .collect()
        };
        emd(&pattern, &Pattern::from_symbols(&noisy).unwrap()).unwrap()
    };
    let (e17, e13, e9) = (at(-17.0), at(-13.0), at(-9.0));
    assert!(e17 < e13 && e13 < e9, "{e17} {e13} {e9}");
    assert!(e17 < 0.15, "{e17}");
    assert!(e9 > 0.15, "{e9}");
}
