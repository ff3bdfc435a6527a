//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines are
//! always printed.

#![allow(clippy::field_reassign_with_default, clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex;
use oracle_lab::baseband::Constellation;
use oracle_lab::classifier::{
    loss, loss_and_gradient, Architecture, CnnModel, ConfusionMatrix, Hyper, IqWindow,
};
use oracle_lab::datastore::RunConfig;
use oracle_lab::experiment::{
    configured_fleet, evaluate_dataset, evaluate_traces, feasible_set, fleet, generate_dataset,
    impairment_map, train_on_traces,
};
use oracle_lab::impairments::{
    imrr_analytic, imrr_measured, iq_imbalance_sweep, DcOffset, ImpairmentConfig, IqImbalance,
};
use oracle_lab::planner::{
    build_impairment_map, compare_allocations, select_feasible, ImpairmentKind, LevelSet,
    MapSettings, PatternProbe, SelectionParams,
};
use oracle_lab::rng::stream_rng;
use oracle_lab::scenario::{device_pattern, ChannelKind, InputKind};
use oracle_lab::similarity::{emd, emd_bruteforce, Pattern};
use rand::Rng;

type Outcome = (bool, String);

/// Linear-interpolation (type 7) quantile of ascending data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn imrr_consistency() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..20 {
        for j in 0..20 {
            let alpha = -0.3 + 0.6 * i as f64 / 19.0;
            let theta = (-20.0 + 40.0 * j as f64 / 19.0) * PI / 180.0;
            let imb = IqImbalance::new(alpha, theta).unwrap();
            let a = imrr_analytic(&imb);
            let m = imrr_measured(&imb, 0.0625, 4096).unwrap();
            worst = worst.max((a - m).abs());
        }
    }
    (
        worst < 0.1,
        format!("max |measured - analytic| = {worst:.2e} dB over 400 points"),
    )
}

fn random_cloud<R: Rng>(rng: &mut R, n: usize) -> Pattern<f64> {
    Pattern::new(
        (0..n)
            .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect(),
    )
    .unwrap()
}

fn emd_oracle() -> Outcome {
    let mut rng = stream_rng(2, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b) = (random_cloud(&mut rng, 7), random_cloud(&mut rng, 7));
        worst = worst.max((emd(&a, &b).unwrap() - emd_bruteforce(&a, &b).unwrap()).abs());
    }
    let mut violations = 0;
    for _ in 0..1000 {
        let (a, b, c) = (
            random_cloud(&mut rng, 12),
            random_cloud(&mut rng, 12),
            random_cloud(&mut rng, 12),
        );
        let ab = emd(&a, &b).unwrap();
        let symmetric = (ab - emd(&b, &a).unwrap()).abs() < 1e-12;
        let triangle = ab <= emd(&a, &c).unwrap() + emd(&c, &b).unwrap() + 1e-9;
        let identity = emd(&a, &a).unwrap() == 0.0;
        violations += usize::from(!(symmetric && triangle && identity));
    }
    (
        worst < 1e-9 && violations == 0,
        format!(
            "max solver/brute-force gap {worst:.1e}; {violations} axiom violations in 1000 triples"
        ),
    )
}

fn pattern_invariance(cfg: &RunConfig) -> Outcome {
    let map = impairment_map(cfg).unwrap();
    let set = feasible_set(cfg, &map).unwrap();
    if set.len() < 8 {
        return (
            false,
            format!("feasible set has only {} members", set.len()),
        );
    }
    let mut small = cfg.clone();
    small.devices.count = 4;
    let devices = fleet(&small).unwrap();
    let link = cfg.link();
    let mut pats = Vec::new();
    for (k, m) in set.members.iter().take(8).enumerate() {
        for d in &devices {
            let d = d.with_assigned(m.config.clone());
            for c in 1..=3u64 {
                let ch = cfg.channels.test.realize(cfg.seed, &[c, d.label as u64]);
                pats.push((
                    k,
                    device_pattern(&d, &ch, &link, cfg.planner.n_pattern, 1000 + c).unwrap(),
                ));
            }
        }
    }
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for i in 0..pats.len() {
        for j in i + 1..pats.len() {
            let e = emd(&pats[i].1, &pats[j].1).unwrap();
            if pats[i].0 == pats[j].0 {
                same.push(e);
            } else {
                diff.push(e);
            }
        }
    }
    same.sort_by(f64::total_cmp);
    diff.sort_by(f64::total_cmp);
    let (s1, s3) = (quantile(&same, 0.25), quantile(&same, 0.75));
    let (d1, d3) = (quantile(&diff, 0.25), quantile(&diff, 0.75));
    let (ms, md) = (mean(&same), mean(&diff));
    (
        ms < md && s3 < d1,
        format!("same mean {ms:.3} IQR [{s1:.3}, {s3:.3}]; different mean {md:.3} IQR [{d1:.3}, {d3:.3}]"),
    )
}

/// 8 devices, raw IQ, each device behind its own fixed Rayleigh channel.
fn static_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 4;
    cfg.devices.count = 8;
    cfg.channels.train.kind = ChannelKind::Rayleigh;
    cfg.channels.static_channel = true;
    cfg.channels.test_sessions = 1;
    let c = &mut cfg.classifier;
    c.input = InputKind::Raw;
    c.impaired = false;
    c.augmentation_db = None;
    c.stride = 64;
    c.train_windows_per_device = 5000;
    c.test_windows_per_device = 1000;
    c.max_epochs = 6;
    c.patience = 3;
    c.learning_rate = 1e-3;
    cfg.validate().unwrap();
    cfg
}

struct StaticRun {
    model: CnnModel<f32>,
    confusion: ConfusionMatrix,
}

fn run_static(cfg: &RunConfig) -> StaticRun {
    let ds = generate_dataset(cfg, &fleet(cfg).unwrap()).unwrap();
    let (model, _) = train_on_traces(cfg, &ds.session(0)).unwrap();
    let confusion = evaluate_traces(cfg, &model, &ds.session(1)).unwrap();
    StaticRun { model, confusion }
}

fn cross_channel(cfg: &RunConfig, run: &StaticRun) -> Outcome {
    let mut dynamic = cfg.clone();
    dynamic.channels.static_channel = false;
    dynamic.channels.test_sessions = 3;
    let ds = generate_dataset(&dynamic, &fleet(&dynamic).unwrap()).unwrap();
    let accs: Vec<f64> = evaluate_dataset(&dynamic, &run.model, &ds)
        .unwrap()
        .iter()
        .map(|r| r.accuracy)
        .collect();
    let base = run.confusion.accuracy();
    let drop = base - mean(&accs);
    (
        drop >= 0.25,
        format!(
            "static {:.2}% -> fresh channels {} (drop {:.1} points)",
            100.0 * base,
            accs.iter()
                .map(|a| format!("{:.2}%", 100.0 * a))
                .collect::<Vec<_>>()
                .join(", "),
            100.0 * drop
        ),
    )
}

/// 16 devices with distinct feasible impairments, identity-channel
/// training on equalized symbols, three unseen Rayleigh test sessions.
fn impaired_config(impaired: bool) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 6;
    let c = &mut cfg.classifier;
    c.impaired = impaired;
    c.train_windows_per_device = 1000;
    c.test_windows_per_device = 1000;
    c.max_epochs = 6;
    c.patience = 3;
    c.learning_rate = 1e-3;
    c.augmentation_db = Some(-16.0);
    cfg.validate().unwrap();
    cfg
}

fn run_impaired(cfg: &RunConfig) -> Vec<ConfusionMatrix> {
    let set = if cfg.classifier.impaired {
        Some(feasible_set(cfg, &impairment_map(cfg).unwrap()).unwrap())
    } else {
        None
    };
    let devices = configured_fleet(cfg, set.as_ref()).unwrap();
    let ds = generate_dataset(cfg, &devices).unwrap();
    let (model, _) = train_on_traces(cfg, &ds.session(0)).unwrap();
    evaluate_dataset(cfg, &model, &ds)
        .unwrap()
        .into_iter()
        .map(|r| r.confusion)
        .collect()
}

fn pct(cms: &[ConfusionMatrix]) -> String {
    cms.iter()
        .map(|c| format!("{:.2}%", 100.0 * c.accuracy()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn allocation() -> Outcome {
    let levels = iq_imbalance_sweep(16, -21.0, -13.5, 0.5)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, iq)| ImpairmentConfig::new(iq, DcOffset::ZERO, format!("L{i}")).unwrap())
        .collect();
    let grid: Vec<f64> = (14..=40).map(f64::from).collect();
    let settings = MapSettings {
        constellation: Constellation::Qam16,
        preamble_len: 64,
        payload_len: 448,
        bits_per_point: 1_000_000,
        ber_bound: 1e-4,
        seed: 7,
    };
    let sets = [LevelSet {
        kind: ImpairmentKind::IqImbalance,
        levels,
    }];
    let map = build_impairment_map(&sets, &grid, &settings).unwrap();
    let params = SelectionParams {
        n_required: 16,
        emd_threshold: 0.0,
        ref_snr_db: 40.0,
        ber_bound: 1e-4,
    };
    let probe = PatternProbe::new(Constellation::Qam16, 64, 64, 40.0, 7).unwrap();
    let set = select_feasible(&map, &params, |c| probe.pattern(c)).unwrap();
    let snrs = [20.0, 22.0, 24.0, 26.0, 28.0, 30.0];
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [4, 8, 16] {
        let c = compare_allocations(&map, &set, 1e-4, r, &snrs, 200, 100, 11).unwrap();
        ok &= c.greedy_mean_total_ber < c.random_mean_total_ber && c.greedy_violations == 0;
        parts.push(format!(
            "R={r}: greedy {:.2e} vs random {:.2e} ({} c_max violations)",
            c.greedy_mean_total_ber, c.random_mean_total_ber, c.greedy_violations
        ));
    }
    (ok, parts.join("; "))
}

fn gradient_check() -> Outcome {
    let arch = Architecture {
        input_len: 8,
        conv1_filters: 2,
        conv1_width: 3,
        conv2_filters: 2,
        conv2_width: 3,
        fc1: 6,
        fc2: 4,
        n_classes: 2,
    };
    let hyper = Hyper {
        l2: 1e-2,
        ..Hyper::default()
    };
    let mut model = CnnModel::<f64>::new(arch, hyper, 31).unwrap();
    let mut rng = stream_rng(32, 0);
    for b in [
        "conv1.bias",
        "conv2.bias",
        "fc1.bias",
        "fc2.bias",
        "out.bias",
    ] {
        model
            .tensor_mut(b)
            .iter_mut()
            .for_each(|v| *v = rng.random_range(0.0..0.2));
    }
    let batch: Vec<IqWindow<f64>> = (0..6)
        .map(|k| {
            let s: Vec<Complex<f64>> = (0..8)
                .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            IqWindow::from_samples(&s, k % 2).unwrap()
        })
        .collect();
    let mut worst = (String::new(), 0.0f64);
    for train_mode in [false, true] {
        let (_, grad) = loss_and_gradient(&model, &batch, train_mode, 3).unwrap();
        let eps = 1e-4;
        let mut off = 0;
        for t in arch.tensors() {
            let (mut err, mut scale) = (0.0f64, 0.0f64);
            for i in off..off + t.len() {
                let orig = model.params()[i];
                model.params_mut()[i] = orig + eps;
                let up = loss(&model, &batch, train_mode, 3).unwrap();
                model.params_mut()[i] = orig - eps;
                let down = loss(&model, &batch, train_mode, 3).unwrap();
                model.params_mut()[i] = orig;
                let num = (up - down) / (2.0 * eps);
                err = err.max((num - grad[i]).abs());
                scale = scale.max(num.abs()).max(grad[i].abs());
            }
            let rel = if scale > 0.0 { err / scale } else { err };
            if rel >= worst.1 {
                worst = (t.name.clone(), rel);
            }
            off += t.len();
        }
    }
    (
        worst.1 < 1e-4,
        format!(
            "worst tensor {} relative error {:.2e} (dropout off and on)",
            worst.0, worst.1
        ),
    )
}

fn main() -> ExitCode {
    oracle_lab::init_threads().unwrap();
    let mut all_ok = true;
    let mut report = |n: usize, name: &str, t: Instant, (ok, detail): Outcome| {
        all_ok &= ok;
        println!(
            "criterion {n} ({name}): {} [{:.1}s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    };

    let t = Instant::now();
    report(1, "imrr consistency", t, imrr_consistency());

    let t = Instant::now();
    report(2, "emd oracle equivalence", t, emd_oracle());

    let t = Instant::now();
    report(
        3,
        "pattern invariance",
        t,
        pattern_invariance(&impaired_config(true)),
    );

    let t = Instant::now();
    let scfg = static_config();
    let first_static = run_static(&scfg);
    let acc = first_static.confusion.accuracy();
    report(
        4,
        "static-channel classification",
        t,
        (
            acc >= 0.90,
            format!("8 devices, raw IQ: {:.2}%", 100.0 * acc),
        ),
    );

    let t = Instant::now();
    report(
        5,
        "cross-channel degradation",
        t,
        cross_channel(&scfg, &first_static),
    );

    let t = Instant::now();
    let icfg = impaired_config(true);
    let first_impaired = run_impaired(&icfg);
    let control = run_impaired(&impaired_config(false));
    let ok = first_impaired.len() == 3
        && first_impaired.iter().all(|c| c.accuracy() >= 0.97)
        && control.iter().all(|c| c.accuracy() <= 0.60);
    report(
        6,
        "impairment-aided cross-channel",
        t,
        (
            ok,
            format!(
                "with impairments {}; without {}",
                pct(&first_impaired),
                pct(&control)
            ),
        ),
    );

    let t = Instant::now();
    report(7, "greedy vs random allocation", t, allocation());

    let t = Instant::now();
    report(8, "gradient correctness", t, gradient_check());

    let t = Instant::now();
    let second_static = run_static(&scfg);
    let second_impaired = run_impaired(&icfg);
    let same =
        second_static.confusion == first_static.confusion && second_impaired == first_impaired;
    report(
        9,
        "reproducibility",
        t,
        (
            same,
            format!(
                "criterion 4 matrix {}, criterion 6 matrices {}",
                if second_static.confusion == first_static.confusion {
                    "identical"
                } else {
                    "differ"
                },
                if second_impaired == first_impaired {
                    "identical"
                } else {
                    "differ"
                }
            ),
        ),
    );

    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
