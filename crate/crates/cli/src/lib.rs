//! Command-line experiment driver: every subcommand reads one JSON run
//! config and writes its artifacts into an output directory.

pub mod report;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use oracle_lab::datastore::{
    load_dataset, load_json, load_model, save_dataset, save_json, save_model, HashCheck, RunConfig,
};
use oracle_lab::experiment;
use oracle_lab::impairments::write_calibration_csv;
use oracle_lab::planner::{
    allocate_greedy, allocate_random, compare_allocations, write_plan_csv, Allocation, FeasibleSet,
    RadioProfile,
};
use oracle_lab::rng::{stream_id, stream_rng};
use oracle_lab::similarity::emd_matrix;
use oracle_lab::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

use report::{ExperimentReport, Metrics, SessionMetrics};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

/// Process exit status for a failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "oracle-lab",
    version,
    about = "RF fingerprinting experiments with intentional transmitter impairments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate captures for every device and session.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Feasible set from `plan` (computed on the fly when omitted).
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// IQ-imbalance calibration sweep.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Impairment map, feasible set and allocation.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Train a classifier on the dataset's training session.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate a model on the dataset's test sessions.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Aggregate reports into CSV tables.
    Report {
        /// Optional config; reports with a different hash are flagged.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

fn warn_hash(what: &Path, check: HashCheck) {
    match check {
        HashCheck::Match => {}
        HashCheck::Mismatch { found } => {
            log::warn!(
                "{} was produced by config {found}, not the current one",
                what.display()
            )
        }
        HashCheck::Missing => log::warn!("{} carries no config hash", what.display()),
    }
}

fn csv_file(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_report(out: &Path, name: &str, rep: &ExperimentReport) -> Result<()> {
    fs::write(
        out.join(format!("{name}.json")),
        serde_json::to_string_pretty(rep)?,
    )?;
    fs::write(
        out.join(format!("{name}.timings.json")),
        serde_json::to_string_pretty(&rep.timings)?,
    )?;
    Ok(())
}

fn experiment_id(command: &str, cfg: &RunConfig) -> String {
    format!("{command}-{}", &cfg.hash()[..12])
}

/// Radios for allocation: one per device, SNR drawn from the configured choices.
pub fn radios(cfg: &RunConfig) -> Result<Vec<RadioProfile>> {
    let choices = &cfg.planner.radio_snr_choices_db;
    let mut rng = stream_rng(cfg.seed, stream_id(&[0x2ad10]));
    Ok(experiment::fleet(cfg)?
        .into_iter()
        .map(|d| RadioProfile {
            id: format!("device-{}", d.label),
            snr_db: choices[rng.random_range(0..choices.len())],
            residual: d.residual,
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanBody {
    pub radios: Vec<RadioProfile>,
    pub greedy: Allocation,
    pub random: Allocation,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, plan } => cmd_gen(&common, plan.as_deref()),
        Command::Calibrate { common } => cmd_calibrate(&common),
        Command::Plan { common } => cmd_plan(&common),
        Command::Train { common, dataset } => cmd_train(&common, &dataset),
        Command::Eval {
            common,
            model,
            dataset,
        } => cmd_eval(&common, &model, &dataset),
        Command::Report {
            config,
            out,
            reports,
        } => cmd_report(config.as_deref(), &out, &reports),
    }
}

fn cmd_gen(common: &Common, plan: Option<&Path>) -> Result<()> {
    let cfg = common.load()?;
    let set = match (cfg.classifier.impaired, plan) {
        (false, _) => None,
        (true, Some(p)) => {
            let doc = load_json::<FeasibleSet>(p)?;
            warn_hash(p, doc.check_hash(&cfg.hash()));
            Some(doc.body)
        }
        (true, None) => {
            log::info!("no --plan given; building the impairment map");
            Some(experiment::feasible_set(
                &cfg,
                &experiment::impairment_map(&cfg)?,
            )?)
        }
    };
    let devices = experiment::configured_fleet(&cfg, set.as_ref())?;
    let ds = experiment::generate_dataset(&cfg, &devices)?;
    save_dataset(&common.out.join("dataset.orcl"), &ds)?;
    save_json(
        &common.out.join("devices.json"),
        &devices,
        Some(&cfg.hash()),
    )?;
    log::info!("wrote {} traces", ds.records.len());
    Ok(())
}

fn cmd_calibrate(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let entries = experiment::calibration(&cfg)?;
    write_calibration_csv(&entries, csv_file(common.out.join("calibration.csv"))?)
}

fn cmd_plan(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let hash = cfg.hash();
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let map = experiment::impairment_map(&cfg)?;
    timings.insert("map_s".into(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let set = experiment::feasible_set(&cfg, &map)?;
    timings.insert("feasible_s".into(), t.elapsed().as_secs_f64());
    if set.len() < cfg.devices.count {
        return Err(Error::Infeasible {
            required: cfg.devices.count,
            found: set.len(),
            detail: "one distinct impairment per device".into(),
        });
    }
    let radios = radios(&cfg)?;
    let bound = cfg.planner.ber_bound;
    let greedy = allocate_greedy(&radios, &set, &map, bound)?;
    let random = allocate_random(&radios, &set, cfg.seed)?;
    let t = Instant::now();
    let cmp = compare_allocations(
        &map,
        &set,
        bound,
        radios.len(),
        &cfg.planner.radio_snr_choices_db,
        cfg.planner.comparison_draws,
        cfg.planner.random_allocations,
        cfg.seed,
    )?;
    timings.insert("comparison_s".into(), t.elapsed().as_secs_f64());

    let labelled: Vec<(String, _)> = set
        .members
        .iter()
        .zip(&set.patterns)
        .map(|(m, p)| (m.config.label.clone(), p.clone()))
        .collect();
    let emds = emd_matrix(&labelled)?;
    let out = &common.out;
    save_json(&out.join("map.json"), &map, Some(&hash))?;
    save_json(&out.join("feasible.json"), &set, Some(&hash))?;
    save_json(
        &out.join("allocation.json"),
        &PlanBody {
            radios: radios.clone(),
            greedy: greedy.clone(),
            random,
        },
        Some(&hash),
    )?;
    write_plan_csv(&greedy, &radios, &map, csv_file(out.join("plan.csv"))?)?;
    emds.write_csv(csv_file(out.join("emd_matrix.csv"))?)?;
    let rep = ExperimentReport {
        experiment_id: experiment_id("plan", &cfg),
        config_hash: hash,
        seed: cfg.seed,
        device_count: cfg.devices.count,
        metrics: Metrics {
            emd_matrix: Some(emds),
            ber_comparison: Some(cmp),
            ..Metrics::default()
        },
        timings,
    };
    write_report(out, "plan_report", &rep)
}

fn cmd_train(common: &Common, dataset: &Path) -> Result<()> {
    let cfg = common.load()?;
    let ds = load_dataset(dataset)?;
    warn_hash(dataset, ds.check_hash(&cfg.hash()));
    let t = Instant::now();
    let (model, log) = experiment::train_on_traces(&cfg, &ds.session(0))?;
    let mut timings = BTreeMap::new();
    timings.insert("train_s".to_string(), t.elapsed().as_secs_f64());
    let out = &common.out;
    save_model(&out.join("model.json"), &model, Some(&cfg.hash()))?;
    save_json(&out.join("train_log.json"), &log, Some(&cfg.hash()))?;
    fs::write(
        out.join("train.timings.json"),
        serde_json::to_string_pretty(&timings)?,
    )?;
    let mut wr = csv::Writer::from_writer(csv_file(out.join("train_log.csv"))?);
    for e in &log.epochs {
        wr.serialize(e)?;
    }
    wr.flush()?;
    log::info!("best epoch {} of {}", log.best_epoch, log.epochs.len());
    Ok(())
}

fn cmd_eval(common: &Common, model_path: &Path, dataset: &Path) -> Result<()> {
    let cfg = common.load()?;
    let (model, desc) = load_model(model_path)?;
    warn_hash(model_path, desc.check_hash(&cfg.hash()));
    let ds = load_dataset(dataset)?;
    warn_hash(dataset, ds.check_hash(&cfg.hash()));
    let t = Instant::now();
    let results = experiment::evaluate_dataset(&cfg, &model, &ds)?;
    if results.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} has no test sessions",
            dataset.display()
        )));
    }
    let mut timings = BTreeMap::new();
    timings.insert("eval_s".to_string(), t.elapsed().as_secs_f64());
    for r in &results {
        r.confusion.write_csv(csv_file(
            common
                .out
                .join(format!("confusion_session{}.csv", r.session)),
        )?)?;
        log::info!("session {}: accuracy {:.4}", r.session, r.accuracy);
    }
    let rep = ExperimentReport {
        experiment_id: experiment_id("eval", &cfg),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        device_count: model.arch.n_classes,
        metrics: Metrics {
            sessions: results
                .into_iter()
                .map(|r| SessionMetrics {
                    session: r.session,
                    accuracy: r.accuracy,
                    confusion: r.confusion,
                })
                .collect(),
            ..Metrics::default()
        },
        timings,
    };
    write_report(&common.out, "eval_report", &rep)
}

fn cmd_report(config: Option<&Path>, out: &Path, paths: &[PathBuf]) -> Result<()> {
    let expected = config.map(RunConfig::load).transpose()?.map(|c| c.hash());
    let reports = paths
        .iter()
        .map(|p| {
            let rep: ExperimentReport = serde_json::from_slice(&fs::read(p)?)?;
            if let Some(h) = &expected {
                warn_hash(p, HashCheck::compare(Some(&rep.config_hash), h));
            }
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = report::summarize(&reports)?;
    if !summary.mixed_hashes.is_empty() {
        log::warn!(
            "reports come from {} different configs: {}",
            summary.mixed_hashes.len(),
            summary.mixed_hashes.join(", ")
        );
    }
    fs::create_dir_all(out)?;
    report::write_accuracy_csv(&summary, csv_file(out.join("accuracy_box.csv"))?)?;
    report::write_ber_csv(&summary, csv_file(out.join("ber_comparison.csv"))?)
}
