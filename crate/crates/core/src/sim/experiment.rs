//! Experiment driver: one federation per seed, sweeps over malicious
//! fraction and client count, and file outputs.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, GroupChoice};
use super::data::{make_datasets, poison_labels, Datasets};
use super::metrics::{linear_fit, mean_std, write_csv, Confusion, MetricsRecord};
use crate::crypto::{ModPGroup, PrimeOrderGroup, Ristretto};
use crate::error::{Error, Result};
use crate::judge::{self, JudgeTrainConfig, PublicData, StageTimings};
use crate::nn::{self, Architecture, ParamVector, TrainConfig};
use crate::protocol::{
    ClientBehavior, Federation, FederationConfig, Participant, RoundReport, TimingsMs,
};
use crate::util;

/// Malicious-fraction points of the robustness sweep, defence on.
pub const MALICE_SWEEP: [f64; 5] = [0.0, 0.05, 0.15, 0.25, 0.35];
/// Client counts of the scalability sweep.
pub const CLIENT_SWEEP: [usize; 8] = [5, 10, 15, 20, 25, 30, 35, 40];

/// Result of one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub malicious: Vec<usize>,
    pub reports: Vec<RoundReport>,
    pub records: Vec<MetricsRecord>,
    pub chain_log: Vec<u8>,
    /// Error that stopped the run early, if any; `reports` holds the rounds before it.
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
}

impl ExperimentOutput {
    pub fn records(&self) -> Vec<MetricsRecord> {
        self.runs.iter().flat_map(|r| r.records.clone()).collect()
    }

    pub fn first_error(&self) -> Option<String> {
        self.runs
            .iter()
            .find_map(|r| r.error.as_ref().map(|e| format!("seed {}: {e}", r.seed)))
    }
}

/// Architecture, split public data and initial model for one seed.
pub struct Setup {
    pub arch: Architecture,
    pub data: Datasets,
    pub public: PublicData,
    pub m0: ParamVector,
}

pub fn setup(cfg: &ExperimentConfig, seed: u64) -> Result<Setup> {
    cfg.validate()?;
    let arch = Architecture::new(cfg.data.dim, cfg.hidden.clone())?;
    let data = make_datasets(cfg, seed)?;
    let public = PublicData::split(&data.public, cfg.data.public_train_fraction)?;
    let init = nn::init_model(&arch, util::sub_seed(seed, 3))?;
    let pretrain = TrainConfig {
        seed: util::sub_seed(seed, 4),
        ..cfg.pretrain.clone()
    };
    let (m0, _) = nn::train(&arch, &init, &public.train, &pretrain)?;
    Ok(Setup {
        arch,
        data,
        public,
        m0,
    })
}

/// Indices of the malicious clients for `seed`.
pub fn malicious_clients(cfg: &ExperimentConfig, seed: u64) -> Vec<usize> {
    let mut rng = util::rng_from(util::sub_seed(seed, 5));
    let mut picked = index::sample(&mut rng, cfg.n_clients, cfg.malicious_count()).into_vec();
    picked.sort_unstable();
    picked
}

fn judge_config(cfg: &ExperimentConfig, seed: u64) -> JudgeTrainConfig {
    JudgeTrainConfig {
        n_sim: cfg.n_sim(),
        sim_samples: cfg.judge.sim_samples.or(Some(2 * cfg.per_client_samples)),
        seed,
        ..cfg.judge.clone()
    }
}

/// Runs every round of one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    match cfg.group {
        GroupChoice::Modp => run_seed_in(cfg, seed, ModPGroup::p62()),
        GroupChoice::Toy => run_seed_in(cfg, seed, ModPGroup::toy()),
        GroupChoice::Ristretto => run_seed_in(cfg, seed, Ristretto),
    }
}

/// Federation for one seed: data, poisoned copies for the malicious
/// clients and keys. Returns the malicious indices alongside.
pub fn build_federation<G: PrimeOrderGroup>(
    cfg: &ExperimentConfig,
    seed: u64,
    group: G,
) -> Result<(Federation<G>, Vec<usize>)> {
    let Setup {
        arch,
        data,
        public,
        m0,
    } = setup(cfg, seed)?;
    let malicious = malicious_clients(cfg, seed);
    let participants = data
        .clients
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let poisoned = if malicious.contains(&i) {
                Some(poison_labels(
                    d,
                    cfg.flip_fraction,
                    cfg.attack_mode,
                    util::sub_seed(seed, 1000 + i as u64),
                )?)
            } else {
                None
            };
            Ok(Participant {
                data: d.clone(),
                poisoned,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fed_cfg = FederationConfig {
        arch,
        local_train: cfg.local_train.clone(),
        judge_train: judge_config(cfg, 0),
        judge_eval: cfg.judge_eval.clone(),
        screen_batch_size: cfg.screen_batch_size,
        screening: cfg.screening,
        seed: util::sub_seed(seed, 6),
    };
    let fed = Federation::new(fed_cfg, group, public, m0, data.holdout, participants)?;
    Ok((fed, malicious))
}

/// Honest behaviour for everyone except the malicious clients, who attack
/// when the schedule says so.
pub fn behaviors_for(cfg: &ExperimentConfig, malicious: &[usize], round: u32) -> Vec<ClientBehavior> {
    let attacking = cfg.attacks_in_round(round);
    (0..cfg.n_clients)
        .map(|i| {
            let bad = malicious.contains(&i);
            ClientBehavior {
                attack: bad && attacking,
                collude: bad && cfg.collude,
                ..ClientBehavior::honest()
            }
        })
        .collect()
}

fn run_seed_in<G: PrimeOrderGroup>(cfg: &ExperimentConfig, seed: u64, group: G) -> Result<SeedRun> {
    let (mut fed, malicious) = build_federation(cfg, seed, group)?;

    let mut reports = Vec::new();
    let mut records = Vec::new();
    let mut error = None;
    for round in 1..=cfg.rounds {
        let behaviors = behaviors_for(cfg, &malicious, round);
        match fed.run_round(&behaviors) {
            Ok(report) => {
                records.push(record_for(cfg, seed, &behaviors, &report));
                reports.push(report);
            }
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    Ok(SeedRun {
        seed,
        malicious,
        reports,
        records,
        chain_log: fed.chain().export_binary(),
        error,
    })
}

fn record_for(
    cfg: &ExperimentConfig,
    seed: u64,
    behaviors: &[ClientBehavior],
    report: &RoundReport,
) -> MetricsRecord {
    let attacked: Vec<bool> = behaviors.iter().map(|b| b.attack).collect();
    let rejected: Vec<bool> = (0..behaviors.len())
        .map(|k| !report.accepted.contains(&(k as u32)))
        .collect();
    let timings = if cfg.record_timings {
        report.election.as_ref().map(|e| e.timings)
    } else {
        None
    };
    MetricsRecord {
        experiment: cfg.name.clone(),
        seed,
        round: report.round,
        n_clients: cfg.n_clients,
        malicious_frac: cfg.malicious_fraction,
        confusion: Some(Confusion::from_decisions(&attacked, &rejected)),
        global_acc: Some(report.global_accuracy),
        timings,
        accepted_count: Some(report.accepted.len()),
    }
}

/// Runs every configured seed. Seeds run in parallel unless timings are
/// recorded. A failing seed keeps its completed rounds and its error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let run = |&seed: &u64| {
        run_seed(cfg, seed).unwrap_or_else(|e| SeedRun {
            seed,
            malicious: Vec::new(),
            reports: Vec::new(),
            records: Vec::new(),
            chain_log: Vec::new(),
            error: Some(e.to_string()),
        })
    };
    let runs = if cfg.record_timings {
        cfg.seeds.iter().map(run).collect()
    } else {
        cfg.seeds.par_iter().map(run).collect()
    };
    Ok(ExperimentOutput {
        config: cfg.clone(),
        runs,
    })
}

/// Configurations of the malicious-fraction sweep: every point of
/// [`MALICE_SWEEP`] with screening, plus the last point without it.
pub fn malice_sweep_configs(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut out: Vec<ExperimentConfig> = MALICE_SWEEP
        .iter()
        .map(|&f| ExperimentConfig {
            name: format!("{}-malice-{f}", base.name),
            malicious_fraction: f,
            screening: true,
            ..base.clone()
        })
        .collect();
    let last = MALICE_SWEEP[MALICE_SWEEP.len() - 1];
    out.push(ExperimentConfig {
        name: format!("{}-malice-{last}-unscreened", base.name),
        malicious_fraction: last,
        screening: false,
        ..base.clone()
    });
    out
}

pub fn sweep_malice(base: &ExperimentConfig) -> Result<Vec<ExperimentOutput>> {
    malice_sweep_configs(base)
        .iter()
        .map(run_experiment)
        .collect()
}

/// Judge creation for one client, repeated; each stage reports its median
/// over the repetitions.
pub fn time_judge_creation(cfg: &ExperimentConfig, seed: u64) -> Result<TimingsMs> {
    let s = setup(cfg, seed)?;
    let jcfg = judge_config(cfg, util::sub_seed(seed, 7));
    let runs: Vec<StageTimings> = (0..cfg.timing_repeats)
        .map(|_| judge::train_judge(&s.arch, &s.public, &s.m0, &jcfg).map(|b| b.timings))
        .collect::<Result<_>>()?;
    let median = |f: fn(&StageTimings) -> Duration| {
        let mut xs: Vec<Duration> = runs.iter().map(f).collect();
        xs.sort_unstable();
        xs[xs.len() / 2]
    };
    Ok(StageTimings {
        train: median(|t| t.train),
        features: median(|t| t.features),
        forest: median(|t| t.forest),
    }
    .into())
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingPoint {
    pub n_clients: usize,
    pub n_sim: usize,
    pub timings: TimingsMs,
}

impl ScalingPoint {
    pub fn total_ms(&self) -> f64 {
        self.timings.train + self.timings.features + self.timings.forest
    }
}

/// Judge-creation timings across client counts, one seed after another.
pub fn sweep_clients(base: &ExperimentConfig, counts: &[usize]) -> Result<Vec<(u64, ScalingPoint)>> {
    let mut out = Vec::new();
    for &seed in &base.seeds {
        for &n in counts {
            let cfg = ExperimentConfig {
                n_clients: n,
                seeds: vec![seed],
                ..base.clone()
            };
            cfg.validate()?;
            let timings = time_judge_creation(&cfg, seed)?;
            out.push((
                seed,
                ScalingPoint {
                    n_clients: n,
                    n_sim: cfg.n_sim(),
                    timings,
                },
            ));
        }
    }
    Ok(out)
}

pub fn scaling_records(base: &ExperimentConfig, points: &[(u64, ScalingPoint)]) -> Vec<MetricsRecord> {
    points
        .iter()
        .map(|(seed, p)| MetricsRecord {
            experiment: format!("{}-clients", base.name),
            seed: *seed,
            round: 1,
            n_clients: p.n_clients,
            malicious_frac: base.malicious_fraction,
            confusion: None,
            global_acc: None,
            timings: Some(p.timings),
            accepted_count: None,
        })
        .collect()
}

/// Per-experiment aggregates across seeds, plus the config.
pub fn summarize(output: &ExperimentOutput) -> Value {
    let finals: Vec<f64> = output
        .runs
        .iter()
        .filter_map(|r| r.reports.last().map(|rep| rep.global_accuracy))
        .collect();
    let mut pooled = Confusion::default();
    for r in output.runs.iter().flat_map(|r| &r.records) {
        if let Some(c) = r.confusion {
            pooled.add(&c);
        }
    }
    let per_seed = |f: &dyn Fn(&Confusion) -> Option<f64>| -> Vec<f64> {
        output
            .runs
            .iter()
            .filter_map(|r| {
                let mut c = Confusion::default();
                r.records.iter().filter_map(|x| x.confusion).for_each(|x| c.add(&x));
                f(&c)
            })
            .collect()
    };
    let stat = |xs: &[f64]| {
        mean_std(xs).map_or(Value::Null, |(m, s)| json!({"mean": m, "std": s, "n": xs.len()}))
    };
    json!({
        "experiment": output.config.name,
        "seeds": output.config.seeds,
        "final_global_acc": stat(&finals),
        "tpr": stat(&per_seed(&|c| c.tpr())),
        "fpr": stat(&per_seed(&|c| c.fpr())),
        "f1": stat(&per_seed(&|c| Some(c.f1()))),
        "pooled_confusion": pooled,
        "errors": output.runs.iter().filter_map(|r| r.error.clone()).collect::<Vec<_>>(),
        "config": output.config,
    })
}

pub fn summarize_scaling(base: &ExperimentConfig, points: &[(u64, ScalingPoint)]) -> Value {
    let x: Vec<f64> = points.iter().map(|(_, p)| p.n_clients as f64).collect();
    let total: Vec<f64> = points.iter().map(|(_, p)| p.total_ms()).collect();
    let forest: Vec<f64> = points.iter().map(|(_, p)| p.timings.forest).collect();
    let fit = linear_fit(&x, &total)
        .map(|(slope, intercept, r2)| json!({"slope_ms": slope, "intercept_ms": intercept, "r_squared": r2}));
    let spread = forest.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / forest.iter().cloned().fold(f64::INFINITY, f64::min);
    json!({
        "experiment": format!("{}-clients", base.name),
        "points": points.iter().map(|(s, p)| json!({"seed": s, "n_clients": p.n_clients, "n_sim": p.n_sim, "timings_ms": p.timings})).collect::<Vec<_>>(),
        "total_fit": fit,
        "forest_max_over_min": spread,
        "config": base,
    })
}

/// Output file names inside an output directory.
pub fn chain_path(dir: &Path, experiment: &str, seed: u64) -> PathBuf {
    dir.join("chains").join(format!("{experiment}-seed{seed}.fjchain"))
}

/// Writes `metrics.csv`, `summary.json` and one chain log per seed.
pub fn write_outputs(dir: &Path, outputs: &[ExperimentOutput]) -> Result<()> {
    std::fs::create_dir_all(dir.join("chains"))?;
    let records: Vec<MetricsRecord> = outputs.iter().flat_map(|o| o.records()).collect();
    write_csv(std::fs::File::create(dir.join("metrics.csv"))?, &records)?;
    let summary = json!({ "experiments": outputs.iter().map(summarize).collect::<Vec<_>>() });
    write_json(&dir.join("summary.json"), &summary)?;
    for o in outputs {
        for r in &o.runs {
            if !r.chain_log.is_empty() {
                std::fs::write(chain_path(dir, &o.config.name, r.seed), &r.chain_log)?;
            }
        }
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Milliseconds as a float.
pub fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}
