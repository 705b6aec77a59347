//! Judge training, judge evaluation and update screening.
//!
//! A judge is an isolation forest fitted on clean gradient features. Each
//! training row comes from one simulated client: the initial model is
//! trained on the public training split to get a source model, and the
//! source model's gradients are then observed over the public test split
//! and summarized into 45 features. Screening featurizes a candidate update
//! the same way, so judge rows and screened updates are directly comparable.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Result};
use crate::gradfeat::{features_from_trace, FeatureMatrix, GradFeature45};
use crate::iforest::{self, ForestParams, JudgeForest, Verdict};
use crate::nn::{self, Architecture, LabeledDataset, ParamVector, TrainConfig};
use crate::util;

/// Public dataset split into its judge-training and test parts.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl PublicData {
    /// First `train_fraction` of the samples go to training, the rest to test.
    pub fn split(public: &LabeledDataset, train_fraction: f64) -> Result<Self> {
        public.validate()?;
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return config_err(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            ));
        }
        let cut = (public.len() as f64 * train_fraction).round() as usize;
        if cut == 0 || cut == public.len() {
            return input_err(format!(
                "public dataset of {} samples is too small to split",
                public.len()
            ));
        }
        Ok(Self {
            train: LabeledDataset::new(
                format!("{}/train", public.name),
                public.samples[..cut].to_vec(),
            )?,
            test: LabeledDataset::new(
                format!("{}/test", public.name),
                public.samples[cut..].to_vec(),
            )?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeTrainConfig {
    pub n_sim: usize,
    pub sim_train: TrainConfig,
    pub forest: ForestParams,
    /// Batch size used when observing a source model over the test split.
    pub observe_batch_size: usize,
    /// Batch order for observing sources. `None` gives every simulation its
    /// own order; `Some` fixes one order for all of them.
    pub observe_seed: Option<u64>,
    /// Size of the simulated client's dataset, drawn without replacement
    /// from the training split; `None` trains on the whole split.
    pub sim_samples: Option<usize>,
    pub seed: u64,
}

impl Default for JudgeTrainConfig {
    fn default() -> Self {
        Self {
            n_sim: 30,
            sim_train: TrainConfig::default(),
            forest: ForestParams::default(),
            observe_batch_size: 8,
            observe_seed: None,
            sim_samples: None,
            seed: 0,
        }
    }
}

impl JudgeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim < 2 {
            return config_err(format!(
                "judge training needs at least 2 simulations, got {}",
                self.n_sim
            ));
        }
        if self.sim_samples == Some(0) {
            return config_err("sim_samples must be at least 1");
        }
        if self.observe_batch_size == 0 {
            return config_err("observe_batch_size must be at least 1");
        }
        self.sim_train.validate()?;
        self.forest.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeEvalConfig {
    pub k_probe: usize,
    pub pass_fraction: f64,
    pub batch_size: usize,
}

impl Default for JudgeEvalConfig {
    fn default() -> Self {
        Self {
            k_probe: 10,
            pass_fraction: 0.8,
            batch_size: 8,
        }
    }
}

impl JudgeEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_probe == 0 {
            return config_err("k_probe must be at least 1");
        }
        if !(self.pass_fraction > 0.0 && self.pass_fraction <= 1.0) {
            return config_err(format!(
                "pass_fraction must lie in (0, 1], got {}",
                self.pass_fraction
            ));
        }
        if self.batch_size == 0 {
            return config_err("batch_size must be at least 1");
        }
        Ok(())
    }
}

/// Wall-clock time spent in each judge-creation stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub train: Duration,
    pub features: Duration,
    pub forest: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.train + self.features + self.forest
    }
}

#[derive(Clone, Debug)]
pub struct JudgeBuild {
    pub forest: JudgeForest,
    pub rows: FeatureMatrix,
    pub timings: StageTimings,
}

/// Seed of simulation `sim` within a judge-training run.
fn sim_seed(seed: u64, sim: usize) -> u64 {
    util::sub_seed(seed, sim as u64)
}

/// Runs `cfg.n_sim` seeded simulations and fits the forest on their
/// features. Stages run one after another so each can be timed.
pub fn train_judge(
    arch: &Architecture,
    public: &PublicData,
    m0: &ParamVector,
    cfg: &JudgeTrainConfig,
) -> Result<JudgeBuild> {
    cfg.validate()?;

    let start = Instant::now();
    let sources = (0..cfg.n_sim)
        .into_par_iter()
        .map(|s| {
            let seed = sim_seed(cfg.seed, s);
            let sim_cfg = TrainConfig {
                seed,
                ..cfg.sim_train.clone()
            };
            let subset;
            let data = match cfg.sim_samples {
                Some(k) if k < public.train.len() => {
                    let mut rng = util::rng_from(util::sub_seed(seed, 1));
                    let picked = rand::seq::index::sample(&mut rng, public.train.len(), k);
                    subset = LabeledDataset {
                        name: format!("{}/sim-{s}", public.train.name),
                        samples: picked.iter().map(|i| public.train.samples[i].clone()).collect(),
                    };
                    &subset
                }
                _ => &public.train,
            };
            nn::train(arch, m0, data, &sim_cfg).map(|(source, _)| source)
        })
        .collect::<Result<Vec<_>>>()?;
    let train_time = start.elapsed();

    let start = Instant::now();
    let rows = sources
        .par_iter()
        .enumerate()
        .map(|(s, source)| {
            let observe_seed = cfg
                .observe_seed
                .unwrap_or_else(|| util::sub_seed(sim_seed(cfg.seed, s), u64::MAX));
            let trace = nn::observe_gradients(
                arch,
                source,
                &public.test,
                cfg.observe_batch_size,
                observe_seed,
            )?;
            features_from_trace(&trace)
        })
        .collect::<Result<FeatureMatrix>>()?;
    let feature_time = start.elapsed();

    let start = Instant::now();
    let forest = iforest::fit(&rows, &cfg.forest, util::sub_seed(cfg.seed, u64::MAX - 1))?;
    let forest_time = start.elapsed();

    Ok(JudgeBuild {
        forest,
        rows,
        timings: StageTimings {
            train: train_time,
            features: feature_time,
            forest: forest_time,
        },
    })
}

/// Feature of `model` observed over `data` in the batch order fixed by `seed`.
pub fn observed_feature(
    arch: &Architecture,
    model: &ParamVector,
    data: &LabeledDataset,
    batch_size: usize,
    seed: u64,
) -> Result<GradFeature45> {
    let trace = nn::observe_gradients(arch, model, data, batch_size, seed)?;
    features_from_trace(&trace)
}

/// Clean probe features of `m0` over the test split, one per sub-seed.
pub fn probe_features(
    arch: &Architecture,
    public_test: &LabeledDataset,
    m0: &ParamVector,
    cfg: &JudgeEvalConfig,
    seed: u64,
) -> Result<Vec<GradFeature45>> {
    cfg.validate()?;
    (0..cfg.k_probe)
        .map(|k| observed_feature(arch, m0, public_test, cfg.batch_size, util::sub_seed(seed, k as u64)))
        .collect()
}

/// 1 when at least `pass_fraction` of the probes are judged benign.
pub fn vote_on_probes(candidate: &JudgeForest, probes: &[GradFeature45], pass_fraction: f64) -> u8 {
    if probes.is_empty() {
        return 0;
    }
    let benign = probes
        .iter()
        .filter(|p| candidate.predict(p) == Verdict::Benign)
        .count();
    u8::from(benign as f64 / probes.len() as f64 >= pass_fraction)
}

pub fn evaluate_judge(
    arch: &Architecture,
    candidate: &JudgeForest,
    public_test: &LabeledDataset,
    m0: &ParamVector,
    cfg: &JudgeEvalConfig,
    seed: u64,
) -> Result<u8> {
    let probes = probe_features(arch, public_test, m0, cfg, seed)?;
    Ok(vote_on_probes(candidate, &probes, cfg.pass_fraction))
}

/// Observes the update's gradients over the test split (never applying
/// them) and asks the judge for a verdict.
pub fn screen_update(
    arch: &Architecture,
    judge: &JudgeForest,
    update: &ParamVector,
    public_test: &LabeledDataset,
    batch_size: usize,
    seed: u64,
) -> Result<Verdict> {
    let feature = observed_feature(arch, update, public_test, batch_size, seed)?;
    Ok(judge.predict(&feature))
}
