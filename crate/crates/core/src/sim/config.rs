use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::iforest::ForestParams;
use crate::judge::{JudgeEvalConfig, JudgeTrainConfig};
use crate::nn::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Class 0 relabelled as class 1.
    #[default]
    Targeted,
    /// Uniformly chosen samples relabelled to the other class.
    Untargeted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupChoice {
    /// 62-bit safe-prime subgroup.
    #[default]
    Modp,
    /// p = 2039, for tests.
    Toy,
    Ristretto,
}

/// Synthetic two-class generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dim: usize,
    /// Distance between the class means.
    pub separation: f64,
    pub noise: f64,
    pub public_size: usize,
    pub public_train_fraction: f64,
    /// Held-out set for global-model accuracy.
    pub holdout_size: usize,
    /// Global pool size per class; 0 means `n_clients * per_client_samples`.
    pub pool_per_class: usize,
    /// Draw samples from a feature file instead of the synthetic generator.
    pub feature_file: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            separation: 2.0,
            noise: 1.0,
            public_size: 2000,
            public_train_fraction: 0.9,
            holdout_size: 2000,
            pool_per_class: 0,
            feature_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub n_clients: usize,
    pub malicious_fraction: f64,
    pub flip_fraction: f64,
    pub attack_mode: AttackMode,
    /// Per-round attack mask; empty means attack every round. Rounds past
    /// the end of the mask do not attack.
    pub attack_schedule: Vec<bool>,
    /// Malicious clients also vote for each other and against everyone else.
    pub collude: bool,
    pub shared_pool_split: f64,
    /// Samples per class per client.
    pub per_client_samples: usize,
    pub rounds: u32,
    pub seeds: Vec<u64>,
    pub screening: bool,
    pub group: GroupChoice,
    pub hidden: Vec<usize>,
    pub data: DataConfig,
    /// Training of the initial model on the public training split.
    pub pretrain: TrainConfig,
    pub local_train: TrainConfig,
    /// Judge training. `judge.sim_samples` left unset means each simulation
    /// trains on a client-sized subset (`2 * per_client_samples`).
    pub judge: JudgeTrainConfig,
    pub judge_eval: JudgeEvalConfig,
    pub screen_batch_size: usize,
    /// When set, judge training runs `sims_per_client * n_clients` simulations.
    pub sims_per_client: Option<usize>,
    /// Fill the timing columns of the metrics CSV.
    pub record_timings: bool,
    pub timing_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            n_clients: 12,
            malicious_fraction: 0.25,
            flip_fraction: 0.35,
            attack_mode: AttackMode::Targeted,
            attack_schedule: Vec::new(),
            collude: false,
            shared_pool_split: 0.6,
            per_client_samples: 100,
            rounds: 5,
            seeds: vec![1],
            screening: true,
            group: GroupChoice::Modp,
            hidden: vec![16],
            data: DataConfig::default(),
            pretrain: TrainConfig {
                epochs: 5,
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
            local_train: TrainConfig {
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
            judge: JudgeTrainConfig {
                n_sim: 60,
                sim_train: TrainConfig {
                    learning_rate: 1e-2,
                    ..TrainConfig::default()
                },
                forest: ForestParams {
                    score_threshold: 0.55,
                    ..ForestParams::default()
                },
                ..JudgeTrainConfig::default()
            },
            judge_eval: JudgeEvalConfig::default(),
            screen_batch_size: 8,
            sims_per_client: None,
            record_timings: false,
            timing_repeats: 3,
        }
    }
}

impl ExperimentConfig {
    /// Parses a config. Keys missing at any depth take the values of
    /// [`ExperimentConfig::default`], including inside nested tables.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::default()).expect("config serializes");
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `floor(malicious_fraction * n_clients)`.
    pub fn malicious_count(&self) -> usize {
        (self.malicious_fraction * self.n_clients as f64 + 1e-9).floor() as usize
    }

    pub fn attacks_in_round(&self, round: u32) -> bool {
        if self.attack_schedule.is_empty() {
            return true;
        }
        let r = round as usize;
        r >= 1 && self.attack_schedule.get(r - 1).copied().unwrap_or(false)
    }

    pub fn n_sim(&self) -> usize {
        self.sims_per_client
            .map_or(self.judge.n_sim, |k| k * self.n_clients)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients < 3 {
            return config_err(format!("need at least 3 clients, got {}", self.n_clients));
        }
        if !(0.0..1.0).contains(&self.malicious_fraction) {
            return config_err(format!(
                "malicious_fraction must lie in [0, 1), got {}",
                self.malicious_fraction
            ));
        }
        if 2 * self.malicious_count() >= self.n_clients {
            return config_err(format!(
                "{} malicious clients out of {} would not be a minority",
                self.malicious_count(),
                self.n_clients
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return config_err(format!(
                "flip_fraction must lie in [0, 1], got {}",
                self.flip_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.shared_pool_split) {
            return config_err(format!(
                "shared_pool_split must lie in [0, 1), got {}",
                self.shared_pool_split
            ));
        }
        if self.per_client_samples == 0 {
            return config_err("per_client_samples must be at least 1");
        }
        if self.rounds == 0 {
            return config_err("rounds must be at least 1");
        }
        if self.seeds.is_empty() {
            return config_err("seeds must not be empty");
        }
        if self.screen_batch_size == 0 {
            return config_err("screen_batch_size must be at least 1");
        }
        if self.timing_repeats == 0 {
            return config_err("timing_repeats must be at least 1");
        }
        if matches!(self.sims_per_client, Some(0)) {
            return config_err("sims_per_client must be at least 1");
        }
        let d = &self.data;
        if d.dim == 0 || d.public_size < 2 || d.holdout_size == 0 {
            return config_err("data dimensions and sizes must be positive");
        }
        if !(d.noise > 0.0 && d.separation >= 0.0) {
            return config_err("noise must be positive and separation non-negative");
        }
        self.pretrain.validate()?;
        self.local_train.validate()?;
        crate::nn::Architecture::new(d.dim, self.hidden.clone())?;
        JudgeTrainConfig {
            n_sim: self.n_sim(),
            ..self.judge.clone()
        }
        .validate()?;
        self.judge_eval.validate()
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
