//! Synthetic two-class data, shared/unique client pools and label flipping.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{AttackMode, ExperimentConfig};
use crate::error::{config_err, input_err, Error, Result};
use crate::nn::{LabeledDataset, Sample};
use crate::util::{self, Reader};

const PUBLIC_IDS: u64 = 0;
const HOLDOUT_IDS: u64 = 1 << 40;
const POOL_IDS: u64 = 1 << 41;

const FEATURE_FILE_MAGIC: &[u8; 4] = b"FJF1";

/// Everything a run needs besides the model.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub public: LabeledDataset,
    pub holdout: LabeledDataset,
    pub clients: Vec<LabeledDataset>,
    pub layout: PoolLayout,
}

/// Per-class sizes of the global pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolLayout {
    pub shared: usize,
    pub unique: usize,
    pub unique_per_client: usize,
}

impl PoolLayout {
    pub fn new(pool: usize, split: f64, n_clients: usize, per_client: usize) -> Result<Self> {
        let shared = (pool as f64 * split).round() as usize;
        let unique = pool - shared;
        let unique_per_client = unique / n_clients;
        if unique_per_client == 0 {
            return config_err(format!(
                "unique pool of {unique} per class cannot give each of {n_clients} clients a sample"
            ));
        }
        if unique_per_client > per_client {
            return config_err(format!(
                "{unique_per_client} unique samples per client exceed the {per_client} requested"
            ));
        }
        if unique_per_client < per_client && shared == 0 {
            return config_err("shared pool is empty but clients need shared samples");
        }
        Ok(Self {
            shared,
            unique,
            unique_per_client,
        })
    }

    /// Whether a pool sample index (within its class) belongs to the shared part.
    pub fn is_shared(&self, k: usize) -> bool {
        k < self.shared
    }
}

/// Pool sample id for class `label`, index `k` within that class.
pub fn pool_id(layout: &PoolLayout, label: u8, k: usize) -> u64 {
    POOL_IDS + u64::from(label) * (layout.shared + layout.unique) as u64 + k as u64
}

/// Whether a generated sample id came from the shared pool.
pub fn is_shared_id(layout: &PoolLayout, id: u64) -> bool {
    if id < POOL_IDS {
        return false;
    }
    let per_class = (layout.shared + layout.unique) as u64;
    layout.is_shared(((id - POOL_IDS) % per_class) as usize)
}

enum Source {
    Synthetic {
        rng: ChaCha8Rng,
        means: [Vec<f64>; 2],
        noise: f64,
    },
    File {
        per_class: [Vec<Vec<f64>>; 2],
        next: [usize; 2],
    },
}

impl Source {
    fn synthetic(dim: usize, separation: f64, noise: f64, seed: u64) -> Self {
        let mut rng = util::rng_from(seed);
        let mut u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        u.iter_mut().for_each(|x| *x /= norm);
        let half = separation / 2.0;
        Self::Synthetic {
            rng,
            means: [
                u.iter().map(|x| -half * x).collect(),
                u.iter().map(|x| half * x).collect(),
            ],
            noise,
        }
    }

    fn draw(&mut self, label: u8) -> Result<Vec<f64>> {
        match self {
            Source::Synthetic { rng, means, noise } => Ok(means[label as usize]
                .iter()
                .map(|m| m + *noise * rng.sample::<f64, _>(StandardNormal))
                .collect()),
            Source::File { per_class, next } => {
                let c = label as usize;
                let x = per_class[c].get(next[c]).cloned().ok_or_else(|| {
                    Error::Config(format!(
                        "feature file has only {} samples of class {label}",
                        per_class[c].len()
                    ))
                })?;
                next[c] += 1;
                Ok(x)
            }
        }
    }
}

/// Balanced labelled set of `size` samples, shuffled.
fn balanced(
    source: &mut Source,
    name: &str,
    size: usize,
    first_id: u64,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    let mut samples = (0..size)
        .map(|i| {
            let label = (i % 2) as u8;
            Ok(Sample {
                id: first_id + i as u64,
                features: source.draw(label)?,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    samples.shuffle(rng);
    LabeledDataset::new(name, samples)
}

/// Builds the public, holdout and per-client datasets.
///
/// Per class, the global pool is split into a shared part (`shared_pool_split`)
/// and a unique part. Unique samples are dealt out evenly; every client then
/// tops up to `per_client_samples` with draws, with replacement, from the
/// shared part.
pub fn make_datasets(cfg: &ExperimentConfig, seed: u64) -> Result<Datasets> {
    let d = &cfg.data;
    let mut source = match &d.feature_file {
        Some(path) => file_source(Path::new(path), d.dim)?,
        None => Source::synthetic(d.dim, d.separation, d.noise, util::sub_seed(seed, 1)),
    };
    make_from_source(cfg, &mut source, seed)
}

fn make_from_source(cfg: &ExperimentConfig, source: &mut Source, seed: u64) -> Result<Datasets> {
    let d = &cfg.data;
    let mut rng = util::rng_from(util::sub_seed(seed, 2));
    let public = balanced(source, "public", d.public_size, PUBLIC_IDS, &mut rng)?;
    let holdout = balanced(source, "holdout", d.holdout_size, HOLDOUT_IDS, &mut rng)?;

    let n = cfg.n_clients;
    let pool = if d.pool_per_class == 0 {
        n * cfg.per_client_samples
    } else {
        d.pool_per_class
    };
    let layout = PoolLayout::new(pool, cfg.shared_pool_split, n, cfg.per_client_samples)?;
    let mut by_class: [Vec<Sample>; 2] = [Vec::new(), Vec::new()];
    for label in 0..2u8 {
        for k in 0..pool {
            by_class[label as usize].push(Sample {
                id: pool_id(&layout, label, k),
                features: source.draw(label)?,
                label,
            });
        }
    }

    let top_up = cfg.per_client_samples - layout.unique_per_client;
    let clients = (0..n)
        .map(|i| {
            let mut samples = Vec::with_capacity(2 * cfg.per_client_samples);
            for class in &by_class {
                let start = layout.shared + i * layout.unique_per_client;
                samples.extend_from_slice(&class[start..start + layout.unique_per_client]);
                for _ in 0..top_up {
                    samples.push(class[rng.gen_range(0..layout.shared)].clone());
                }
            }
            samples.shuffle(&mut rng);
            LabeledDataset::new(format!("client-{i}"), samples)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Datasets {
        public,
        holdout,
        clients,
        layout,
    })
}

/// Relabels part of `data`; the input is left untouched.
///
/// Targeted flips `floor(f * |class 0|)` class-0 labels to 1; untargeted
/// inverts `floor(f * |data|)` uniformly chosen labels.
pub fn poison_labels(
    data: &LabeledDataset,
    flip_fraction: f64,
    mode: AttackMode,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&flip_fraction) {
        return input_err(format!("flip_fraction must lie in [0, 1], got {flip_fraction}"));
    }
    let mut rng = util::rng_from(seed);
    let candidates: Vec<usize> = match mode {
        AttackMode::Targeted => (0..data.len())
            .filter(|&i| data.samples[i].label == 0)
            .collect(),
        AttackMode::Untargeted => (0..data.len()).collect(),
    };
    let count = (flip_fraction * candidates.len() as f64 + 1e-9).floor() as usize;
    let mut out = data.clone();
    out.name = format!("{}/poisoned", data.name);
    for pick in index::sample(&mut rng, candidates.len(), count.min(candidates.len())) {
        let s = &mut out.samples[candidates[pick]];
        s.label = 1 - s.label;
    }
    Ok(out)
}

/// Writes samples as `"FJF1" | dim u32 | (dim f64, label u8)*`, little-endian.
pub fn write_feature_file(path: &Path, data: &LabeledDataset) -> Result<()> {
    data.validate()?;
    let mut out = FEATURE_FILE_MAGIC.to_vec();
    out.extend_from_slice(&(data.dim() as u32).to_le_bytes());
    for s in &data.samples {
        for x in &s.features {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.push(s.label);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a feature file written by [`write_feature_file`]. Sample ids are record indices.
pub fn read_feature_file(path: &Path) -> Result<LabeledDataset> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes);
    if r.take(4)? != FEATURE_FILE_MAGIC {
        return Err(Error::Decode(format!("{} is not a feature file", path.display())));
    }
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::Decode("feature file declares zero features".into()));
    }
    let mut samples = Vec::new();
    while !r.is_empty() {
        let features = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let label = r.u8()?;
        samples.push(Sample {
            id: samples.len() as u64,
            features,
            label,
        });
    }
    LabeledDataset::new(path.display().to_string(), samples)
}

fn file_source(path: &Path, dim: usize) -> Result<Source> {
    let data = read_feature_file(path)?;
    if data.dim() != dim {
        return config_err(format!(
            "feature file has {} features, config says {dim}",
            data.dim()
        ));
    }
    let mut per_class: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for s in data.samples {
        per_class[s.label as usize].push(s.features);
    }
    Ok(Source::File {
        per_class,
        next: [0, 0],
    })
}
