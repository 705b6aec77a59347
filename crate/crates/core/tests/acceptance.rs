//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use fedjudge::crypto::{keygen, ModPGroup};
use fedjudge::gradfeat::{GradFeature45, FEATURE_DIM};
use fedjudge::iforest::{self, c_norm, ForestParams, IsolationTree, JudgeForest, Node};
use fedjudge::nn::ParamVector;
use fedjudge::protocol::{fedavg, tally_encrypted, update_acceptance, AggregationWeights};
use fedjudge::sim::experiment::{summarize_scaling, sweep_clients, CLIENT_SWEEP};
use fedjudge::sim::metrics::write_csv;
use fedjudge::sim::{run_experiment, sweep_malice, Confusion, ExperimentConfig};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).expect("shipped config parses")
}

const DETECTION: &str = include_str!("../../../configs/detection.toml");
const ROBUSTNESS: &str = include_str!("../../../configs/robustness.toml");
const SCALING: &str = include_str!("../../../configs/scaling.toml");

fn crypto_tally() -> Check {
    let group = ModPGroup::p62();
    let mut checked = 0;
    for n in 1..=2usize {
        let keys: Vec<_> = (0..n as u64).map(|i| keygen(&group, i)).collect();
        for code in 0..1u64 << (n * n) {
            let votes = common::matrix_from_bits(code, n, n);
            let got = tally_encrypted(&group, &keys, &votes, n, code).map_err(|e| e.to_string())?;
            ensure(got == common::column_sums(&votes, n), || format!("n={n} votes {votes:?}: {got:?}"))?;
            checked += 1;
        }
    }
    let mut r = common::rng(2024);
    for n in [3usize, 5, 10, 20] {
        let keys: Vec<_> = (0..n as u64).map(|i| keygen(&group, 1000 * n as u64 + i)).collect();
        for t in 0..1000 {
            let votes = common::random_matrix(&mut r, n, n);
            let got = tally_encrypted(&group, &keys, &votes, n, t).map_err(|e| e.to_string())?;
            ensure(got == common::column_sums(&votes, n), || format!("n={n} trial {t}: {got:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} vote matrices decode to their column sums"))
}

fn majority_rule() -> Check {
    let mut checked = 0;
    for n in 1..=5usize {
        for code in 0..1u32 << n {
            let votes: Vec<Vec<u8>> = (0..n).map(|i| vec![((code >> i) & 1) as u8]).collect();
            let yes = code.count_ones() as usize;
            let expected: Vec<usize> = if 2 * yes > n { vec![0] } else { vec![] };
            let got = update_acceptance(&votes, 1).map_err(|e| e.to_string())?;
            ensure(got == expected, || format!("n={n} pattern {code:b}: {got:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} vote patterns agree with the strict-majority oracle"))
}

fn fedavg_oracle() -> Check {
    let mut r = common::rng(77);
    let mut worst = 0.0f64;
    for t in 0..100 {
        let k = r.gen_range(1..=8);
        let dim = r.gen_range(1..=50);
        let scale = 10f64.powi(r.gen_range(-3..=3));
        let updates: Vec<ParamVector> = (0..k)
            .map(|_| ParamVector((0..dim).map(|_| scale * r.gen_range(-1.0..1.0)).collect()))
            .collect();
        let n_k: Vec<usize> = (0..k).map(|_| r.gen_range(1..=1000)).collect();
        let refs: Vec<&ParamVector> = updates.iter().collect();
        let weights = AggregationWeights::new(n_k.clone()).map_err(|e| e.to_string())?;
        let got = fedavg(&refs, &weights).map_err(|e| e.to_string())?;
        let total: usize = n_k.iter().sum();
        for j in 0..dim {
            let oracle = n_k
                .iter()
                .zip(&updates)
                .map(|(&n, u)| n as f64 * u.0[j])
                .sum::<f64>()
                / total as f64;
            let magnitude = n_k
                .iter()
                .zip(&updates)
                .map(|(&n, u)| n as f64 * u.0[j].abs())
                .sum::<f64>()
                / total as f64;
            let rel = (got.0[j] - oracle).abs() / magnitude.max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            ensure(rel <= 1e-12, || format!("instance {t} coordinate {j}: relative error {rel:e}"))?;
            let lo = updates.iter().map(|u| u.0[j]).fold(f64::INFINITY, f64::min);
            let hi = updates.iter().map(|u| u.0[j]).fold(f64::NEG_INFINITY, f64::max);
            ensure(lo <= got.0[j] && got.0[j] <= hi, || {
                format!("instance {t} coordinate {j}: {} outside [{lo}, {hi}]", got.0[j])
            })?;
        }
    }
    Ok(format!("100 instances, worst relative error {worst:.1e}, convex bound holds"))
}

fn gradient_check() -> Check {
    let worst = (0..20).map(common::gradient_check).fold(0.0, f64::max);
    ensure(worst <= 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("20 models, max relative error {worst:.1e}"))
}

fn feature(fill: impl FnMut(usize) -> f64) -> GradFeature45 {
    GradFeature45(std::array::from_fn::<f64, FEATURE_DIM, _>(fill))
}

fn isolation_forest() -> Check {
    let mut hits = 0;
    for seed in 0..10u64 {
        let mut r = common::rng(500 + seed);
        let mut rows: Vec<GradFeature45> = (0..100)
            .map(|_| feature(|_| r.sample::<f64, _>(rand_distr::StandardNormal)))
            .collect();
        rows.push(feature(|_| 6.0));
        let params = ForestParams {
            n_trees: 100,
            subsample: Some(64),
            ..ForestParams::default()
        };
        let forest = iforest::fit(&rows, &params, seed).map_err(|e| e.to_string())?;
        let scores: Vec<f64> = rows.iter().map(|x| forest.anomaly_score(x)).collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if scores[100] == top {
            hits += 1;
        }
    }
    ensure(hits >= 9, || format!("outlier ranked first in {hits}/10 seeds"))?;

    let walked = IsolationTree {
        nodes: vec![
            Node::Internal { dim: 0, split: 0.5, right: 2 },
            Node::Leaf { size: 1 },
            Node::Internal { dim: 1, split: 2.0, right: 4 },
            Node::Leaf { size: 3 },
            Node::Leaf { size: 1 },
        ],
    };
    let stump = IsolationTree {
        nodes: vec![Node::Leaf { size: 5 }],
    };
    let forest = JudgeForest {
        trees: vec![walked.clone(), stump],
        subsample: 5,
        n_trees: 2,
        score_threshold: 0.5,
        train_digest: [0; 32],
    };
    let point = |a: f64, b: f64| feature(|i| [a, b].get(i).copied().unwrap_or(0.0));
    let c3 = 1.207_392_357_586_557;
    let c5 = 2.327_020_052_039_781;
    ensure((c_norm(3) - c3).abs() < 1e-15 && (c_norm(5) - c5).abs() < 1e-15, || {
        format!("c(3) = {}, c(5) = {}", c_norm(3), c_norm(5))
    })?;
    let cases = [
        (point(0.2, 9.0), 1.0, 0.609_261_263_063_221_6),
        (point(0.7, 1.0), 2.0 + c3, 0.438_557_214_396_621_2),
        (point(0.7, 3.0), 2.0, 0.524_955_065_551_072_7),
        (point(0.5, 2.0), 2.0, 0.524_955_065_551_072_7),
    ];
    for (x, path, score) in cases {
        let got = walked.path_length(&x.0);
        ensure((got - path).abs() < 1e-15, || format!("path length {got}, hand-walked {path}"))?;
        let s = forest.anomaly_score(&x);
        ensure((s - score).abs() < 1e-15, || format!("score {s}, hand-computed {score}"))?;
    }
    Ok(format!("outlier ranked first in {hits}/10 seeds; fixture trees match"))
}

fn pooled(records: &[fedjudge::sim::MetricsRecord]) -> Confusion {
    let mut c = Confusion::default();
    records.iter().filter_map(|r| r.confusion).for_each(|x| c.add(&x));
    c
}

fn detection() -> Check {
    let cfg = config(DETECTION);
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    if let Some(e) = out.first_error() {
        return Err(e);
    }
    let per_seed: Vec<Confusion> = out.runs.iter().map(|r| pooled(&r.records)).collect();
    let mean = |f: fn(&Confusion) -> Option<f64>| {
        let xs: Vec<f64> = per_seed.iter().filter_map(f).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let tpr = mean(|c| c.tpr());
    let fpr = mean(|c| c.fpr());
    let detail = format!("TPR {tpr:.3}, FPR {fpr:.3} over {} seeds", per_seed.len());
    ensure(tpr >= 0.8 && fpr <= 0.2, || detail.clone())?;
    Ok(detail)
}

fn robustness() -> Check {
    let cfg = config(ROBUSTNESS);
    let outs = sweep_malice(&cfg).map_err(|e| e.to_string())?;
    if let Some(e) = outs.iter().find_map(|o| o.first_error()) {
        return Err(e);
    }
    let finals = |i: usize| -> Vec<f64> {
        outs[i]
            .runs
            .iter()
            .map(|r| r.reports.last().unwrap().global_accuracy)
            .collect()
    };
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let baseline = mean(&finals(0));
    let mut worst_gap = 0.0f64;
    for i in 1..outs.len() - 1 {
        let m = mean(&finals(i));
        worst_gap = worst_gap.max((baseline - m).abs());
        ensure((baseline - m).abs() <= 0.03, || {
            format!(
                "{}% malicious: {m:.4} against baseline {baseline:.4}",
                outs[i].config.malicious_fraction * 100.0
            )
        })?;
    }
    let screened = finals(outs.len() - 2);
    let unscreened = finals(outs.len() - 1);
    let worse = screened.iter().zip(&unscreened).filter(|(s, u)| u < s).count();
    let detail = format!(
        "largest gap to baseline {:.2} pts; unscreened worse in {worse}/{} seeds",
        worst_gap * 100.0,
        screened.len()
    );
    ensure(worse >= 4, || detail.clone())?;
    Ok(detail)
}

fn scalability() -> Check {
    let cfg = config(SCALING);
    let points = sweep_clients(&cfg, &CLIENT_SWEEP).map_err(|e| e.to_string())?;
    let summary = summarize_scaling(&cfg, &points);
    let r2 = summary["total_fit"]["r_squared"].as_f64().ok_or("no fit")?;
    let spread = summary["forest_max_over_min"].as_f64().ok_or("no forest timings")?;
    let detail = format!("R^2 {r2:.4}, forest stage max/min {spread:.2}");
    ensure(r2 >= 0.9 && spread <= 2.0, || detail.clone())?;
    Ok(detail)
}

fn ledger_integrity() -> Check {
    let (chain, keys) = common::ledger_fixture();
    ensure(chain.verify().is_valid(), || "fixture does not verify".into())?;
    let clean = chain.export_binary();
    let mut tampers = 0;
    for pos in 0..clean.len() {
        for mask in (0..8).map(|b| 1u8 << b).chain([0xff]) {
            let mut bytes = clean.clone();
            bytes[pos] ^= mask;
            ensure(common::tamper_detected(&bytes), || format!("byte {pos} xor {mask:#04x} went unnoticed"))?;
            tampers += 1;
        }
    }
    let outsider = <fedjudge::ledger::Ed25519 as fedjudge::ledger::SignatureScheme>::keygen(4242);
    let mut rejected = 0;
    for k in 1..chain.len() {
        let mut prefix = fedjudge::ledger::Chain::<fedjudge::ledger::Ed25519>::import_binary(&clean)
            .map_err(|e| e.to_string())?;
        prefix.blocks_mut().truncate(k);
        let block = &chain.blocks()[k];
        let signer = block.signer.unwrap();
        let wrong = &keys[(signer as usize + 1) % keys.len()];
        for key in [wrong, &outsider] {
            let forged = prefix.seal(block.payload.clone(), signer, key);
            ensure(prefix.append(forged).is_err(), || format!("forged block {k} accepted"))?;
            rejected += 1;
        }
    }
    Ok(format!("{tampers} single-byte tampers detected, {rejected} forged appends rejected"))
}

fn determinism() -> Check {
    let cfg = config(DETECTION);
    let a = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let b = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let csv = |o: &fedjudge::sim::ExperimentOutput| {
        let mut buf = Vec::new();
        write_csv(&mut buf, &o.records()).map(|_| buf)
    };
    let (ca, cb) = (csv(&a).map_err(|e| e.to_string())?, csv(&b).map_err(|e| e.to_string())?);
    ensure(ca == cb, || "metrics CSV differs between runs".into())?;
    for (x, y) in a.runs.iter().zip(&b.runs) {
        ensure(!x.chain_log.is_empty() && x.chain_log == y.chain_log, || {
            format!("chain export of seed {} differs", x.seed)
        })?;
    }
    Ok(format!("{} CSV bytes and {} chain logs identical", ca.len(), a.runs.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("encrypted tally equals plaintext sums", crypto_tally),
        ("strict majority acceptance", majority_rule),
        ("weighted averaging", fedavg_oracle),
        ("analytic gradients", gradient_check),
        ("isolation forest", isolation_forest),
        ("detection, 12 clients at 25% malicious", detection),
        ("robustness across malicious fractions", robustness),
        ("judge-creation scaling", scalability),
        ("ledger integrity", ledger_integrity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
