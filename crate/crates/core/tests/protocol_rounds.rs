use fedjudge::crypto::{ModPGroup, PrimeOrderGroup, Ristretto};
use fedjudge::ledger::{Payload, Verdict};
use fedjudge::protocol::{ClientBehavior, Federation, ScreeningFault};
use fedjudge::sim::experiment::{behaviors_for, build_federation};
use fedjudge::sim::{run_experiment, ExperimentConfig, GroupChoice};

fn small(n_clients: usize, malicious_fraction: f64) -> ExperimentConfig {
    ExperimentConfig {
        n_clients,
        malicious_fraction,
        group: GroupChoice::Toy,
        ..ExperimentConfig::default()
    }
}

fn count_kind<G: PrimeOrderGroup>(fed: &Federation<G>, pick: fn(&Payload) -> bool) -> usize {
    fed.chain().blocks().iter().filter(|b| pick(&b.payload)).count()
}

#[test]
fn silent_and_forging_clients_abstain() {
    let cfg = small(5, 0.2);
    let (mut fed, malicious) = build_federation(&cfg, 3, ModPGroup::toy()).unwrap();
    let mut behaviors = behaviors_for(&cfg, &malicious, 1);
    let honest: Vec<usize> = (0..5).filter(|i| !malicious.contains(i)).collect();
    behaviors[honest[0]].fault = ScreeningFault::Silent;
    behaviors[honest[1]].fault = ScreeningFault::BadSignature;
    let report = fed.run_round(&behaviors).unwrap();

    let mut expected_abstained = vec![honest[0] as u32, honest[1] as u32];
    expected_abstained.sort_unstable();
    assert_eq!(report.abstained, expected_abstained);
    let verdicts = report.verdicts.clone().unwrap();
    for (k, &total) in report.vote_totals.iter().enumerate() {
        let expected = if verdicts[k] == 1 { 3 } else { 0 };
        assert_eq!(total, expected, "update {k}");
    }
    let accepted: Vec<u32> = (0..5).filter(|&k| verdicts[k] == 1).map(|k| k as u32).collect();
    assert_eq!(report.accepted, accepted);
    assert_eq!(count_kind(&fed, |p| matches!(p, Payload::ScreeningVoteList { .. })), 3);
    assert_eq!(fed.chain().verify(), Verdict::Valid);
}

#[test]
fn empty_accepted_set_keeps_the_global_model() {
    let mut cfg = small(4, 0.0);
    cfg.judge.forest.score_threshold = 0.0;
    let (mut fed, _) = build_federation(&cfg, 1, ModPGroup::toy()).unwrap();
    let before = fed.state().global.clone();
    let report = fed.run_round(&[ClientBehavior::honest(); 4]).unwrap();
    assert!(report.accepted.is_empty());
    assert!(report.aggregation_failed);
    assert_eq!(report.verdicts.unwrap(), vec![-1; 4]);
    assert_eq!(fed.state().global, before);
    assert_eq!(fed.state().round, 1);
    match &fed.chain().blocks().last().unwrap().payload {
        Payload::AggregationResult { accepted, param_digest, .. } => {
            assert!(accepted.is_empty());
            assert_eq!(*param_digest, before.digest());
        }
        other => panic!("last block is {other:?}"),
    }
}

fn election_matches_plaintext<G: PrimeOrderGroup>(group: G) {
    let cfg = small(3, 0.0);
    let (mut fed, _) = build_federation(&cfg, 2, group).unwrap();
    let votes = vec![vec![0, 1, 1], vec![0, 1, 0], vec![1, 1, 1]];
    let start = fed.chain().len();
    assert_eq!(fed.judge_consensus(&votes).unwrap(), (1, vec![1, 3, 2]));
    assert_eq!(fed.chain().len(), start + 6);
    assert_eq!(count_kind(&fed, |p| matches!(p, Payload::JudgeBallotList { .. })), 3);
    assert_eq!(count_kind(&fed, |p| matches!(p, Payload::DecryptionShareSet { .. })), 3);

    let all = vec![vec![1; 3]; 3];
    assert_eq!(fed.judge_consensus(&all).unwrap(), (0, vec![3, 3, 3]));
    assert!(fed.judge_consensus(&votes[..2]).is_err());
    assert!(fed.judge_consensus(&[vec![2, 0, 0], vec![0; 3], vec![0; 3]]).is_err());
    assert_eq!(fed.chain().verify(), Verdict::Valid);
}

#[test]
fn election_over_modp_matches_plaintext() {
    election_matches_plaintext(ModPGroup::p62());
}

#[test]
fn election_over_ristretto_matches_plaintext() {
    election_matches_plaintext(Ristretto);
}

#[test]
fn elected_judge_is_on_chain() {
    let cfg = small(4, 0.25);
    let (mut fed, malicious) = build_federation(&cfg, 5, ModPGroup::toy()).unwrap();
    let report = fed.run_round(&behaviors_for(&cfg, &malicious, 1)).unwrap();
    let election = report.election.unwrap();
    let digest = fed.state().judge_digest.unwrap();
    assert_eq!(fed.judge().unwrap().digest(), digest);
    let posted = fed.chain().blocks().iter().find_map(|b| match &b.payload {
        Payload::JudgeElection { winner, totals, forest_digest } => Some((*winner, totals.clone(), *forest_digest)),
        _ => None,
    });
    assert_eq!(posted, Some((election.winner, election.totals, digest)));

    let second = fed.run_round(&behaviors_for(&cfg, &malicious, 2)).unwrap();
    assert!(second.election.is_none());
    assert_eq!(fed.state().judge_digest, Some(digest));
    assert_eq!(count_kind(&fed, |p| matches!(p, Payload::JudgeElection { .. })), 1);
}

#[test]
fn colluders_cannot_override_honest_screening() {
    let mut cfg = small(7, 0.3);
    cfg.collude = true;
    cfg.flip_fraction = 1.0;
    for seed in 1..=3 {
        let (mut fed, malicious) = build_federation(&cfg, seed, ModPGroup::toy()).unwrap();
        let report = fed.run_round(&behaviors_for(&cfg, &malicious, 1)).unwrap();
        let verdicts = report.verdicts.unwrap();
        let accepted: Vec<u32> = (0..7).filter(|&k| verdicts[k] == 1).map(|k| k as u32).collect();
        assert_eq!(report.accepted, accepted, "seed {seed}");
    }
}

#[test]
fn unscreened_rounds_accept_everyone() {
    let mut cfg = small(4, 0.25);
    cfg.screening = false;
    let (mut fed, malicious) = build_federation(&cfg, 1, ModPGroup::toy()).unwrap();
    let report = fed.run_round(&behaviors_for(&cfg, &malicious, 1)).unwrap();
    assert_eq!(report.accepted, vec![0, 1, 2, 3]);
    assert!(report.verdicts.is_none() && report.election.is_none());
    assert!(fed.judge().is_none());
    assert_eq!(count_kind(&fed, |p| matches!(p, Payload::ScreeningVoteList { .. })), 0);
}

#[test]
fn mismatched_behaviors_are_rejected() {
    let cfg = small(4, 0.0);
    let (mut fed, _) = build_federation(&cfg, 1, ModPGroup::toy()).unwrap();
    assert!(fed.run_round(&[ClientBehavior::honest(); 3]).is_err());
    let mut attack = vec![ClientBehavior::honest(); 4];
    attack[0].attack = true;
    assert!(fed.run_round(&attack).is_err());
    assert_eq!(fed.state().round, 0);
}

#[test]
fn fully_flipped_client_is_rejected() {
    let cfg = ExperimentConfig {
        flip_fraction: 1.0,
        rounds: 1,
        seeds: (1..=10).collect(),
        ..small(4, 0.25)
    };
    let out = run_experiment(&cfg).unwrap();
    let rejected = out
        .records()
        .iter()
        .filter(|r| r.confusion.unwrap().tp == 1)
        .count();
    assert!(rejected >= 8, "rejected in {rejected} of 10 runs");
}

#[test]
fn clean_federation_stays_accurate() {
    let cfg = ExperimentConfig {
        seeds: (1..=10).collect(),
        ..small(12, 0.0)
    };
    let out = run_experiment(&cfg).unwrap();
    assert!(out.first_error().is_none());
    let mut fp = 0;
    let mut negatives = 0;
    for run in &out.runs {
        for r in &run.records {
            let c = r.confusion.unwrap();
            assert!(r.tpr().is_none());
            fp += c.fp;
            negatives += c.fp + c.tn;
        }
        let acc: Vec<f64> = run.reports.iter().map(|r| r.global_accuracy).collect();
        for w in acc.windows(2) {
            assert!(w[1] >= w[0] - 0.02, "seed {}: accuracy {acc:?}", run.seed);
        }
    }
    let fpr = fp as f64 / negatives as f64;
    assert!(fpr <= 0.2, "false positive rate {fpr}");
}

#[test]
fn attack_schedule_sets_the_ground_truth() {
    let cfg = ExperimentConfig {
        attack_schedule: vec![false, true],
        rounds: 3,
        ..small(8, 0.25)
    };
    let out = run_experiment(&cfg).unwrap();
    let positives: Vec<usize> = out
        .records()
        .iter()
        .map(|r| r.confusion.map_or(0, |c| c.tp + c.fn_))
        .collect();
    assert_eq!(positives, vec![0, 2, 0]);
}
