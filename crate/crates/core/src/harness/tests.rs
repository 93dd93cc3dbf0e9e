use std::io::Cursor;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::ci::CiConfig;
use crate::error::Error;
use crate::markov_blanket::{find_markov_blanket, CiBackend, MbConfig};
use crate::rng::seeded;

/// Probability that a random positive outscores a random negative, ties counted half.
fn mann_whitney(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn separating_scores_give_unit_auc() {
    let t = roc_sweep(&[true, true, false, false], &[0.9, 0.8, 0.1, 0.2]).unwrap();
    assert_eq!(t.auc, 1.0);
    assert_eq!(t.rows.len(), 4);
    assert_eq!(t.rows[0].threshold, 0.9);
    let last = t.rows.last().unwrap();
    assert_eq!((last.true_positive_rate, last.false_positive_rate), (1.0, 1.0));
}

#[test]
fn all_tied_scores_give_half() {
    let t = roc_sweep(&[true, false, true], &[0.3, 0.3, 0.3]).unwrap();
    assert_eq!(t.auc, 0.5);
    assert_eq!(t.rows.len(), 1);
}

#[test]
fn reversed_scores_mirror_the_auc() {
    let mut rng = seeded(4);
    let labels: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&l| rng.gen_range(0..20) as f64 + if l { 3.0 } else { 0.0 })
        .collect();
    let a = roc_sweep(&labels, &scores).unwrap().auc;
    let reversed: Vec<f64> = scores.iter().map(|s| -s).collect();
    let b = roc_sweep(&labels, &reversed).unwrap().auc;
    assert!((a + b - 1.0).abs() < 1e-12, "{a} + {b}");
    assert!(a > 0.6);
}

#[test]
fn shuffled_labels_average_half() {
    let mut rng = seeded(11);
    let mut labels: Vec<bool> = (0..40).map(|i| i < 20).collect();
    let scores: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let trials = 10_000;
    let mut total = 0.0;
    for _ in 0..trials {
        labels.shuffle(&mut rng);
        total += roc_sweep(&labels, &scores).unwrap().auc;
    }
    let mean = total / trials as f64;
    assert!((mean - 0.5).abs() < 0.02, "mean AUC {mean}");
}

#[test]
fn roc_input_errors() {
    assert!(matches!(roc_sweep(&[true, true], &[0.1, 0.2]), Err(Error::SingleClass)));
    assert!(matches!(roc_sweep(&[false], &[0.1]), Err(Error::SingleClass)));
    assert!(roc_sweep(&[true, false], &[0.1]).is_err());
    assert!(roc_sweep(&[true, false], &[0.1, f64::NAN]).is_err());
}

#[test]
fn roc_csv_layout() {
    let t = roc_sweep(&[true, false], &[1.0, 0.0]).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "threshold,tpr,fpr\n1,1,0\n0,1,1\n");
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count(
        pairs in prop::collection::vec((any::<bool>(), 0u8..12), 2..1000)
    ) {
        let labels: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let scores: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 4.0).collect();
        let t = roc_sweep(&labels, &scores).unwrap();
        prop_assert!((t.auc - mann_whitney(&labels, &scores)).abs() < 1e-9);
        for w in t.rows.windows(2) {
            prop_assert!(w[0].threshold > w[1].threshold);
            prop_assert!(w[0].true_positive_rate <= w[1].true_positive_rate);
            prop_assert!(w[0].false_positive_rate <= w[1].false_positive_rate);
        }
    }
}

fn ingest_str(csv: &str, window: usize, stride: usize) -> crate::error::Result<Ingested> {
    let cfg = IngestConfig {
        window,
        stride,
        ..IngestConfig::default()
    };
    ingest_timeseries(Cursor::new(csv.as_bytes()), &cfg)
}

#[test]
fn window_keeps_last_steps_in_time_order() {
    let csv = "id,t,a,label\nu,3,30,0\nu,1,10,0\nu,5,50,1\nu,2,20,0\nu,4,40,0\n";
    let out = ingest_str(csv, 3, 1).unwrap();
    assert_eq!(out.dataset.n(), 1);
    assert_eq!(out.dataset.features[0].row(0), &[30.0, 40.0, 50.0]);
    assert_eq!(out.dataset.target.row(0), &[1.0]);
    assert_eq!(out.feature_names, vec!["a".to_string()]);
    let strided = ingest_str(csv, 3, 2).unwrap();
    assert_eq!(strided.dataset.features[0].row(0), &[10.0, 30.0, 50.0]);
}

#[test]
fn short_histories_are_dropped() {
    let csv = "id,t,a,b,label\nu,0,1,2,0\nu,1,3,4,0\nu,2,5,6,3\nv,0,7,8,1\nv,1,9,10,1\n";
    let out = ingest_str(csv, 3, 1).unwrap();
    assert_eq!(out.entities, vec!["u".to_string()]);
    assert_eq!(out.dropped, vec!["v".to_string()]);
    assert_eq!(out.dataset.features[1].row(0), &[2.0, 4.0, 6.0]);
    assert_eq!(out.dataset.target.row(0), &[1.0]);
    assert!(ingest_str(csv, 4, 1).is_err());
}

#[test]
fn malformed_rows_report_their_line() {
    let err = ingest_str("id,t,a,label\nu,0,1,0\nu,1,oops,0\n", 1, 1).unwrap_err();
    assert!(matches!(err, Error::Malformed { line: 3, .. }), "{err}");
    let err = ingest_str("id,t,a,label\nu,0,1\n", 1, 1).unwrap_err();
    assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
    let err = ingest_str("id,time,a,label\nu,0,1,0\n", 1, 1).unwrap_err();
    assert!(matches!(err, Error::Malformed { line: 1, .. }), "{err}");
    assert!(ingest_str("id,t,label\nu,0,1\n", 1, 1).is_err());
    assert!(ingest_str("id,t,a,label\nu,0,1,0\n", 0, 1).is_err());
}

/// Entities with two AR(1) features; the terminal label thresholds feature `a` only.
fn ar1_csv(entities: usize, steps: usize, seed: u64) -> String {
    let mut rng = seeded(seed);
    let mut out = String::from("id,t,a,b,label\n");
    for e in 0..entities {
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for t in 0..steps {
            a = 0.8 * a + rng.sample::<f64, _>(StandardNormal);
            b = 0.8 * b + rng.sample::<f64, _>(StandardNormal);
            let noise: f64 = rng.sample(StandardNormal);
            let label = u8::from(t + 1 == steps && a + 0.5 * noise > 0.0);
            out.push_str(&format!("e{e},{t},{a},{b},{label}\n"));
        }
    }
    out
}

#[test]
fn blanket_of_ingested_series_finds_the_driving_feature() {
    let mut hits = 0;
    for seed in 0..10 {
        let out = ingest_str(&ar1_csv(400, 8, seed), 3, 1).unwrap();
        let cfg = MbConfig {
            delta: 1,
            backend: CiBackend::RawKnn,
            prune: true,
            ci: CiConfig {
                k_cmi: 20,
                num_permutations: 49,
                seed,
                ..CiConfig::default()
            },
        };
        let r = find_markov_blanket(&out.dataset, &cfg, None).unwrap();
        if r.selected.contains(&0) && !r.selected.contains(&1) {
            hits += 1;
        }
    }
    assert!(hits >= 8, "{hits}/10");
}

#[test]
fn spec_validation_and_defaults() {
    let spec = ExperimentSpec::default();
    assert!(spec.validate().is_ok());
    let json = serde_json::to_string(&spec).unwrap();
    let back: ExperimentSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back, spec);
    let partial: ExperimentSpec = serde_json::from_str(r#"{"kind": "ci_roc", "seeds": [3]}"#).unwrap();
    assert_eq!(partial.kind, ExperimentKind::CiRoc);
    assert_eq!(partial.ns, vec![2000]);
    for bad in [
        ExperimentSpec { seeds: vec![], ..ExperimentSpec::default() },
        ExperimentSpec { epsilons: vec![], ..ExperimentSpec::default() },
        ExperimentSpec { kind: ExperimentKind::CiRoc, backends: vec![], ..ExperimentSpec::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn mi_grid_rows_follow_grid_order() {
    let spec = ExperimentSpec {
        epsilons: vec![0.5, 0.1],
        ns: vec![300],
        seeds: vec![2, 1],
        mapped: false,
        ..ExperimentSpec::default()
    };
    let rows = run_mi_grid(&spec).unwrap();
    let keys: Vec<(f64, u64)> = rows.iter().map(|r| (r.epsilon, r.seed)).collect();
    assert_eq!(keys, vec![(0.5, 2), (0.5, 1), (0.1, 2), (0.1, 1)]);
    assert!(rows.iter().all(|r| r.nominal.is_none() && r.oracle > 0.0));
    assert!(rows[2].radius > rows[0].radius);
    assert_eq!(run_mi_grid(&spec).unwrap(), rows);
    let env = run_experiment(&spec).unwrap();
    assert_eq!(env["version"], VERSION);
    assert_eq!(env["spec"]["seeds"], serde_json::json!([2, 1]));
    assert_eq!(env["results"].as_array().unwrap().len(), 4);
}

#[test]
fn oracle_roc_is_perfect() {
    let spec = ExperimentSpec {
        kind: ExperimentKind::CiRoc,
        ns: vec![50],
        delta: 2,
        backends: vec![CiBackend::Oracle],
        ..ExperimentSpec::default()
    };
    let out = run_ci_roc(&spec).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].relations.len(), 96);
    assert_eq!(out[0].roc_p_value.as_ref().unwrap().auc, 1.0);
    assert_eq!(out[0].roc_statistic.as_ref().unwrap().auc, 1.0);
}

#[test]
fn raw_roc_statistic_only_skips_p_values() {
    let spec = ExperimentSpec {
        kind: ExperimentKind::CiRoc,
        ns: vec![300],
        delta: 1,
        backends: vec![CiBackend::RawKnn],
        scores: vec![RocScore::Statistic],
        ci: CiConfig {
            k_cmi: 10,
            ..CiConfig::default()
        },
        ..ExperimentSpec::default()
    };
    let out = run_ci_roc(&spec).unwrap();
    assert!(out[0].relations.iter().all(|r| r.p_value.is_none()));
    assert!(out[0].roc_p_value.is_none());
    let auc = out[0].roc_statistic.as_ref().unwrap().auc;
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn oracle_selection_is_exact() {
    let spec = ExperimentSpec {
        kind: ExperimentKind::MbSelect,
        ns: vec![20],
        seeds: vec![0, 1],
        backends: vec![CiBackend::Oracle],
        ..ExperimentSpec::default()
    };
    let rows = run_mb_select(&spec).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.exact && r.truth.iter().copied().eq([2, 4])));
}

#[test]
fn calibration_counts_rejections() {
    let spec = ExperimentSpec {
        kind: ExperimentKind::Calibrate,
        ns: vec![150],
        seeds: (0..6).collect(),
        ci: CiConfig {
            k_cmi: 10,
            num_permutations: 19,
            ..CiConfig::default()
        },
        ..ExperimentSpec::default()
    };
    let rows = run_calibrate(&spec).unwrap();
    assert_eq!(rows[0].trials, 6);
    assert_eq!(rows[0].p_values.len(), 6);
    let rejections = rows[0].p_values.iter().filter(|&&p| p <= 0.05).count();
    assert_eq!(rows[0].rejections, rejections);
    assert_eq!(rows[0].false_positive_rate, rejections as f64 / 6.0);
}
