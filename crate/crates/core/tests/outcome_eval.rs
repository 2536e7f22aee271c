mod common;

use common::*;
use rand::Rng;
use spirofair::cohort::OutcomeSelector;
use spirofair::outcome_eval::{auc, bootstrap_ci, evaluate_panel, Orientation, PanelConfig};
use spirofair::rng;
use spirofair::scores::ScoreDefinition;

fn brute_force(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u64;
    let (mut np, mut nn) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            np += 1;
        } else {
            nn += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * np * nn) as f64
}

/// Random instance with heavy ties (scores on a coarse lattice).
fn instance(index: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = rng::stream(99, index);
    let n = r.random_range(2..=200);
    let levels = r.random_range(1..=20);
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| r.random_range(0..levels) as f64 * 0.25 - 1.0).collect();
    (scores, labels)
}

#[test]
fn fast_auc_equals_brute_force() {
    for i in 0..1000 {
        let (s, l) = instance(i);
        let fast = auc(&s, &l).unwrap();
        assert!((fast - brute_force(&s, &l)).abs() < 1e-12, "instance {i}");
    }
}

#[test]
fn label_flip_and_monotone_invariance() {
    for i in 0..200 {
        let (s, l) = instance(i);
        let a = auc(&s, &l).unwrap();
        let flipped: Vec<bool> = l.iter().map(|x| !x).collect();
        assert_eq!(auc(&s, &flipped).unwrap(), 1.0 - a);
        let e: Vec<f64> = s.iter().map(|x| x.exp()).collect();
        let affine: Vec<f64> = s.iter().map(|x| 3.0 * x + 7.0).collect();
        assert_eq!(auc(&e, &l).unwrap(), a);
        assert_eq!(auc(&affine, &l).unwrap(), a);
    }
}

#[test]
fn interval_width_shrinks_with_root_n() {
    let width = |n: usize| {
        let mut r = rng::stream(5, n as u64);
        let labels: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&y| if y { 0.8 } else { 0.0 } + r.random_range(-1.0..1.0f64) + r.random_range(-1.0..1.0f64))
            .collect();
        let (lo, hi) = bootstrap_ci(&scores, &labels, 1000, 17, 0.95).unwrap();
        hi - lo
    };
    let ratio = width(8000) / width(2000);
    assert!((ratio - 0.5).abs() < 0.15, "width ratio {ratio}");
}

#[test]
fn naive_score_is_confounded_by_age() {
    let spec = gap_spec(31, 5_000, vec![age_outcome("death", -7.0, 0.08)]);
    let people = cohort(&spec);
    let tables = with_naive(&spec.tables, 3.0);
    let defs: Vec<ScoreDefinition> = ["gli2012", "naive"].iter().map(|s| s.parse().unwrap()).collect();
    let mut cfg = PanelConfig::new(3);
    cfg.replicates = 200;
    let panel = evaluate_panel(&people, &tables, &defs, &[OutcomeSelector::new("death")], &cfg);
    assert_eq!(panel.orientation, Orientation::LowerPositive);
    let get = |n: &str| panel.cells.iter().find(|c| c.score_name == n).unwrap().outcome().unwrap().clone();
    let (adjusted, naive) = (get("gli2012"), get("naive"));
    assert!(naive.auc - adjusted.auc >= 0.05, "naive {} adjusted {}", naive.auc, adjusted.auc);
    assert!((adjusted.auc - 0.5).abs() < 0.03);
    for r in [&adjusted, &naive] {
        assert!(r.ci_low <= r.auc && r.auc <= r.ci_high);
        assert_eq!(r.n_pos + r.n_neg + r.n_excluded, people.len());
    }
}

#[test]
fn panel_records_cell_errors_and_continues() {
    let spec = gap_spec(32, 200, vec![null_outcome("never", 0.0), mortality()]);
    let people = cohort(&spec);
    let defs: Vec<ScoreDefinition> = ["gli2012", "gliglobal"].iter().map(|s| s.parse().unwrap()).collect();
    let outcomes = [OutcomeSelector::new("never"), OutcomeSelector::new("death")];
    let mut cfg = PanelConfig::new(4);
    cfg.replicates = 100;
    let panel = evaluate_panel(&people, &spec.tables, &defs, &outcomes, &cfg);
    assert_eq!(panel.cells.len(), 4);
    let ok: Vec<_> = panel.cells.iter().filter(|c| c.outcome().is_ok()).collect();
    // `never` has one class; `gliglobal` tables are absent.
    assert_eq!(ok.len(), 1);
    assert_eq!((ok[0].score_name.as_str(), ok[0].outcome_name.as_str()), ("gli2012", "death"));
}
