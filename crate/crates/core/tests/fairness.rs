mod common;

use common::*;
use spirofair::fairness_audit::{
    impossibility_panel, independence_check, render_panel, separation_check, sufficiency_check, AuditConfig,
    Criterion, PanelConfig, ThresholdRule, Verdict,
};
use spirofair::scores::POOLED_GROUP;
use spirofair::synth::pool_table_set;

fn config(seed: u64) -> AuditConfig {
    let mut c = AuditConfig::new(seed);
    c.replicates = 200;
    c
}

#[test]
fn race_specific_z_is_independent_of_group() {
    let spec = gap_spec(21, 10_000, vec![]);
    let people = cohort(&spec);
    let recs = records(&people, &spec.tables, "gli2012", None);
    let r = independence_check(&recs, "gli2012", &label(PRIVILEGED), &label(DISADVANTAGED), 0.02, &config(1)).unwrap();
    assert!(r.statistic.unwrap().abs() < 0.02, "{r:?}");
    assert_eq!(r.verdict, Some(Verdict::Consistent));
    let (lo, hi) = r.ci.unwrap();
    assert!(lo < hi);
}

#[test]
fn pooled_z_gap_matches_first_order_prediction() {
    let spec = gap_spec(22, 10_000, vec![]);
    let people = cohort(&spec);
    let mut tables = spec.tables.clone();
    let weights = [(label(DISADVANTAGED), 0.5), (label(PRIVILEGED), 0.5)];
    for t in pool_table_set(&spec.tables, &weights, &label(POOLED_GROUP)).unwrap().iter() {
        tables.insert(t.clone()).unwrap();
    }
    let recs = records(&people, &tables, "gliglobal", None);
    let r = independence_check(&recs, "gliglobal", &label(PRIVILEGED), &label(DISADVANTAGED), 0.02, &config(2)).unwrap();
    assert_eq!(r.verdict, Some(Verdict::Violated));

    // With L = 1, z = (LF / M - 1) / S, so the expected difference between
    // the groups is (M_p - M_k) / (M_pooled S), averaged over covariates.
    let mut expected = 0.0;
    for p in &people {
        let mut x = p.demographics().unwrap();
        x.group = label(PRIVILEGED);
        let mp = tables.get(&x.group, x.sex).unwrap().predict(&x).unwrap().median;
        let mk = tables.get(&label(DISADVANTAGED), x.sex).unwrap().predict(&x).unwrap().median;
        let g = tables.get(&label(POOLED_GROUP), x.sex).unwrap().predict(&x).unwrap();
        assert_eq!(g.l_param, 1.0);
        expected += (mp - mk) / (g.median * g.s_param);
    }
    expected /= people.len() as f64;
    let observed = -r.details["mean_difference"];
    assert!((observed - expected).abs() < 0.05, "observed {observed}, expected {expected}");
}

#[test]
fn race_specific_lln_threshold_separates_error_rates() {
    // Rare outcome, steep in LF: deaths concentrate at low absolute LF,
    // which an own-group LLN misses more often in the lower-LF group.
    let spec = gap_spec(23, 10_000, vec![lf_outcome("death", 6.0, -4.0)]);
    let people = cohort(&spec);
    let recs = records(&people, &spec.tables, "gli2012", Some("death"));
    let r = separation_check(&recs, "gli2012", ThresholdRule::BelowLln, 0.05, &config(3)).unwrap();
    assert_eq!(r.verdict, Some(Verdict::Violated), "{r:?}");
    // The disadvantaged group has more deaths at any given z, so more of
    // them go unflagged.
    assert!(r.details[&format!("fnr_{DISADVANTAGED}")] > r.details[&format!("fnr_{PRIVILEGED}")]);
}

#[test]
fn sufficiency_tracks_where_group_information_lives() {
    let spec = gap_spec(24, 10_000, vec![mortality(), null_outcome("noise", 0.2)]);
    let people = cohort(&spec);
    let raw = records(&people, &spec.tables, "raw", Some("death"));
    let r = sufficiency_check(&raw, "raw", Some(&label(PRIVILEGED)), &config(4)).unwrap();
    assert_eq!(r.verdict, Some(Verdict::Consistent), "{r:?}");

    let z = records(&people, &spec.tables, "gli2012", Some("death"));
    let r = sufficiency_check(&z, "gli2012", Some(&label(PRIVILEGED)), &config(4)).unwrap();
    assert_eq!(r.verdict, Some(Verdict::Violated), "{r:?}");
    assert!(r.statistic.unwrap() > 0.0, "disadvantaged group carries excess risk at equal z");
    assert!(r.details["stratified_rate_gap"] > 0.0);

    let noise = records(&people, &spec.tables, "gli2012", Some("noise"));
    let r = sufficiency_check(&noise, "gli2012", None, &config(4)).unwrap();
    assert_eq!(r.verdict, Some(Verdict::Consistent), "{r:?}");
    assert!(r.statistic.unwrap().abs() < 0.1);
}

#[test]
fn panel_shows_the_trade_off_and_its_absence() {
    let spec = gap_spec(25, 10_000, vec![mortality()]);
    let people = cohort(&spec);
    let sets = vec![
        score_set(&people, &spec.tables, "gli2012", "death", ThresholdRule::BelowLln),
        score_set(&people, &spec.tables, "raw", "death", ThresholdRule::ScoreBelow(2.0)),
    ];
    let mut cfg = PanelConfig::new(label(PRIVILEGED), label(DISADVANTAGED), 5);
    cfg.audit.replicates = 200;
    let panel = impossibility_panel(&sets, &cfg).unwrap();
    let v = |s: &str, c| panel.get(s, c).unwrap().verdict;
    assert_eq!(v("gli2012", Criterion::Independence), Some(Verdict::Consistent));
    assert_eq!(v("gli2012", Criterion::Sufficiency), Some(Verdict::Violated));
    assert_eq!(v("raw", Criterion::Independence), Some(Verdict::Violated));
    assert_eq!(v("raw", Criterion::Sufficiency), Some(Verdict::Consistent));
    let text = render_panel(&panel);
    assert_eq!(text.lines().count(), 3);

    // No gap, outcome noise only: nothing binds.
    let groups = vec![group(PRIVILEGED, 10_000, 1.0, 0.0, 0.0), group(DISADVANTAGED, 10_000, 1.0, 0.0, 0.0)];
    let mut spec = spirofair::synth::SynthSpec::with_builtin_tables(groups, 26).unwrap();
    spec.outcomes = vec![null_outcome("noise", 0.3)];
    let people = cohort(&spec);
    let sets = vec![score_set(&people, &spec.tables, "gli2012", "noise", ThresholdRule::BelowLln)];
    let panel = impossibility_panel(&sets, &cfg).unwrap();
    for r in panel.reports() {
        assert_eq!(r.verdict, Some(Verdict::Consistent), "{r:?}");
    }
}

#[test]
fn bootstrap_is_thread_count_invariant() {
    let spec = gap_spec(27, 2_000, vec![mortality()]);
    let people = cohort(&spec);
    let sets = vec![
        score_set(&people, &spec.tables, "gli2012", "death", ThresholdRule::BelowLln),
        score_set(&people, &spec.tables, "raw", "death", ThresholdRule::ScoreBelow(2.0)),
    ];
    let mut cfg = PanelConfig::new(label(PRIVILEGED), label(DISADVANTAGED), 6);
    cfg.audit.replicates = 150;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| impossibility_panel(&sets, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
