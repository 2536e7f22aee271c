//! Cohort builders shared by the integration and acceptance targets.
#![allow(dead_code)]

use spirofair::cohort::{OutcomeSelector, Participant};
use spirofair::fairness_audit::{ScoreRecord, ScoreSet, ThresholdRule};
use spirofair::ref_engine::{CoefficientTable, GroupLabel, Sex, TableSet, LLN_Z};
use spirofair::scores::{score_participant, ScoreDefinition, POOLED_GROUP};
use spirofair::synth::{build_interpolated_table, generate, GroupSpec, OutcomeModel, OutcomeSpec, SynthSpec};

pub const PRIVILEGED: &str = "White";
pub const DISADVANTAGED: &str = "Black";
/// Median ratio of the disadvantaged group's physiology to the privileged one.
pub const GAP_SCALE: f64 = 0.85;

pub fn label(s: &str) -> GroupLabel {
    GroupLabel::new(s)
}

pub fn group(name: &str, n: usize, median_scale: f64, deficit_mean: f64, deficit_sd: f64) -> GroupSpec {
    GroupSpec { label: label(name), n, deficit_mean, deficit_sd, median_scale }
}

/// Two groups with per-group ideal physiology, no deficit, and the given outcomes.
pub fn gap_spec(seed: u64, n_each: usize, outcomes: Vec<OutcomeSpec>) -> SynthSpec {
    let groups = vec![group(PRIVILEGED, n_each, 1.0, 0.0, 0.0), group(DISADVANTAGED, n_each, GAP_SCALE, 0.0, 0.0)];
    let mut spec = SynthSpec::with_builtin_tables(groups, seed).unwrap();
    spec.outcomes = outcomes;
    spec
}

pub fn cohort(spec: &SynthSpec) -> Vec<Participant> {
    let (people, _) = generate(spec).unwrap();
    people.into_iter().map(Participant::from).collect()
}

/// Adds pooled tables, exactly interpolated at `phi` between the
/// disadvantaged and privileged tables, under the pooled label.
pub fn with_interpolated_pooled(tables: &TableSet, phi: f64) -> TableSet {
    let mut out = tables.clone();
    for sex in Sex::ALL {
        let k = tables.get(&label(DISADVANTAGED), sex).unwrap();
        let p = tables.get(&label(PRIVILEGED), sex).unwrap();
        let t = build_interpolated_table(k, p, phi, format!("pooled_{sex}"), label(POOLED_GROUP)).unwrap();
        out.insert(t).unwrap();
    }
    out
}

/// Adds constant-median naive tables.
pub fn with_naive(tables: &TableSet, median: f64) -> TableSet {
    let mut out = tables.clone();
    for sex in Sex::ALL {
        out.insert(CoefficientTable::naive(format!("naive_{sex}"), sex, median, 1.0, 0.15).unwrap()).unwrap();
    }
    out
}

pub fn lf_outcome(name: &str, intercept: f64, slope: f64) -> OutcomeSpec {
    OutcomeSpec { name: name.into(), model: OutcomeModel::LogisticLf { intercept, slope } }
}

pub fn age_outcome(name: &str, intercept: f64, slope: f64) -> OutcomeSpec {
    OutcomeSpec { name: name.into(), model: OutcomeModel::LogisticAge { intercept, slope } }
}

pub fn null_outcome(name: &str, rate: f64) -> OutcomeSpec {
    OutcomeSpec { name: name.into(), model: OutcomeModel::Independent { rate } }
}

pub fn records(
    people: &[Participant],
    tables: &TableSet,
    def: &str,
    outcome: Option<&str>,
) -> Vec<ScoreRecord> {
    let def: ScoreDefinition = def.parse().unwrap();
    let selector = outcome.map(OutcomeSelector::new);
    people
        .iter()
        .map(|p| {
            let v = score_participant(p, tables, &def, LLN_Z).unwrap();
            ScoreRecord {
                score: v.score,
                group: p.group.clone().unwrap(),
                outcome: selector.as_ref().and_then(|s| p.outcome(s)),
                below_lln: v.below_lln,
            }
        })
        .collect()
}

pub fn score_set(people: &[Participant], tables: &TableSet, def: &str, outcome: &str, threshold: ThresholdRule) -> ScoreSet {
    ScoreSet { name: def.into(), records: records(people, tables, def, Some(outcome)), threshold }
}

/// Death risk falling with measured FEV1; about 15% prevalence overall.
pub fn mortality() -> OutcomeSpec {
    lf_outcome("death", 3.0, -1.5)
}
