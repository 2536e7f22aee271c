//! Discrimination of reference-derived scores against clinical outcomes:
//! Mann-Whitney AUC, stratified percentile-bootstrap intervals, and
//! score × outcome panels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{OutcomeSelector, Participant};
use crate::ref_engine::TableSet;
use crate::rng;
use crate::scores::{score_participant, ScoreDefinition};
use crate::stats;

pub const DEFAULT_REPLICATES: usize = 1000;
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("AUC needs at least one positive and one negative ({n_pos} positive, {n_neg} negative)")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("score {0} is not a finite number")]
    NonFinite(f64),
    #[error("at least {MIN_REPLICATES} bootstrap replicates are required, got {0}")]
    TooFewReplicates(usize),
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let n_pos = labels.iter().filter(|&&l| l).count();
    (n_pos, labels.len() - n_pos)
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(bad));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass { n_pos, n_neg });
    }
    Ok((n_pos, n_neg))
}

/// `P(score_pos > score_neg) + P(tie) / 2`, via midranks in O(n log n).
///
/// Ranks are accumulated doubled in integers, so the result is the exact
/// ratio `(2 * concordant + ties) / (2 * n_pos * n_neg)` within one ulp.
/// The larger of the ratio and its complement is rounded and the other
/// derived by an exact subtraction, which makes `auc(s, !y) == 1.0 - auc(s, y)`
/// hold bit for bit.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Midrank of 1-based ranks start+1..=end, doubled.
        let doubled_midrank = (start + 1 + end) as u128;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        doubled_rank_sum += doubled_midrank * positives;
        start = end;
    }
    let n_pos = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    let pairs = 2 * n_pos * n_neg as u128;
    let major = doubled_u.max(pairs - doubled_u);
    let a = major as f64 / pairs as f64;
    Ok(if doubled_u == major { a } else { 1.0 - a })
}

/// Percentile interval over resamples that draw positives and negatives
/// separately, preserving class counts. Replicate `r` uses stream `r`
/// of `seed`, so the interval does not depend on thread count.
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[bool],
    replicates: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64), EvalError> {
    check(scores, labels)?;
    if replicates < MIN_REPLICATES {
        return Err(EvalError::TooFewReplicates(replicates));
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut resample_labels = vec![true; pos.len()];
    resample_labels.extend(std::iter::repeat_n(false, neg.len()));

    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            use rand::Rng;
            let mut rng = rng::stream(seed, r as u64);
            let mut sample = Vec::with_capacity(pos.len() + neg.len());
            sample.extend((0..pos.len()).map(|_| pos[rng.random_range(0..pos.len())]));
            sample.extend((0..neg.len()).map(|_| neg[rng.random_range(0..neg.len())]));
            auc(&sample, &resample_labels).expect("both classes present by construction")
        })
        .collect();
    Ok(stats::percentile_interval(&values, level).expect("replicates are finite"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Higher scores predict the positive outcome.
    HigherPositive,
    /// Lower scores predict the positive outcome; AUC is of the negated score.
    LowerPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationPolicy {
    /// Negate every score in the panel if the mean raw AUC is below 0.5.
    Auto,
    Fixed(Orientation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub outcome_name: String,
    pub score_name: String,
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Participants without a score or a resolvable outcome.
    pub n_excluded: usize,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCell {
    pub score_name: String,
    pub outcome_name: String,
    /// Exactly one of `result` and `error` is set.
    pub result: Option<EvalResult>,
    pub error: Option<String>,
}

impl PanelCell {
    pub fn outcome(&self) -> Result<&EvalResult, &str> {
        match (&self.result, &self.error) {
            (Some(r), _) => Ok(r),
            (None, Some(e)) => Err(e),
            (None, None) => Err("no result"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPanel {
    pub orientation: Orientation,
    pub cells: Vec<PanelCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub orientation: OrientationPolicy,
    pub lln_z: f64,
}

impl PanelConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            seed,
            level: 0.95,
            orientation: OrientationPolicy::Auto,
            lln_z: crate::ref_engine::LLN_Z,
        }
    }
}

/// Score and label columns for one panel cell, dropping participants
/// missing either.
pub struct CellData {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub n_excluded: usize,
}

fn cell_data(scores: &[Option<f64>], labels: &[Option<bool>]) -> CellData {
    let mut d = CellData { scores: vec![], labels: vec![], n_excluded: 0 };
    for (s, l) in scores.iter().zip(labels) {
        match (s, l) {
            (Some(s), Some(l)) => {
                d.scores.push(*s);
                d.labels.push(*l);
            }
            _ => d.n_excluded += 1,
        }
    }
    d
}

/// Evaluates every (score column × outcome column) pair.
pub fn evaluate_columns(
    scores: &[(String, Vec<Option<f64>>)],
    outcomes: &[(String, Vec<Option<bool>>)],
    config: &PanelConfig,
) -> EvalPanel {
    let cells: Vec<(usize, &String, &String, CellData)> = scores
        .iter()
        .flat_map(|(sname, s)| outcomes.iter().map(move |(oname, o)| (sname, s, oname, o)))
        .enumerate()
        .map(|(i, (sname, s, oname, o))| (i, sname, oname, cell_data(s, o)))
        .collect();

    let orientation = match config.orientation {
        OrientationPolicy::Fixed(o) => o,
        OrientationPolicy::Auto => {
            let raw: Vec<f64> = cells.iter().filter_map(|c| auc(&c.3.scores, &c.3.labels).ok()).collect();
            match stats::mean(&raw) {
                Some(m) if m < 0.5 => Orientation::LowerPositive,
                _ => Orientation::HigherPositive,
            }
        }
    };

    let cells = cells
        .into_par_iter()
        .map(|(i, sname, oname, data)| {
            let oriented: Vec<f64> = match orientation {
                Orientation::HigherPositive => data.scores.clone(),
                Orientation::LowerPositive => data.scores.iter().map(|s| -s).collect(),
            };
            let result = (|| {
                let a = auc(&oriented, &data.labels)?;
                let seed = rng::derive_seed(config.seed, i as u64);
                let (lo, hi) = bootstrap_ci(&oriented, &data.labels, config.replicates, seed, config.level)?;
                let (n_pos, n_neg) = class_counts(&data.labels);
                Ok::<_, EvalError>(EvalResult {
                    outcome_name: oname.clone(),
                    score_name: sname.clone(),
                    auc: a,
                    // Percentile intervals can exclude the point estimate in
                    // skewed resampling distributions; widen to contain it.
                    ci_low: lo.min(a),
                    ci_high: hi.max(a),
                    n_pos,
                    n_neg,
                    n_excluded: data.n_excluded,
                    orientation,
                })
            })();
            let (result, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            PanelCell { score_name: sname.clone(), outcome_name: oname.clone(), result, error }
        })
        .collect();
    EvalPanel { orientation, cells }
}

/// Scores the cohort under each definition and evaluates against each
/// outcome. Cells that fail carry their error; the rest of the panel is
/// still computed.
pub fn evaluate_panel(
    participants: &[Participant],
    tables: &TableSet,
    definitions: &[ScoreDefinition],
    outcomes: &[OutcomeSelector],
    config: &PanelConfig,
) -> EvalPanel {
    let score_cols: Vec<(String, Vec<Option<f64>>)> = definitions
        .iter()
        .map(|d| {
            let col = participants
                .iter()
                .map(|p| score_participant(p, tables, d, config.lln_z).ok().map(|v| v.score))
                .collect();
            (d.name.clone(), col)
        })
        .collect();
    let outcome_cols: Vec<(String, Vec<Option<bool>>)> = outcomes
        .iter()
        .map(|o| (o.to_string(), participants.iter().map(|p| p.outcome(o)).collect()))
        .collect();
    evaluate_columns(&score_cols, &outcome_cols, config)
}
