//! Fairness audits of score/group/outcome records: independence (S ⊥ A),
//! separation (S ⊥ A | Y), sufficiency (Y ⊥ A | S), and the panel that
//! shows them trading off against each other.

mod logistic;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use logistic::{fit_logistic, FitError, LogisticFit, LogisticOptions};

use crate::ref_engine::GroupLabel;
use crate::{rng, stats};

pub const DEFAULT_INDEPENDENCE_TOLERANCE: f64 = 0.02;
pub const DEFAULT_SEPARATION_TOLERANCE: f64 = 0.05;
pub const DEFAULT_MIN_GROUP: usize = 30;
pub const DEFAULT_AUDIT_REPLICATES: usize = 500;
/// Above this share of failed bootstrap refits the sufficiency interval is
/// not trusted and no verdict is given.
const MAX_FAILED_REFITS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub score: f64,
    pub group: GroupLabel,
    pub outcome: Option<bool>,
    pub below_lln: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Independence,
    Separation,
    Sufficiency,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Independence, Criterion::Separation, Criterion::Sufficiency];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Independence => "independence",
            Criterion::Separation => "separation",
            Criterion::Sufficiency => "sufficiency",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independence" => Ok(Criterion::Independence),
            "separation" => Ok(Criterion::Separation),
            "sufficiency" => Ok(Criterion::Sufficiency),
            other => Err(format!("unknown criterion `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Violated => "violated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub criterion: Criterion,
    pub score_name: String,
    pub statistic_name: String,
    pub statistic: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub tolerance: Option<f64>,
    /// `None` when the check could not reach a verdict (see `notes`).
    pub verdict: Option<Verdict>,
    pub n_per_group: BTreeMap<GroupLabel, usize>,
    pub details: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl AuditReport {
    fn new(criterion: Criterion, score_name: &str, statistic_name: &str) -> Self {
        Self {
            criterion,
            score_name: score_name.to_string(),
            statistic_name: statistic_name.to_string(),
            statistic: None,
            ci: None,
            tolerance: None,
            verdict: None,
            n_per_group: BTreeMap::new(),
            details: BTreeMap::new(),
            notes: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub min_group: usize,
    pub logistic: LogisticOptionsConfig,
}

/// Serializable mirror of [`LogisticOptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptionsConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl From<LogisticOptionsConfig> for LogisticOptions {
    fn from(c: LogisticOptionsConfig) -> Self {
        LogisticOptions { max_iter: c.max_iter, tol: c.tol }
    }
}

impl AuditConfig {
    pub fn new(seed: u64) -> Self {
        let d = LogisticOptions::default();
        Self {
            replicates: DEFAULT_AUDIT_REPLICATES,
            seed,
            level: 0.95,
            min_group: DEFAULT_MIN_GROUP,
            logistic: LogisticOptionsConfig { max_iter: d.max_iter, tol: d.tol },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("group `{group}` has {n} usable records; at least {min} required")]
    InsufficientGroup { group: GroupLabel, n: usize, min: usize },
    #[error("fewer than two groups with at least {min} usable records")]
    TooFewGroups { min: usize },
    #[error("the two compared groups must differ")]
    SameGroup,
    #[error("no record carries an outcome")]
    NoOutcomes,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("at least one bootstrap replicate is required")]
    NoReplicates,
    #[error("a panel needs at least one score definition")]
    EmptyPanel,
}

fn check_finite(records: &[&ScoreRecord]) -> Result<(), AuditError> {
    match records.iter().find(|r| !r.score.is_finite()) {
        Some(r) => Err(AuditError::NonFinite(r.score)),
        None => Ok(()),
    }
}

/// Indices grouped by label, in label order.
fn strata<'a>(records: &[&'a ScoreRecord]) -> BTreeMap<&'a GroupLabel, Vec<usize>> {
    let mut m: BTreeMap<&GroupLabel, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        m.entry(&r.group).or_default().push(i);
    }
    m
}

/// Runs `stat` over `replicates` resamples drawn with replacement within
/// each stratum. Replicate `r` uses stream `r` of `seed`.
fn stratified_bootstrap<T, F>(strata: &[Vec<usize>], replicates: usize, seed: u64, stat: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[usize]) -> T + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let mut idx = Vec::with_capacity(strata.iter().map(Vec::len).sum());
            for s in strata {
                idx.extend((0..s.len()).map(|_| s[rng.random_range(0..s.len())]));
            }
            stat(&idx)
        })
        .collect()
}

fn interval(values: &[f64], level: f64) -> Option<(f64, f64)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    stats::percentile_interval(&finite, level)
}

/// Point-biserial correlation between score and membership of `group_b`
/// (versus `group_a`); the standardized mean difference is reported
/// alongside. Consistent iff `|correlation| <= tolerance`.
pub fn independence_check(
    records: &[ScoreRecord],
    score_name: &str,
    group_a: &GroupLabel,
    group_b: &GroupLabel,
    tolerance: f64,
    config: &AuditConfig,
) -> Result<AuditReport, AuditError> {
    if group_a == group_b {
        return Err(AuditError::SameGroup);
    }
    let recs: Vec<&ScoreRecord> = records.iter().filter(|r| &r.group == group_a || &r.group == group_b).collect();
    check_finite(&recs)?;
    let mut report = AuditReport::new(Criterion::Independence, score_name, "point_biserial_correlation");
    report.tolerance = Some(tolerance);
    for g in [group_a, group_b] {
        let n = recs.iter().filter(|r| &r.group == g).count();
        if n < config.min_group {
            return Err(AuditError::InsufficientGroup { group: g.clone(), n, min: config.min_group });
        }
        report.n_per_group.insert(g.clone(), n);
    }
    if config.replicates == 0 {
        return Err(AuditError::NoReplicates);
    }

    let scores: Vec<f64> = recs.iter().map(|r| r.score).collect();
    let indicator: Vec<f64> = recs.iter().map(|r| if &r.group == group_b { 1.0 } else { 0.0 }).collect();
    let side = |g: &GroupLabel| -> Vec<f64> { recs.iter().filter(|r| &r.group == g).map(|r| r.score).collect() };
    let (sa, sb) = (side(group_a), side(group_b));
    let (ma, mb) = (stats::mean(&sa).unwrap(), stats::mean(&sb).unwrap());
    let (va, vb) = (stats::variance(&sa).unwrap_or(0.0), stats::variance(&sb).unwrap_or(0.0));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let pooled_sd = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    report.details.insert(format!("mean_{group_a}"), ma);
    report.details.insert(format!("mean_{group_b}"), mb);
    report.details.insert("mean_difference".into(), mb - ma);

    let Some(corr) = stats::pearson(&scores, &indicator) else {
        report.notes.push("degenerate: scores have zero variance".into());
        report.statistic = Some(0.0);
        report.details.insert("degenerate".into(), 1.0);
        return Ok(report);
    };
    if pooled_sd > 0.0 {
        report.details.insert("standardized_mean_difference".into(), (mb - ma) / pooled_sd);
    }
    report.statistic = Some(corr);
    report.verdict = Some(if corr.abs() <= tolerance { Verdict::Consistent } else { Verdict::Violated });

    let st: Vec<Vec<usize>> = strata(&recs).into_values().collect();
    let reps = stratified_bootstrap(&st, config.replicates, config.seed, |idx| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let g: Vec<f64> = idx.iter().map(|&i| indicator[i]).collect();
        stats::pearson(&s, &g).unwrap_or(0.0)
    });
    report.ci = interval(&reps, config.level);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "threshold")]
pub enum ThresholdRule {
    /// Flag records whose measurement falls below the lower limit of normal.
    BelowLln,
    /// Flag records with `score < threshold`.
    ScoreBelow(f64),
    /// Flag records with `score > threshold`.
    ScoreAbove(f64),
}

impl ThresholdRule {
    pub fn flag(&self, r: &ScoreRecord) -> Option<bool> {
        match *self {
            ThresholdRule::BelowLln => r.below_lln,
            ThresholdRule::ScoreBelow(t) => Some(r.score < t),
            ThresholdRule::ScoreAbove(t) => Some(r.score > t),
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::BelowLln => f.write_str("below-lln"),
            ThresholdRule::ScoreBelow(t) => write!(f, "score<{t}"),
            ThresholdRule::ScoreAbove(t) => write!(f, "score>{t}"),
        }
    }
}

impl std::str::FromStr for ThresholdRule {
    type Err = String;
    /// `below-lln`, `below:<t>`, `above:<t>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "below-lln" || s == "lln" {
            return Ok(ThresholdRule::BelowLln);
        }
        let parse = |t: &str| t.parse::<f64>().map_err(|_| format!("bad threshold `{t}`"));
        match s.split_once(':') {
            Some(("below", t)) => Ok(ThresholdRule::ScoreBelow(parse(t)?)),
            Some(("above", t)) => Ok(ThresholdRule::ScoreAbove(parse(t)?)),
            _ => Err(format!("unknown threshold rule `{s}`")),
        }
    }
}

/// Per-group error rates; a flagged record is a predicted positive.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Confusion {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

impl Confusion {
    fn fpr(&self) -> Option<f64> {
        let neg = self.fp + self.tn;
        (neg > 0).then(|| self.fp as f64 / neg as f64)
    }
    fn fnr(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.fn_ as f64 / pos as f64)
    }
}

fn confusion(flags: &[bool], outcomes: &[bool], idx: impl Iterator<Item = usize>) -> Confusion {
    let mut c = Confusion::default();
    for i in idx {
        match (flags[i], outcomes[i]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Largest between-group spread of FPR or FNR, over the groups where the
/// rate is defined; `None` when no rate is defined for two groups.
fn max_rate_gap(per_group: &[Confusion]) -> Option<f64> {
    let spread = |rates: Vec<f64>| -> Option<f64> {
        if rates.len() < 2 {
            return None;
        }
        let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max - min)
    };
    let fpr = spread(per_group.iter().filter_map(Confusion::fpr).collect());
    let fnr = spread(per_group.iter().filter_map(Confusion::fnr).collect());
    match (fpr, fnr) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

/// Error-rate parity across every group present. Records without an
/// outcome or without a classification under `rule` are skipped; groups
/// below the minimum size are dropped with a note.
pub fn separation_check(
    records: &[ScoreRecord],
    score_name: &str,
    rule: ThresholdRule,
    tolerance: f64,
    config: &AuditConfig,
) -> Result<AuditReport, AuditError> {
    let mut report = AuditReport::new(Criterion::Separation, score_name, "max_error_rate_gap");
    report.tolerance = Some(tolerance);
    report.details.insert("threshold_value".into(), match rule {
        ThresholdRule::BelowLln => f64::NAN,
        ThresholdRule::ScoreBelow(t) | ThresholdRule::ScoreAbove(t) => t,
    });
    report.details.retain(|_, v| v.is_finite());
    report.notes.push(format!("threshold rule: {rule}"));

    if records.iter().all(|r| r.outcome.is_none()) {
        return Err(AuditError::NoOutcomes);
    }
    let usable: Vec<&ScoreRecord> = records
        .iter()
        .filter(|r| r.outcome.is_some() && rule.flag(r).is_some())
        .collect();
    check_finite(&usable)?;
    let skipped = records.len() - usable.len();
    if skipped > 0 {
        report.notes.push(format!("{skipped} records without outcome or classification skipped"));
    }
    if usable.is_empty() {
        report.notes.push(format!("rule {rule} classifies no record with an outcome"));
        return Ok(report);
    }
    let all_strata = strata(&usable);
    let mut kept: Vec<(&GroupLabel, Vec<usize>)> = vec![];
    for (g, idx) in all_strata {
        if idx.len() < config.min_group {
            report.notes.push(format!("group `{g}` dropped: {} records", idx.len()));
        } else {
            kept.push((g, idx));
        }
    }
    if kept.len() < 2 {
        return Err(AuditError::TooFewGroups { min: config.min_group });
    }
    if config.replicates == 0 {
        return Err(AuditError::NoReplicates);
    }
    let flags: Vec<bool> = usable.iter().map(|r| rule.flag(r).unwrap()).collect();
    let outcomes: Vec<bool> = usable.iter().map(|r| r.outcome.unwrap()).collect();

    let mut per_group = vec![];
    for (g, idx) in &kept {
        report.n_per_group.insert((*g).clone(), idx.len());
        let c = confusion(&flags, &outcomes, idx.iter().copied());
        match c.fpr() {
            Some(v) => {
                report.details.insert(format!("fpr_{g}"), v);
            }
            None => report.notes.push(format!("group `{g}` has no negative outcomes: FPR comparison omitted")),
        }
        match c.fnr() {
            Some(v) => {
                report.details.insert(format!("fnr_{g}"), v);
            }
            None => report.notes.push(format!("group `{g}` has no positive outcomes: FNR comparison omitted")),
        }
        per_group.push(c);
    }
    let Some(gap) = max_rate_gap(&per_group) else {
        report.notes.push("no error rate is defined for two groups".into());
        return Ok(report);
    };
    report.statistic = Some(gap);
    report.verdict = Some(if gap <= tolerance { Verdict::Consistent } else { Verdict::Violated });

    let st: Vec<Vec<usize>> = kept.into_iter().map(|(_, v)| v).collect();
    let reps = stratified_bootstrap(&st, config.replicates, config.seed, |idx| {
        let mut offset = 0;
        let cs: Vec<Confusion> = st
            .iter()
            .map(|s| {
                let c = confusion(&flags, &outcomes, idx[offset..offset + s.len()].iter().copied());
                offset += s.len();
                c
            })
            .collect();
        max_rate_gap(&cs).unwrap_or(f64::NAN)
    });
    report.ci = interval(&reps, config.level);
    Ok(report)
}

/// Design rows `[1, standardized score, group indicators...]`.
fn design(scores: &[f64], groups: &[usize], n_groups: usize, center: f64, scale: f64) -> Vec<Vec<f64>> {
    scores
        .iter()
        .zip(groups)
        .map(|(&s, &g)| {
            let mut row = Vec::with_capacity(1 + n_groups);
            row.push(1.0);
            if scale > 0.0 {
                row.push((s - center) / scale);
            }
            row.extend((1..n_groups).map(|k| if g == k { 1.0 } else { 0.0 }));
            row
        })
        .collect()
}

/// Outcome-rate spread across groups within pooled score deciles,
/// weighted by decile size.
fn stratified_rate_gap(scores: &[f64], groups: &[usize], outcomes: &[bool], n_groups: usize) -> Option<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..10).map(|k| stats::quantile_sorted(&sorted, k as f64 / 10.0).unwrap()).collect();
    let mut bins = vec![vec![(0usize, 0usize); n_groups]; 10];
    for ((&s, &g), &y) in scores.iter().zip(groups).zip(outcomes) {
        let b = cuts.partition_point(|&c| c < s);
        bins[b][g].0 += 1;
        bins[b][g].1 += y as usize;
    }
    let mut weighted = vec![];
    let mut weights = vec![];
    for bin in bins {
        let rates: Vec<f64> = bin.iter().filter(|(n, _)| *n > 0).map(|&(n, k)| k as f64 / n as f64).collect();
        if rates.len() >= 2 {
            let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
            weighted.push(max - min);
            weights.push(bin.iter().map(|(n, _)| *n as f64).sum());
        }
    }
    stats::weighted_mean(&weighted, &weights)
}

/// Logistic regression of outcome on score plus group indicators; the
/// reference group is `reference` or else the first label in order.
/// Consistent iff every group coefficient's bootstrap interval covers 0.
/// The reported statistic is the coefficient largest in magnitude.
pub fn sufficiency_check(
    records: &[ScoreRecord],
    score_name: &str,
    reference: Option<&GroupLabel>,
    config: &AuditConfig,
) -> Result<AuditReport, AuditError> {
    let mut report = AuditReport::new(Criterion::Sufficiency, score_name, "group_coefficient");
    if records.iter().all(|r| r.outcome.is_none()) {
        return Err(AuditError::NoOutcomes);
    }
    let usable: Vec<&ScoreRecord> = records.iter().filter(|r| r.outcome.is_some()).collect();
    check_finite(&usable)?;
    if usable.len() < records.len() {
        report.notes.push(format!("{} records without outcome skipped", records.len() - usable.len()));
    }
    let mut kept: Vec<(&GroupLabel, Vec<usize>)> = vec![];
    for (g, idx) in strata(&usable) {
        if idx.len() < config.min_group {
            report.notes.push(format!("group `{g}` dropped: {} records", idx.len()));
        } else {
            kept.push((g, idx));
        }
    }
    if kept.len() < 2 {
        return Err(AuditError::TooFewGroups { min: config.min_group });
    }
    if config.replicates == 0 {
        return Err(AuditError::NoReplicates);
    }
    if let Some(r) = reference {
        if let Some(pos) = kept.iter().position(|(g, _)| *g == r) {
            let entry = kept.remove(pos);
            kept.insert(0, entry);
        } else {
            report.notes.push(format!("reference group `{r}` absent; using `{}`", kept[0].0));
        }
    }
    for (g, idx) in &kept {
        report.n_per_group.insert((*g).clone(), idx.len());
    }
    report.notes.push(format!("reference group: {}", kept[0].0));

    // Flatten the kept records so that stratum k occupies a contiguous run.
    let mut scores = vec![];
    let mut groups = vec![];
    let mut outcomes = vec![];
    let mut st = vec![];
    for (k, (_, idx)) in kept.iter().enumerate() {
        let start = scores.len();
        for &i in idx {
            scores.push(usable[i].score);
            groups.push(k);
            outcomes.push(usable[i].outcome.unwrap());
        }
        st.push((start..scores.len()).collect::<Vec<usize>>());
    }
    let n_groups = kept.len();
    let center = stats::mean(&scores).unwrap();
    let scale = stats::variance(&scores).unwrap_or(0.0).sqrt();
    if scale == 0.0 {
        report.notes.push("scores have zero variance: model reduces to group indicators".into());
    }
    let score_cols = usize::from(scale > 0.0);
    let opts: LogisticOptions = config.logistic.into();

    if let Some(gap) = stratified_rate_gap(&scores, &groups, &outcomes, n_groups) {
        report.details.insert("stratified_rate_gap".into(), gap);
    }

    let x = design(&scores, &groups, n_groups, center, scale);
    let fit = match fit_logistic(&x, &outcomes, &opts) {
        Ok(f) => f,
        Err(e) => {
            report.notes.push(format!("logistic fit failed: {e}"));
            return Ok(report);
        }
    };
    if score_cols == 1 {
        report.details.insert("score_coefficient_per_sd".into(), fit.coefficients[1]);
    }
    let first = 1 + score_cols;
    let coef: Vec<f64> = fit.coefficients[first..].to_vec();
    for (k, (g, _)) in kept.iter().enumerate().skip(1) {
        report.details.insert(format!("coef_{g}"), coef[k - 1]);
        report.details.insert(format!("se_{g}"), fit.std_errors[first + k - 1]);
    }

    let reps: Vec<Option<Vec<f64>>> = stratified_bootstrap(&st, config.replicates, config.seed, |idx| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let g: Vec<usize> = idx.iter().map(|&i| groups[i]).collect();
        let y: Vec<bool> = idx.iter().map(|&i| outcomes[i]).collect();
        fit_logistic(&design(&s, &g, n_groups, center, scale), &y, &opts)
            .ok()
            .map(|f| f.coefficients[first..].to_vec())
    });
    let failed = reps.iter().filter(|r| r.is_none()).count();
    report.details.insert("failed_refits".into(), failed as f64);
    let ok: Vec<&Vec<f64>> = reps.iter().flatten().collect();

    let lead = (0..coef.len()).fold(0, |best, k| if coef[k].abs() > coef[best].abs() { k } else { best });
    report.statistic = Some(coef[lead]);
    if (failed as f64) > MAX_FAILED_REFITS * config.replicates as f64 {
        report.notes.push(format!("{failed} of {} bootstrap refits failed: no verdict", config.replicates));
        return Ok(report);
    }
    let mut covers_all = true;
    for (k, (g, _)) in kept.iter().enumerate().skip(1) {
        let vals: Vec<f64> = ok.iter().map(|v| v[k - 1]).collect();
        let Some((lo, hi)) = interval(&vals, config.level) else { continue };
        report.details.insert(format!("ci_low_{g}"), lo);
        report.details.insert(format!("ci_high_{g}"), hi);
        covers_all &= lo <= 0.0 && 0.0 <= hi;
        if k - 1 == lead {
            report.ci = Some((lo, hi));
        }
    }
    report.verdict = Some(if covers_all { Verdict::Consistent } else { Verdict::Violated });
    Ok(report)
}

/// One score definition's records over a shared cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub name: String,
    pub records: Vec<ScoreRecord>,
    pub threshold: ThresholdRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelConfig {
    pub group_a: GroupLabel,
    pub group_b: GroupLabel,
    pub criteria: Vec<Criterion>,
    pub independence_tolerance: f64,
    pub separation_tolerance: f64,
    pub audit: AuditConfig,
}

impl PanelConfig {
    pub fn new(group_a: GroupLabel, group_b: GroupLabel, seed: u64) -> Self {
        Self {
            group_a,
            group_b,
            criteria: Criterion::ALL.to_vec(),
            independence_tolerance: DEFAULT_INDEPENDENCE_TOLERANCE,
            separation_tolerance: DEFAULT_SEPARATION_TOLERANCE,
            audit: AuditConfig::new(seed),
        }
    }
}

/// Rows are score definitions, columns the requested criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityPanel {
    pub criteria: Vec<Criterion>,
    pub rows: Vec<(String, Vec<AuditReport>)>,
}

impl ImpossibilityPanel {
    pub fn get(&self, score: &str, criterion: Criterion) -> Option<&AuditReport> {
        let col = self.criteria.iter().position(|&c| c == criterion)?;
        self.rows.iter().find(|(n, _)| n == score).map(|(_, r)| &r[col])
    }

    pub fn reports(&self) -> impl Iterator<Item = &AuditReport> {
        self.rows.iter().flat_map(|(_, r)| r)
    }
}

/// Every (score, criterion) report, restricted to the two compared groups.
/// Each cell gets its own bootstrap seed derived from the panel seed.
pub fn impossibility_panel(sets: &[ScoreSet], config: &PanelConfig) -> Result<ImpossibilityPanel, AuditError> {
    if sets.is_empty() {
        return Err(AuditError::EmptyPanel);
    }
    let mut rows = vec![];
    for (i, set) in sets.iter().enumerate() {
        let records: Vec<ScoreRecord> = set
            .records
            .iter()
            .filter(|r| r.group == config.group_a || r.group == config.group_b)
            .cloned()
            .collect();
        let mut reports = vec![];
        for (j, &criterion) in config.criteria.iter().enumerate() {
            let mut audit = config.audit.clone();
            audit.seed = rng::derive_seed(config.audit.seed, (i * Criterion::ALL.len() + j) as u64);
            let report = match criterion {
                Criterion::Independence => independence_check(
                    &records,
                    &set.name,
                    &config.group_a,
                    &config.group_b,
                    config.independence_tolerance,
                    &audit,
                )?,
                Criterion::Separation => {
                    separation_check(&records, &set.name, set.threshold, config.separation_tolerance, &audit)?
                }
                Criterion::Sufficiency => sufficiency_check(&records, &set.name, Some(&config.group_a), &audit)?,
            };
            reports.push(report);
        }
        rows.push((set.name.clone(), reports));
    }
    Ok(ImpossibilityPanel { criteria: config.criteria.clone(), rows })
}

/// Plain-text trade-off table: verdict and statistic per cell.
pub fn render_panel(panel: &ImpossibilityPanel) -> String {
    let cell = |r: &AuditReport| match (r.verdict, r.statistic) {
        (Some(v), Some(s)) => format!("{v} ({s:+.4})"),
        (None, Some(s)) => format!("no verdict ({s:+.4})"),
        _ => "no verdict".to_string(),
    };
    let mut header = vec!["score".to_string()];
    header.extend(panel.criteria.iter().map(|c| c.to_string()));
    let mut lines = vec![header];
    for (name, reports) in &panel.rows {
        let mut line = vec![name.clone()];
        line.extend(reports.iter().map(cell));
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for l in &lines {
        let padded: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    }
    out
}
