//! Implicit social-determinants (SDoH) fraction encoded by a pooled
//! reference.
//!
//! For a group `k` and privileged group `p`, the family of adjusted medians
//! `M_adj(phi) = M_k + phi (M_p - M_k)` runs from the group-specific to the
//! privileged prediction. The pooled reference behaves as if it assumed the
//! `phi` whose adjusted scores (with pooled L and S) best match the pooled
//! scores in mean squared error.

mod minimize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use minimize::{grid_then_golden, GridGoldenResult};

use crate::cohort::Participant;
use crate::ref_engine::{
    percent_predicted, z_score, CoefficientTable, DemographicInput, GroupLabel, LmsError,
    PredictError, TableSet, TableSetError,
};
use crate::stats::{self, neumaier_sum};

/// Literature estimates of the share of the FEV1 gap attributable to SDoH,
/// reported next to estimates for comparison only.
pub const LITERATURE_SDOH_SHARE: [(&str, f64); 2] = [("Black", 0.263), ("Asian", 0.066)];

pub const DEFAULT_MIN_PARTICIPANTS: usize = 30;
pub const GRID_STEP: f64 = 0.001;
pub const REFINE_TOLERANCE: f64 = 1e-6;
/// Objective range below which the gap is considered degenerate.
pub const FLAT_OBJECTIVE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("phi must lie in [0, 1], got {0}")]
    InvalidPhi(f64),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Lms(#[from] LmsError),
    #[error(transparent)]
    Tables(#[from] TableSetError),
    #[error("participant {id}: {reason}")]
    Participant { id: String, reason: String },
    #[error("group `{group}` has {found} usable participants, need at least {needed}")]
    Insufficient { group: GroupLabel, needed: usize, found: usize },
    #[error("objective is flat over [0, 1] (range {range:e}); group and privileged medians coincide")]
    DegenerateGap { range: f64 },
    #[error("group `{0}` has no participants with measured FEV1")]
    EmptyGroup(GroupLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    ZScore,
    PercentPredicted,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "z" | "z-score" => Ok(Metric::ZScore),
            "pctpred" | "percent-predicted" => Ok(Metric::PercentPredicted),
            _ => Err(format!("unknown metric `{s}` (expected z or pctpred)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub phi: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub group: GroupLabel,
    pub privileged: GroupLabel,
    pub pooled: GroupLabel,
    pub phi_hat: f64,
    pub objective_at_min: f64,
    pub objective_curve: Vec<CurvePoint>,
    pub n_used: usize,
    pub metric: Metric,
    /// Set when the objective keeps decreasing past an end of [0, 1].
    pub boundary: Option<Boundary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub group: GroupLabel,
    pub privileged: GroupLabel,
    pub n_group: usize,
    pub n_privileged: usize,
    /// Mean LF of the privileged group minus mean LF of the group, litres.
    pub mean_gap: f64,
    /// Group mean deficit minus privileged mean deficit (synthetic only).
    pub mean_deficit_diff: Option<f64>,
    /// `mean_deficit_diff / mean_gap`; `None` when either is unavailable or
    /// the gap is zero.
    pub phi_true: Option<f64>,
}

/// Which tables play the group-specific, privileged and pooled roles.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationTables<'a> {
    pub tables: &'a TableSet,
    pub group: &'a GroupLabel,
    pub privileged: &'a GroupLabel,
    pub pooled: &'a GroupLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub min_participants: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { min_participants: DEFAULT_MIN_PARTICIPANTS }
    }
}

fn check_phi(phi: f64) -> Result<f64, CalibrationError> {
    if (0.0..=1.0).contains(&phi) {
        Ok(phi)
    } else {
        Err(CalibrationError::InvalidPhi(phi))
    }
}

/// `M_k + phi (M_p - M_k)` at `x`.
pub fn adjusted_prediction(
    x: &DemographicInput,
    table_k: &CoefficientTable,
    table_p: &CoefficientTable,
    phi: f64,
) -> Result<f64, CalibrationError> {
    let phi = check_phi(phi)?;
    let m_k = table_k.predict(x)?.median;
    let m_p = table_p.predict(x)?.median;
    Ok(m_k + phi * (m_p - m_k))
}

/// z-score of `measured` against the adjusted median, using the pooled
/// table's L and S at `x`.
pub fn adjusted_z(
    x: &DemographicInput,
    measured: f64,
    table_k: &CoefficientTable,
    table_p: &CoefficientTable,
    pooled: &CoefficientTable,
    phi: f64,
) -> Result<f64, CalibrationError> {
    let m_adj = adjusted_prediction(x, table_k, table_p, phi)?;
    let g = pooled.predict(x)?;
    Ok(z_score(measured, m_adj, g.l_param, g.s_param)?)
}

/// Pointwise implicit fraction `(M_pooled - M_k) / (M_p - M_k)`; `None`
/// where the group and privileged medians coincide.
pub fn implicit_phi_at(
    x: &DemographicInput,
    table_k: &CoefficientTable,
    table_p: &CoefficientTable,
    pooled: &CoefficientTable,
) -> Result<Option<f64>, CalibrationError> {
    let m_k = table_k.predict(x)?.median;
    let m_p = table_p.predict(x)?.median;
    let m_g = pooled.predict(x)?.median;
    let gap = m_p - m_k;
    Ok((gap != 0.0).then(|| (m_g - m_k) / gap))
}

/// Per-participant quantities the objective needs; computed once.
struct Prepared {
    lf: f64,
    m_k: f64,
    m_p: f64,
    l: f64,
    s: f64,
    target: f64,
}

fn group_members<'a>(
    participants: &'a [Participant],
    group: &'a GroupLabel,
) -> impl Iterator<Item = (&'a Participant, f64)> + 'a {
    participants
        .iter()
        .filter(move |p| p.group.as_ref() == Some(group))
        .filter_map(|p| p.fev1.map(|lf| (p, lf)))
}

fn prepare(
    participants: &[Participant],
    roles: &CalibrationTables<'_>,
    metric: Metric,
) -> Result<Vec<Prepared>, CalibrationError> {
    group_members(participants, roles.group)
        .map(|(p, lf)| {
            let x = p.demographics().ok_or_else(|| CalibrationError::Participant {
                id: p.id.clone(),
                reason: "no reference group assigned".into(),
            })?;
            let tk = roles.tables.require(roles.group, x.sex)?;
            let tp = roles.tables.require(roles.privileged, x.sex)?;
            let tg = roles.tables.require(roles.pooled, x.sex)?;
            let wrap = |e: PredictError| CalibrationError::Participant {
                id: p.id.clone(),
                reason: e.to_string(),
            };
            let m_k = tk.predict(&x).map_err(wrap)?.median;
            let m_p = tp.predict(&x).map_err(wrap)?.median;
            let g = tg.predict(&x).map_err(wrap)?;
            let target = match metric {
                Metric::ZScore => z_score(lf, g.median, g.l_param, g.s_param)?,
                Metric::PercentPredicted => percent_predicted(lf, g.median)?,
            };
            Ok(Prepared { lf, m_k, m_p, l: g.l_param, s: g.s_param, target })
        })
        .collect()
}

fn objective(obs: &[Prepared], metric: Metric, phi: f64) -> f64 {
    let total = neumaier_sum(obs.iter().map(|o| {
        let m_adj = o.m_k + phi * (o.m_p - o.m_k);
        let score = match metric {
            Metric::ZScore => z_score(o.lf, m_adj, o.l, o.s),
            Metric::PercentPredicted => percent_predicted(o.lf, m_adj),
        };
        match score {
            Ok(v) => (v - o.target) * (v - o.target),
            Err(_) => f64::INFINITY,
        }
    }));
    total / obs.len() as f64
}

/// Estimates the implicit fraction for `roles.group` over participants of
/// that group with a measured FEV1.
pub fn estimate_phi(
    participants: &[Participant],
    roles: &CalibrationTables<'_>,
    metric: Metric,
    options: &EstimateOptions,
) -> Result<PhiEstimate, CalibrationError> {
    let obs = prepare(participants, roles, metric)?;
    if obs.len() < options.min_participants.max(1) {
        return Err(CalibrationError::Insufficient {
            group: roles.group.clone(),
            needed: options.min_participants.max(1),
            found: obs.len(),
        });
    }

    let f = |phi: f64| objective(&obs, metric, phi);
    let result = grid_then_golden(f, 0.0, 1.0, GRID_STEP, REFINE_TOLERANCE);

    let (lo, hi) = result
        .curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    if hi - lo < FLAT_OBJECTIVE {
        return Err(CalibrationError::DegenerateGap { range: hi - lo });
    }

    // Probe one grid step outside [0, 1] to see whether the constraint binds.
    let boundary = if result.x <= REFINE_TOLERANCE && f(-GRID_STEP) < result.value {
        Some(Boundary::Lower)
    } else if result.x >= 1.0 - REFINE_TOLERANCE && f(1.0 + GRID_STEP) < result.value {
        Some(Boundary::Upper)
    } else {
        None
    };

    Ok(PhiEstimate {
        group: roles.group.clone(),
        privileged: roles.privileged.clone(),
        pooled: roles.pooled.clone(),
        phi_hat: result.x,
        objective_at_min: result.value,
        objective_curve: result.curve.iter().map(|&(phi, mse)| CurvePoint { phi, mse }).collect(),
        n_used: obs.len(),
        metric,
        boundary,
    })
}

/// Objective of [`estimate_phi`] at an arbitrary `phi`, for diagnostics.
pub fn phi_objective(
    participants: &[Participant],
    roles: &CalibrationTables<'_>,
    metric: Metric,
    phi: f64,
) -> Result<f64, CalibrationError> {
    let obs = prepare(participants, roles, metric)?;
    if obs.is_empty() {
        return Err(CalibrationError::EmptyGroup(roles.group.clone()));
    }
    Ok(objective(&obs, metric, phi))
}

/// Observed mean gap between the privileged group and `group`, plus the
/// ground-truth fraction when participants carry synthetic provenance.
/// With `weighted`, survey weights (default 1) weight the means.
pub fn gap_summary(
    participants: &[Participant],
    group: &GroupLabel,
    privileged: &GroupLabel,
    weighted: bool,
) -> Result<GapSummary, CalibrationError> {
    let collect = |g: &GroupLabel| -> Vec<&Participant> {
        participants
            .iter()
            .filter(|p| p.group.as_ref() == Some(g) && p.fev1.is_some())
            .collect()
    };
    let members_k = collect(group);
    let members_p = collect(privileged);
    if members_k.is_empty() {
        return Err(CalibrationError::EmptyGroup(group.clone()));
    }
    if members_p.is_empty() {
        return Err(CalibrationError::EmptyGroup(privileged.clone()));
    }

    let mean_of = |ps: &[&Participant], f: &dyn Fn(&Participant) -> f64| -> f64 {
        let values: Vec<f64> = ps.iter().map(|p| f(p)).collect();
        if weighted {
            let weights: Vec<f64> = ps.iter().map(|p| p.weight.unwrap_or(1.0)).collect();
            stats::weighted_mean(&values, &weights).unwrap_or(f64::NAN)
        } else {
            stats::mean(&values).unwrap_or(f64::NAN)
        }
    };
    let lf = |p: &Participant| p.fev1.unwrap_or(f64::NAN);
    let mean_gap = mean_of(&members_p, &lf) - mean_of(&members_k, &lf);

    let all_synthetic = members_k.iter().chain(&members_p).all(|p| p.provenance.is_some());
    let mean_deficit_diff = all_synthetic.then(|| {
        let d = |p: &Participant| p.provenance.map(|v| v.deficit).unwrap_or(f64::NAN);
        mean_of(&members_k, &d) - mean_of(&members_p, &d)
    });
    let phi_true = mean_deficit_diff.filter(|_| mean_gap.abs() > 1e-12).map(|d| d / mean_gap);

    Ok(GapSummary {
        group: group.clone(),
        privileged: privileged.clone(),
        n_group: members_k.len(),
        n_privileged: members_p.len(),
        mean_gap,
        mean_deficit_diff,
        phi_true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Provenance;
    use crate::ref_engine::Sex;

    fn x(age: f64) -> DemographicInput {
        DemographicInput { age, height: 170.0, sex: Sex::Male, group: GroupLabel::new("k") }
    }

    fn naive(m: f64, l: f64, s: f64) -> CoefficientTable {
        CoefficientTable::naive(format!("t{m}"), Sex::Male, m, l, s).unwrap()
    }

    #[test]
    fn adjusted_prediction_endpoints_and_midpoint() {
        let tk = naive(3.8, 1.0, 0.1);
        let tp = naive(4.2, 1.0, 0.1);
        assert_eq!(adjusted_prediction(&x(40.0), &tk, &tp, 0.0).unwrap(), tk.predict(&x(40.0)).unwrap().median);
        assert_eq!(adjusted_prediction(&x(40.0), &tk, &tp, 1.0).unwrap(), tp.predict(&x(40.0)).unwrap().median);
        let mid = adjusted_prediction(&x(40.0), &tk, &tp, 0.5).unwrap();
        assert!((mid - 4.0).abs() < 1e-12);
        assert!(matches!(adjusted_prediction(&x(40.0), &tk, &tp, 1.5), Err(CalibrationError::InvalidPhi(_))));
    }

    #[test]
    fn adjusted_z_examples() {
        let tk = naive(3.8, 1.0, 0.1);
        let tp = naive(4.2, 1.0, 0.1);
        let g = naive(4.0, 1.0, 0.1);
        // measured equal to M_adj
        assert!(adjusted_z(&x(50.0), 4.0, &tk, &tp, &g, 0.5).unwrap().abs() < 1e-12);
        // L = 1, S = 0.1, M_adj = 4.0, measured 4.4
        let z = adjusted_z(&x(50.0), 4.4, &tk, &tp, &g, 0.5).unwrap();
        assert!((z - 1.0).abs() < 1e-12, "{z}");
        // M_adj equal to the pooled median: identical to the pooled z
        let g2 = naive(4.0, 0.7, 0.13);
        let z_adj = adjusted_z(&x(50.0), 3.1, &tk, &tp, &g2, 0.5).unwrap();
        let z_g = g2.score(&x(50.0), 3.1, crate::ref_engine::LLN_Z).unwrap().z_score.unwrap();
        assert!((z_adj - z_g).abs() < 1e-12);
    }

    fn member(id: usize, group: &str, lf: f64, deficit: Option<f64>) -> Participant {
        Participant {
            id: id.to_string(),
            age: 40.0,
            height: 170.0,
            sex: Sex::Male,
            race_ethnicity: group.into(),
            group: Some(GroupLabel::new(group)),
            fev1: Some(lf),
            fvc: None,
            smoker_ever: None,
            respiratory_dx: None,
            symptoms: Default::default(),
            outcomes: Default::default(),
            weight: None,
            provenance: deficit.map(|d| Provenance { lf_ideal: lf + d, deficit: d }),
        }
    }

    #[test]
    fn gap_of_two_singletons() {
        let ps = vec![member(1, "p", 4.2, None), member(2, "k", 3.8, None)];
        let g = gap_summary(&ps, &GroupLabel::new("k"), &GroupLabel::new("p"), false).unwrap();
        assert!((g.mean_gap - 0.4).abs() < 1e-12);
        assert_eq!(g.phi_true, None);
        assert_eq!(g.mean_deficit_diff, None);
    }

    #[test]
    fn phi_true_arithmetic() {
        // Deficit difference 0.25 L, gap 0.4 L.
        let ps = vec![member(1, "p", 4.2, Some(0.05)), member(2, "k", 3.8, Some(0.30))];
        let g = gap_summary(&ps, &GroupLabel::new("k"), &GroupLabel::new("p"), false).unwrap();
        assert!((g.mean_deficit_diff.unwrap() - 0.25).abs() < 1e-12);
        assert!((g.phi_true.unwrap() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn zero_gap_leaves_phi_true_undefined() {
        let ps = vec![member(1, "p", 4.0, Some(0.1)), member(2, "k", 4.0, Some(0.2))];
        let g = gap_summary(&ps, &GroupLabel::new("k"), &GroupLabel::new("p"), false).unwrap();
        assert_eq!(g.mean_gap, 0.0);
        assert_eq!(g.phi_true, None);
        assert!(g.mean_deficit_diff.is_some());
    }

    #[test]
    fn empty_group_is_an_error() {
        let ps = vec![member(1, "p", 4.0, None)];
        assert!(matches!(
            gap_summary(&ps, &GroupLabel::new("k"), &GroupLabel::new("p"), false),
            Err(CalibrationError::EmptyGroup(_))
        ));
    }

    #[test]
    fn weighted_gap() {
        let mut a = member(1, "p", 4.0, None);
        a.weight = Some(3.0);
        let b = member(2, "p", 5.0, None);
        let c = member(3, "k", 3.0, None);
        let g = gap_summary(&[a, b, c], &GroupLabel::new("k"), &GroupLabel::new("p"), true).unwrap();
        assert!((g.mean_gap - 1.25).abs() < 1e-12);
    }
}
