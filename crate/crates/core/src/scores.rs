//! Score definitions shared by the audit and evaluation panels: which
//! reference a participant is scored against and on which scale.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Participant;
use crate::ref_engine::{GroupLabel, PredictError, ReferenceOutput, TableSet};

/// Group label of the pooled (race-averaged) tables.
pub const POOLED_GROUP: &str = "global";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// Each participant against the tables of their own group.
    OwnGroup,
    /// Everyone against the tables of one group (pooled, naive, ...).
    Table(GroupLabel),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    /// Measured FEV1 in litres.
    Raw,
    ZScore(Reference),
    PercentPredicted(Reference),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreDefinition {
    pub name: String,
    pub kind: ScoreKind,
}

impl fmt::Display for ScoreDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for ScoreDefinition {
    type Err = String;

    /// `raw`; `gli2012` / `race-specific`; `gliglobal`; `naive`;
    /// `z:<group>`; `pp:<group>`; `pp:race-specific`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let reference = |r: &str| match r {
            "race-specific" | "own" | "gli2012" => Reference::OwnGroup,
            "gliglobal" => Reference::Table(GroupLabel::new(POOLED_GROUP)),
            other => Reference::Table(GroupLabel::new(other)),
        };
        let kind = match s {
            "" => return Err("empty score definition".into()),
            "raw" => ScoreKind::Raw,
            "gli2012" | "race-specific" => ScoreKind::ZScore(Reference::OwnGroup),
            "gliglobal" => ScoreKind::ZScore(Reference::Table(GroupLabel::new(POOLED_GROUP))),
            "naive" => ScoreKind::ZScore(Reference::Table(GroupLabel::new(crate::ref_engine::NAIVE_GROUP))),
            _ => match s.split_once(':') {
                Some(("z", r)) if !r.is_empty() => ScoreKind::ZScore(reference(r)),
                Some(("pp", r)) if !r.is_empty() => ScoreKind::PercentPredicted(reference(r)),
                _ => return Err(format!("unknown score definition `{s}`")),
            },
        };
        Ok(Self { name: s.to_string(), kind })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("no measured FEV1")]
    NoMeasurement,
    #[error("no reference group assigned")]
    NoGroup,
    #[error("no table for group `{group}`, sex {sex}")]
    MissingTable { group: GroupLabel, sex: crate::ref_engine::Sex },
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub score: f64,
    pub below_lln: Option<bool>,
    pub table_id: Option<String>,
}

/// Full reference output for `p` against `reference`, with the table id.
pub fn reference_output(
    p: &Participant,
    tables: &TableSet,
    reference: &Reference,
    lln_z: f64,
) -> Result<(ReferenceOutput, String), ScoreError> {
    let measured = p.fev1.ok_or(ScoreError::NoMeasurement)?;
    let x = p.demographics().ok_or(ScoreError::NoGroup)?;
    let group = match reference {
        Reference::OwnGroup => &x.group,
        Reference::Table(g) => g,
    };
    let table = tables.get(group, x.sex).ok_or_else(|| ScoreError::MissingTable {
        group: group.clone(),
        sex: x.sex,
    })?;
    Ok((table.score(&x, measured, lln_z)?, table.table_id().to_string()))
}

/// Scores one participant under `def`.
pub fn score_participant(
    p: &Participant,
    tables: &TableSet,
    def: &ScoreDefinition,
    lln_z: f64,
) -> Result<ScoreValue, ScoreError> {
    let (reference, pct) = match &def.kind {
        ScoreKind::Raw => {
            let measured = p.fev1.ok_or(ScoreError::NoMeasurement)?;
            return Ok(ScoreValue { score: measured, below_lln: None, table_id: None });
        }
        ScoreKind::ZScore(r) => (r, false),
        ScoreKind::PercentPredicted(r) => (r, true),
    };
    let (out, table_id) = reference_output(p, tables, reference, lln_z)?;
    let measured = p.fev1.expect("checked by reference_output");
    let score = if pct { out.percent_predicted } else { out.z_score }.expect("score() fills both");
    Ok(ScoreValue { score, below_lln: Some(measured < out.lln), table_id: Some(table_id) })
}

pub fn score_cohort(
    participants: &[Participant],
    tables: &TableSet,
    def: &ScoreDefinition,
    lln_z: f64,
) -> Vec<Result<ScoreValue, ScoreError>> {
    participants
        .iter()
        .map(|p| score_participant(p, tables, def, lln_z))
        .collect()
}
