use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ref_engine::{DemographicInput, GroupLabel, Sex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeRecord {
    Binary { value: bool },
    TimeToEvent { event: bool, followup_years: f64 },
}

impl OutcomeRecord {
    /// Binary view of the outcome.
    ///
    /// Time-to-event outcomes are dichotomized at `horizon`: an event within
    /// the horizon is positive, follow-up reaching the horizon without an
    /// event is negative, and censoring before the horizon yields `None`.
    /// Without a horizon the event flag is used as-is.
    pub fn at_horizon(&self, horizon: Option<f64>) -> Option<bool> {
        match (*self, horizon) {
            (OutcomeRecord::Binary { value }, _) => Some(value),
            (OutcomeRecord::TimeToEvent { event, .. }, None) => Some(event),
            (OutcomeRecord::TimeToEvent { event, followup_years }, Some(h)) => {
                if event && followup_years <= h {
                    Some(true)
                } else if followup_years >= h {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }
}

/// Outcome name plus optional dichotomization horizon, written `name` or
/// `name@years` (e.g. `mortality@10`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSelector {
    pub name: String,
    pub horizon: Option<f64>,
}

impl OutcomeSelector {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            horizon: None,
        }
    }

    pub fn at(name: impl Into<String>, horizon: f64) -> Self {
        Self {
            name: name.into(),
            horizon: Some(horizon),
        }
    }
}

impl fmt::Display for OutcomeSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.horizon {
            Some(h) => write!(f, "{}@{}", self.name, h),
            None => f.write_str(&self.name),
        }
    }
}

impl FromStr for OutcomeSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once('@') {
            None if !s.is_empty() => Ok(Self::new(s)),
            Some((name, h)) if !name.is_empty() => {
                let horizon: f64 = h
                    .parse()
                    .map_err(|_| format!("bad horizon in outcome `{s}`"))?;
                if !(horizon.is_finite() && horizon > 0.0) {
                    return Err(format!("horizon must be positive in outcome `{s}`"));
                }
                Ok(Self::at(name, horizon))
            }
            _ => Err(format!("empty outcome name in `{s}`")),
        }
    }
}

/// Ground truth carried by synthetic participants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Ideal lung function in the absence of exposures, litres.
    pub lf_ideal: f64,
    /// Exposure deficit, litres; `fev1 = lf_ideal - deficit`.
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub age: f64,
    pub height: f64,
    pub sex: Sex,
    /// Source race/ethnicity category as recorded in the cohort file.
    pub race_ethnicity: String,
    /// Reference group, assigned by [`map_groups`](super::map_groups).
    pub group: Option<GroupLabel>,
    pub fev1: Option<f64>,
    pub fvc: Option<f64>,
    pub smoker_ever: Option<bool>,
    pub respiratory_dx: Option<bool>,
    /// Observed symptom flags; absent keys are missing.
    pub symptoms: BTreeMap<String, bool>,
    pub outcomes: BTreeMap<String, OutcomeRecord>,
    /// Survey sampling weight, if the file carries one.
    pub weight: Option<f64>,
    pub provenance: Option<Provenance>,
}

impl Participant {
    /// Covariates for reference evaluation; `None` until a group is assigned.
    pub fn demographics(&self) -> Option<DemographicInput> {
        Some(DemographicInput {
            age: self.age,
            height: self.height,
            sex: self.sex,
            group: self.group.clone()?,
        })
    }

    pub fn outcome(&self, selector: &OutcomeSelector) -> Option<bool> {
        self.outcomes.get(&selector.name)?.at_horizon(selector.horizon)
    }

    pub fn any_symptom(&self) -> bool {
        self.symptoms.values().any(|&v| v)
    }
}
