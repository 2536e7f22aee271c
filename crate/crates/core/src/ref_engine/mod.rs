//! LMS reference equations: coefficient tables, predicted medians, z-scores,
//! percent-predicted and lower limits of normal.

mod lms;
mod table;
mod tableset;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lms::{
    inverse_z, lower_limit, percent_predicted, z_score, LmsError, LLN_Z, L_BRANCH_TOLERANCE,
};
pub use table::{
    CoefficientRow, CoefficientTable, PredictError, TableError, CHECK_HEIGHTS_CM, MAX_TABLE_AGE,
    MIN_TABLE_AGE, NAIVE_GROUP, REQUIRED_COLUMNS,
};
pub use tableset::{LogLinearShape, TableSet, TableSetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Male, Sex::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseSexError(pub String);

impl fmt::Display for ParseSexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unrecognized sex `{}`", self.0)
    }
}

impl std::error::Error for ParseSexError {}

impl FromStr for Sex {
    type Err = ParseSexError;

    /// Accepts words, single letters and the NHANES codes (1 = male, 2 = female).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" | "1" => Ok(Sex::Male),
            "female" | "f" | "2" => Ok(Sex::Female),
            _ => Err(ParseSexError(s.to_string())),
        }
    }
}

/// Reference group label (e.g. `White`, `Black`, `global`, `naive`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupLabel(String);

impl GroupLabel {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GroupLabel {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Covariates a reference equation is evaluated at.
#[derive(Debug, Clone, PartialEq)]
pub struct DemographicInput {
    /// Years, fractional.
    pub age: f64,
    /// Centimetres.
    pub height: f64,
    pub sex: Sex,
    pub group: GroupLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOutput {
    /// Predicted median, litres.
    pub median: f64,
    pub l_param: f64,
    pub s_param: f64,
    /// Lower limit of normal, litres.
    pub lln: f64,
    pub z_score: Option<f64>,
    pub percent_predicted: Option<f64>,
}
