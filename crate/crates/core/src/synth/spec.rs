use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::ref_engine::{GroupLabel, LogLinearShape, Sex, TableSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub label: GroupLabel,
    pub n: usize,
    /// Location of the (pre-truncation) normal deficit distribution, litres.
    #[serde(default)]
    pub deficit_mean: f64,
    #[serde(default)]
    pub deficit_sd: f64,
    /// Scales the built-in physiology's median for this group. Ignored when
    /// tables are read from disk.
    #[serde(default = "one")]
    pub median_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Where ideal lung function LF* comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdealPhysiology {
    /// Everyone draws from the tables of this group.
    Shared(GroupLabel),
    /// Each participant draws from the tables of their own group.
    PerGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Demographics {
    pub age_min: f64,
    pub age_max: f64,
    pub female_fraction: f64,
    pub height_mean_male: f64,
    pub height_sd_male: f64,
    pub height_mean_female: f64,
    pub height_sd_female: f64,
    pub height_min: f64,
    pub height_max: f64,
}

impl Default for Demographics {
    fn default() -> Self {
        Self {
            age_min: 20.0,
            age_max: 90.0,
            female_fraction: 0.5,
            height_mean_male: 175.0,
            height_sd_male: 7.0,
            height_mean_female: 162.0,
            height_sd_female: 6.5,
            height_min: 140.0,
            height_max: 205.0,
        }
    }
}

/// Named generative rules for binary outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum OutcomeModel {
    /// `P(Y) = logistic(intercept + slope * LF)`, LF in litres.
    LogisticLf { intercept: f64, slope: f64 },
    /// `P(Y) = logistic(intercept + slope * age)`.
    LogisticAge { intercept: f64, slope: f64 },
    /// `P(Y) = rate` for everyone.
    Independent { rate: f64 },
}

impl OutcomeModel {
    pub fn probability(&self, lf: f64, age: f64) -> f64 {
        match *self {
            OutcomeModel::LogisticLf { intercept, slope } => logistic(intercept + slope * lf),
            OutcomeModel::LogisticAge { intercept, slope } => logistic(intercept + slope * age),
            OutcomeModel::Independent { rate } => rate,
        }
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    #[serde(flatten)]
    pub model: OutcomeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskFlags {
    pub smoker_ever_rate: f64,
    pub respiratory_dx_rate: f64,
}

impl Default for RiskFlags {
    fn default() -> Self {
        Self {
            smoker_ever_rate: 0.5,
            respiratory_dx_rate: 0.2,
        }
    }
}

/// Generative parameters of a synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub groups: Vec<GroupSpec>,
    pub tables: TableSet,
    pub ideal: IdealPhysiology,
    pub demographics: Demographics,
    pub outcomes: Vec<OutcomeSpec>,
    pub flags: RiskFlags,
    pub seed: u64,
}

impl SynthSpec {
    /// Spec using the built-in adult physiology, one table pair per group
    /// scaled by the group's `median_scale`.
    pub fn with_builtin_tables(groups: Vec<GroupSpec>, seed: u64) -> Result<Self, SynthError> {
        let tables = builtin_tables(&groups)?;
        Ok(Self {
            groups,
            tables,
            ideal: IdealPhysiology::PerGroup,
            demographics: Demographics::default(),
            outcomes: vec![],
            flags: RiskFlags::default(),
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.n).sum()
    }

    pub fn ideal_group<'a>(&'a self, own: &'a GroupLabel) -> &'a GroupLabel {
        match &self.ideal {
            IdealPhysiology::Shared(g) => g,
            IdealPhysiology::PerGroup => own,
        }
    }
}

pub fn builtin_tables(groups: &[GroupSpec]) -> Result<TableSet, SynthError> {
    let grid = LogLinearShape::adult_grid();
    let mut set = TableSet::new();
    for g in groups {
        if !(g.median_scale.is_finite() && g.median_scale > 0.0) {
            return Err(SynthError::InvalidSpec(format!(
                "median_scale for `{}` must be positive",
                g.label
            )));
        }
        for sex in Sex::ALL {
            let t = LogLinearShape::adult_fev1(sex)
                .scaled(g.median_scale)
                .build(format!("synth_{}_{}", g.label, sex), g.label.clone(), sex, &grid)?
                .with_metadata("source", "built-in synthetic adult physiology");
            set.insert(t).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        }
    }
    Ok(set)
}

/// On-disk form of [`SynthSpec`] (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: Option<u64>,
    /// Directory of ideal coefficient tables, relative to the config file.
    /// Absent: built-in physiology.
    #[serde(default)]
    pub tables: Option<String>,
    /// `per-group` (default) or the label of a group whose tables everyone shares.
    #[serde(default)]
    pub shared_ideal: Option<GroupLabel>,
    #[serde(default)]
    pub demographics: Demographics,
    #[serde(default)]
    pub flags: RiskFlags,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub outcomes: Vec<OutcomeSpec>,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    /// Resolves table paths against `base_dir`. `seed_override` wins over
    /// the file's seed; one of them must be present.
    pub fn into_spec(self, base_dir: &Path, seed_override: Option<u64>) -> Result<SynthSpec, SynthError> {
        let seed = seed_override
            .or(self.seed)
            .ok_or_else(|| SynthError::InvalidSpec("a seed is required".into()))?;
        let tables = match &self.tables {
            Some(dir) => TableSet::load_dir(&base_dir.join(dir))
                .map_err(|e| SynthError::InvalidSpec(e.to_string()))?,
            None => builtin_tables(&self.groups)?,
        };
        Ok(SynthSpec {
            groups: self.groups,
            tables,
            ideal: match self.shared_ideal {
                Some(g) => IdealPhysiology::Shared(g),
                None => IdealPhysiology::PerGroup,
            },
            demographics: self.demographics,
            outcomes: self.outcomes,
            flags: self.flags,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses() {
        let cfg = SynthConfig::from_toml(
            r#"
            seed = 11
            [demographics]
            age_min = 30
            female_fraction = 0.0
            [[groups]]
            label = "White"
            n = 10
            [[groups]]
            label = "Black"
            n = 12
            deficit_mean = 0.25
            deficit_sd = 0.05
            median_scale = 0.88
            [[outcomes]]
            name = "death"
            model = "logistic-age"
            intercept = -6.0
            slope = 0.08
            "#,
        )
        .unwrap();
        let spec = cfg.into_spec(Path::new("."), None).unwrap();
        assert_eq!(spec.seed, 11);
        assert_eq!(spec.total(), 22);
        assert_eq!(spec.tables.len(), 4);
        assert_eq!(spec.demographics.age_min, 30.0);
        assert_eq!(spec.demographics.age_max, 90.0);
        assert_eq!(
            spec.outcomes[0].model,
            OutcomeModel::LogisticAge { intercept: -6.0, slope: 0.08 }
        );
        assert_eq!(spec.ideal, IdealPhysiology::PerGroup);
    }

    #[test]
    fn seed_is_required() {
        let cfg = SynthConfig::from_toml("[[groups]]\nlabel = \"A\"\nn = 1\n").unwrap();
        assert!(cfg.clone().into_spec(Path::new("."), None).is_err());
        assert_eq!(cfg.into_spec(Path::new("."), Some(3)).unwrap().seed, 3);
    }
}
