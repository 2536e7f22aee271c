use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::participant::Participant;
use crate::ref_engine::GroupLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    /// Case-insensitive; `*` matches any run of characters.
    pub pattern: String,
    pub group: GroupLabel,
}

/// Ordered source-category → reference-group rules; the first match wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMapping {
    pub rules: Vec<MappingRule>,
    #[serde(default)]
    pub default: Option<GroupLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("unmapped race/ethnicity categories: {}", .0.join(", "))]
    Unmapped(Vec<String>),
    #[error("invalid mapping file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingReport {
    pub group_counts: BTreeMap<GroupLabel, usize>,
    pub source_counts: BTreeMap<String, usize>,
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.trim().to_lowercase().chars().collect();
    let t: Vec<char> = text.trim().to_lowercase().chars().collect();
    // Iterative wildcard match with single-star backtracking.
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

impl GroupMapping {
    pub fn from_toml(text: &str) -> Result<Self, MappingError> {
        toml::from_str(text).map_err(|e| MappingError::Parse(e.to_string()))
    }

    /// Every category maps to itself.
    pub fn identity() -> Self {
        Self {
            rules: vec![],
            default: None,
        }
    }

    /// NHANES race/ethnicity (RIDRETH3 codes and their labels) onto GLI-2012
    /// groups. Hispanic participants map to White; non-Hispanic Asian maps
    /// to NE-Asian. Reference labels also map to themselves, so synthetic
    /// cohorts labelled directly with group names pass through.
    pub fn nhanes_default() -> Self {
        let r = |pattern: &str, group: &str| MappingRule {
            pattern: pattern.into(),
            group: GroupLabel::new(group),
        };
        Self {
            rules: vec![
                r("1", "White"),
                r("2", "White"),
                r("3", "White"),
                r("4", "Black"),
                r("6", "NE-Asian"),
                r("7", "Other"),
                r("Mexican American", "White"),
                r("Other Hispanic", "White"),
                r("Non-Hispanic White", "White"),
                r("Non-Hispanic Black", "Black"),
                r("Non-Hispanic Asian", "NE-Asian"),
                r("Other Race*", "Other"),
                r("Other/multiracial", "Other"),
                r("White", "White"),
                r("Black", "Black"),
                r("NE-Asian", "NE-Asian"),
                r("SE-Asian", "SE-Asian"),
                r("Other", "Other"),
            ],
            default: None,
        }
    }

    fn is_identity(&self) -> bool {
        self.rules.is_empty() && self.default.is_none()
    }

    pub fn resolve(&self, category: &str) -> Option<GroupLabel> {
        if self.is_identity() {
            return Some(GroupLabel::new(category.trim()));
        }
        self.rules
            .iter()
            .find(|r| glob_match(&r.pattern, category))
            .map(|r| r.group.clone())
            .or_else(|| self.default.clone())
    }
}

/// Tags every participant with its reference group. Either all participants
/// are mapped or none are (an unmapped category aborts before any change).
pub fn map_groups(
    participants: &mut [Participant],
    mapping: &GroupMapping,
) -> Result<MappingReport, MappingError> {
    let mut resolved = Vec::with_capacity(participants.len());
    let mut unmapped = BTreeSet::new();
    for p in participants.iter() {
        match mapping.resolve(&p.race_ethnicity) {
            Some(g) => resolved.push(g),
            None => {
                unmapped.insert(p.race_ethnicity.clone());
            }
        }
    }
    if !unmapped.is_empty() {
        return Err(MappingError::Unmapped(unmapped.into_iter().collect()));
    }
    let mut report = MappingReport::default();
    for (p, g) in participants.iter_mut().zip(resolved) {
        *report.group_counts.entry(g.clone()).or_default() += 1;
        *report.source_counts.entry(p.race_ethnicity.clone()).or_default() += 1;
        p.group = Some(g);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ref_engine::Sex;

    fn person(id: &str, cat: &str) -> Participant {
        Participant {
            id: id.into(),
            age: 40.0,
            height: 170.0,
            sex: Sex::Male,
            race_ethnicity: cat.into(),
            group: None,
            fev1: Some(3.0),
            fvc: None,
            smoker_ever: None,
            respiratory_dx: None,
            symptoms: Default::default(),
            outcomes: Default::default(),
            weight: None,
            provenance: None,
        }
    }

    #[test]
    fn glob() {
        assert!(glob_match("Other Race*", "Other Race - Including Multi-Racial"));
        assert!(glob_match("*hispanic*", "Other Hispanic"));
        assert!(glob_match("white", "WHITE"));
        assert!(!glob_match("white", "Non-Hispanic White"));
        assert!(glob_match("a*b*c", "aXXbYYc"));
        assert!(!glob_match("a*b*c", "aXXbYY"));
    }

    #[test]
    fn nhanes_partition() {
        let cats = [
            "Non-Hispanic White",
            "Non-Hispanic Black",
            "Non-Hispanic Asian",
            "Mexican American",
            "Other Hispanic",
            "Non-Hispanic White",
        ];
        let mut ps: Vec<_> = cats.iter().enumerate().map(|(i, c)| person(&i.to_string(), c)).collect();
        let rep = map_groups(&mut ps, &GroupMapping::nhanes_default()).unwrap();
        assert_eq!(rep.group_counts[&GroupLabel::new("White")], 4);
        assert_eq!(rep.group_counts[&GroupLabel::new("Black")], 1);
        assert_eq!(rep.group_counts[&GroupLabel::new("NE-Asian")], 1);
        assert_eq!(rep.group_counts.values().sum::<usize>(), ps.len());
        assert_eq!(rep.source_counts["Non-Hispanic White"], 2);
        assert_eq!(ps[4].group, Some(GroupLabel::new("White")));
    }

    #[test]
    fn unmapped_lists_categories_and_changes_nothing() {
        let mut ps = vec![person("a", "Martian"), person("b", "4"), person("c", "Venusian")];
        let err = map_groups(&mut ps, &GroupMapping::nhanes_default()).unwrap_err();
        assert_eq!(err, MappingError::Unmapped(vec!["Martian".into(), "Venusian".into()]));
        assert!(ps.iter().all(|p| p.group.is_none()));

        let with_default = GroupMapping {
            default: Some(GroupLabel::new("Other")),
            ..GroupMapping::nhanes_default()
        };
        map_groups(&mut ps, &with_default).unwrap();
        assert_eq!(ps[0].group, Some(GroupLabel::new("Other")));
        assert_eq!(ps[1].group, Some(GroupLabel::new("Black")));
    }

    #[test]
    fn toml_mapping() {
        let m = GroupMapping::from_toml(
            r#"
            default = "Other"
            [[rules]]
            pattern = "*white*"
            group = "White"
            "#,
        )
        .unwrap();
        assert_eq!(m.resolve("non-hispanic WHITE"), Some(GroupLabel::new("White")));
        assert_eq!(m.resolve("x"), Some(GroupLabel::new("Other")));
        assert_eq!(GroupMapping::identity().resolve(" A "), Some(GroupLabel::new("A")));
    }
}
