use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::table::{CoefficientRow, CoefficientTable, TableError};
use super::{GroupLabel, Sex};

#[derive(Debug, Error)]
pub enum TableSetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Table { path: PathBuf, source: TableError },
    #[error("two tables for group `{group}`, sex {sex}")]
    Duplicate { group: GroupLabel, sex: Sex },
    #[error("no table for group `{group}`, sex {sex}")]
    Missing { group: GroupLabel, sex: Sex },
    #[error("no `*.csv` tables found in {0}")]
    Empty(PathBuf),
}

/// All tables available to an analysis, keyed by (group, sex).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableSet {
    tables: BTreeMap<(GroupLabel, Sex), CoefficientTable>,
}

impl TableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tables(tables: impl IntoIterator<Item = CoefficientTable>) -> Result<Self, TableSetError> {
        let mut set = Self::new();
        for t in tables {
            set.insert(t)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, table: CoefficientTable) -> Result<(), TableSetError> {
        let key = (table.group().clone(), table.sex());
        if self.tables.contains_key(&key) {
            return Err(TableSetError::Duplicate {
                group: key.0,
                sex: key.1,
            });
        }
        self.tables.insert(key, table);
        Ok(())
    }

    pub fn get(&self, group: &GroupLabel, sex: Sex) -> Option<&CoefficientTable> {
        self.tables.get(&(group.clone(), sex))
    }

    pub fn require(&self, group: &GroupLabel, sex: Sex) -> Result<&CoefficientTable, TableSetError> {
        self.get(group, sex).ok_or_else(|| TableSetError::Missing {
            group: group.clone(),
            sex,
        })
    }

    pub fn groups(&self) -> BTreeSet<GroupLabel> {
        self.tables.keys().map(|(g, _)| g.clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CoefficientTable> {
        self.tables.values()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Loads every `*.csv` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, TableSetError> {
        let io = |e| TableSetError::Io {
            path: dir.to_path_buf(),
            source: e,
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(TableSetError::Empty(dir.to_path_buf()));
        }
        let mut set = Self::new();
        for path in paths {
            let file = fs::File::open(&path).map_err(|e| TableSetError::Io {
                path: path.clone(),
                source: e,
            })?;
            let table = CoefficientTable::load(file).map_err(|e| TableSetError::Table {
                path: path.clone(),
                source: e,
            })?;
            set.insert(table)?;
        }
        Ok(set)
    }

    /// Writes one `<group>_<sex>.csv` per table.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>, TableSetError> {
        fs::create_dir_all(dir).map_err(|e| TableSetError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let mut written = Vec::new();
        for t in self.iter() {
            let path = dir.join(table_file_name(t));
            fs::write(&path, t.to_file_string()).map_err(|e| TableSetError::Io {
                path: path.clone(),
                source: e,
            })?;
            written.push(path);
        }
        Ok(written)
    }
}

pub(crate) fn table_file_name(t: &CoefficientTable) -> String {
    let safe: String = t
        .group()
        .as_str()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("{}_{}.csv", safe, t.sex())
}

/// Parametric table without splines: `ln M = a + b ln(height) + c ln(age)`,
/// `ln S = d + e ln(age)`, `L = f + g ln(age)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearShape {
    pub m_intercept: f64,
    pub m_ln_height: f64,
    pub m_ln_age: f64,
    pub s_intercept: f64,
    pub s_ln_age: f64,
    pub l_intercept: f64,
    pub l_ln_age: f64,
}

impl LogLinearShape {
    /// Synthetic adult FEV1-like physiology: roughly 4.0 L (male, 175 cm) and
    /// 3.0 L (female, 163 cm) at age 40, declining with age, S near 0.12.
    pub fn adult_fev1(sex: Sex) -> Self {
        let m_intercept = match sex {
            Sex::Male => -8.685,
            Sex::Female => -8.8164,
        };
        Self {
            m_intercept,
            m_ln_height: 2.2,
            m_ln_age: -0.35,
            s_intercept: -2.3,
            s_ln_age: 0.05,
            l_intercept: 1.0,
            l_ln_age: 0.0,
        }
    }

    /// Same shape with the median scaled by `factor` everywhere.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            m_intercept: self.m_intercept + factor.ln(),
            ..self
        }
    }

    /// Knots every 5 years from 20 to 95, plus 18.
    pub fn adult_grid() -> Vec<f64> {
        std::iter::once(18.0)
            .chain((20..=95).step_by(5).map(f64::from))
            .collect()
    }

    pub fn build(
        &self,
        table_id: impl Into<String>,
        group: GroupLabel,
        sex: Sex,
        ages: &[f64],
    ) -> Result<CoefficientTable, TableError> {
        self.build_with_spline(table_id, group, sex, ages, |_| 0.0)
    }

    pub fn build_with_spline(
        &self,
        table_id: impl Into<String>,
        group: GroupLabel,
        sex: Sex,
        ages: &[f64],
        m_spline: impl Fn(f64) -> f64,
    ) -> Result<CoefficientTable, TableError> {
        let rows = ages
            .iter()
            .map(|&age| CoefficientRow {
                age,
                m_intercept: self.m_intercept,
                m_ln_height: self.m_ln_height,
                m_ln_age: self.m_ln_age,
                m_spline: m_spline(age),
                s_intercept: self.s_intercept,
                s_ln_age: self.s_ln_age,
                s_spline: 0.0,
                l_intercept: self.l_intercept,
                l_ln_age: self.l_ln_age,
                s_ln_height: 0.0,
            })
            .collect();
        CoefficientTable::new(table_id, group, sex, rows, BTreeMap::new())
    }
}
