use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lms::{self, LmsError, LLN_Z};
use super::{DemographicInput, GroupLabel, ReferenceOutput, Sex};

pub const MIN_TABLE_AGE: f64 = 3.0;
pub const MAX_TABLE_AGE: f64 = 95.0;
/// Heights at which S and M are checked when a table is loaded.
pub const CHECK_HEIGHTS_CM: [f64; 2] = [100.0, 220.0];

pub const REQUIRED_COLUMNS: [&str; 10] = [
    "age",
    "m_intercept",
    "m_ln_height",
    "m_ln_age",
    "m_spline",
    "s_intercept",
    "s_ln_age",
    "s_spline",
    "l_intercept",
    "l_ln_age",
];

/// Group label reserved for the degenerate constant-median reference.
pub const NAIVE_GROUP: &str = "naive";

/// One age knot of a coefficient table.
///
/// `s_ln_height` is a reserved column; it is absent from files unless set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub age: f64,
    pub m_intercept: f64,
    pub m_ln_height: f64,
    pub m_ln_age: f64,
    pub m_spline: f64,
    pub s_intercept: f64,
    pub s_ln_age: f64,
    pub s_spline: f64,
    pub l_intercept: f64,
    pub l_ln_age: f64,
    #[serde(default)]
    pub s_ln_height: f64,
}

impl CoefficientRow {
    fn values(&self) -> [f64; 11] {
        [
            self.age,
            self.m_intercept,
            self.m_ln_height,
            self.m_ln_age,
            self.m_spline,
            self.s_intercept,
            self.s_ln_age,
            self.s_spline,
            self.l_intercept,
            self.l_ln_age,
            self.s_ln_height,
        ]
    }

    fn from_values(v: [f64; 11]) -> Self {
        Self {
            age: v[0],
            m_intercept: v[1],
            m_ln_height: v[2],
            m_ln_age: v[3],
            m_spline: v[4],
            s_intercept: v[5],
            s_ln_age: v[6],
            s_spline: v[7],
            l_intercept: v[8],
            l_ln_age: v[9],
            s_ln_height: v[10],
        }
    }

    /// Column-wise linear interpolation, `t` in [0, 1].
    fn lerp(&self, other: &Self, t: f64) -> Self {
        let a = self.values();
        let b = other.values();
        let mut out = [0.0; 11];
        for i in 0..11 {
            out[i] = a[i] + t * (b[i] - a[i]);
        }
        Self::from_values(out)
    }

    /// Pointwise weighted combination of several rows (same age assumed).
    pub(crate) fn weighted(rows: &[(&Self, f64)]) -> Self {
        let mut out = [0.0; 11];
        for (row, w) in rows {
            for (o, v) in out.iter_mut().zip(row.values()) {
                *o += w * v;
            }
        }
        out[0] = rows[0].0.age;
        Self::from_values(out)
    }

    pub fn median(&self, height: f64, age: f64) -> f64 {
        (self.m_intercept + self.m_ln_height * height.ln() + self.m_ln_age * age.ln() + self.m_spline)
            .exp()
    }

    pub fn s_param(&self, height: f64, age: f64) -> f64 {
        (self.s_intercept + self.s_ln_height * height.ln() + self.s_ln_age * age.ln() + self.s_spline)
            .exp()
    }

    pub fn l_param(&self, age: f64) -> f64 {
        self.l_intercept + self.l_ln_age * age.ln()
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error reading table: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing metadata line `# {0}=...`")]
    MissingMetadata(&'static str),
    #[error("invalid metadata `{key}={value}`")]
    BadMetadata { key: String, value: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("non-monotone age grid at row {row}")]
    NonMonotoneAge { row: usize },
    #[error("age {age} at row {row} outside [{MIN_TABLE_AGE}, {MAX_TABLE_AGE}]")]
    AgeOutOfRange { row: usize, age: f64 },
    #[error("non-positive S at row {row} (height {height} cm): {value}")]
    NonPositiveS { row: usize, height: f64, value: f64 },
    #[error("median not positive and finite at row {row} (height {height} cm): {value}")]
    BadMedian { row: usize, height: f64, value: f64 },
    #[error("non-finite L at row {row}")]
    BadL { row: usize },
    #[error("table needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("naive table must have zero height/age terms and a constant median (row {row})")]
    NaiveNotConstant { row: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("age {age} outside table grid [{min}, {max}]")]
    OutOfRange { age: f64, min: f64, max: f64 },
    #[error("height must be positive, got {0}")]
    InvalidHeight(f64),
    #[error("table `{table}` is for {table_sex}, participant is {sex}")]
    SexMismatch { table: String, table_sex: Sex, sex: Sex },
    #[error(transparent)]
    Lms(#[from] LmsError),
}

/// LMS reference parameters for one (group, sex), gridded in age.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    table_id: String,
    group: GroupLabel,
    sex: Sex,
    rows: Vec<CoefficientRow>,
    metadata: BTreeMap<String, String>,
}

impl CoefficientTable {
    /// Builds a table, enforcing every load-time invariant.
    pub fn new(
        table_id: impl Into<String>,
        group: GroupLabel,
        sex: Sex,
        rows: Vec<CoefficientRow>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, TableError> {
        validate_rows(&group, &rows)?;
        Ok(Self {
            table_id: table_id.into(),
            group,
            sex,
            rows,
            metadata,
        })
    }

    /// Constant-median reference: every input predicts `median`.
    pub fn naive(
        table_id: impl Into<String>,
        sex: Sex,
        median: f64,
        l_param: f64,
        s_param: f64,
    ) -> Result<Self, TableError> {
        let row = |age| CoefficientRow {
            age,
            m_intercept: median.ln(),
            m_ln_height: 0.0,
            m_ln_age: 0.0,
            m_spline: 0.0,
            s_intercept: s_param.ln(),
            s_ln_age: 0.0,
            s_spline: 0.0,
            l_intercept: l_param,
            l_ln_age: 0.0,
            s_ln_height: 0.0,
        };
        Self::new(
            table_id,
            GroupLabel::new(NAIVE_GROUP),
            sex,
            vec![row(MIN_TABLE_AGE), row(MAX_TABLE_AGE)],
            BTreeMap::new(),
        )
    }

    pub fn table_id(&self) -> &str {
        &self.table_id
    }

    pub fn group(&self) -> &GroupLabel {
        &self.group
    }

    pub fn sex(&self) -> Sex {
        self.sex
    }

    pub fn rows(&self) -> &[CoefficientRow] {
        &self.rows
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn is_naive(&self) -> bool {
        self.group.as_str() == NAIVE_GROUP
    }

    pub fn age_span(&self) -> (f64, f64) {
        (self.rows[0].age, self.rows[self.rows.len() - 1].age)
    }

    pub fn covers(&self, age: f64) -> bool {
        let (lo, hi) = self.age_span();
        age >= lo && age <= hi
    }

    pub fn with_identity(mut self, table_id: impl Into<String>, group: GroupLabel) -> Self {
        self.table_id = table_id.into();
        self.group = group;
        self
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    /// Coefficients at `age`, linearly interpolated between knots.
    pub fn coefficients_at(&self, age: f64) -> Result<CoefficientRow, PredictError> {
        let (min, max) = self.age_span();
        if !(age >= min && age <= max) {
            return Err(PredictError::OutOfRange { age, min, max });
        }
        let idx = self.rows.partition_point(|r| r.age <= age);
        if idx == self.rows.len() {
            return Ok(self.rows[idx - 1]);
        }
        let lo = &self.rows[idx - 1];
        let hi = &self.rows[idx];
        let t = (age - lo.age) / (hi.age - lo.age);
        Ok(lo.lerp(hi, t))
    }

    /// Median, L, S and LLN (at the default 5th-percentile cutoff).
    pub fn predict(&self, x: &DemographicInput) -> Result<ReferenceOutput, PredictError> {
        self.predict_with_lln(x, LLN_Z)
    }

    pub fn predict_with_lln(
        &self,
        x: &DemographicInput,
        lln_z: f64,
    ) -> Result<ReferenceOutput, PredictError> {
        if x.sex != self.sex {
            return Err(PredictError::SexMismatch {
                table: self.table_id.clone(),
                table_sex: self.sex,
                sex: x.sex,
            });
        }
        if !(x.height.is_finite() && x.height > 0.0) {
            return Err(PredictError::InvalidHeight(x.height));
        }
        let c = self.coefficients_at(x.age)?;
        let median = c.median(x.height, x.age);
        let s_param = c.s_param(x.height, x.age);
        let l_param = c.l_param(x.age);
        let lln = lms::lower_limit(median, l_param, s_param, lln_z)?;
        Ok(ReferenceOutput {
            median,
            l_param,
            s_param,
            lln,
            z_score: None,
            percent_predicted: None,
        })
    }

    /// [`predict`](Self::predict) plus z-score and percent-predicted of `measured`.
    pub fn score(
        &self,
        x: &DemographicInput,
        measured: f64,
        lln_z: f64,
    ) -> Result<ReferenceOutput, PredictError> {
        let mut out = self.predict_with_lln(x, lln_z)?;
        out.z_score = Some(lms::z_score(measured, out.median, out.l_param, out.s_param)?);
        out.percent_predicted = Some(lms::percent_predicted(measured, out.median)?);
        Ok(out)
    }

    /// Parses the table file format: `# key=value` lines, then a CSV body.
    pub fn load<R: Read>(mut source: R) -> Result<Self, TableError> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut metadata = BTreeMap::new();
        let mut body_start = text.len();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
            } else if !trimmed.is_empty() {
                body_start = offset;
                break;
            }
            offset += line.len();
        }

        let table_id = metadata
            .remove("table_id")
            .ok_or(TableError::MissingMetadata("table_id"))?;
        let group = metadata
            .remove("group")
            .ok_or(TableError::MissingMetadata("group"))?;
        let sex_raw = metadata
            .remove("sex")
            .ok_or(TableError::MissingMetadata("sex"))?;
        let sex: Sex = sex_raw.parse().map_err(|_| TableError::BadMetadata {
            key: "sex".into(),
            value: sex_raw.clone(),
        })?;
        if group.is_empty() {
            return Err(TableError::BadMetadata {
                key: "group".into(),
                value: group,
            });
        }

        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text[body_start..].as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| TableError::MalformedRow { row: 0, reason: e.to_string() })?
            .clone();
        for col in REQUIRED_COLUMNS {
            if !headers.iter().any(|h| h == col) {
                return Err(TableError::MissingColumn(col.to_string()));
            }
        }

        let mut rows = Vec::new();
        for (i, record) in reader.deserialize::<CoefficientRow>().enumerate() {
            let row = i + 1;
            let r = record.map_err(|e| TableError::MalformedRow {
                row,
                reason: e.to_string(),
            })?;
            if let Some(bad) = r.values().iter().position(|v| !v.is_finite()) {
                return Err(TableError::MalformedRow {
                    row,
                    reason: format!("non-finite value in column {}", bad + 1),
                });
            }
            rows.push(r);
        }

        Self::new(table_id, GroupLabel::new(group), sex, rows, metadata)
    }

    /// Serializes back to the table file format. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# group={}", self.group);
        let _ = writeln!(out, "# sex={}", self.sex);
        let _ = writeln!(out, "# table_id={}", self.table_id);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let with_height_s = self.rows.iter().any(|r| r.s_ln_height != 0.0);
        out.push_str(&REQUIRED_COLUMNS.join(","));
        if with_height_s {
            out.push_str(",s_ln_height");
        }
        out.push('\n');
        for r in &self.rows {
            let v = r.values();
            let n = if with_height_s { 11 } else { 10 };
            let line: Vec<String> = v[..n].iter().map(|x| format!("{x}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn validate_rows(group: &GroupLabel, rows: &[CoefficientRow]) -> Result<(), TableError> {
    if rows.len() < 2 {
        return Err(TableError::TooFewRows(rows.len()));
    }
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        if !(MIN_TABLE_AGE..=MAX_TABLE_AGE).contains(&r.age) {
            return Err(TableError::AgeOutOfRange { row, age: r.age });
        }
        if i > 0 && r.age <= rows[i - 1].age {
            return Err(TableError::NonMonotoneAge { row });
        }
        for height in CHECK_HEIGHTS_CM {
            let s = r.s_param(height, r.age);
            if !(s.is_finite() && s > 0.0) {
                return Err(TableError::NonPositiveS { row, height, value: s });
            }
            let m = r.median(height, r.age);
            if !(m.is_finite() && m > 0.0) {
                return Err(TableError::BadMedian { row, height, value: m });
            }
        }
        if !r.l_param(r.age).is_finite() {
            return Err(TableError::BadL { row });
        }
    }
    if group.as_str() == NAIVE_GROUP {
        let base = rows[0].m_intercept + rows[0].m_spline;
        for (i, r) in rows.iter().enumerate() {
            let constant = (r.m_intercept + r.m_spline - base).abs() <= 1e-12;
            if r.m_ln_height != 0.0 || r.m_ln_age != 0.0 || !constant {
                return Err(TableError::NaiveNotConstant { row: i + 1 });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "age,m_intercept,m_ln_height,m_ln_age,m_spline,s_intercept,s_ln_age,s_spline,l_intercept,l_ln_age\n";

    fn file(meta: &str, body: &str) -> String {
        format!("{meta}{HEADER}{body}")
    }

    const META: &str = "# group=White\n# sex=male\n# table_id=t1\n";

    fn input(age: f64, height: f64) -> DemographicInput {
        DemographicInput {
            age,
            height,
            sex: Sex::Male,
            group: GroupLabel::new("White"),
        }
    }

    #[test]
    fn minimal_two_row_file() {
        let t = CoefficientTable::parse(&file(
            META,
            "20,-9,2.2,-0.3,0,-2.2,0,0,1,0\n80,-9,2.2,-0.3,0,-2.2,0,0,1,0\n",
        ))
        .unwrap();
        assert_eq!(t.rows().len(), 2);
        assert_eq!(t.table_id(), "t1");
        assert_eq!(t.group().as_str(), "White");
        assert_eq!(t.sex(), Sex::Male);
    }

    #[test]
    fn non_monotone_grid_names_row() {
        let err = CoefficientTable::parse(&file(
            META,
            "30,0,0,0,0,-2,0,0,1,0\n25,0,0,0,0,-2,0,0,1,0\n",
        ))
        .unwrap_err();
        assert_eq!(err.to_string(), "non-monotone age grid at row 2");
    }

    #[test]
    fn malformed_and_missing_pieces() {
        let err = CoefficientTable::parse(&file(META, "30,x,0,0,0,-2,0,0,1,0\n40,0,0,0,0,-2,0,0,1,0\n"))
            .unwrap_err();
        assert!(matches!(err, TableError::MalformedRow { row: 1, .. }), "{err}");

        let err = CoefficientTable::parse(&file("# group=White\n# sex=male\n", "30,0,0,0,0,-2,0,0,1,0\n"))
            .unwrap_err();
        assert!(matches!(err, TableError::MissingMetadata("table_id")));

        let err = CoefficientTable::parse(&format!("{META}age,m_intercept\n30,1\n")).unwrap_err();
        assert!(matches!(err, TableError::MissingColumn(_)));

        let err = CoefficientTable::parse(&file(META, "30,0,0,0,0,-2,0,0,1,0\n")).unwrap_err();
        assert!(matches!(err, TableError::TooFewRows(1)));

        let err = CoefficientTable::parse(&file(META, "1,0,0,0,0,-2,0,0,1,0\n30,0,0,0,0,-2,0,0,1,0\n"))
            .unwrap_err();
        assert!(matches!(err, TableError::AgeOutOfRange { row: 1, .. }));
    }

    #[test]
    fn s_underflow_rejected() {
        let err = CoefficientTable::parse(&file(
            META,
            "30,0,0,0,0,-800,0,0,1,0\n40,0,0,0,0,-2,0,0,1,0\n",
        ))
        .unwrap_err();
        assert!(matches!(err, TableError::NonPositiveS { row: 1, .. }), "{err}");
    }

    #[test]
    fn naive_table_is_constant() {
        let ln4 = 4.0_f64.ln();
        let t = CoefficientTable::parse(&file(
            "# group=naive\n# sex=male\n# table_id=naive_m\n",
            &format!("3,{ln4},0,0,0,-2,0,0,1,0\n95,{ln4},0,0,0,-2,0,0,1,0\n"),
        ))
        .unwrap();
        assert!(t.is_naive());
        for (age, h) in [(3.0, 100.0), (20.0, 150.0), (57.3, 190.0), (95.0, 220.0)] {
            let m = t.predict(&input(age, h)).unwrap().median;
            assert!((m - 4.0).abs() < 1e-15, "{m}");
        }

        let err = CoefficientTable::parse(&file(
            "# group=naive\n# sex=male\n# table_id=bad\n",
            "3,1,0.1,0,0,-2,0,0,1,0\n95,1,0.1,0,0,-2,0,0,1,0\n",
        ))
        .unwrap_err();
        assert!(matches!(err, TableError::NaiveNotConstant { row: 1 }));
    }

    #[test]
    fn intercept_only_predicts_exp_ln() {
        let ln4 = 4.0_f64.ln();
        let t = CoefficientTable::parse(&file(
            META,
            &format!("20,{ln4},0,0,0,-2,0,0,1,0\n80,{ln4},0,0,0,-2,0,0,1,0\n"),
        ))
        .unwrap();
        let m = t.predict(&input(47.0, 171.0)).unwrap().median;
        assert!((m - 4.0).abs() < 1e-15);
    }

    #[test]
    fn spline_midpoint_interpolation() {
        let t = CoefficientTable::parse(&file(
            META,
            "40,0,0,0,0,-2,0,0,1,0\n50,0,0,0,0.1,-2,0,0,1,0\n",
        ))
        .unwrap();
        let c = t.coefficients_at(45.0).unwrap();
        assert!((c.m_spline - 0.05).abs() < 1e-15);
        let m = t.predict(&input(45.0, 170.0)).unwrap().median;
        assert!((m.ln() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn no_extrapolation() {
        let t = CoefficientTable::parse(&file(
            META,
            "40,0,0,0,0,-2,0,0,1,0\n50,0,0,0,0.1,-2,0,0,1,0\n",
        ))
        .unwrap();
        assert!(matches!(t.predict(&input(39.99, 170.0)), Err(PredictError::OutOfRange { .. })));
        assert!(matches!(t.predict(&input(50.01, 170.0)), Err(PredictError::OutOfRange { .. })));
        assert!(t.predict(&input(50.0, 170.0)).is_ok());
        assert!(matches!(t.predict(&input(45.0, 0.0)), Err(PredictError::InvalidHeight(_))));
        let female = DemographicInput { sex: Sex::Female, ..input(45.0, 170.0) };
        assert!(matches!(t.predict(&female), Err(PredictError::SexMismatch { .. })));
    }

    #[test]
    fn continuous_across_knots() {
        let t = CoefficientTable::parse(&file(
            META,
            "20,-9,2.2,-0.3,0,-2.2,0.05,0,1,0\n40,-9.1,2.2,-0.3,0.2,-2.1,0.05,0.01,0.9,0.02\n60,-9,2.25,-0.35,-0.1,-2.0,0.05,0.0,1.1,0\n",
        ))
        .unwrap();
        for knot in [40.0, 60.0_f64] {
            let at = t.predict(&input(knot, 175.0)).unwrap();
            let left = t.predict(&input(knot - 1e-9, 175.0)).unwrap();
            assert!((at.median - left.median).abs() < 1e-8);
            assert!((at.s_param - left.s_param).abs() < 1e-9);
            assert!((at.l_param - left.l_param).abs() < 1e-9);
        }
        let mid = t.predict(&input(40.0 + 1e-9, 175.0)).unwrap();
        let at = t.predict(&input(40.0, 175.0)).unwrap();
        assert!((at.median - mid.median).abs() < 1e-8);
    }

    #[test]
    fn file_roundtrip_is_exact() {
        let text = file(
            "# group=Black\n# sex=female\n# table_id=b_f\n# source=unit test\n",
            "20,-9.123456789,2.2,-0.3,0.001,-2.2,0.05,0,1.0000001,0\n80,-9,2.2,-0.3,0,-2.2,0,0,1,0\n",
        );
        let t = CoefficientTable::parse(&text).unwrap();
        let back = CoefficientTable::parse(&t.to_file_string()).unwrap();
        assert_eq!(t, back);
        assert_eq!(back.metadata().get("source").map(String::as_str), Some("unit test"));
    }

    #[test]
    fn lln_below_median() {
        let t = CoefficientTable::naive("n", Sex::Male, 4.0, 1.0, 0.1).unwrap();
        let out = t.predict(&input(50.0, 170.0)).unwrap();
        assert!(out.lln < out.median);
        assert!((out.lln - 3.342).abs() < 1e-3);
    }
}
