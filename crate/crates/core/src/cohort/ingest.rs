use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::participant::{OutcomeRecord, Participant, Provenance};
use crate::ref_engine::Sex;

const SYMPTOM_PREFIX: &str = "symptom_";
const OUTCOME_PREFIX: &str = "outcome_";
const EVENT_PREFIX: &str = "event_";
const FOLLOWUP_PREFIX: &str = "followup_";

/// Tokens read as missing in any optional column.
const MISSING_TOKENS: [&str; 4] = ["", "na", "nan", "."];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeToEventColumns {
    pub event: String,
    pub followup: String,
}

/// Maps semantic participant fields onto cohort CSV column names.
///
/// With `auto_discover` set (the default), columns named `symptom_<x>`,
/// `outcome_<x>`, and `event_<x>` + `followup_<x>` pairs are picked up in
/// addition to the explicit maps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub id: String,
    pub age: String,
    pub height: String,
    pub sex: String,
    pub race_ethnicity: String,
    pub fev1: String,
    pub fvc: String,
    pub smoker_ever: String,
    pub respiratory_dx: String,
    pub weight: String,
    pub lf_ideal: String,
    pub deficit: String,
    pub symptoms: BTreeMap<String, String>,
    pub binary_outcomes: BTreeMap<String, String>,
    pub time_to_event: BTreeMap<String, TimeToEventColumns>,
    pub auto_discover: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            age: "age".into(),
            height: "height".into(),
            sex: "sex".into(),
            race_ethnicity: "race_ethnicity".into(),
            fev1: "fev1".into(),
            fvc: "fvc".into(),
            smoker_ever: "smoker_ever".into(),
            respiratory_dx: "respiratory_dx".into(),
            weight: "weight".into(),
            lf_ideal: "lf_ideal".into(),
            deficit: "deficit".into(),
            symptoms: BTreeMap::new(),
            binary_outcomes: BTreeMap::new(),
            time_to_event: BTreeMap::new(),
            auto_discover: true,
        }
    }
}

impl Schema {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Inclusive age window; rows outside are excluded (not rejected).
    pub age_window: Option<(f64, f64)>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            age_window: Some((20.0, 95.0)),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("mandatory column `{column}` (field `{field}`) not found")]
    MissingColumn { field: &'static str, column: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    /// 1-based data row.
    pub row: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<RowIssue>,
    pub excluded: Vec<RowIssue>,
    /// Per optional field: accepted rows where it was missing.
    pub missing: BTreeMap<String, usize>,
}

struct Columns {
    id: usize,
    age: usize,
    height: usize,
    sex: usize,
    race_ethnicity: usize,
    fev1: Option<usize>,
    fvc: Option<usize>,
    smoker_ever: Option<usize>,
    respiratory_dx: Option<usize>,
    weight: Option<usize>,
    lf_ideal: Option<usize>,
    deficit: Option<usize>,
    symptoms: Vec<(String, usize)>,
    binary: Vec<(String, usize)>,
    tte: Vec<(String, usize, usize)>,
}

fn resolve_columns(schema: &Schema, headers: &csv::StringRecord) -> Result<Columns, IngestError> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |field: &'static str, column: &str| {
        find(column).ok_or_else(|| IngestError::MissingColumn {
            field,
            column: column.to_string(),
        })
    };
    let explicit = |field: &'static str, column: &str| -> Result<usize, IngestError> {
        find(column).ok_or_else(|| IngestError::Schema(format!("column `{column}` for `{field}` not found")))
    };

    let mut symptoms = BTreeMap::new();
    for (name, col) in &schema.symptoms {
        symptoms.insert(name.clone(), explicit("symptoms", col)?);
    }
    let mut binary = BTreeMap::new();
    for (name, col) in &schema.binary_outcomes {
        binary.insert(name.clone(), explicit("binary_outcomes", col)?);
    }
    let mut tte = BTreeMap::new();
    for (name, cols) in &schema.time_to_event {
        tte.insert(
            name.clone(),
            (explicit("time_to_event", &cols.event)?, explicit("time_to_event", &cols.followup)?),
        );
    }
    if schema.auto_discover {
        for (i, h) in headers.iter().enumerate() {
            if let Some(name) = h.strip_prefix(SYMPTOM_PREFIX) {
                symptoms.entry(name.to_string()).or_insert(i);
            } else if let Some(name) = h.strip_prefix(OUTCOME_PREFIX) {
                binary.entry(name.to_string()).or_insert(i);
            } else if let Some(name) = h.strip_prefix(EVENT_PREFIX) {
                if let Some(f) = find(&format!("{FOLLOWUP_PREFIX}{name}")) {
                    tte.entry(name.to_string()).or_insert((i, f));
                }
            }
        }
    }

    Ok(Columns {
        id: required("id", &schema.id)?,
        age: required("age", &schema.age)?,
        height: required("height", &schema.height)?,
        sex: required("sex", &schema.sex)?,
        race_ethnicity: required("race_ethnicity", &schema.race_ethnicity)?,
        fev1: find(&schema.fev1),
        fvc: find(&schema.fvc),
        smoker_ever: find(&schema.smoker_ever),
        respiratory_dx: find(&schema.respiratory_dx),
        weight: find(&schema.weight),
        lf_ideal: find(&schema.lf_ideal),
        deficit: find(&schema.deficit),
        symptoms: symptoms.into_iter().collect(),
        binary: binary.into_iter().collect(),
        tte: tte.into_iter().map(|(n, (e, f))| (n, e, f)).collect(),
    })
}

fn is_missing(raw: &str) -> bool {
    MISSING_TOKENS.contains(&raw.trim().to_ascii_lowercase().as_str())
}

fn parse_f64(field: &str, raw: &str) -> Result<Option<f64>, String> {
    if is_missing(raw) {
        return Ok(None);
    }
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("unparseable {field} `{raw}`")),
    }
}

/// Booleans: 1/true/yes/y/t are true; 0/2/false/no/n/f are false (2 is the
/// NHANES "no" code); 7 and 9 (refused / don't know) count as missing.
fn parse_bool(field: &str, raw: &str) -> Result<Option<bool>, String> {
    if is_missing(raw) {
        return Ok(None);
    }
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Ok(Some(true)),
        "0" | "2" | "false" | "no" | "n" | "f" => Ok(Some(false)),
        "7" | "9" => Ok(None),
        _ => Err(format!("unparseable {field} `{raw}`")),
    }
}

fn positive_volume(field: &str, v: Option<f64>) -> Result<Option<f64>, String> {
    match v {
        Some(x) if x <= 0.0 => Err(format!("non-positive volume in {field}: {x}")),
        other => Ok(other),
    }
}

enum RowOutcome {
    Accepted(Participant),
    Excluded(String),
}

fn parse_row(
    cols: &Columns,
    rec: &csv::StringRecord,
    options: &IngestOptions,
) -> Result<RowOutcome, String> {
    let get = |i: usize| rec.get(i).unwrap_or("");
    let opt = |i: Option<usize>| i.map(get).unwrap_or("");

    let id = get(cols.id).trim().to_string();
    if id.is_empty() {
        return Err("missing id".into());
    }
    let age = parse_f64("age", get(cols.age))?.ok_or("missing age")?;
    let height = parse_f64("height", get(cols.height))?.ok_or("missing height")?;
    if height <= 0.0 {
        return Err(format!("non-positive height {height}"));
    }
    let sex_raw = get(cols.sex);
    let sex: Sex = sex_raw.parse().map_err(|_| format!("unparseable sex `{sex_raw}`"))?;
    let race_ethnicity = get(cols.race_ethnicity).trim().to_string();
    if race_ethnicity.is_empty() {
        return Err("missing race_ethnicity".into());
    }
    let fev1 = positive_volume("fev1", parse_f64("fev1", opt(cols.fev1))?)?;
    let fvc = positive_volume("fvc", parse_f64("fvc", opt(cols.fvc))?)?;
    let smoker_ever = parse_bool("smoker_ever", opt(cols.smoker_ever))?;
    let respiratory_dx = parse_bool("respiratory_dx", opt(cols.respiratory_dx))?;
    let weight = parse_f64("weight", opt(cols.weight))?;
    if let Some(w) = weight {
        if w < 0.0 {
            return Err(format!("negative weight {w}"));
        }
    }

    let mut symptoms = BTreeMap::new();
    for (name, i) in &cols.symptoms {
        if let Some(v) = parse_bool(name, get(*i))? {
            symptoms.insert(name.clone(), v);
        }
    }
    let mut outcomes = BTreeMap::new();
    for (name, i) in &cols.binary {
        if let Some(v) = parse_bool(name, get(*i))? {
            outcomes.insert(name.clone(), OutcomeRecord::Binary { value: v });
        }
    }
    for (name, e, f) in &cols.tte {
        let event = parse_bool(name, get(*e))?;
        let followup = parse_f64(name, get(*f))?;
        match (event, followup) {
            (Some(event), Some(followup_years)) => {
                if followup_years < 0.0 {
                    return Err(format!("negative follow-up for {name}: {followup_years}"));
                }
                outcomes.insert(name.clone(), OutcomeRecord::TimeToEvent { event, followup_years });
            }
            (None, None) => {}
            _ => return Err(format!("incomplete time-to-event outcome {name}")),
        }
    }

    let provenance = match (
        parse_f64("lf_ideal", opt(cols.lf_ideal))?,
        parse_f64("deficit", opt(cols.deficit))?,
    ) {
        (Some(lf_ideal), Some(deficit)) => Some(Provenance { lf_ideal, deficit }),
        _ => None,
    };

    if let Some((lo, hi)) = options.age_window {
        if !(age >= lo && age <= hi) {
            return Ok(RowOutcome::Excluded(format!("age {age} outside [{lo}, {hi}]")));
        }
    }

    Ok(RowOutcome::Accepted(Participant {
        id,
        age,
        height,
        sex,
        race_ethnicity,
        group: None,
        fev1,
        fvc,
        smoker_ever,
        respiratory_dx,
        symptoms,
        outcomes,
        weight,
        provenance,
    }))
}

/// Reads a cohort CSV; lines starting with `#` are skipped. Rows breaking a hard invariant are rejected, rows
/// outside the age window are excluded; both are itemized in the report.
pub fn ingest<R: Read>(
    source: R,
    schema: &Schema,
    options: &IngestOptions,
) -> Result<(Vec<Participant>, IngestReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let cols = resolve_columns(schema, &headers)?;

    let mut participants = Vec::new();
    let mut report = IngestReport::default();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let id = rec.get(cols.id).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        match parse_row(&cols, &rec, options) {
            Ok(RowOutcome::Accepted(p)) => participants.push(p),
            Ok(RowOutcome::Excluded(reason)) => report.excluded.push(RowIssue { row, id, reason }),
            Err(reason) => report.rejected.push(RowIssue { row, id, reason }),
        }
    }
    report.accepted = participants.len();
    report.missing = missingness(&participants, &cols);
    Ok((participants, report))
}

fn missingness(participants: &[Participant], cols: &Columns) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    let count = |f: &dyn Fn(&Participant) -> bool| participants.iter().filter(|p| f(p)).count();
    m.insert("fev1".into(), count(&|p| p.fev1.is_none()));
    m.insert("fvc".into(), count(&|p| p.fvc.is_none()));
    m.insert("smoker_ever".into(), count(&|p| p.smoker_ever.is_none()));
    m.insert("respiratory_dx".into(), count(&|p| p.respiratory_dx.is_none()));
    for (name, _) in &cols.symptoms {
        m.insert(format!("symptom:{name}"), count(&|p| !p.symptoms.contains_key(name)));
    }
    for name in cols.binary.iter().map(|(n, _)| n).chain(cols.tte.iter().map(|(n, _, _)| n)) {
        m.insert(format!("outcome:{name}"), count(&|p| !p.outcomes.contains_key(name)));
    }
    m
}

/// Writes participants in the standard cohort CSV layout read by
/// [`ingest`] with the default schema. Numbers use shortest round-trip
/// formatting, so ingesting the output reproduces the input exactly.
pub fn write_cohort_csv(participants: &[Participant]) -> String {
    let mut symptom_names = BTreeSet::new();
    let mut binary_names = BTreeSet::new();
    let mut tte_names = BTreeSet::new();
    for p in participants {
        symptom_names.extend(p.symptoms.keys().cloned());
        for (name, o) in &p.outcomes {
            match o {
                OutcomeRecord::Binary { .. } => binary_names.insert(name.clone()),
                OutcomeRecord::TimeToEvent { .. } => tte_names.insert(name.clone()),
            };
        }
    }

    let mut header: Vec<String> = [
        "id", "age", "height", "sex", "race_ethnicity", "fev1", "fvc", "smoker_ever",
        "respiratory_dx", "weight", "lf_ideal", "deficit",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(symptom_names.iter().map(|n| format!("{SYMPTOM_PREFIX}{n}")));
    header.extend(binary_names.iter().map(|n| format!("{OUTCOME_PREFIX}{n}")));
    for n in &tte_names {
        header.push(format!("{EVENT_PREFIX}{n}"));
        header.push(format!("{FOLLOWUP_PREFIX}{n}"));
    }

    let num = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let flag = |v: Option<bool>| v.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default();

    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for p in participants {
        let mut rec = vec![
            p.id.clone(),
            format!("{}", p.age),
            format!("{}", p.height),
            p.sex.to_string(),
            p.race_ethnicity.clone(),
            num(p.fev1),
            num(p.fvc),
            flag(p.smoker_ever),
            flag(p.respiratory_dx),
            num(p.weight),
            num(p.provenance.map(|x| x.lf_ideal)),
            num(p.provenance.map(|x| x.deficit)),
        ];
        rec.extend(symptom_names.iter().map(|n| flag(p.symptoms.get(n).copied())));
        rec.extend(binary_names.iter().map(|n| match p.outcomes.get(n) {
            Some(OutcomeRecord::Binary { value }) => flag(Some(*value)),
            _ => String::new(),
        }));
        for n in &tte_names {
            match p.outcomes.get(n) {
                Some(OutcomeRecord::TimeToEvent { event, followup_years }) => {
                    rec.push(flag(Some(*event)));
                    rec.push(format!("{followup_years}"));
                }
                _ => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
id,age,height,sex,race_ethnicity,fev1,smoker_ever,extra
p1,45,175,male,Non-Hispanic White,3.9,1,zzz
p2,60.5,160,female,Non-Hispanic Black,2.4,0,
p3,33,181,1,Mexican American,,,
";

    fn run(text: &str) -> (Vec<Participant>, IngestReport) {
        ingest(text.as_bytes(), &Schema::default(), &IngestOptions::default()).unwrap()
    }

    #[test]
    fn three_valid_rows() {
        let (ps, rep) = run(FIXTURE);
        assert_eq!(ps.len(), 3);
        assert_eq!(rep.accepted, 3);
        assert!(rep.rejected.is_empty() && rep.excluded.is_empty());
        assert_eq!(ps[2].sex, Sex::Male);
        assert_eq!(ps[2].fev1, None);
        assert_eq!(rep.missing["fev1"], 1);
        assert_eq!(rep.missing["smoker_ever"], 1);
        assert_eq!(rep.missing["respiratory_dx"], 3);
    }

    #[test]
    fn minor_is_excluded() {
        let (ps, rep) = run("id,age,height,sex,race_ethnicity\na,17,170,m,X\nb,20,170,m,X\n");
        assert_eq!(ps.len(), 1);
        assert_eq!(rep.excluded.len(), 1);
        assert_eq!(rep.excluded[0].row, 1);
        assert_eq!(rep.excluded[0].id.as_deref(), Some("a"));
    }

    #[test]
    fn negative_volume_rejected() {
        let (ps, rep) = run("id,age,height,sex,race_ethnicity,fev1\na,40,170,m,X,-1\n");
        assert!(ps.is_empty());
        assert!(rep.rejected[0].reason.contains("non-positive volume"), "{:?}", rep.rejected);
    }

    #[test]
    fn unparseable_numeric_is_row_error() {
        let (ps, rep) = run("id,age,height,sex,race_ethnicity,fev1\na,forty,170,m,X,3\nb,40,170,m,X,3\n");
        assert_eq!(ps.len(), 1);
        assert!(rep.rejected[0].reason.contains("unparseable age"));
    }

    #[test]
    fn missing_mandatory_column() {
        let err = ingest(
            "id,age,sex,race_ethnicity\n".as_bytes(),
            &Schema::default(),
            &IngestOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { field: "height", .. }));
    }

    #[test]
    fn custom_schema_and_outcomes() {
        let schema = Schema::from_toml(
            r#"
            id = "SEQN"
            age = "RIDAGEYR"
            height = "BMXHT"
            sex = "RIAGENDR"
            race_ethnicity = "RIDRETH3"
            fev1 = "FEV1_L"
            [symptoms]
            wheeze = "RDQ070"
            [binary_outcomes]
            dyspnea = "CDQ010"
            [time_to_event.mortality]
            event = "MORTSTAT"
            followup = "FUP_YEARS"
            "#,
        )
        .unwrap();
        let text = "SEQN,RIDAGEYR,BMXHT,RIAGENDR,RIDRETH3,FEV1_L,RDQ070,CDQ010,MORTSTAT,FUP_YEARS\n\
                    1,50,170,2,4,2.5,1,2,1,7.5\n";
        let (ps, _) = ingest(text.as_bytes(), &schema, &IngestOptions::default()).unwrap();
        let p = &ps[0];
        assert_eq!(p.sex, Sex::Female);
        assert_eq!(p.race_ethnicity, "4");
        assert_eq!(p.symptoms.get("wheeze"), Some(&true));
        assert_eq!(p.outcomes["dyspnea"], OutcomeRecord::Binary { value: false });
        assert_eq!(
            p.outcomes["mortality"],
            OutcomeRecord::TimeToEvent { event: true, followup_years: 7.5 }
        );
    }

    #[test]
    fn write_then_ingest_is_identity() {
        let text = "id,age,height,sex,race_ethnicity,fev1,smoker_ever,symptom_cough,outcome_dead,event_m,followup_m,lf_ideal,deficit\n\
                    a,40.25,170.1,m,White,3.3000000000000003,1,0,1,1,3.5,3.5,0.19999999999999973\n\
                    b,71,155,f,Black,2.1,,1,0,0,12,,\n";
        let (ps, _) = run(text);
        let (again, _) = run(&write_cohort_csv(&ps));
        assert_eq!(ps, again);
        assert!(ps[0].provenance.is_some());
        assert!(ps[1].provenance.is_none());
    }

    #[test]
    fn ingest_is_deterministic() {
        assert_eq!(run(FIXTURE).0, run(FIXTURE).0);
    }
}
