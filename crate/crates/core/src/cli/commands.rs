use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::output::{flag, num, write_output, Emitter, Format, Provenance};
use super::{AuditArgs, CliError, Command, EvalArgs, Globals, PhiArgs, PoolArgs, ScoreArgs, SynthArgs};
use crate::cohort::{
    filter_at_risk, ingest, map_groups, write_cohort_csv, GroupMapping, IngestOptions, OutcomeSelector, Participant,
    Schema,
};
use crate::fairness_audit::{
    impossibility_panel, render_panel, AuditConfig, AuditReport, Criterion, PanelConfig, ScoreRecord, ScoreSet,
    ThresholdRule, DEFAULT_AUDIT_REPLICATES, DEFAULT_INDEPENDENCE_TOLERANCE, DEFAULT_MIN_GROUP,
    DEFAULT_SEPARATION_TOLERANCE,
};
use crate::outcome_eval::{self, evaluate_panel, Orientation, OrientationPolicy};
use crate::ref_engine::{GroupLabel, Sex, TableSet, LLN_Z, NAIVE_GROUP};
use crate::scores::{reference_output, score_participant, Reference, ScoreDefinition, ScoreKind, POOLED_GROUP};
use crate::sdoh_calibration::{
    estimate_phi, gap_summary, CalibrationTables, EstimateOptions, Metric, PhiEstimate, DEFAULT_MIN_PARTICIPANTS,
    LITERATURE_SDOH_SHARE,
};
use crate::synth::{self, build_interpolated_table, build_pooled_table, SynthConfig};

pub(super) fn dispatch(command: Command, globals: &Globals) -> Result<(), CliError> {
    match command {
        Command::Score(a) => score(a, globals),
        Command::EstimatePhi(a) => estimate(a, globals),
        Command::Audit(a) => audit(a, globals),
        Command::Evaluate(a) => evaluate(a, globals),
        Command::Synth(a) => synth_cmd(a, globals),
        Command::PoolTables(a) => pool_tables(a, globals),
    }
}

// ---------------------------------------------------------------- validation

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::config("cli", format!("missing required --{flag}")))
}

fn existing_file(p: &Path, flag: &str) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::config("cli", format!("--{flag}: no such file {}", p.display())))
    }
}

fn existing_dir(p: &Path, flag: &str) -> Result<(), CliError> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(CliError::config("cli", format!("--{flag}: no such directory {}", p.display())))
    }
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn parse_list<T: std::str::FromStr<Err = String>>(s: &str, flag: &str) -> Result<Vec<T>, CliError> {
    let items = list(s);
    if items.is_empty() {
        return Err(CliError::config("cli", format!("--{flag} is empty")));
    }
    items
        .iter()
        .map(|x| x.parse().map_err(|e: String| CliError::config("cli", format!("--{flag}: {e}"))))
        .collect()
}

fn seed_required(globals: &Globals, command: &str) -> Result<u64, CliError> {
    globals
        .seed
        .ok_or_else(|| CliError::config("cli", format!("`{command}` is stochastic and requires --seed")))
}

fn format_or(globals: &Globals, out: Option<&PathBuf>, default: Format) -> Format {
    if let Some(f) = globals.format {
        return f;
    }
    match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv,
        Some("json") => Format::Json,
        _ => default,
    }
}

fn emitter(globals: &Globals, command: &str, config: &impl Serialize) -> Emitter {
    #[derive(Serialize)]
    struct Resolved<'a, C: Serialize> {
        globals: &'a Globals,
        args: &'a C,
    }
    let provenance = (!globals.canonical)
        .then(|| Provenance::new(command, &Resolved { globals, args: config }, globals.seed));
    Emitter { provenance }
}

/// Validated cohort inputs; files are only checked for existence here.
struct CohortInput {
    cohort: PathBuf,
    schema: Schema,
    mapping: GroupMapping,
}

fn cohort_input(cohort: Option<&PathBuf>, schema: Option<&PathBuf>, mapping: Option<&String>) -> Result<CohortInput, CliError> {
    let cohort = required(cohort.cloned(), "cohort")?;
    existing_file(&cohort, "cohort")?;
    let schema = match schema {
        Some(p) => {
            existing_file(p, "schema")?;
            let text = fs::read_to_string(p).map_err(|e| CliError::config("cohort", format!("{}: {e}", p.display())))?;
            Schema::from_toml(&text)?
        }
        None => Schema::default(),
    };
    let mapping = match mapping.map(String::as_str) {
        None | Some("identity") => GroupMapping::identity(),
        Some("nhanes") => GroupMapping::nhanes_default(),
        Some(path) => {
            let p = Path::new(path);
            existing_file(p, "mapping")?;
            let text = fs::read_to_string(p).map_err(|e| CliError::config("cohort", format!("{path}: {e}")))?;
            GroupMapping::from_toml(&text)?
        }
    };
    Ok(CohortInput { cohort, schema, mapping })
}

fn load_cohort(input: &CohortInput, at_risk: bool) -> Result<Vec<Participant>, CliError> {
    let file = fs::File::open(&input.cohort)
        .map_err(|e| CliError::data("cohort", format!("{}: {e}", input.cohort.display())))?;
    let (mut people, report) = ingest(file, &input.schema, &IngestOptions::default())?;
    if !report.rejected.is_empty() || !report.excluded.is_empty() {
        eprintln!(
            "cohort: {} accepted, {} rejected, {} outside the age window",
            report.accepted,
            report.rejected.len(),
            report.excluded.len()
        );
        for issue in report.rejected.iter().take(5) {
            eprintln!("  row {}: {}", issue.row, issue.reason);
        }
    }
    map_groups(&mut people, &input.mapping)?;
    if at_risk {
        let (kept, summary) = filter_at_risk(&people);
        eprintln!("cohort: at-risk filter kept {} of {}", summary.retained, summary.input);
        people = kept;
    }
    if people.is_empty() {
        return Err(CliError::data("cohort", "no participants left to analyse"));
    }
    Ok(people)
}

fn load_tables(dir: &Path) -> Result<TableSet, CliError> {
    Ok(TableSet::load_dir(dir)?)
}

// ---------------------------------------------------------------- score

fn score(a: ScoreArgs, g: &Globals) -> Result<(), CliError> {
    let input = cohort_input(a.cohort.as_ref(), a.schema.as_ref(), a.mapping.as_ref())?;
    let tables_dir = required(a.tables.clone(), "tables")?;
    existing_dir(&tables_dir, "tables")?;
    let explicit: Option<Vec<ScoreDefinition>> = a.scores.as_deref().map(|s| parse_list(s, "scores")).transpose()?;
    let lln_z = a.lln_z.unwrap_or(LLN_Z);
    if !(lln_z.is_finite() && lln_z < 0.0) {
        return Err(CliError::config("cli", "--lln-z must be a negative number"));
    }
    let format = format_or(g, a.out.as_ref(), Format::Csv);
    let emit = emitter(g, "score", &a);

    let tables = load_tables(&tables_dir)?;
    let people = load_cohort(&input, false)?;
    let defs = match explicit {
        Some(d) => d,
        None => tables
            .groups()
            .into_iter()
            .map(|grp| ScoreDefinition { name: format!("z:{grp}"), kind: ScoreKind::ZScore(Reference::Table(grp)) })
            .collect(),
    };

    #[derive(Serialize)]
    struct Row {
        id: String,
        group: Option<GroupLabel>,
        sex: Sex,
        age: f64,
        height: f64,
        fev1: Option<f64>,
        score: String,
        value: Option<f64>,
        table_id: Option<String>,
        median: Option<f64>,
        lln: Option<f64>,
        z_score: Option<f64>,
        percent_predicted: Option<f64>,
        below_lln: Option<bool>,
        error: Option<String>,
    }
    let mut rows = vec![];
    for p in &people {
        for d in &defs {
            let mut row = Row {
                id: p.id.clone(),
                group: p.group.clone(),
                sex: p.sex,
                age: p.age,
                height: p.height,
                fev1: p.fev1,
                score: d.name.clone(),
                value: None,
                table_id: None,
                median: None,
                lln: None,
                z_score: None,
                percent_predicted: None,
                below_lln: None,
                error: None,
            };
            let reference = match &d.kind {
                ScoreKind::Raw => None,
                ScoreKind::ZScore(r) | ScoreKind::PercentPredicted(r) => Some(r),
            };
            match score_participant(p, &tables, d, lln_z) {
                Ok(v) => {
                    row.value = Some(v.score);
                    row.below_lln = v.below_lln;
                    row.table_id = v.table_id;
                    if let Some(r) = reference {
                        let (out, _) = reference_output(p, &tables, r, lln_z).expect("scored above");
                        row.median = Some(out.median);
                        row.lln = Some(out.lln);
                        row.z_score = out.z_score;
                        row.percent_predicted = out.percent_predicted;
                    }
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            rows.push(row);
        }
    }

    let text = match format {
        Format::Json => emit.json(&rows),
        Format::Csv => {
            let mut out = vec![[
                "id", "group", "sex", "age", "height", "fev1", "score", "value", "table_id", "median", "lln", "z_score",
                "percent_predicted", "below_lln", "error",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()];
            for r in rows {
                out.push(vec![
                    r.id,
                    r.group.map(|g| g.to_string()).unwrap_or_default(),
                    r.sex.to_string(),
                    num(Some(r.age)),
                    num(Some(r.height)),
                    num(r.fev1),
                    r.score,
                    num(r.value),
                    r.table_id.unwrap_or_default(),
                    num(r.median),
                    num(r.lln),
                    num(r.z_score),
                    num(r.percent_predicted),
                    flag(r.below_lln),
                    r.error.unwrap_or_default(),
                ]);
            }
            emit.csv(&out)
        }
    };
    write_output(a.out.as_deref(), &text)
}

// ---------------------------------------------------------------- estimate-phi

fn estimate(a: PhiArgs, g: &Globals) -> Result<(), CliError> {
    let input = cohort_input(a.cohort.as_ref(), a.schema.as_ref(), a.mapping.as_ref())?;
    let tables_dir = required(a.tables.clone(), "tables")?;
    existing_dir(&tables_dir, "tables")?;
    let privileged = GroupLabel::new(a.privileged.clone().unwrap_or_else(|| "White".into()));
    let pooled = GroupLabel::new(a.pooled.clone().unwrap_or_else(|| POOLED_GROUP.into()));
    let metrics = match a.metric.as_deref().unwrap_or("both") {
        "both" => vec![Metric::ZScore, Metric::PercentPredicted],
        m => vec![m.parse::<Metric>().map_err(|e| CliError::config("cli", format!("--metric: {e}")))?],
    };
    let explicit_groups = a.groups.as_deref().map(list);
    let options = EstimateOptions { min_participants: a.min_participants.unwrap_or(DEFAULT_MIN_PARTICIPANTS) };
    let weighted = a.weighted.unwrap_or(false);
    let format = format_or(g, a.out.as_ref(), Format::Json);
    let emit = emitter(g, "estimate-phi", &a);

    let tables = load_tables(&tables_dir)?;
    let people = load_cohort(&input, false)?;
    let groups: Vec<GroupLabel> = match explicit_groups {
        Some(gs) if !gs.is_empty() => gs.into_iter().map(GroupLabel::new).collect(),
        Some(_) => return Err(CliError::config("cli", "--groups is empty")),
        None => {
            let mut present: Vec<GroupLabel> = people.iter().filter_map(|p| p.group.clone()).collect();
            present.sort();
            present.dedup();
            present.retain(|x| x != &privileged && x != &pooled && x.as_str() != NAIVE_GROUP);
            present
        }
    };
    if groups.is_empty() {
        return Err(CliError::data("sdoh_calibration", "no group to calibrate besides the privileged one"));
    }

    let mut estimates: Vec<PhiEstimate> = vec![];
    let mut gaps = vec![];
    for k in &groups {
        let roles = CalibrationTables { tables: &tables, group: k, privileged: &privileged, pooled: &pooled };
        for &m in &metrics {
            estimates.push(estimate_phi(&people, &roles, m, &options)?);
        }
        gaps.push(gap_summary(&people, k, &privileged, weighted)?);
    }
    let literature: BTreeMap<&str, f64> = LITERATURE_SDOH_SHARE.iter().copied().collect();

    if let Some(path) = &a.curve_out {
        let mut rows = vec![std::iter::once("phi".to_string())
            .chain(estimates.iter().map(|e| format!("{}:{}", e.group, metric_name(e.metric))))
            .collect::<Vec<_>>()];
        let n = estimates[0].objective_curve.len();
        for i in 0..n {
            let mut row = vec![num(Some(estimates[0].objective_curve[i].phi))];
            row.extend(estimates.iter().map(|e| num(Some(e.objective_curve[i].mse))));
            rows.push(row);
        }
        write_output(Some(path), &emit.csv(&rows))?;
    }

    let text = match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                privileged: &'a GroupLabel,
                pooled: &'a GroupLabel,
                estimates: &'a [PhiEstimate],
                gaps: &'a [crate::sdoh_calibration::GapSummary],
                literature_sdoh_share: &'a BTreeMap<&'a str, f64>,
            }
            emit.json(&Out { privileged: &privileged, pooled: &pooled, estimates: &estimates, gaps: &gaps, literature_sdoh_share: &literature })
        }
        Format::Csv => {
            let mut rows = vec![[
                "group", "n", "phi_z", "phi_pctpred", "objective_z", "objective_pctpred", "boundary_z",
                "boundary_pctpred", "mean_gap", "phi_true", "literature_sdoh_share",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()];
            for (k, gap) in groups.iter().zip(&gaps) {
                let find = |m: Metric| estimates.iter().find(|e| &e.group == k && e.metric == m);
                let (z, pp) = (find(Metric::ZScore), find(Metric::PercentPredicted));
                let boundary = |e: Option<&PhiEstimate>| {
                    e.and_then(|e| e.boundary).map(|b| format!("{b:?}").to_lowercase()).unwrap_or_default()
                };
                rows.push(vec![
                    k.to_string(),
                    z.or(pp).map(|e| e.n_used.to_string()).unwrap_or_default(),
                    num(z.map(|e| e.phi_hat)),
                    num(pp.map(|e| e.phi_hat)),
                    num(z.map(|e| e.objective_at_min)),
                    num(pp.map(|e| e.objective_at_min)),
                    boundary(z),
                    boundary(pp),
                    num(Some(gap.mean_gap)),
                    num(gap.phi_true),
                    num(literature.get(k.as_str()).copied()),
                ]);
            }
            emit.csv(&rows)
        }
    };
    write_output(a.out.as_deref(), &text)
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::ZScore => "z",
        Metric::PercentPredicted => "pctpred",
    }
}

// ---------------------------------------------------------------- audit

fn audit(a: AuditArgs, g: &Globals) -> Result<(), CliError> {
    let seed = seed_required(g, "audit")?;
    let input = cohort_input(a.cohort.as_ref(), a.schema.as_ref(), a.mapping.as_ref())?;
    let tables_dir = required(a.tables.clone(), "tables")?;
    existing_dir(&tables_dir, "tables")?;
    let defs: Vec<ScoreDefinition> = parse_list(a.scores.as_deref().unwrap_or("gli2012,raw"), "scores")?;
    let criteria: Vec<Criterion> = match a.criteria.as_deref().unwrap_or("all") {
        "all" => Criterion::ALL.to_vec(),
        s => parse_list(s, "criteria")?,
    };
    let needs_outcome = criteria.iter().any(|c| *c != Criterion::Independence);
    let outcome: Option<OutcomeSelector> = match &a.outcome {
        Some(o) => Some(o.parse().map_err(|e: String| CliError::config("cli", format!("--outcome: {e}")))?),
        None if needs_outcome => return Err(CliError::config("cli", "separation and sufficiency need --outcome")),
        None => None,
    };
    let threshold: ThresholdRule = a
        .threshold
        .as_deref()
        .unwrap_or("below-lln")
        .parse()
        .map_err(|e: String| CliError::config("cli", format!("--threshold: {e}")))?;
    let mut config = PanelConfig::new(
        GroupLabel::new(a.group_a.clone().unwrap_or_else(|| "White".into())),
        GroupLabel::new(a.group_b.clone().unwrap_or_else(|| "Black".into())),
        seed,
    );
    config.criteria = criteria;
    config.independence_tolerance = a.independence_tolerance.unwrap_or(DEFAULT_INDEPENDENCE_TOLERANCE);
    config.separation_tolerance = a.separation_tolerance.unwrap_or(DEFAULT_SEPARATION_TOLERANCE);
    config.audit = AuditConfig {
        replicates: a.replicates.unwrap_or(DEFAULT_AUDIT_REPLICATES),
        min_group: a.min_group.unwrap_or(DEFAULT_MIN_GROUP),
        ..AuditConfig::new(seed)
    };
    if config.audit.replicates == 0 {
        return Err(CliError::config("cli", "--replicates must be positive"));
    }
    if config.group_a == config.group_b {
        return Err(CliError::config("cli", "--group-a and --group-b must differ"));
    }
    let format = format_or(g, a.out.as_ref(), Format::Json);
    let emit = emitter(g, "audit", &a);

    let tables = load_tables(&tables_dir)?;
    let people = load_cohort(&input, a.at_risk.unwrap_or(false))?;
    let sets: Vec<ScoreSet> = defs
        .iter()
        .map(|d| {
            let mut skipped = 0;
            let records = people
                .iter()
                .filter_map(|p| {
                    let v = score_participant(p, &tables, d, LLN_Z).ok();
                    match (v, &p.group) {
                        (Some(v), Some(grp)) => Some(ScoreRecord {
                            score: v.score,
                            group: grp.clone(),
                            outcome: outcome.as_ref().and_then(|o| p.outcome(o)),
                            below_lln: v.below_lln,
                        }),
                        _ => {
                            skipped += 1;
                            None
                        }
                    }
                })
                .collect();
            if skipped > 0 {
                eprintln!("audit: {skipped} participants could not be scored under `{}`", d.name);
            }
            ScoreSet { name: d.name.clone(), records, threshold }
        })
        .collect();
    let panel = impossibility_panel(&sets, &config)?;
    eprint!("{}", render_panel(&panel));
    let reports: Vec<&AuditReport> = panel.reports().collect();

    if let Some(path) = &a.rates_out {
        let mut rows = vec![vec!["score".to_string(), "group".into(), "fpr".into(), "fnr".into()]];
        for r in reports.iter().filter(|r| r.criterion == Criterion::Separation) {
            for grp in r.n_per_group.keys() {
                rows.push(vec![
                    r.score_name.clone(),
                    grp.to_string(),
                    num(r.details.get(&format!("fpr_{grp}")).copied()),
                    num(r.details.get(&format!("fnr_{grp}")).copied()),
                ]);
            }
        }
        write_output(Some(path), &emit.csv(&rows))?;
    }

    let text = match format {
        Format::Json => emit.json(&reports),
        Format::Csv => {
            let (ga, gb) = (&config.group_a, &config.group_b);
            let mut rows = vec![vec![
                "score".to_string(),
                "criterion".into(),
                "statistic_name".into(),
                "statistic".into(),
                "ci_low".into(),
                "ci_high".into(),
                "tolerance".into(),
                "verdict".into(),
                format!("n_{ga}"),
                format!("n_{gb}"),
                "notes".into(),
            ]];
            for r in &reports {
                rows.push(vec![
                    r.score_name.clone(),
                    r.criterion.to_string(),
                    r.statistic_name.clone(),
                    num(r.statistic),
                    num(r.ci.map(|c| c.0)),
                    num(r.ci.map(|c| c.1)),
                    num(r.tolerance),
                    r.verdict.map(|v| v.to_string()).unwrap_or_default(),
                    r.n_per_group.get(ga).map(|n| n.to_string()).unwrap_or_default(),
                    r.n_per_group.get(gb).map(|n| n.to_string()).unwrap_or_default(),
                    r.notes.join("; "),
                ]);
            }
            emit.csv(&rows)
        }
    };
    write_output(a.out.as_deref(), &text)
}

// ---------------------------------------------------------------- evaluate

fn evaluate(a: EvalArgs, g: &Globals) -> Result<(), CliError> {
    let seed = seed_required(g, "evaluate")?;
    let input = cohort_input(a.cohort.as_ref(), a.schema.as_ref(), a.mapping.as_ref())?;
    let tables_dir = required(a.tables.clone(), "tables")?;
    existing_dir(&tables_dir, "tables")?;
    let defs: Vec<ScoreDefinition> = parse_list(a.scores.as_deref().unwrap_or("gli2012,gliglobal,naive"), "scores")?;
    let outcomes: Vec<OutcomeSelector> = parse_list(&required(a.outcomes.clone(), "outcomes")?, "outcomes")?;
    let mut config = outcome_eval::PanelConfig::new(seed);
    config.replicates = a.replicates.unwrap_or(outcome_eval::DEFAULT_REPLICATES);
    if config.replicates < outcome_eval::MIN_REPLICATES {
        return Err(CliError::config(
            "cli",
            format!("--replicates must be at least {}", outcome_eval::MIN_REPLICATES),
        ));
    }
    config.orientation = match a.orientation.as_deref().unwrap_or("auto") {
        "auto" => OrientationPolicy::Auto,
        "higher" => OrientationPolicy::Fixed(Orientation::HigherPositive),
        "lower" => OrientationPolicy::Fixed(Orientation::LowerPositive),
        o => return Err(CliError::config("cli", format!("--orientation: unknown `{o}`"))),
    };
    let format = format_or(g, a.out.as_ref(), Format::Json);
    let emit = emitter(g, "evaluate", &a);

    let tables = load_tables(&tables_dir)?;
    let people = load_cohort(&input, a.at_risk.unwrap_or(true))?;
    let panel = evaluate_panel(&people, &tables, &defs, &outcomes, &config);
    eprintln!("evaluate: orientation {:?} applied to every score", panel.orientation);
    for c in &panel.cells {
        if let Some(e) = &c.error {
            eprintln!("evaluate: {} × {}: {e}", c.score_name, c.outcome_name);
        }
    }

    let text = match format {
        Format::Json => emit.json(&panel),
        Format::Csv => {
            let orientation = match panel.orientation {
                Orientation::HigherPositive => "higher-positive",
                Orientation::LowerPositive => "lower-positive",
            };
            let mut header = vec!["outcome".to_string(), "orientation".into()];
            header.extend(defs.iter().map(|d| d.name.clone()));
            let mut rows = vec![header];
            for o in &outcomes {
                let name = o.to_string();
                let mut row = vec![name.clone(), orientation.to_string()];
                for d in &defs {
                    let cell = panel.cells.iter().find(|c| c.score_name == d.name && c.outcome_name == name);
                    row.push(match cell.map(|c| c.outcome()) {
                        Some(Ok(r)) => format!("{:.3} ({:.3}, {:.3})", r.auc, r.ci_low, r.ci_high),
                        Some(Err(e)) => format!("error: {e}"),
                        None => String::new(),
                    });
                }
                rows.push(row);
            }
            emit.csv(&rows)
        }
    };
    write_output(a.out.as_deref(), &text)
}

// ---------------------------------------------------------------- synth

fn synth_cmd(a: SynthArgs, g: &Globals) -> Result<(), CliError> {
    let spec_path = required(a.spec.clone(), "spec")?;
    existing_file(&spec_path, "spec")?;
    if g.format == Some(Format::Json) {
        return Err(CliError::config("cli", "synth writes a cohort CSV; --format json is not supported"));
    }
    let text = fs::read_to_string(&spec_path)
        .map_err(|e| CliError::config("synth", format!("{}: {e}", spec_path.display())))?;
    let cfg = SynthConfig::from_toml(&text)?;
    if g.seed.is_none() && cfg.seed.is_none() {
        return Err(CliError::config("cli", "`synth` is stochastic and requires --seed or a seed in the spec"));
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let spec = cfg.into_spec(base, g.seed)?;
    let effective = Globals { seed: Some(spec.seed), ..g.clone() };
    let emit = emitter(&effective, "synth", &(&a, &text));

    let (people, report) = synth::generate(&spec)?;
    for w in &report.warnings {
        eprintln!("synth: {w}");
    }
    let participants: Vec<Participant> = people.into_iter().map(Participant::from).collect();
    let csv = emit.csv_header() + &write_cohort_csv(&participants);
    write_output(a.out.as_deref(), &csv)?;
    if let Some(dir) = &a.tables_out {
        write_tables(&spec.tables, dir, &emit)?;
    }
    if let Some(path) = &a.report {
        write_output(Some(path), &emit.json(&report))?;
    }
    Ok(())
}

fn write_tables(set: &TableSet, dir: &Path, emit: &Emitter) -> Result<(), CliError> {
    let mut stamped = TableSet::new();
    for t in set.iter() {
        let mut t = t.clone();
        if let Some(p) = &emit.provenance {
            for (k, v) in p.pairs() {
                t = t.with_metadata(k, v);
            }
        }
        stamped.insert(t)?;
    }
    for p in stamped.write_dir(dir)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- pool-tables

fn parse_weights(s: &str) -> Result<Vec<(GroupLabel, f64)>, CliError> {
    let items = list(s);
    if items.is_empty() {
        return Err(CliError::config("cli", "--groups is empty"));
    }
    let mut out = vec![];
    for item in items {
        let (g, w) = match item.split_once('=') {
            Some((g, w)) => {
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| CliError::config("cli", format!("--groups: bad weight in `{item}`")))?;
                (g.trim().to_string(), w)
            }
            None => (item.clone(), 1.0),
        };
        if !(w.is_finite() && w > 0.0) {
            return Err(CliError::config("cli", format!("--groups: weight for `{g}` must be positive")));
        }
        out.push((GroupLabel::new(g), w));
    }
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    Ok(out.into_iter().map(|(g, w)| (g, w / total)).collect())
}

fn pool_tables(a: PoolArgs, g: &Globals) -> Result<(), CliError> {
    let dir = required(a.tables.clone(), "tables")?;
    existing_dir(&dir, "tables")?;
    let out = required(a.out.clone(), "out")?;
    let label = GroupLabel::new(a.label.clone().unwrap_or_else(|| POOLED_GROUP.into()));
    let interpolate = match (&a.between, a.phi) {
        (Some(b), Some(phi)) => {
            let pair = list(b);
            if pair.len() != 2 {
                return Err(CliError::config("cli", "--between takes `group,privileged`"));
            }
            if !(0.0..=1.0).contains(&phi) {
                return Err(CliError::config("cli", "--phi must lie in [0, 1]"));
            }
            if a.groups.is_some() {
                return Err(CliError::config("cli", "--groups and --between are exclusive"));
            }
            Some((GroupLabel::new(&pair[0]), GroupLabel::new(&pair[1]), phi))
        }
        (None, None) => None,
        _ => return Err(CliError::config("cli", "--between and --phi go together")),
    };
    let weights = a.groups.as_deref().map(parse_weights).transpose()?;
    let emit = emitter(g, "pool-tables", &a);

    let set = load_tables(&dir)?;
    let mut pooled = TableSet::new();
    match interpolate {
        Some((k, p, phi)) => {
            for sex in Sex::ALL {
                if let (Some(tk), Some(tp)) = (set.get(&k, sex), set.get(&p, sex)) {
                    pooled.insert(build_interpolated_table(tk, tp, phi, format!("{label}_{sex}"), label.clone())?)?;
                }
            }
        }
        None => {
            let weights = match weights {
                Some(w) => w,
                None => {
                    let groups: Vec<GroupLabel> = set
                        .groups()
                        .into_iter()
                        .filter(|x| x.as_str() != NAIVE_GROUP && x != &label)
                        .collect();
                    let w = 1.0 / groups.len().max(1) as f64;
                    groups.into_iter().map(|x| (x, w)).collect()
                }
            };
            for sex in Sex::ALL {
                let parts: Option<Vec<_>> = weights.iter().map(|(grp, w)| set.get(grp, sex).map(|t| (t, *w))).collect();
                if let Some(parts) = parts {
                    pooled.insert(build_pooled_table(&parts, format!("{label}_{sex}"), label.clone())?)?;
                }
            }
        }
    }
    if pooled.is_empty() {
        return Err(CliError::data("synth", "no sex is covered by every requested group"));
    }
    write_tables(&pooled, &out, &emit)
}
