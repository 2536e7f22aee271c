//! Command-line front end: argument and config-file parsing, validation,
//! and dispatch to the analysis modules.

mod commands;
mod error;
mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use error::CliError;
pub use output::{Emitter, Format, Provenance, TOOL};

#[derive(Debug, Parser)]
#[command(name = "spirofair", version, about = "Spirometry reference scoring, implicit-SDoH calibration and fairness audits")]
pub struct Cli {
    /// Seed for every stochastic step; required by synth, audit and evaluate.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// TOML file supplying defaults for any flag; flags win on conflict.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Omit the provenance header so outputs can be compared byte for byte.
    #[arg(long, global = true)]
    pub canonical: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every participant against reference tables.
    Score(ScoreArgs),
    /// Estimate the implicit SDoH fraction a pooled reference encodes.
    EstimatePhi(PhiArgs),
    /// Independence / separation / sufficiency audit of score definitions.
    Audit(AuditArgs),
    /// AUC panel of score definitions against outcomes.
    Evaluate(EvalArgs),
    /// Generate a synthetic cohort from a TOML spec.
    Synth(SynthArgs),
    /// Build pooled (or exactly interpolated) reference tables.
    PoolTables(PoolArgs),
}

/// Flags shared by the commands that read a cohort.
macro_rules! args_struct {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty),* $(,)? }
     paths: [$($path:ident),*]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
        pub struct $name {
            $($(#[$fmeta])* #[arg(long)] pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Fills fields unset on the command line from the config file.
            fn merge(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }

            /// Resolves relative paths from a config file against its directory.
            fn rebase(mut self, base: &Path) -> Self {
                $(self.$path = self.$path.map(|p| rebase_path(base, p));)*
                self
            }
        }
    };
}

fn rebase_path(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

args_struct! {
    ScoreArgs {
        /// Cohort CSV.
        cohort: PathBuf,
        /// Directory of coefficient tables.
        tables: PathBuf,
        /// TOML schema mapping fields to CSV columns.
        schema: PathBuf,
        /// `identity`, `nhanes`, or a TOML mapping file.
        mapping: String,
        /// Comma-separated score definitions (default: z against every table group).
        scores: String,
        /// z at which the lower limit of normal is taken.
        lln_z: f64,
        out: PathBuf,
    }
    paths: [cohort, tables, schema, out]
}

args_struct! {
    PhiArgs {
        cohort: PathBuf,
        tables: PathBuf,
        schema: PathBuf,
        mapping: String,
        /// Comma-separated groups to calibrate (default: every other group in the cohort).
        groups: String,
        /// Privileged reference group (default White).
        privileged: String,
        /// Group label of the pooled tables (default global).
        pooled: String,
        /// `z`, `pctpred`, or `both` (default).
        metric: String,
        /// Minimum participants per calibrated group (default 30).
        min_participants: usize,
        /// Weight gap summaries by the cohort's survey weights.
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        weighted: bool,
        /// CSV of the objective curve(s).
        curve_out: PathBuf,
        out: PathBuf,
    }
    paths: [cohort, tables, schema, curve_out, out]
}

args_struct! {
    AuditArgs {
        cohort: PathBuf,
        tables: PathBuf,
        schema: PathBuf,
        mapping: String,
        /// Comma-separated score definitions (default gli2012,raw).
        scores: String,
        /// `all` or a comma-separated subset of independence, separation, sufficiency.
        criteria: String,
        /// Outcome `name` or `name@horizon` (required for separation and sufficiency).
        outcome: String,
        /// Reference group of the comparison (default White).
        group_a: String,
        /// Compared group (default Black).
        group_b: String,
        /// `below-lln` (default), `below:<t>` or `above:<t>`.
        threshold: String,
        /// Bootstrap replicates (default 500).
        replicates: usize,
        independence_tolerance: f64,
        separation_tolerance: f64,
        /// Minimum records per group (default 30).
        min_group: usize,
        /// Restrict to participants with or at risk of respiratory disease.
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        at_risk: bool,
        /// CSV of per-group error rates.
        rates_out: PathBuf,
        out: PathBuf,
    }
    paths: [cohort, tables, schema, rates_out, out]
}

args_struct! {
    EvalArgs {
        cohort: PathBuf,
        tables: PathBuf,
        schema: PathBuf,
        mapping: String,
        /// Comma-separated score definitions (default gli2012,gliglobal,naive).
        scores: String,
        /// Comma-separated outcomes, each `name` or `name@horizon`.
        outcomes: String,
        /// Bootstrap replicates (default 1000, at least 100).
        replicates: usize,
        /// `auto` (default), `higher`, or `lower`.
        orientation: String,
        /// Restrict to participants with or at risk of respiratory disease (default true).
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        at_risk: bool,
        out: PathBuf,
    }
    paths: [cohort, tables, schema, out]
}

args_struct! {
    SynthArgs {
        /// TOML synthetic-cohort spec.
        spec: PathBuf,
        /// Cohort CSV to write.
        out: PathBuf,
        /// Directory to write the ideal-physiology tables to.
        tables_out: PathBuf,
        /// JSON generation report.
        report: PathBuf,
    }
    paths: [spec, out, tables_out, report]
}

args_struct! {
    PoolArgs {
        /// Directory of group tables.
        tables: PathBuf,
        /// `A=w,B=w,...` or `A,B,...` (equal weights); default every group except naive.
        groups: String,
        /// Label of the pooled tables (default global).
        label: String,
        /// `group,privileged`: build an exactly interpolated table instead of pooling.
        between: String,
        /// Interpolation fraction for `--between`.
        phi: f64,
        /// Output directory.
        out: PathBuf,
    }
    paths: [tables, out]
}

/// Config-file layout: global keys plus one table per command.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    seed: Option<u64>,
    threads: Option<usize>,
    format: Option<Format>,
    canonical: Option<bool>,
    score: Option<ScoreArgs>,
    estimate_phi: Option<PhiArgs>,
    audit: Option<AuditArgs>,
    evaluate: Option<EvalArgs>,
    synth: Option<SynthArgs>,
    pool_tables: Option<PoolArgs>,
}

/// Global settings after merging flags over the config file.
#[derive(Debug, Clone, Serialize)]
pub struct Globals {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub canonical: bool,
}

fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
    let cfg: ConfigFile =
        toml::from_str(&text).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mapping = |m: Option<String>| {
        m.map(|m| match m.as_str() {
            "identity" | "nhanes" => m,
            _ => rebase_path(base, PathBuf::from(m)).to_string_lossy().into_owned(),
        })
    };
    Ok(ConfigFile {
        score: cfg.score.map(|a| ScoreArgs { mapping: mapping(a.mapping.clone()), ..a.rebase(base) }),
        estimate_phi: cfg.estimate_phi.map(|a| PhiArgs { mapping: mapping(a.mapping.clone()), ..a.rebase(base) }),
        audit: cfg.audit.map(|a| AuditArgs { mapping: mapping(a.mapping.clone()), ..a.rebase(base) }),
        evaluate: cfg.evaluate.map(|a| EvalArgs { mapping: mapping(a.mapping.clone()), ..a.rebase(base) }),
        synth: cfg.synth.map(|a| a.rebase(base)),
        pool_tables: cfg.pool_tables.map(|a| a.rebase(base)),
        ..cfg
    })
}

/// Merges the config file (if any) under the parsed flags and runs the command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    let globals = Globals {
        seed: cli.seed.or(file.seed),
        format: cli.format.or(file.format),
        threads: cli.threads.or(file.threads),
        canonical: cli.canonical || file.canonical.unwrap_or(false),
    };
    let command = match cli.command {
        Command::Score(a) => Command::Score(a.merge(file.score.unwrap_or_default())),
        Command::EstimatePhi(a) => Command::EstimatePhi(a.merge(file.estimate_phi.unwrap_or_default())),
        Command::Audit(a) => Command::Audit(a.merge(file.audit.unwrap_or_default())),
        Command::Evaluate(a) => Command::Evaluate(a.merge(file.evaluate.unwrap_or_default())),
        Command::Synth(a) => Command::Synth(a.merge(file.synth.unwrap_or_default())),
        Command::PoolTables(a) => Command::PoolTables(a.merge(file.pool_tables.unwrap_or_default())),
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    match globals.threads {
        Some(0) => return Err(CliError::config("cli", "--threads must be at least 1")),
        Some(n) => pool = pool.num_threads(n),
        None => {}
    }
    let pool = pool.build().map_err(|e| CliError::config("cli", e.to_string()))?;
    pool.install(|| commands::dispatch(command, &globals))
}

/// Parses `args`, runs, reports errors on standard error, and returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("spirofair: {e}");
            e.exit_code()
        }
    }
}
