//! Participant-level cohort files: ingestion, race/ethnicity to reference
//! group mapping, and inclusion filters.

mod filter;
mod ingest;
mod mapping;
mod participant;

pub use filter::{filter_at_risk, is_at_risk, AtRiskSummary};
pub use ingest::{
    ingest, write_cohort_csv, IngestError, IngestOptions, IngestReport, RowIssue, Schema,
    TimeToEventColumns,
};
pub use mapping::{map_groups, GroupMapping, MappingError, MappingReport, MappingRule};
pub use participant::{OutcomeRecord, OutcomeSelector, Participant, Provenance};
