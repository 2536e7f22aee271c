pub mod ref_engine;
pub mod rng;
pub mod stats;
pub mod cohort;
pub mod synth;
pub mod sdoh_calibration;
pub mod scores;
pub mod outcome_eval;
pub mod fairness_audit;
pub mod cli;
