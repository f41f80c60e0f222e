//! Inter-rater reliability and individual-fairness audits for multi-rater
//! prediction tables.
//!
//! With the discrete metric on individuals and a prediction metric bounded
//! by 1, a Lipschitz individual-fairness violation is exactly two raters
//! producing different predictions for the same individual. The crate
//! enumerates those violations ([`fairness`]), aggregates them with the
//! usual reliability statistics ([`irr`]), stratifies both by group
//! ([`groups`]), and simulates the rating process to exercise all of it
//! ([`synth`]).

pub mod cli;
pub mod csv_io;
pub mod document;
pub mod fairness;
pub mod groups;
pub mod irr;
pub mod metrics;
pub mod report;
pub mod synth;
pub mod table;

pub use fairness::{enumerate_violations, FairnessMode, FairnessReport, ViolationRecord};
pub use metrics::MetricSpec;
pub use table::{
    rater_pairs, validate_table, GroupLabeling, IndividualId, Prediction, PredictionKind,
    PredictionTable, RaterId, ValidatedTable, ValueRange,
};
