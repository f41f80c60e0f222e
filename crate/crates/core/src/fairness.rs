//! Individual fairness as a Lipschitz condition over a prediction table.
//!
//! A pair of table cells violates `(d, D)`-individual fairness when the
//! distance between the two predictions exceeds the distance between the
//! two individuals. With the discrete `d` and a `D` bounded by 1, the only
//! possible violations are two raters disagreeing about the *same*
//! individual, so the violation set is exactly the set of rater
//! disagreements that reliability statistics aggregate.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{discrete_distance, MetricError, MetricSpec};
use crate::table::{rater_pairs, IndividualId, Prediction, RaterId, ValidatedTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMode {
    /// Compare raters on the same individual only.
    #[default]
    SameIndividualOnly,
    /// Also compare every cell of one individual with every cell of
    /// another. Under a normalized `D` this never adds a violation.
    CrossIndividual,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FairnessError {
    #[error(transparent)]
    IncompatibleSpec(#[from] MetricError),
    #[error("no rating-disagreement flag for individual {0}")]
    MissingFlags(String),
    #[error("flag given for individual {0}, which is not in the table")]
    UnknownIndividual(String),
}

/// One witnessed breach: `prediction_distance > individual_distance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub individual_a: IndividualId,
    pub individual_b: IndividualId,
    pub rater_a: RaterId,
    pub rater_b: RaterId,
    #[serde(rename = "d_value")]
    pub individual_distance: f64,
    #[serde(rename = "D_value")]
    pub prediction_distance: f64,
}

impl ViolationRecord {
    pub fn is_same_individual(&self) -> bool {
        self.individual_a == self.individual_b
    }

    fn sort_key(&self) -> (&IndividualId, &IndividualId, &RaterId, &RaterId) {
        (&self.individual_a, &self.individual_b, &self.rater_a, &self.rater_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub mode: FairnessMode,
    /// Sorted by individual pair, then rater pair. May be capped; see
    /// `total_violations`.
    pub violations: Vec<ViolationRecord>,
    pub total_violations: usize,
    pub violations_truncated: bool,
    pub individuals_total: usize,
    /// Individuals with at least one comparable rater pair.
    pub individuals_compared: usize,
    /// Individuals with fewer than two ratings; not in any denominator.
    pub individuals_excluded: usize,
    pub individuals_violated: usize,
    pub individual_violation_rate: f64,
    /// Same-individual rater pairs with both cells present.
    pub comparable_pairs: usize,
    pub disagreeing_pairs: usize,
    pub pair_violation_rate: f64,
    pub cross_comparisons: usize,
    pub cross_violations: usize,
}

impl FairnessReport {
    /// Keeps at most `cap` violation records; counts stay exact.
    pub fn truncate_violations(&mut self, cap: usize) {
        if self.violations.len() > cap {
            self.violations.truncate(cap);
            self.violations_truncated = true;
        }
    }
}

/// True iff the pair breaches the Lipschitz condition `D <= d`.
pub fn lipschitz_violates(d_value: f64, prediction_distance: f64) -> bool {
    prediction_distance > d_value
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Enumerates fairness violations with the discrete individual metric and
/// the prediction metric from `spec`.
pub fn enumerate_violations(
    table: &ValidatedTable,
    spec: &MetricSpec,
    mode: FairnessMode,
) -> Result<FairnessReport, FairnessError> {
    let metric = spec.bind(table)?;
    // bind() already checked kinds; cells share the table kind.
    let distance = |a: &Prediction, b: &Prediction| metric.distance(a, b).unwrap_or(1.0);
    Ok(enumerate_violations_with(table, distance, mode))
}

/// Same as [`enumerate_violations`] with an arbitrary prediction distance.
/// Lets callers drop the normalization assumption on `D`.
pub fn enumerate_violations_with<F>(
    table: &ValidatedTable,
    distance: F,
    mode: FairnessMode,
) -> FairnessReport
where
    F: Fn(&Prediction, &Prediction) -> f64 + Sync,
{
    let pairs = rater_pairs(table);
    let mut violations = Vec::new();
    let mut violated = BTreeSet::new();
    let mut compared = 0;
    let mut comparable = 0;
    let mut disagreeing = 0;

    for (id, row) in table.rows() {
        let mut row_comparable = 0;
        for (r, s) in &pairs {
            let (Some(a), Some(b)) = (row.get(r), row.get(s)) else {
                continue;
            };
            row_comparable += 1;
            let d = discrete_distance(id, id);
            let big_d = distance(a, b);
            if big_d > 0.0 {
                disagreeing += 1;
            }
            if lipschitz_violates(d, big_d) {
                violated.insert(id);
                violations.push(ViolationRecord {
                    individual_a: id.clone(),
                    individual_b: id.clone(),
                    rater_a: r.clone(),
                    rater_b: s.clone(),
                    individual_distance: d,
                    prediction_distance: big_d,
                });
            }
        }
        comparable += row_comparable;
        if row_comparable > 0 {
            compared += 1;
        }
    }

    let mut cross_comparisons = 0;
    let mut cross_violations = 0;
    if mode == FairnessMode::CrossIndividual {
        let rows: Vec<(&IndividualId, &BTreeMap<RaterId, Prediction>)> = table.rows().iter().collect();
        let found: Vec<(usize, Vec<ViolationRecord>)> = (0..rows.len())
            .into_par_iter()
            .map(|i| {
                let (id_a, row_a) = rows[i];
                let mut checked = 0;
                let mut out = Vec::new();
                for &(id_b, row_b) in &rows[i + 1..] {
                    let d = discrete_distance(id_a, id_b);
                    for (ra, pa) in row_a {
                        for (rb, pb) in row_b {
                            checked += 1;
                            let big_d = distance(pa, pb);
                            if lipschitz_violates(d, big_d) {
                                out.push(ViolationRecord {
                                    individual_a: id_a.clone(),
                                    individual_b: id_b.clone(),
                                    rater_a: ra.clone(),
                                    rater_b: rb.clone(),
                                    individual_distance: d,
                                    prediction_distance: big_d,
                                });
                            }
                        }
                    }
                }
                (checked, out)
            })
            .collect();
        for (checked, recs) in found {
            cross_comparisons += checked;
            cross_violations += recs.len();
            violations.extend(recs);
        }
        violations.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    let individuals_violated = violated.len();
    FairnessReport {
        mode,
        total_violations: violations.len(),
        violations,
        violations_truncated: false,
        individuals_total: table.n_individuals(),
        individuals_compared: compared,
        individuals_excluded: table.n_individuals() - compared,
        individuals_violated,
        individual_violation_rate: ratio(individuals_violated, compared),
        comparable_pairs: comparable,
        disagreeing_pairs: disagreeing,
        pair_violation_rate: ratio(disagreeing, comparable),
        cross_comparisons,
        cross_violations,
    }
}

/// Split of rating disagreements by whether they changed the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsequentialSummary {
    pub rating_disagreements: usize,
    /// Ratings differ and predictions differ.
    pub consequential: usize,
    /// Ratings differ but every prediction agrees.
    pub inconsequential: usize,
    /// `consequential / rating_disagreements`, 0 when there are none.
    pub consequential_fraction: f64,
    /// Predictions differ although the ratings were flagged equal. Always 0
    /// for a deterministic predictor.
    pub unexplained_prediction_disagreements: usize,
}

/// Partitions rows whose underlying ratings differed into those whose
/// predictions also differ and those where they agree anyway.
///
/// A row's predictions differ when any two present cells are unequal.
pub fn consequential_disagreement(
    table: &ValidatedTable,
    ratings_differ: &BTreeMap<IndividualId, bool>,
) -> Result<ConsequentialSummary, FairnessError> {
    if let Some(id) = ratings_differ.keys().find(|id| table.row(id).is_none()) {
        return Err(FairnessError::UnknownIndividual(id.to_string()));
    }
    let mut summary = ConsequentialSummary {
        rating_disagreements: 0,
        consequential: 0,
        inconsequential: 0,
        consequential_fraction: 0.0,
        unexplained_prediction_disagreements: 0,
    };
    for (id, row) in table.rows() {
        let flag = *ratings_differ
            .get(id)
            .ok_or_else(|| FairnessError::MissingFlags(id.to_string()))?;
        let mut cells = row.values();
        let predictions_differ = match cells.next() {
            Some(first) => cells.any(|p| p != first),
            None => false,
        };
        match (flag, predictions_differ) {
            (true, true) => summary.consequential += 1,
            (true, false) => summary.inconsequential += 1,
            (false, true) => summary.unexplained_prediction_disagreements += 1,
            (false, false) => {}
        }
    }
    summary.rating_disagreements = summary.consequential + summary.inconsequential;
    summary.consequential_fraction = ratio(summary.consequential, summary.rating_disagreements);
    Ok(summary)
}
