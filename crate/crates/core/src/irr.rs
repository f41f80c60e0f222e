//! Inter-rater reliability statistics.
//!
//! Binary and categorical tables use a confusion matrix per rater pair and
//! Cohen's kappa (pairwise deletion). Continuous tables use an ANOVA-based
//! intraclass correlation over all raters at once (listwise deletion).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricError, MetricSpec};
use crate::table::{rater_pairs, Prediction, PredictionKind, RaterId, ValidatedTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrrError {
    #[error("{statistic} is not defined for {kind} predictions")]
    WrongKind {
        statistic: &'static str,
        kind: PredictionKind,
    },
    #[error("no individual has predictions from both {0} and {1}")]
    NoCompleteRows(String, String),
    #[error("rater {0} is not in the table")]
    UnknownRater(String),
    #[error("need at least 2 complete subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("all scores are identical; the ICC is undefined")]
    ZeroTotalVariance,
    #[error("ICC denominator is zero")]
    ZeroDenominator,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Counts of (label by first rater, label by second rater).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rater_a: RaterId,
    pub rater_b: RaterId,
    pub labels: Vec<String>,
    /// `counts[a][b]`: individuals labeled `labels[a]` by `rater_a` and
    /// `labels[b]` by `rater_b`.
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ConfusionMatrix {
    /// Builds a matrix from raw counts. `counts` must be square and match
    /// `labels`.
    pub fn from_counts(rater_a: RaterId, rater_b: RaterId, labels: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        assert!(
            counts.len() == labels.len() && counts.iter().all(|r| r.len() == labels.len()),
            "confusion matrix must be square over its labels"
        );
        let n = counts.iter().flatten().sum();
        Self {
            rater_a,
            rater_b,
            labels,
            counts,
            n,
        }
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

fn check_rater(table: &ValidatedTable, r: &RaterId) -> Result<(), IrrError> {
    if table.raters().contains(r) {
        Ok(())
    } else {
        Err(IrrError::UnknownRater(r.to_string()))
    }
}

/// Confusion matrix for one rater pair over the rows where both rated.
pub fn confusion_matrix(
    table: &ValidatedTable,
    pair: (&RaterId, &RaterId),
) -> Result<ConfusionMatrix, IrrError> {
    if table.kind() == PredictionKind::Continuous {
        return Err(IrrError::WrongKind {
            statistic: "confusion matrix",
            kind: table.kind(),
        });
    }
    let (ra, rb) = pair;
    check_rater(table, ra)?;
    check_rater(table, rb)?;
    let labels = table.labels().to_vec();
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let idx = |p: &Prediction| match p {
        Prediction::Binary(b) => usize::from(*b),
        // validation guarantees membership
        Prediction::Categorical(s) => index[s.as_str()],
        Prediction::Continuous(_) => unreachable!("continuous cell in a discrete table"),
    };
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut n = 0;
    for row in table.rows().values() {
        if let (Some(a), Some(b)) = (row.get(ra), row.get(rb)) {
            counts[idx(a)][idx(b)] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(IrrError::NoCompleteRows(ra.to_string(), rb.to_string()));
    }
    Ok(ConfusionMatrix {
        rater_a: ra.clone(),
        rater_b: rb.clone(),
        labels,
        counts,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub rater_a: RaterId,
    pub rater_b: RaterId,
    pub n: u64,
    /// Observed agreement, `trace / n`.
    pub p_o: f64,
    /// Chance agreement from the marginals.
    pub p_e: f64,
    /// `None` when `p_e = 1`: both raters gave one and the same label to
    /// everyone, and the formula divides by zero.
    pub kappa: Option<f64>,
}

impl KappaReport {
    pub fn is_undefined(&self) -> bool {
        self.kappa.is_none()
    }
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`.
///
/// Computed from integer counts so the degenerate case `p_e = 1` is
/// detected exactly and perfect agreement yields exactly 1. An empty matrix
/// reports zeros and an undefined kappa.
pub fn cohens_kappa(m: &ConfusionMatrix) -> KappaReport {
    let n = m.n as u128;
    let trace = m.trace() as u128;
    let chance: u128 = m
        .row_totals()
        .iter()
        .zip(m.col_totals())
        .map(|(&r, c)| r as u128 * c as u128)
        .sum();
    let nn = n * n;
    let (p_o, p_e, kappa) = if n == 0 {
        (0.0, 0.0, None)
    } else {
        let p_o = trace as f64 / n as f64;
        let p_e = chance as f64 / nn as f64;
        // kappa = (n*trace - chance) / (n^2 - chance)
        let kappa = (chance < nn).then(|| {
            let num = (n * trace) as f64 - chance as f64;
            num / (nn - chance) as f64
        });
        (p_o, p_e, kappa)
    };
    KappaReport {
        rater_a: m.rater_a.clone(),
        rater_b: m.rater_b.clone(),
        n: m.n,
        p_o,
        p_e,
        kappa,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub rater_a: RaterId,
    pub rater_b: RaterId,
    pub reason: String,
}

/// Kappa for every rater pair with a mean over the defined ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseKappa {
    pub pairs: Vec<KappaReport>,
    pub skipped: Vec<SkippedPair>,
    pub mean_kappa: Option<f64>,
}

pub fn pairwise_kappa(table: &ValidatedTable) -> Result<PairwiseKappa, IrrError> {
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (a, b) in rater_pairs(table) {
        match confusion_matrix(table, (&a, &b)) {
            Ok(m) => pairs.push(cohens_kappa(&m)),
            Err(e @ IrrError::NoCompleteRows(..)) => skipped.push(SkippedPair {
                rater_a: a,
                rater_b: b,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = pairs.iter().filter_map(|p| p.kappa).collect();
    let mean_kappa = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(PairwiseKappa {
        pairs,
        skipped,
        mean_kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IccModel {
    /// One-way random effects, single rater: ICC(1).
    #[serde(rename = "icc1")]
    OneWayRandom,
    /// Two-way random effects, absolute agreement, single rater: ICC(A,1).
    #[serde(rename = "icc_a1")]
    TwoWayAbsoluteAgreement,
}

impl IccModel {
    pub fn name(self) -> &'static str {
        match self {
            IccModel::OneWayRandom => "icc1",
            IccModel::TwoWayAbsoluteAgreement => "icc_a1",
        }
    }
}

/// ICC with the ANOVA mean squares it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccReport {
    pub model: IccModel,
    pub n_subjects: usize,
    pub k_raters: usize,
    /// Rows dropped for missing cells.
    pub rows_excluded: usize,
    pub grand_mean: f64,
    /// Between-subject mean square (MSB / MSR).
    pub ms_subjects: f64,
    /// Within-subject mean square of the one-way model (MSW).
    pub ms_within: f64,
    /// Between-rater mean square (MSC).
    pub ms_raters: f64,
    /// Residual mean square of the two-way model (MSE).
    pub ms_error: f64,
    pub icc: f64,
}

impl IccReport {
    /// Re-evaluates the model formula from the stored components.
    pub fn recompute(&self) -> f64 {
        icc_formula(
            self.model,
            self.n_subjects as f64,
            self.k_raters as f64,
            self.ms_subjects,
            self.ms_within,
            self.ms_raters,
            self.ms_error,
        )
    }
}

fn icc_formula(model: IccModel, n: f64, k: f64, msr: f64, msw: f64, msc: f64, mse: f64) -> f64 {
    match model {
        IccModel::OneWayRandom => (msr - msw) / (msr + (k - 1.0) * msw),
        IccModel::TwoWayAbsoluteAgreement => {
            (msr - mse) / (msr + (k - 1.0) * mse + (k / n) * (msc - mse))
        }
    }
}

/// ICC over the complete rows of a continuous table, raters in column
/// order.
pub fn icc(table: &ValidatedTable, model: IccModel) -> Result<IccReport, IrrError> {
    if table.kind() != PredictionKind::Continuous {
        return Err(IrrError::WrongKind {
            statistic: "ICC",
            kind: table.kind(),
        });
    }
    let mut scores = Vec::with_capacity(table.n_individuals());
    for row in table.rows().values() {
        let cells: Option<Vec<f64>> = table
            .raters()
            .iter()
            .map(|r| row.get(r).and_then(Prediction::as_f64))
            .collect();
        if let Some(c) = cells {
            scores.push(c);
        }
    }
    let mut report = icc_scores(&scores, model)?;
    report.rows_excluded = table.n_individuals() - scores.len();
    Ok(report)
}

/// ICC of an `n x k` score matrix (subjects by raters).
pub fn icc_scores(scores: &[Vec<f64>], model: IccModel) -> Result<IccReport, IrrError> {
    let n = scores.len();
    if n < 2 {
        return Err(IrrError::TooFewSubjects(n));
    }
    let k = scores[0].len();
    assert!(k >= 2, "ICC needs at least two raters");
    assert!(scores.iter().all(|r| r.len() == k), "ragged score matrix");
    let (nf, kf) = (n as f64, k as f64);

    let grand = scores.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = scores.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| scores.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();

    let mut ss_total = 0.0;
    let mut ss_within = 0.0;
    let mut ss_error = 0.0;
    for (row, &rm) in scores.iter().zip(&row_means) {
        for (&x, &cm) in row.iter().zip(&col_means) {
            ss_total += (x - grand).powi(2);
            ss_within += (x - rm).powi(2);
            ss_error += (x - rm - cm + grand).powi(2);
        }
    }
    if ss_total == 0.0 {
        return Err(IrrError::ZeroTotalVariance);
    }
    let ss_subjects = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_raters = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();

    let ms_subjects = ss_subjects / (nf - 1.0);
    let ms_within = ss_within / (nf * (kf - 1.0));
    let ms_raters = ss_raters / (kf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));

    let denom = match model {
        IccModel::OneWayRandom => ms_subjects + (kf - 1.0) * ms_within,
        IccModel::TwoWayAbsoluteAgreement => {
            ms_subjects + (kf - 1.0) * ms_error + (kf / nf) * (ms_raters - ms_error)
        }
    };
    if denom == 0.0 {
        return Err(IrrError::ZeroDenominator);
    }
    let icc = icc_formula(model, nf, kf, ms_subjects, ms_within, ms_raters, ms_error);
    Ok(IccReport {
        model,
        n_subjects: n,
        k_raters: k,
        rows_excluded: 0,
        grand_mean: grand,
        ms_subjects,
        ms_within,
        ms_raters,
        ms_error,
        icc,
    })
}

/// Rows where both raters predicted and the predictions differ under the
/// table's natural metric with the given tolerance.
pub fn disagreement_count(
    table: &ValidatedTable,
    pair: (&RaterId, &RaterId),
    epsilon: f64,
) -> Result<usize, IrrError> {
    let (ra, rb) = pair;
    check_rater(table, ra)?;
    check_rater(table, rb)?;
    let metric = MetricSpec::for_kind(table.kind()).with_epsilon(epsilon).bind(table)?;
    let mut count = 0;
    for row in table.rows().values() {
        if let (Some(a), Some(b)) = (row.get(ra), row.get(rb)) {
            if metric.distance(a, b)? > 0.0 {
                count += 1;
            }
        }
    }
    Ok(count)
}
