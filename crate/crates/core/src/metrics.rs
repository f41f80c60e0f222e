//! Distances between individuals (`d`) and between predictions (`D`).
//!
//! The only individual metric is the discrete one: an individual is at
//! distance 0 from itself and 1 from everyone else. Prediction metrics are
//! normalized to `[0, 1]`. Both are pseudo-metrics in the weak sense used
//! here: non-negative, symmetric, zero on the diagonal. The triangle
//! inequality is never assumed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{Prediction, PredictionKind, ValidatedTable, ValueRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndividualMetric {
    #[default]
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMetric {
    /// 0 for equal predictions, 1 otherwise. Binary and categorical tables.
    ZeroOneIndicator,
    /// `|a - b| / (hi - lo)`. Continuous tables with a declared range.
    NormalizedAbsolute,
}

/// Choice of `d` and `D` for a fairness audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub individual: IndividualMetric,
    pub prediction: PredictionMetric,
    /// Normalized distances at or below this are snapped to 0.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("prediction metric {metric:?} cannot be used with {kind} predictions")]
    IncompatibleSpec {
        metric: PredictionMetric,
        kind: PredictionKind,
    },
    #[error("normalized absolute distance needs a declared value range")]
    MissingRange,
    #[error("epsilon must be finite and >= 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("cannot compare {left} prediction with {right} prediction")]
    KindMismatch {
        left: PredictionKind,
        right: PredictionKind,
    },
}

impl MetricSpec {
    /// The natural metric for a prediction kind, with exact equality.
    pub fn for_kind(kind: PredictionKind) -> Self {
        let prediction = match kind {
            PredictionKind::Binary | PredictionKind::Categorical => PredictionMetric::ZeroOneIndicator,
            PredictionKind::Continuous => PredictionMetric::NormalizedAbsolute,
        };
        Self {
            individual: IndividualMetric::Discrete,
            prediction,
            epsilon: 0.0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn check_kind(&self, kind: PredictionKind) -> Result<(), MetricError> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(MetricError::InvalidEpsilon(self.epsilon));
        }
        let ok = match self.prediction {
            PredictionMetric::ZeroOneIndicator => kind != PredictionKind::Continuous,
            PredictionMetric::NormalizedAbsolute => kind == PredictionKind::Continuous,
        };
        if ok {
            Ok(())
        } else {
            Err(MetricError::IncompatibleSpec {
                metric: self.prediction,
                kind,
            })
        }
    }

    /// Binds the spec to a table, checking compatibility once.
    pub fn bind(&self, table: &ValidatedTable) -> Result<PredictionDistance, MetricError> {
        self.check_kind(table.kind())?;
        let range = match self.prediction {
            PredictionMetric::NormalizedAbsolute => {
                Some(table.range().ok_or(MetricError::MissingRange)?)
            }
            PredictionMetric::ZeroOneIndicator => None,
        };
        Ok(PredictionDistance {
            metric: self.prediction,
            range,
            epsilon: self.epsilon,
        })
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.prediction {
            PredictionMetric::ZeroOneIndicator => "zero-one",
            PredictionMetric::NormalizedAbsolute => "normalized-absolute",
        };
        write!(f, "d=discrete, D={d}, epsilon={}", self.epsilon)
    }
}

/// Discrete metric on individuals.
pub fn discrete_distance<T: PartialEq + ?Sized>(a: &T, b: &T) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}

/// A prediction metric bound to a table's range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionDistance {
    metric: PredictionMetric,
    range: Option<ValueRange>,
    epsilon: f64,
}

impl PredictionDistance {
    pub fn distance(&self, a: &Prediction, b: &Prediction) -> Result<f64, MetricError> {
        if a.kind() != b.kind() {
            return Err(MetricError::KindMismatch {
                left: a.kind(),
                right: b.kind(),
            });
        }
        let raw = match (self.metric, a, b) {
            (PredictionMetric::ZeroOneIndicator, Prediction::Continuous(_), _) => {
                return Err(MetricError::IncompatibleSpec {
                    metric: self.metric,
                    kind: PredictionKind::Continuous,
                })
            }
            (PredictionMetric::ZeroOneIndicator, _, _) => discrete_distance(a, b),
            (PredictionMetric::NormalizedAbsolute, Prediction::Continuous(x), Prediction::Continuous(y)) => {
                let range = self.range.ok_or(MetricError::MissingRange)?;
                ((x - y).abs() / range.width()).min(1.0)
            }
            (PredictionMetric::NormalizedAbsolute, other, _) => {
                return Err(MetricError::IncompatibleSpec {
                    metric: self.metric,
                    kind: other.kind(),
                })
            }
        };
        Ok(if raw <= self.epsilon { 0.0 } else { raw })
    }
}

/// One-shot form of [`PredictionDistance::distance`].
pub fn prediction_distance(
    spec: &MetricSpec,
    range: Option<ValueRange>,
    a: &Prediction,
    b: &Prediction,
) -> Result<f64, MetricError> {
    PredictionDistance {
        metric: spec.prediction,
        range,
        epsilon: spec.epsilon,
    }
    .distance(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    NonNegativity,
    Symmetry,
    ZeroSelfDistance,
}

/// A sampled axiom failure. Indices point into the sample slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub left: usize,
    pub right: usize,
    pub value: f64,
    /// For symmetry: the reverse distance.
    pub reverse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub samples: usize,
    pub pairs_checked: usize,
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks non-negativity, symmetry and zero self-distance of `metric` over
/// every ordered pair of samples. NaN fails every axiom it touches.
pub fn check_pseudometric_axioms<T, F>(metric: F, samples: &[T]) -> AxiomReport
where
    F: Fn(&T, &T) -> f64,
{
    let mut violations = Vec::new();
    let mut pairs = 0;
    for (i, a) in samples.iter().enumerate() {
        let self_d = metric(a, a);
        if self_d != 0.0 {
            violations.push(AxiomViolation {
                axiom: Axiom::ZeroSelfDistance,
                left: i,
                right: i,
                value: self_d,
                reverse: None,
            });
        }
        for (j, b) in samples.iter().enumerate() {
            pairs += 1;
            let ab = metric(a, b);
            if ab.is_nan() || ab < 0.0 {
                violations.push(AxiomViolation {
                    axiom: Axiom::NonNegativity,
                    left: i,
                    right: j,
                    value: ab,
                    reverse: None,
                });
            }
            if i < j {
                let ba = metric(b, a);
                if ab != ba {
                    violations.push(AxiomViolation {
                        axiom: Axiom::Symmetry,
                        left: i,
                        right: j,
                        value: ab,
                        reverse: Some(ba),
                    });
                }
            }
        }
    }
    AxiomReport {
        samples: samples.len(),
        pairs_checked: pairs,
        violations,
    }
}
