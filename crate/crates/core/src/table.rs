//! Multi-rater prediction tables.
//!
//! A table holds one row per individual and one column per rater; each cell
//! is the prediction the predictor produced from that rater's rating of the
//! individual. Cells may be missing. Tables are built as a raw
//! [`PredictionTable`] and checked once by [`validate_table`]; everything
//! downstream consumes the immutable [`ValidatedTable`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a rated individual. Non-empty; compared exactly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(String);

/// Identifier of a rater. Non-empty; compared exactly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RaterId(String);

macro_rules! string_id {
    ($ty:ident) => {
        impl $ty {
            pub fn new(id: impl Into<String>) -> Result<Self, TableError> {
                let id = id.into();
                if id.is_empty() {
                    return Err(TableError::EmptyId(stringify!($ty)));
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::str::FromStr for $ty {
            type Err = TableError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }
    };
}

string_id!(IndividualId);
string_id!(RaterId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Binary,
    Categorical,
    Continuous,
}

impl PredictionKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictionKind::Binary => "binary",
            PredictionKind::Categorical => "categorical",
            PredictionKind::Continuous => "continuous",
        }
    }
}

impl fmt::Display for PredictionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PredictionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(PredictionKind::Binary),
            "categorical" => Ok(PredictionKind::Categorical),
            "continuous" => Ok(PredictionKind::Continuous),
            other => Err(format!("unknown prediction kind `{other}`")),
        }
    }
}

/// One cell of a prediction table.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Binary(bool),
    Categorical(String),
    Continuous(f64),
}

impl Prediction {
    pub fn kind(&self) -> PredictionKind {
        match self {
            Prediction::Binary(_) => PredictionKind::Binary,
            Prediction::Categorical(_) => PredictionKind::Categorical,
            Prediction::Continuous(_) => PredictionKind::Continuous,
        }
    }

    /// Label used for confusion matrices and CSV output.
    pub fn label(&self) -> String {
        match self {
            Prediction::Binary(b) => if *b { "1" } else { "0" }.to_string(),
            Prediction::Categorical(s) => s.clone(),
            Prediction::Continuous(v) => v.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Prediction::Continuous(v) => Some(*v),
            _ => None,
        }
    }
}

/// Closed range `[lo, hi]` declared for continuous predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

// Validated ranges are finite.
impl Eq for ValueRange {}

impl ValueRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self, TableError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(TableError::InvalidRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("{0} must not be empty")]
    EmptyId(&'static str),
    #[error("table has cells of kind {found} but declares kind {declared} (individual {individual}, rater {rater})")]
    MixedKinds {
        declared: PredictionKind,
        found: PredictionKind,
        individual: String,
        rater: String,
    },
    #[error("table needs at least 2 distinct raters, found {0}")]
    TooFewRaters(usize),
    #[error("table has no individuals")]
    EmptyTable,
    #[error("value {value} for individual {individual}, rater {rater} is outside the declared range")]
    OutOfRange {
        individual: String,
        rater: String,
        value: String,
    },
    #[error("invalid range [{lo}, {hi}]: need finite lo < hi")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("continuous tables need a declared value range")]
    MissingRange,
    #[error("rater {0} is listed more than once")]
    DuplicateRater(String),
    #[error("cell for individual {individual} names rater {rater}, which is not a table column")]
    UnknownRater { individual: String, rater: String },
    #[error("label `{label}` (individual {individual}, rater {rater}) is not in the declared label set")]
    UnknownLabel {
        individual: String,
        rater: String,
        label: String,
    },
    #[error("label set must be non-empty with unique, non-empty labels")]
    InvalidLabels,
}

/// Row of a table: rater → prediction, absent raters are missing cells.
pub type Row = BTreeMap<RaterId, Prediction>;

/// Unchecked table as assembled by ingestion code.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub kind: PredictionKind,
    pub raters: Vec<RaterId>,
    pub rows: BTreeMap<IndividualId, Row>,
    pub range: Option<ValueRange>,
    /// Declared categorical labels, in order. Inferred when `None`.
    pub labels: Option<Vec<String>>,
}

impl PredictionTable {
    pub fn new(kind: PredictionKind, raters: Vec<RaterId>) -> Self {
        Self {
            kind,
            raters,
            rows: BTreeMap::new(),
            range: None,
            labels: None,
        }
    }

    pub fn with_range(mut self, range: ValueRange) -> Self {
        self.range = Some(range);
        self
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Sets one cell; `None` clears it.
    pub fn set(&mut self, individual: IndividualId, rater: RaterId, value: Option<Prediction>) {
        let row = self.rows.entry(individual).or_default();
        match value {
            Some(p) => {
                row.insert(rater, p);
            }
            None => {
                row.remove(&rater);
            }
        }
    }

    /// Adds an individual with no cells yet.
    pub fn add_individual(&mut self, individual: IndividualId) {
        self.rows.entry(individual).or_default();
    }
}

/// A table that satisfies every structural invariant. Immutable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedTable {
    kind: PredictionKind,
    raters: Vec<RaterId>,
    rows: BTreeMap<IndividualId, Row>,
    range: Option<ValueRange>,
    labels: Vec<String>,
    incomplete: BTreeSet<IndividualId>,
}

// Cells hold f64, but validation rejects NaN so equality is reflexive.
impl Eq for Prediction {}

impl ValidatedTable {
    pub fn kind(&self) -> PredictionKind {
        self.kind
    }

    /// Raters in declared column order.
    pub fn raters(&self) -> &[RaterId] {
        &self.raters
    }

    pub fn rows(&self) -> &BTreeMap<IndividualId, Row> {
        &self.rows
    }

    pub fn row(&self, id: &IndividualId) -> Option<&Row> {
        self.rows.get(id)
    }

    pub fn get(&self, id: &IndividualId, rater: &RaterId) -> Option<&Prediction> {
        self.rows.get(id).and_then(|r| r.get(rater))
    }

    pub fn range(&self) -> Option<ValueRange> {
        self.range
    }

    /// Label universe: `["0", "1"]` for binary, the declared or inferred set
    /// for categorical, empty for continuous.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Individuals with fewer than two present ratings.
    pub fn incomplete(&self) -> &BTreeSet<IndividualId> {
        &self.incomplete
    }

    pub fn is_incomplete(&self, id: &IndividualId) -> bool {
        self.incomplete.contains(id)
    }

    pub fn n_individuals(&self) -> usize {
        self.rows.len()
    }

    pub fn individuals(&self) -> impl Iterator<Item = &IndividualId> {
        self.rows.keys()
    }

    /// True when every individual has a prediction from every rater.
    pub fn is_complete(&self) -> bool {
        self.rows.values().all(|r| r.len() == self.raters.len())
    }

    /// Back to a raw table; validating the result gives `self` again.
    pub fn to_raw(&self) -> PredictionTable {
        PredictionTable {
            kind: self.kind,
            raters: self.raters.clone(),
            rows: self.rows.clone(),
            range: self.range,
            labels: match self.kind {
                PredictionKind::Categorical => Some(self.labels.clone()),
                _ => None,
            },
        }
    }

    /// Sub-table of the given individuals, keeping raters, range and the
    /// label universe. Unknown ids are ignored. The result may be empty, so
    /// it bypasses the non-empty check.
    pub fn restrict<'a, I>(&self, ids: I) -> ValidatedTable
    where
        I: IntoIterator<Item = &'a IndividualId>,
    {
        let mut rows = BTreeMap::new();
        for id in ids {
            if let Some(row) = self.rows.get(id) {
                rows.insert(id.clone(), row.clone());
            }
        }
        let incomplete = self
            .incomplete
            .iter()
            .filter(|id| rows.contains_key(*id))
            .cloned()
            .collect();
        ValidatedTable {
            kind: self.kind,
            raters: self.raters.clone(),
            rows,
            range: self.range,
            labels: self.labels.clone(),
            incomplete,
        }
    }
}

/// Checks all table invariants.
///
/// Rows with fewer than two present ratings are kept and flagged as
/// incomplete. Categorical tables without a declared label set get the
/// sorted union of observed labels.
pub fn validate_table(raw: PredictionTable) -> Result<ValidatedTable, TableError> {
    let PredictionTable {
        kind,
        raters,
        rows,
        range,
        labels,
    } = raw;

    let mut seen = BTreeSet::new();
    for r in &raters {
        if !seen.insert(r) {
            return Err(TableError::DuplicateRater(r.to_string()));
        }
    }
    if raters.len() < 2 {
        return Err(TableError::TooFewRaters(raters.len()));
    }
    if rows.is_empty() {
        return Err(TableError::EmptyTable);
    }

    let range = match kind {
        PredictionKind::Continuous => {
            let r = range.ok_or(TableError::MissingRange)?;
            Some(ValueRange::new(r.lo, r.hi)?)
        }
        _ => None,
    };

    let declared: Option<Vec<String>> = match (kind, labels) {
        (PredictionKind::Categorical, Some(ls)) => {
            let uniq: BTreeSet<&String> = ls.iter().collect();
            if ls.is_empty() || uniq.len() != ls.len() || ls.iter().any(|l| l.is_empty()) {
                return Err(TableError::InvalidLabels);
            }
            Some(ls)
        }
        _ => None,
    };

    let mut observed = BTreeSet::new();
    let mut incomplete = BTreeSet::new();
    for (id, row) in &rows {
        for (rater, p) in row {
            if !seen.contains(rater) {
                return Err(TableError::UnknownRater {
                    individual: id.to_string(),
                    rater: rater.to_string(),
                });
            }
            if p.kind() != kind {
                return Err(TableError::MixedKinds {
                    declared: kind,
                    found: p.kind(),
                    individual: id.to_string(),
                    rater: rater.to_string(),
                });
            }
            match p {
                Prediction::Continuous(v) => {
                    // range is Some for continuous tables
                    if !range.is_some_and(|r| r.contains(*v)) {
                        return Err(TableError::OutOfRange {
                            individual: id.to_string(),
                            rater: rater.to_string(),
                            value: v.to_string(),
                        });
                    }
                }
                Prediction::Categorical(label) => {
                    if let Some(ls) = &declared {
                        if !ls.contains(label) {
                            return Err(TableError::UnknownLabel {
                                individual: id.to_string(),
                                rater: rater.to_string(),
                                label: label.clone(),
                            });
                        }
                    } else {
                        if label.is_empty() {
                            return Err(TableError::InvalidLabels);
                        }
                        observed.insert(label.clone());
                    }
                }
                Prediction::Binary(_) => {}
            }
        }
        if row.len() < 2 {
            incomplete.insert(id.clone());
        }
    }

    let labels = match kind {
        PredictionKind::Binary => vec!["0".to_string(), "1".to_string()],
        PredictionKind::Categorical => match declared {
            Some(ls) => ls,
            None if observed.is_empty() => return Err(TableError::InvalidLabels),
            None => observed.into_iter().collect(),
        },
        PredictionKind::Continuous => Vec::new(),
    };

    Ok(ValidatedTable {
        kind,
        raters,
        rows,
        range,
        labels,
        incomplete,
    })
}

/// All unordered pairs of distinct raters, each pair ordered `(smaller,
/// larger)` and the list sorted lexicographically.
pub fn rater_pairs(table: &ValidatedTable) -> Vec<(RaterId, RaterId)> {
    let mut sorted: Vec<&RaterId> = table.raters.iter().collect();
    sorted.sort();
    let mut out = Vec::with_capacity(sorted.len() * sorted.len().saturating_sub(1) / 2);
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            out.push(((*a).clone(), (*b).clone()));
        }
    }
    out
}

/// Group label per individual for stratified audits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupLabeling {
    labels: BTreeMap<IndividualId, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("group label for individual {0} is empty")]
    EmptyLabel(String),
    #[error("individual {0} is labeled but not in the table")]
    UnknownIndividual(String),
}

impl GroupLabeling {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: IndividualId, label: impl Into<String>) -> Result<(), GroupError> {
        let label = label.into();
        if label.is_empty() {
            return Err(GroupError::EmptyLabel(id.to_string()));
        }
        self.labels.insert(id, label);
        Ok(())
    }

    pub fn get(&self, id: &IndividualId) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IndividualId, &str)> {
        self.labels.iter().map(|(k, v)| (k, v.as_str()))
    }

    /// Distinct labels, sorted.
    pub fn observed(&self) -> BTreeSet<&str> {
        self.labels.values().map(String::as_str).collect()
    }

    /// Members of each group, groups sorted by label.
    pub fn members(&self) -> BTreeMap<&str, Vec<&IndividualId>> {
        let mut out: BTreeMap<&str, Vec<&IndividualId>> = BTreeMap::new();
        for (id, label) in &self.labels {
            out.entry(label.as_str()).or_default().push(id);
        }
        out
    }

    pub fn check_against(&self, table: &ValidatedTable) -> Result<(), GroupError> {
        for (id, label) in &self.labels {
            if label.is_empty() {
                return Err(GroupError::EmptyLabel(id.to_string()));
            }
            if table.row(id).is_none() {
                return Err(GroupError::UnknownIndividual(id.to_string()));
            }
        }
        Ok(())
    }
}

impl FromIterator<(IndividualId, String)> for GroupLabeling {
    fn from_iter<T: IntoIterator<Item = (IndividualId, String)>>(iter: T) -> Self {
        Self {
            labels: iter.into_iter().filter(|(_, l)| !l.is_empty()).collect(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn iid(s: &str) -> IndividualId {
        IndividualId::new(s).unwrap()
    }

    pub fn rid(s: &str) -> RaterId {
        RaterId::new(s).unwrap()
    }

    pub fn binary_table(rows: &[(&str, &[Option<bool>])], raters: &[&str]) -> ValidatedTable {
        let mut t = PredictionTable::new(
            PredictionKind::Binary,
            raters.iter().map(|r| rid(r)).collect(),
        );
        for (id, cells) in rows {
            t.add_individual(iid(id));
            for (r, c) in raters.iter().zip(cells.iter()) {
                t.set(iid(id), rid(r), c.map(Prediction::Binary));
            }
        }
        validate_table(t).unwrap()
    }

    #[test]
    fn minimal_binary_table_has_no_flags() {
        let t = binary_table(
            &[("1", &[Some(true), Some(false)]), ("2", &[Some(true), Some(true)])],
            &["r", "s"],
        );
        assert_eq!(t.n_individuals(), 2);
        assert!(t.incomplete().is_empty());
        assert!(t.is_complete());
        assert_eq!(t.labels(), ["0", "1"]);
    }

    #[test]
    fn single_rating_row_is_flagged() {
        let t = binary_table(
            &[("1", &[Some(true), None]), ("2", &[Some(true), Some(true)])],
            &["r", "s"],
        );
        assert_eq!(t.incomplete().iter().collect::<Vec<_>>(), vec![&iid("1")]);
        assert!(t.row(&iid("1")).is_some());
    }

    #[test]
    fn mixed_kinds_rejected() {
        let mut t = PredictionTable::new(PredictionKind::Binary, vec![rid("r"), rid("s")]);
        t.set(iid("1"), rid("r"), Some(Prediction::Binary(true)));
        t.set(iid("1"), rid("s"), Some(Prediction::Continuous(0.3)));
        assert!(matches!(validate_table(t), Err(TableError::MixedKinds { .. })));
    }

    #[test]
    fn structural_errors() {
        let mut t = PredictionTable::new(PredictionKind::Binary, vec![rid("r")]);
        t.set(iid("1"), rid("r"), Some(Prediction::Binary(true)));
        assert_eq!(validate_table(t), Err(TableError::TooFewRaters(1)));

        let t = PredictionTable::new(PredictionKind::Binary, vec![rid("r"), rid("s")]);
        assert_eq!(validate_table(t), Err(TableError::EmptyTable));

        let t = PredictionTable::new(PredictionKind::Binary, vec![rid("r"), rid("r")]);
        assert!(matches!(validate_table(t), Err(TableError::DuplicateRater(_))));

        let mut t = PredictionTable::new(PredictionKind::Binary, vec![rid("r"), rid("s")]);
        t.set(iid("1"), rid("q"), Some(Prediction::Binary(true)));
        assert!(matches!(validate_table(t), Err(TableError::UnknownRater { .. })));

        assert!(IndividualId::new("").is_err());
    }

    #[test]
    fn continuous_range_checks() {
        let raters = vec![rid("r"), rid("s")];
        let mut t = PredictionTable::new(PredictionKind::Continuous, raters.clone());
        t.set(iid("1"), rid("r"), Some(Prediction::Continuous(0.5)));
        assert_eq!(validate_table(t.clone()), Err(TableError::MissingRange));

        let ok = t.clone().with_range(ValueRange { lo: 0.0, hi: 1.0 });
        assert!(validate_table(ok).is_ok());

        let mut bad = t.clone().with_range(ValueRange { lo: 0.0, hi: 1.0 });
        bad.set(iid("1"), rid("s"), Some(Prediction::Continuous(1.5)));
        assert!(matches!(validate_table(bad), Err(TableError::OutOfRange { .. })));

        let mut nan = t.clone().with_range(ValueRange { lo: 0.0, hi: 1.0 });
        nan.set(iid("1"), rid("s"), Some(Prediction::Continuous(f64::NAN)));
        assert!(matches!(validate_table(nan), Err(TableError::OutOfRange { .. })));

        let inverted = t.with_range(ValueRange { lo: 1.0, hi: 1.0 });
        assert!(matches!(validate_table(inverted), Err(TableError::InvalidRange { .. })));
    }

    #[test]
    fn categorical_labels_inferred_or_declared() {
        let mut t = PredictionTable::new(PredictionKind::Categorical, vec![rid("r"), rid("s")]);
        t.set(iid("1"), rid("r"), Some(Prediction::Categorical("med".into())));
        t.set(iid("1"), rid("s"), Some(Prediction::Categorical("high".into())));
        let v = validate_table(t.clone()).unwrap();
        assert_eq!(v.labels(), ["high", "med"]);

        let declared = t
            .clone()
            .with_labels(vec!["low".into(), "med".into(), "high".into()]);
        assert_eq!(validate_table(declared).unwrap().labels(), ["low", "med", "high"]);

        let missing = t.with_labels(vec!["low".into(), "med".into()]);
        assert!(matches!(validate_table(missing), Err(TableError::UnknownLabel { .. })));
    }

    #[test]
    fn validation_is_idempotent() {
        let t = binary_table(
            &[("1", &[Some(true), None]), ("2", &[Some(false), Some(true)])],
            &["s", "r"],
        );
        assert_eq!(validate_table(t.to_raw()).unwrap(), t);
    }

    #[test]
    fn rater_pairs_lexicographic() {
        let t = binary_table(&[("1", &[Some(true), Some(true)])], &["s", "r"]);
        assert_eq!(rater_pairs(&t), vec![(rid("r"), rid("s"))]);

        let t = binary_table(
            &[("1", &[Some(true), Some(true), Some(false)])],
            &["c", "a", "b"],
        );
        assert_eq!(
            rater_pairs(&t),
            vec![(rid("a"), rid("b")), (rid("a"), rid("c")), (rid("b"), rid("c"))]
        );
    }

    #[test]
    fn restrict_keeps_universe() {
        let t = binary_table(
            &[("1", &[Some(true), None]), ("2", &[Some(false), Some(true)])],
            &["r", "s"],
        );
        let sub = t.restrict([&iid("1")]);
        assert_eq!(sub.n_individuals(), 1);
        assert_eq!(sub.incomplete().len(), 1);
        assert_eq!(sub.labels(), t.labels());
        assert_eq!(t.restrict(std::iter::empty()).n_individuals(), 0);
    }

    #[test]
    fn group_labeling_checks() {
        let t = binary_table(&[("1", &[Some(true), Some(true)])], &["r", "s"]);
        let mut g = GroupLabeling::new();
        assert!(g.insert(iid("1"), "").is_err());
        g.insert(iid("1"), "a").unwrap();
        assert!(g.check_against(&t).is_ok());
        g.insert(iid("9"), "b").unwrap();
        assert_eq!(g.check_against(&t), Err(GroupError::UnknownIndividual("9".into())));
        assert_eq!(g.observed().into_iter().collect::<Vec<_>>(), vec!["a", "b"]);
    }
}
