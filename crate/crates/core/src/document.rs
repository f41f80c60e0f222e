//! Canonical JSON form of a validated table.
//!
//! ```json
//! {
//!   "kind": "binary",
//!   "range": null,
//!   "labels": null,
//!   "raters": ["r", "s"],
//!   "rows": { "1": { "r": 1, "s": 0 } },
//!   "groups": null
//! }
//! ```
//!
//! Binary cells are `0`/`1`, categorical cells strings, continuous cells
//! numbers, missing cells `null`. Every row lists every rater.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::table::{
    validate_table, GroupLabeling, IndividualId, Prediction, PredictionKind, PredictionTable,
    RaterId, TableError, ValidatedTable, ValueRange,
};

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cell for individual {individual}, rater {rater}: expected a {kind} value, got {value}")]
    BadCell {
        individual: String,
        rater: String,
        kind: PredictionKind,
        value: String,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Group(#[from] crate::table::GroupError),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    kind: PredictionKind,
    range: Option<ValueRange>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    raters: Vec<RaterId>,
    rows: BTreeMap<IndividualId, BTreeMap<RaterId, Value>>,
    #[serde(default)]
    groups: Option<GroupLabeling>,
}

pub(crate) fn cell_to_json(p: &Prediction) -> Value {
    match p {
        Prediction::Binary(b) => Value::from(u8::from(*b)),
        Prediction::Categorical(s) => Value::from(s.clone()),
        Prediction::Continuous(v) => Value::from(*v),
    }
}

fn cell_from_json(
    kind: PredictionKind,
    v: &Value,
    individual: &IndividualId,
    rater: &RaterId,
) -> Result<Option<Prediction>, DocumentError> {
    let p = match (kind, v) {
        (_, Value::Null) => return Ok(None),
        (PredictionKind::Binary, Value::Number(n)) if n.as_u64() == Some(0) => Prediction::Binary(false),
        (PredictionKind::Binary, Value::Number(n)) if n.as_u64() == Some(1) => Prediction::Binary(true),
        (PredictionKind::Categorical, Value::String(s)) => Prediction::Categorical(s.clone()),
        (PredictionKind::Continuous, Value::Number(n)) if n.as_f64().is_some() => {
            Prediction::Continuous(n.as_f64().unwrap_or_default())
        }
        _ => {
            return Err(DocumentError::BadCell {
                individual: individual.to_string(),
                rater: rater.to_string(),
                kind,
                value: v.to_string(),
            })
        }
    };
    Ok(Some(p))
}

/// Serializes a table (and optional group labels) to canonical JSON.
pub fn to_json(table: &ValidatedTable, groups: Option<&GroupLabeling>) -> String {
    let rows = table
        .rows()
        .iter()
        .map(|(id, row)| {
            let cells = table
                .raters()
                .iter()
                .map(|r| (r.clone(), row.get(r).map_or(Value::Null, cell_to_json)))
                .collect();
            (id.clone(), cells)
        })
        .collect();
    let doc = RawDocument {
        kind: table.kind(),
        range: table.range(),
        labels: (table.kind() == PredictionKind::Categorical).then(|| table.labels().to_vec()),
        raters: table.raters().to_vec(),
        rows,
        groups: groups.cloned(),
    };
    serde_json::to_string_pretty(&doc).expect("table document serializes")
}

/// Parses and validates a canonical JSON table.
pub fn from_json(s: &str) -> Result<(ValidatedTable, Option<GroupLabeling>), DocumentError> {
    let doc: RawDocument = serde_json::from_str(s)?;
    let mut raw = PredictionTable::new(doc.kind, doc.raters);
    raw.range = doc.range;
    raw.labels = doc.labels;
    for (id, cells) in &doc.rows {
        raw.add_individual(id.clone());
        for (rater, v) in cells {
            let cell = cell_from_json(doc.kind, v, id, rater)?;
            raw.set(id.clone(), rater.clone(), cell);
        }
    }
    let table = validate_table(raw)?;
    if let Some(g) = &doc.groups {
        g.check_against(&table)?;
    }
    Ok((table, doc.groups))
}
