//! CSV ingestion and the canonical CSV writer.
//!
//! Wide format (default): one row per individual, one column per rater.
//!
//! ```text
//! individual,rater_r,rater_s,group
//! 1,1,0,a
//! 2,1,,b
//! ```
//!
//! Long format: one `individual,rater,prediction` triple per row, with an
//! optional group column. Empty cells are missing predictions in both.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::table::{
    validate_table, GroupError, GroupLabeling, IndividualId, Prediction, PredictionKind,
    PredictionTable, RaterId, TableError, ValidatedTable, ValueRange,
};

pub const INDIVIDUAL_COLUMN: &str = "individual";
pub const RATER_COLUMN: &str = "rater";
pub const PREDICTION_COLUMN: &str = "prediction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvLayout {
    #[default]
    Wide,
    Long,
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// `None` infers binary when every cell is `0` or `1`, categorical
    /// otherwise. Continuous must be requested explicitly.
    pub kind: Option<PredictionKind>,
    pub range: Option<ValueRange>,
    /// Wide: rater columns to read, default all non-reserved columns.
    /// Long: raters to keep, default all.
    pub raters: Option<Vec<String>>,
    pub group_column: Option<String>,
    pub labels: Option<Vec<String>>,
    pub layout: CsvLayout,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column `{column}`: {message}")]
    ParseError {
        line: u64,
        column: String,
        message: String,
    },
    #[error("line {line}: individual `{id}` appears more than once")]
    DuplicateIndividual { line: u64, id: String },
    #[error("line {line}: individual `{id}` has more than one prediction from rater `{rater}`")]
    DuplicateCell { line: u64, id: String, rater: String },
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl From<csv::Error> for CsvError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        CsvError::ParseError {
            line,
            column: String::new(),
            message: e.to_string(),
        }
    }
}

struct Cell<'a> {
    line: u64,
    column: &'a str,
    text: &'a str,
}

fn parse_error(cell: &Cell<'_>, message: impl Into<String>) -> CsvError {
    CsvError::ParseError {
        line: cell.line,
        column: cell.column.to_string(),
        message: message.into(),
    }
}

fn infer_kind<'a>(cells: impl Iterator<Item = &'a str>) -> PredictionKind {
    let mut cells = cells.filter(|c| !c.is_empty()).peekable();
    if cells.peek().is_none() {
        return PredictionKind::Binary;
    }
    if cells.all(|c| c == "0" || c == "1") {
        PredictionKind::Binary
    } else {
        PredictionKind::Categorical
    }
}

fn parse_cell(kind: PredictionKind, cell: &Cell<'_>) -> Result<Option<Prediction>, CsvError> {
    if cell.text.is_empty() {
        return Ok(None);
    }
    let p = match kind {
        PredictionKind::Binary => match cell.text {
            "0" => Prediction::Binary(false),
            "1" => Prediction::Binary(true),
            other => return Err(parse_error(cell, format!("binary prediction must be 0 or 1, got `{other}`"))),
        },
        PredictionKind::Categorical => Prediction::Categorical(cell.text.to_string()),
        PredictionKind::Continuous => {
            let v: f64 = cell
                .text
                .parse()
                .map_err(|_| parse_error(cell, format!("`{}` is not a number", cell.text)))?;
            if !v.is_finite() {
                return Err(parse_error(cell, "value must be finite"));
            }
            Prediction::Continuous(v)
        }
    };
    Ok(Some(p))
}

fn individual_id(cell: &Cell<'_>) -> Result<IndividualId, CsvError> {
    IndividualId::new(cell.text).map_err(|_| parse_error(cell, "individual id is empty"))
}

fn finish(
    mut raw: PredictionTable,
    opts: &CsvOptions,
    groups: Option<GroupLabeling>,
) -> Result<(ValidatedTable, Option<GroupLabeling>), CsvError> {
    if raw.kind == PredictionKind::Continuous {
        raw.range = Some(opts.range.ok_or(TableError::MissingRange)?);
    }
    if raw.kind == PredictionKind::Categorical {
        raw.labels = opts.labels.clone();
    }
    let table = validate_table(raw)?;
    if let Some(g) = &groups {
        g.check_against(&table)?;
    }
    Ok((table, groups))
}

/// Reads a prediction table from a CSV file.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    opts: &CsvOptions,
) -> Result<(ValidatedTable, Option<GroupLabeling>), CsvError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, opts)
}

pub fn read_csv<R: Read>(
    reader: R,
    opts: &CsvOptions,
) -> Result<(ValidatedTable, Option<GroupLabeling>), CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        records.push((line, rec));
    }
    match opts.layout {
        CsvLayout::Wide => read_wide(&header, &records, opts),
        CsvLayout::Long => read_long(&header, &records, opts),
    }
}

fn column_index(header: &[String], name: &str) -> Result<usize, CsvError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CsvError::HeaderMismatch(format!("no `{name}` column")))
}

fn check_unique_header(header: &[String]) -> Result<(), CsvError> {
    let mut seen = BTreeSet::new();
    for h in header {
        if !seen.insert(h) {
            return Err(CsvError::HeaderMismatch(format!("column `{h}` appears twice")));
        }
    }
    Ok(())
}

fn read_groups<'a>(
    col: Option<usize>,
    header: &'a [String],
    line: u64,
    rec: &'a csv::StringRecord,
) -> Option<Cell<'a>> {
    col.map(|c| Cell {
        line,
        column: &header[c],
        text: rec.get(c).unwrap_or(""),
    })
}

fn read_wide(
    header: &[String],
    records: &[(u64, csv::StringRecord)],
    opts: &CsvOptions,
) -> Result<(ValidatedTable, Option<GroupLabeling>), CsvError> {
    check_unique_header(header)?;
    let id_col = column_index(header, INDIVIDUAL_COLUMN)?;
    let group_col = opts
        .group_column
        .as_deref()
        .map(|g| column_index(header, g))
        .transpose()?;
    let rater_cols: Vec<usize> = match &opts.raters {
        Some(names) => names
            .iter()
            .map(|n| column_index(header, n))
            .collect::<Result<_, _>>()?,
        None => (0..header.len())
            .filter(|&c| c != id_col && Some(c) != group_col)
            .collect(),
    };
    if rater_cols.len() < 2 {
        return Err(CsvError::HeaderMismatch(format!(
            "need at least 2 rater columns, found {}",
            rater_cols.len()
        )));
    }
    if rater_cols.iter().any(|&c| c == id_col || Some(c) == group_col) {
        return Err(CsvError::HeaderMismatch(
            "rater columns overlap the individual or group column".into(),
        ));
    }

    let kind = opts.kind.unwrap_or_else(|| {
        infer_kind(
            records
                .iter()
                .flat_map(|(_, r)| rater_cols.iter().map(move |&c| r.get(c).unwrap_or(""))),
        )
    });
    let raters: Vec<RaterId> = rater_cols
        .iter()
        .map(|&c| RaterId::new(header[c].as_str()))
        .collect::<Result<_, _>>()
        .map_err(|_| CsvError::HeaderMismatch("empty rater column name".into()))?;

    let mut raw = PredictionTable::new(kind, raters.clone());
    let mut groups = GroupLabeling::new();
    for (line, rec) in records {
        let line = *line;
        if rec.len() != header.len() {
            return Err(CsvError::ParseError {
                line,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let id_cell = Cell {
            line,
            column: INDIVIDUAL_COLUMN,
            text: rec.get(id_col).unwrap_or(""),
        };
        let id = individual_id(&id_cell)?;
        if raw.rows.contains_key(&id) {
            return Err(CsvError::DuplicateIndividual {
                line,
                id: id.to_string(),
            });
        }
        raw.add_individual(id.clone());
        for (&c, rater) in rater_cols.iter().zip(&raters) {
            let cell = Cell {
                line,
                column: &header[c],
                text: rec.get(c).unwrap_or(""),
            };
            raw.set(id.clone(), rater.clone(), parse_cell(kind, &cell)?);
        }
        if let Some(g) = read_groups(group_col, header, line, rec) {
            if !g.text.is_empty() {
                groups.insert(id, g.text)?;
            }
        }
    }
    finish(raw, opts, group_col.map(|_| groups))
}

fn read_long(
    header: &[String],
    records: &[(u64, csv::StringRecord)],
    opts: &CsvOptions,
) -> Result<(ValidatedTable, Option<GroupLabeling>), CsvError> {
    check_unique_header(header)?;
    let id_col = column_index(header, INDIVIDUAL_COLUMN)?;
    let rater_col = column_index(header, RATER_COLUMN)?;
    let pred_col = column_index(header, PREDICTION_COLUMN)?;
    let group_col = opts
        .group_column
        .as_deref()
        .map(|g| column_index(header, g))
        .transpose()?;
    let keep: Option<BTreeSet<&str>> = opts
        .raters
        .as_ref()
        .map(|rs| rs.iter().map(String::as_str).collect());

    let kind = opts.kind.unwrap_or_else(|| {
        infer_kind(records.iter().filter_map(|(_, r)| {
            let rater = r.get(rater_col).unwrap_or("");
            keep.as_ref()
                .is_none_or(|k| k.contains(rater))
                .then(|| r.get(pred_col).unwrap_or(""))
        }))
    });

    let mut raters: Vec<RaterId> = match &opts.raters {
        Some(rs) => rs
            .iter()
            .map(|r| RaterId::new(r.as_str()))
            .collect::<Result<_, _>>()
            .map_err(|_| CsvError::HeaderMismatch("empty rater name".into()))?,
        None => Vec::new(),
    };
    let mut cells: BTreeSet<(IndividualId, RaterId)> = BTreeSet::new();
    let mut group_of: BTreeMap<IndividualId, String> = BTreeMap::new();
    let mut raw = PredictionTable::new(kind, Vec::new());
    for (line, rec) in records {
        let line = *line;
        if rec.len() != header.len() {
            return Err(CsvError::ParseError {
                line,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let id = individual_id(&Cell {
            line,
            column: INDIVIDUAL_COLUMN,
            text: rec.get(id_col).unwrap_or(""),
        })?;
        let rater_cell = Cell {
            line,
            column: RATER_COLUMN,
            text: rec.get(rater_col).unwrap_or(""),
        };
        let rater = RaterId::new(rater_cell.text).map_err(|_| parse_error(&rater_cell, "rater is empty"))?;
        if let Some(g) = read_groups(group_col, header, line, rec) {
            if !g.text.is_empty() {
                match group_of.get(&id) {
                    Some(prev) if prev != g.text => {
                        return Err(parse_error(
                            &g,
                            format!("individual `{id}` has groups `{prev}` and `{}`", g.text),
                        ))
                    }
                    _ => {
                        group_of.insert(id.clone(), g.text.to_string());
                    }
                }
            }
        }
        if keep.as_ref().is_some_and(|k| !k.contains(rater.as_str())) {
            raw.add_individual(id);
            continue;
        }
        if opts.raters.is_none() && !raters.contains(&rater) {
            raters.push(rater.clone());
        }
        if !cells.insert((id.clone(), rater.clone())) {
            return Err(CsvError::DuplicateCell {
                line,
                id: id.to_string(),
                rater: rater.to_string(),
            });
        }
        let pred = parse_cell(
            kind,
            &Cell {
                line,
                column: PREDICTION_COLUMN,
                text: rec.get(pred_col).unwrap_or(""),
            },
        )?;
        raw.add_individual(id.clone());
        raw.set(id, rater, pred);
    }
    raw.raters = raters;
    let groups = group_col.map(|_| group_of.into_iter().collect());
    finish(raw, opts, groups)
}

/// Writes the canonical wide CSV: `individual`, the raters in column order,
/// then `group_column` when labels are given. Continuous values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(
    table: &ValidatedTable,
    groups: Option<(&str, &GroupLabeling)>,
    writer: W,
) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = vec![INDIVIDUAL_COLUMN];
    header.extend(table.raters().iter().map(RaterId::as_str));
    if let Some((col, _)) = groups {
        header.push(col);
    }
    w.write_record(&header)?;
    for (id, row) in table.rows() {
        let mut rec: Vec<String> = vec![id.to_string()];
        rec.extend(
            table
                .raters()
                .iter()
                .map(|r| row.get(r).map(Prediction::label).unwrap_or_default()),
        );
        if let Some((_, g)) = groups {
            rec.push(g.get(id).unwrap_or("").to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| CsvError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}
