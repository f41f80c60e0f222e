#![allow(dead_code)]

use irrfair::{
    validate_table, GroupLabeling, IndividualId, Prediction, PredictionKind, PredictionTable, RaterId,
    ValidatedTable, ValueRange,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn iid(s: &str) -> IndividualId {
    IndividualId::new(s).unwrap()
}

pub fn rid(s: &str) -> RaterId {
    RaterId::new(s).unwrap()
}

pub const CATEGORIES: [&str; 4] = ["low", "mid", "high", "severe"];

fn random_cell<R: Rng>(rng: &mut R, kind: PredictionKind, range: ValueRange) -> Prediction {
    match kind {
        PredictionKind::Binary => Prediction::Binary(rng.gen()),
        PredictionKind::Categorical => Prediction::Categorical(CATEGORIES.choose(rng).unwrap().to_string()),
        // A coarse grid makes exact ties common, plus some arbitrary values.
        PredictionKind::Continuous => {
            if rng.gen_bool(0.5) {
                let step = range.width() / 4.0;
                Prediction::Continuous(range.lo + step * rng.gen_range(0..=4) as f64)
            } else {
                Prediction::Continuous(rng.gen_range(range.lo..=range.hi))
            }
        }
    }
}

/// A random table with `1..=max_n` individuals, 2 to 4 raters and each cell
/// missing with probability `missing`.
pub fn random_table<R: Rng>(rng: &mut R, kind: PredictionKind, max_n: usize, missing: f64) -> ValidatedTable {
    let k = rng.gen_range(2..=4);
    let raters: Vec<RaterId> = (0..k).map(|j| rid(&format!("rater{j}"))).collect();
    let range = match rng.gen_range(0..3) {
        0 => ValueRange::new(0.0, 1.0).unwrap(),
        1 => ValueRange::new(-5.0, 5.0).unwrap(),
        _ => ValueRange::new(1.0, 10.0).unwrap(),
    };
    let mut raw = PredictionTable::new(kind, raters.clone());
    if kind == PredictionKind::Continuous {
        raw = raw.with_range(range);
    }
    let n = rng.gen_range(1..=max_n);
    for i in 0..n {
        let id = iid(&format!("p{i:03}"));
        raw.add_individual(id.clone());
        for r in &raters {
            let cell = (!rng.gen_bool(missing)).then(|| random_cell(rng, kind, range));
            raw.set(id.clone(), r.clone(), cell);
        }
    }
    validate_table(raw).unwrap()
}

/// Assigns every individual to one of `groups` labels, each label used at
/// least once when there are enough individuals.
pub fn random_groups<R: Rng>(rng: &mut R, table: &ValidatedTable, groups: usize) -> GroupLabeling {
    let labels: Vec<String> = (0..groups).map(|g| format!("g{g}")).collect();
    table
        .individuals()
        .enumerate()
        .map(|(i, id)| {
            let label = if i < groups { &labels[i] } else { labels.choose(rng).unwrap() };
            (id.clone(), label.clone())
        })
        .collect()
}
