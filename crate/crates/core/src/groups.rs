//! Reliability and fairness stratified by group.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fairness::{enumerate_violations, FairnessError, FairnessMode, FairnessReport};
use crate::irr::{icc, pairwise_kappa, IccModel, IccReport, IrrError, PairwiseKappa};
use crate::metrics::MetricSpec;
use crate::table::{GroupError, GroupLabeling, PredictionKind, ValidatedTable};

pub const DEFAULT_MIN_GROUP_SIZE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Kappa,
    Icc(IccModel),
}

impl Statistic {
    /// Kappa for discrete tables, one-way ICC for continuous ones.
    pub fn auto(kind: PredictionKind) -> Self {
        match kind {
            PredictionKind::Continuous => Statistic::Icc(IccModel::OneWayRandom),
            _ => Statistic::Kappa,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Kappa => "kappa",
            Statistic::Icc(m) => m.name(),
        }
    }

    pub fn supports(self, kind: PredictionKind) -> bool {
        matches!(
            (self, kind),
            (Statistic::Icc(_), PredictionKind::Continuous)
                | (Statistic::Kappa, PredictionKind::Binary | PredictionKind::Categorical)
        )
    }
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("no individual carries a group label")]
    NoLabeledIndividuals,
    #[error("statistic {statistic} does not apply to {kind} predictions")]
    IncompatibleStatistic {
        statistic: &'static str,
        kind: PredictionKind,
    },
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Irr(#[from] IrrError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Computed,
    /// The statistic's formula has no value on this data.
    Undefined,
    /// Fewer individuals than the minimum group size.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    Kappa(PairwiseKappa),
    Icc(IccReport),
}

/// Reliability and fairness for one set of individuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub n: usize,
    pub status: EntryStatus,
    /// Mean pairwise kappa or the ICC.
    pub statistic: Option<f64>,
    pub reliability: Option<Reliability>,
    pub note: Option<String>,
    pub fairness: FairnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    /// max - min of the statistic over groups where it is defined.
    pub statistic: Option<f64>,
    /// max - min of the pair violation rate over groups with comparable
    /// pairs.
    pub pair_violation_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAudit {
    pub statistic: Statistic,
    pub min_group_size: usize,
    pub groups: BTreeMap<String, AuditEntry>,
    pub pooled: AuditEntry,
    pub gaps: Gaps,
    /// Individuals without a group label.
    pub excluded: usize,
}

/// Computes the statistic and the fairness report for one (sub)table.
pub fn evaluate(
    table: &ValidatedTable,
    spec: &MetricSpec,
    mode: FairnessMode,
    statistic: Statistic,
    min_size: usize,
) -> Result<AuditEntry, AuditError> {
    if !statistic.supports(table.kind()) {
        return Err(AuditError::IncompatibleStatistic {
            statistic: statistic.name(),
            kind: table.kind(),
        });
    }
    let fairness = enumerate_violations(table, spec, mode)?;
    let n = table.n_individuals();
    let mut entry = AuditEntry {
        n,
        status: EntryStatus::Computed,
        statistic: None,
        reliability: None,
        note: None,
        fairness,
    };
    if n < min_size.max(1) {
        entry.status = EntryStatus::Skipped;
        entry.note = Some(format!("{n} individuals, minimum is {min_size}"));
        return Ok(entry);
    }
    match statistic {
        Statistic::Kappa => {
            let pk = pairwise_kappa(table)?;
            entry.statistic = pk.mean_kappa;
            if pk.mean_kappa.is_none() {
                entry.status = EntryStatus::Undefined;
                entry.note = Some("kappa undefined for every rater pair".into());
            }
            entry.reliability = Some(Reliability::Kappa(pk));
        }
        Statistic::Icc(model) => match icc(table, model) {
            Ok(rep) => {
                entry.statistic = Some(rep.icc);
                entry.reliability = Some(Reliability::Icc(rep));
            }
            Err(
                e @ (IrrError::TooFewSubjects(_)
                | IrrError::ZeroTotalVariance
                | IrrError::ZeroDenominator),
            ) => {
                entry.status = EntryStatus::Undefined;
                entry.note = Some(e.to_string());
            }
            Err(e) => return Err(e.into()),
        },
    }
    Ok(entry)
}

fn spread<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut it = values.into_iter();
    let first = it.next()?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Some(hi - lo)
}

/// Audits each labeled group separately and all individuals pooled.
pub fn stratified_audit(
    table: &ValidatedTable,
    groups: &GroupLabeling,
    spec: &MetricSpec,
    mode: FairnessMode,
    statistic: Statistic,
    min_group_size: usize,
) -> Result<GroupAudit, AuditError> {
    groups.check_against(table)?;
    if groups.is_empty() {
        return Err(AuditError::NoLabeledIndividuals);
    }
    let pooled = evaluate(table, spec, mode, statistic, min_group_size)?;

    let members = groups.members();
    let per_group: Vec<(String, AuditEntry)> = members
        .par_iter()
        .map(|(label, ids)| {
            let sub = table.restrict(ids.iter().copied());
            evaluate(&sub, spec, mode, statistic, min_group_size).map(|e| (label.to_string(), e))
        })
        .collect::<Result<_, _>>()?;
    let groups_map: BTreeMap<String, AuditEntry> = per_group.into_iter().collect();

    let gaps = Gaps {
        statistic: spread(groups_map.values().filter_map(|e| e.statistic)),
        pair_violation_rate: spread(
            groups_map
                .values()
                .filter(|e| e.fairness.comparable_pairs > 0)
                .map(|e| e.fairness.pair_violation_rate),
        ),
    };
    let labeled: usize = groups_map.values().map(|e| e.n).sum();

    Ok(GroupAudit {
        statistic,
        min_group_size,
        excluded: table.n_individuals() - labeled,
        groups: groups_map,
        pooled,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::tests::{binary_table, iid};

    fn labels(pairs: &[(&str, &str)]) -> GroupLabeling {
        pairs.iter().map(|(i, g)| (iid(i), g.to_string())).collect()
    }

    fn audit(t: &ValidatedTable, g: &GroupLabeling) -> GroupAudit {
        stratified_audit(
            t,
            g,
            &MetricSpec::for_kind(t.kind()),
            FairnessMode::SameIndividualOnly,
            Statistic::Kappa,
            DEFAULT_MIN_GROUP_SIZE,
        )
        .unwrap()
    }

    #[test]
    fn identical_groups_have_zero_gap() {
        let t = binary_table(
            &[
                ("a1", &[Some(true), Some(true)]),
                ("a2", &[Some(false), Some(true)]),
                ("a3", &[Some(false), Some(false)]),
                ("b1", &[Some(true), Some(true)]),
                ("b2", &[Some(false), Some(true)]),
                ("b3", &[Some(false), Some(false)]),
            ],
            &["r", "s"],
        );
        let g = labels(&[("a1", "A"), ("a2", "A"), ("a3", "A"), ("b1", "B"), ("b2", "B"), ("b3", "B")]);
        let a = audit(&t, &g);
        assert_eq!(a.groups["A"].statistic, a.groups["B"].statistic);
        assert_eq!(a.gaps.statistic, Some(0.0));
        assert_eq!(a.gaps.pair_violation_rate, Some(0.0));
        assert_eq!(a.excluded, 0);
    }

    #[test]
    fn agree_vs_disagree_groups() {
        let t = binary_table(
            &[
                ("a1", &[Some(true), Some(true)]),
                ("a2", &[Some(false), Some(false)]),
                ("b1", &[Some(true), Some(false)]),
                ("b2", &[Some(false), Some(true)]),
                ("u", &[Some(false), Some(true)]),
            ],
            &["r", "s"],
        );
        let g = labels(&[("a1", "A"), ("a2", "A"), ("b1", "B"), ("b2", "B")]);
        let a = audit(&t, &g);
        assert_eq!(a.groups["A"].fairness.pair_violation_rate, 0.0);
        assert_eq!(a.groups["B"].fairness.pair_violation_rate, 1.0);
        assert_eq!(a.gaps.pair_violation_rate, Some(1.0));
        assert_eq!(a.excluded, 1);
        assert_eq!(a.groups.values().map(|e| e.n).sum::<usize>() + a.excluded, a.pooled.n);
        assert_eq!(a.pooled.fairness.disagreeing_pairs, 3);
    }

    #[test]
    fn small_and_degenerate_groups_are_marked() {
        let t = binary_table(
            &[
                ("a1", &[Some(true), Some(true)]),
                ("a2", &[Some(true), Some(true)]),
                ("b1", &[Some(true), Some(false)]),
                ("c1", &[Some(false), Some(true)]),
                ("c2", &[Some(true), Some(false)]),
            ],
            &["r", "s"],
        );
        let g = labels(&[("a1", "A"), ("a2", "A"), ("b1", "B"), ("c1", "C"), ("c2", "C")]);
        let a = audit(&t, &g);
        assert_eq!(a.groups["A"].status, EntryStatus::Undefined);
        assert_eq!(a.groups["B"].status, EntryStatus::Skipped);
        assert_eq!(a.groups["B"].fairness.disagreeing_pairs, 1);
        assert_eq!(a.groups["C"].status, EntryStatus::Computed);
        assert_eq!(a.groups.len(), 3);
        // only C has a kappa, so the gap is 0
        assert_eq!(a.gaps.statistic, Some(0.0));
    }

    #[test]
    fn errors() {
        let t = binary_table(&[("a", &[Some(true), Some(true)])], &["r", "s"]);
        let spec = MetricSpec::for_kind(t.kind());
        let run = |g: &GroupLabeling, stat| {
            stratified_audit(&t, g, &spec, FairnessMode::SameIndividualOnly, stat, 2)
        };
        assert!(matches!(run(&GroupLabeling::new(), Statistic::Kappa), Err(AuditError::NoLabeledIndividuals)));
        assert!(matches!(run(&labels(&[("zz", "A")]), Statistic::Kappa), Err(AuditError::Group(_))));
        assert!(matches!(
            run(&labels(&[("a", "A")]), Statistic::Icc(IccModel::OneWayRandom)),
            Err(AuditError::IncompatibleStatistic { .. })
        ));
    }

    #[test]
    fn relabeling_groups_preserves_gaps() {
        let t = binary_table(
            &[
                ("1", &[Some(true), Some(true)]),
                ("2", &[Some(false), Some(true)]),
                ("3", &[Some(false), Some(false)]),
                ("4", &[Some(true), Some(false)]),
                ("5", &[Some(true), Some(true)]),
                ("6", &[Some(false), Some(false)]),
            ],
            &["r", "s"],
        );
        let g1 = labels(&[("1", "x"), ("2", "x"), ("3", "x"), ("4", "y"), ("5", "y"), ("6", "y")]);
        let g2 = labels(&[("1", "q"), ("2", "q"), ("3", "q"), ("4", "p"), ("5", "p"), ("6", "p")]);
        let (a, b) = (audit(&t, &g1), audit(&t, &g2));
        assert_eq!(a.gaps, b.gaps);
        assert_eq!(a.groups["x"], b.groups["q"]);
        assert_eq!(a.groups["y"], b.groups["p"]);
    }
}
