//! Audit report assembly and rendering.

use std::fmt::Write as _;

use serde::Serialize;

use crate::fairness::FairnessMode;
use crate::groups::{evaluate, stratified_audit, AuditEntry, AuditError, GroupAudit, Reliability, Statistic};
use crate::metrics::MetricSpec;
use crate::table::{GroupLabeling, PredictionKind, RaterId, ValidatedTable, ValueRange};

/// Bumped on any incompatible change to the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub spec: MetricSpec,
    pub mode: FairnessMode,
    pub statistic: Statistic,
    pub min_group_size: usize,
    /// Cap on listed violation records per report; counts stay exact.
    pub max_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub kind: PredictionKind,
    pub raters: Vec<RaterId>,
    pub individuals: usize,
    pub incomplete: usize,
    pub range: Option<ValueRange>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub input: InputSummary,
    pub metric: MetricSpec,
    pub mode: FairnessMode,
    pub statistic: Statistic,
    pub overall: AuditEntry,
    pub groups: Option<GroupAudit>,
}

fn cap(entry: &mut AuditEntry, max: Option<usize>) {
    if let Some(m) = max {
        entry.fairness.truncate_violations(m);
    }
}

pub fn build_report(
    table: &ValidatedTable,
    groups: Option<&GroupLabeling>,
    settings: &AuditSettings,
) -> Result<AuditReport, AuditError> {
    let AuditSettings {
        spec,
        mode,
        statistic,
        min_group_size,
        max_violations,
    } = *settings;
    let (mut overall, mut group_audit) = match groups {
        Some(g) => {
            let audit = stratified_audit(table, g, &spec, mode, statistic, min_group_size)?;
            (audit.pooled.clone(), Some(audit))
        }
        None => (evaluate(table, &spec, mode, statistic, min_group_size)?, None),
    };
    cap(&mut overall, max_violations);
    if let Some(a) = group_audit.as_mut() {
        cap(&mut a.pooled, max_violations);
        a.groups.values_mut().for_each(|e| cap(e, max_violations));
    }
    Ok(AuditReport {
        schema_version: SCHEMA_VERSION,
        input: InputSummary {
            kind: table.kind(),
            raters: table.raters().to_vec(),
            individuals: table.n_individuals(),
            incomplete: table.incomplete().len(),
            range: table.range(),
            labels: table.labels().to_vec(),
        },
        metric: spec,
        mode,
        statistic,
        overall,
        groups: group_audit,
    })
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

fn entry_text(out: &mut String, indent: &str, e: &AuditEntry) {
    let f = &e.fairness;
    let _ = writeln!(out, "{indent}individuals: {}  status: {:?}", e.n, e.status);
    if let Some(note) = &e.note {
        let _ = writeln!(out, "{indent}note: {note}");
    }
    match &e.reliability {
        Some(Reliability::Kappa(pk)) => {
            for p in &pk.pairs {
                let _ = writeln!(
                    out,
                    "{indent}kappa {}-{}: n={} p_o={:.6} p_e={:.6} kappa={}",
                    p.rater_a,
                    p.rater_b,
                    p.n,
                    p.p_o,
                    p.p_e,
                    num(p.kappa)
                );
            }
            for s in &pk.skipped {
                let _ = writeln!(out, "{indent}kappa {}-{}: skipped ({})", s.rater_a, s.rater_b, s.reason);
            }
            let _ = writeln!(out, "{indent}mean kappa: {}", num(pk.mean_kappa));
        }
        Some(Reliability::Icc(r)) => {
            let _ = writeln!(
                out,
                "{indent}{}: {:.6}  (n={} k={} excluded={} MSB={:.6} MSW={:.6} MSC={:.6} MSE={:.6})",
                r.model.name(),
                r.icc,
                r.n_subjects,
                r.k_raters,
                r.rows_excluded,
                r.ms_subjects,
                r.ms_within,
                r.ms_raters,
                r.ms_error
            );
        }
        None => {}
    }
    let _ = writeln!(
        out,
        "{indent}violations: {}  individuals violated: {}/{} ({:.6})  pairs disagreeing: {}/{} ({:.6})  excluded: {}",
        f.total_violations,
        f.individuals_violated,
        f.individuals_compared,
        f.individual_violation_rate,
        f.disagreeing_pairs,
        f.comparable_pairs,
        f.pair_violation_rate,
        f.individuals_excluded
    );
    if f.mode == FairnessMode::CrossIndividual {
        let _ = writeln!(
            out,
            "{indent}cross-individual comparisons: {}  violations: {}",
            f.cross_comparisons, f.cross_violations
        );
    }
    for v in &f.violations {
        let _ = writeln!(
            out,
            "{indent}  {} ({}) vs {} ({}): d={:.6} D={:.6}",
            v.individual_a, v.rater_a, v.individual_b, v.rater_b, v.individual_distance, v.prediction_distance
        );
    }
    if f.violations_truncated {
        let _ = writeln!(out, "{indent}  ... {} more", f.total_violations - f.violations.len());
    }
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let i = &self.input;
        let _ = writeln!(
            out,
            "input: {} predictions, {} individuals ({} incomplete), raters {}",
            i.kind,
            i.individuals,
            i.incomplete,
            i.raters.iter().map(RaterId::as_str).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(out, "metric: {}  mode: {:?}  statistic: {}", self.metric, self.mode, self.statistic.name());
        let _ = writeln!(out, "overall:");
        entry_text(&mut out, "  ", &self.overall);
        if let Some(g) = &self.groups {
            for (label, e) in &g.groups {
                let _ = writeln!(out, "group {label}:");
                entry_text(&mut out, "  ", e);
            }
            let _ = writeln!(
                out,
                "gaps: {} {}  pair violation rate {}  (unlabeled: {})",
                self.statistic.name(),
                num(g.gaps.statistic),
                num(g.gaps.pair_violation_rate),
                g.excluded
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::tests::{binary_table, iid};

    fn settings() -> AuditSettings {
        AuditSettings {
            spec: MetricSpec::for_kind(PredictionKind::Binary),
            mode: FairnessMode::SameIndividualOnly,
            statistic: Statistic::Kappa,
            min_group_size: 2,
            max_violations: Some(1),
        }
    }

    #[test]
    fn report_caps_violations_and_renders() {
        let t = binary_table(
            &[
                ("1", &[Some(true), Some(false)]),
                ("2", &[Some(false), Some(true)]),
                ("3", &[Some(true), Some(true)]),
            ],
            &["r", "s"],
        );
        let g: GroupLabeling = [(iid("1"), "a".to_string()), (iid("2"), "a".to_string())]
            .into_iter()
            .collect();
        let rep = build_report(&t, Some(&g), &settings()).unwrap();
        assert_eq!(rep.overall.fairness.violations.len(), 1);
        assert_eq!(rep.overall.fairness.total_violations, 2);
        assert_eq!(rep.groups.as_ref().unwrap().excluded, 1);
        let json = rep.to_json();
        assert!(json.starts_with("{\n  \"schema_version\": 1,"));
        assert!(json.contains("\"D_value\": 1.0"));
        let text = rep.to_text();
        assert!(text.contains("mean kappa: -0.500000"), "{text}");
        assert!(text.contains("... 1 more"));
        assert!(text.contains("group a:"));
    }
}
