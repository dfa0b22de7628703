//! `summary.json` layout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sledge_core::metrics::StopReason;

use crate::config::{AlgorithmParams, SweepObjective};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The iterate became non-finite; the trace up to that point is kept.
    Diverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerTotals {
    pub rounds: usize,
    pub vectors_sent: u64,
    pub grad_calls: u64,
    /// Per-round ledger file, next to the trace.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub tag: String,
    pub label: String,
    /// Run name as reported by the optimizer, e.g. `ssrgd` for a perturbed SARAH run.
    pub algorithm: String,
    pub params: AlgorithmParams,
    pub seed: u64,
    pub status: RunStatus,
    pub trace: String,
    pub steps: Option<usize>,
    pub grad_calls: Option<u64>,
    pub audit_grad_calls: Option<u64>,
    pub vectors_sent: Option<u64>,
    pub ledger: Option<LedgerTotals>,
    pub stop_reason: Option<StopReason>,
    pub final_grad_norm: Option<f64>,
    pub best_grad_norm: Option<f64>,
    pub best_step: Option<usize>,
    pub final_value: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub error: Option<String>,
}

impl RunSummary {
    /// True when an accuracy criterion (not the step budget) ended the run.
    pub fn reached_target(&self) -> bool {
        self.status == RunStatus::Completed
            && matches!(self.stop_reason, Some(r) if r != StopReason::MaxSteps)
    }
}

/// Aggregate over the seeds of one tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSummary {
    pub tag: String,
    pub label: String,
    pub point: BTreeMap<String, Value>,
    pub runs: usize,
    pub completed: usize,
    pub diverged: usize,
    pub failed: usize,
    /// Completed runs per fired criterion.
    pub stop_reasons: BTreeMap<String, usize>,
    /// Set only when every seed reached the target.
    pub median_grad_calls_to_eps: Option<f64>,
    /// Set only when every seed completed.
    pub median_final_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestSetting {
    pub label: String,
    /// `None` when no grid point qualified.
    pub tag: Option<String>,
    pub point: Option<BTreeMap<String, Value>>,
    pub value: Option<f64>,
    /// Tags excluded because at least one seed diverged or failed.
    pub flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSummary {
    pub objective: SweepObjective,
    pub best: Vec<BestSetting>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancySummary {
    pub medians: BTreeMap<String, f64>,
    /// Per-algorithm series files.
    pub files: BTreeMap<String, String>,
    pub medians_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub command: String,
    pub seed_offset: i64,
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<DiscrepancySummary>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Strict parse; errors name the offending field.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::schema(e.path().to_string(), e.into_inner()))
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[mid] } else { 0.5 * (values[mid - 1] + values[mid]) })
}

/// Groups runs (already sorted by tag and seed) by tag.
pub fn group_runs(runs: &[RunSummary], points: &BTreeMap<String, BTreeMap<String, Value>>) -> Vec<GroupSummary> {
    let mut groups: Vec<GroupSummary> = Vec::new();
    for chunk in runs.chunk_by(|a, b| a.tag == b.tag) {
        let first = &chunk[0];
        let count = |s: RunStatus| chunk.iter().filter(|r| r.status == s).count();
        let mut stop_reasons = BTreeMap::new();
        for r in chunk.iter().filter(|r| r.status == RunStatus::Completed) {
            if let Some(reason) = r.stop_reason {
                *stop_reasons.entry(reason_name(reason)).or_insert(0) += 1;
            }
        }
        let all_reached = chunk.iter().all(RunSummary::reached_target);
        let all_completed = chunk.iter().all(|r| r.status == RunStatus::Completed);
        let mut calls: Vec<f64> = chunk.iter().filter_map(|r| r.grad_calls).map(|c| c as f64).collect();
        let mut values: Vec<f64> = chunk.iter().filter_map(|r| r.final_value).collect();
        groups.push(GroupSummary {
            tag: first.tag.clone(),
            label: first.label.clone(),
            point: points.get(&first.tag).cloned().unwrap_or_default(),
            runs: chunk.len(),
            completed: count(RunStatus::Completed),
            diverged: count(RunStatus::Diverged),
            failed: count(RunStatus::Failed),
            stop_reasons,
            median_grad_calls_to_eps: if all_reached { median(&mut calls) } else { None },
            median_final_value: if all_completed && values.len() == chunk.len() { median(&mut values) } else { None },
        });
    }
    groups
}

pub fn reason_name(reason: StopReason) -> String {
    serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_else(|| format!("{reason:?}"))
}

/// Picks the best grid point per label. Ties go to the earlier grid point.
pub fn best_settings(groups: &[GroupSummary], labels: &[String], objective: SweepObjective) -> Vec<BestSetting> {
    labels
        .iter()
        .map(|label| {
            let mine: Vec<&GroupSummary> = groups.iter().filter(|g| &g.label == label).collect();
            let flagged = mine.iter().filter(|g| g.diverged + g.failed > 0).map(|g| g.tag.clone()).collect();
            let score = |g: &GroupSummary| match objective {
                SweepObjective::GradCallsToEps => g.median_grad_calls_to_eps,
                SweepObjective::FinalValue => g.median_final_value,
            };
            let best = mine
                .iter()
                .filter(|g| g.diverged + g.failed == 0)
                .filter_map(|g| score(g).map(|s| (*g, s)))
                .fold(None, |acc: Option<(&GroupSummary, f64)>, (g, s)| match acc {
                    Some((_, best)) if best <= s => acc,
                    _ => Some((g, s)),
                });
            BestSetting {
                label: label.clone(),
                tag: best.map(|(g, _)| g.tag.clone()),
                point: best.map(|(g, _)| g.point.clone()),
                value: best.map(|(_, s)| s),
                flagged,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
