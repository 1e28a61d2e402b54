use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::runner::Summary;

/// Relative performance of the double-DQN agent against every other policy
/// present in a run: cost reduction, and gains in compliant paths and correct
/// allocations, all as percentages of the baseline policy's value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub reference_policy: String,
    /// (baseline - reference) / baseline * 100; positive = reference cheaper.
    pub cost_reduction_pct: BTreeMap<String, f64>,
    /// (reference - baseline) / baseline * 100; positive = reference better.
    pub compliant_gain_pct: BTreeMap<String, f64>,
    pub correct_allocation_gain_pct: BTreeMap<String, f64>,
    pub mean_accumulated_cost: BTreeMap<String, f64>,
    pub mean_compliant_count: BTreeMap<String, f64>,
    pub mean_correct_count: BTreeMap<String, f64>,
}

fn pct(delta: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        delta / base * 100.0
    }
}

/// Build a report from in-memory summaries; the reference policy is `d2q`.
pub fn compare_summaries(summaries: &BTreeMap<String, Summary>) -> Result<CompareReport> {
    let reference = "d2q";
    let d2q = summaries
        .get(reference)
        .ok_or_else(|| Error::MissingPolicy(reference.to_string()))?;
    if summaries.len() < 2 {
        return Err(Error::InvalidConfig(
            "comparison needs at least one policy besides d2q".into(),
        ));
    }

    let mut report = CompareReport {
        reference_policy: reference.to_string(),
        cost_reduction_pct: BTreeMap::new(),
        compliant_gain_pct: BTreeMap::new(),
        correct_allocation_gain_pct: BTreeMap::new(),
        mean_accumulated_cost: BTreeMap::new(),
        mean_compliant_count: BTreeMap::new(),
        mean_correct_count: BTreeMap::new(),
    };
    for (name, summary) in summaries {
        report
            .mean_accumulated_cost
            .insert(name.clone(), summary.accumulated_cost.mean);
        report
            .mean_compliant_count
            .insert(name.clone(), summary.latency_compliant_count.mean);
        report
            .mean_correct_count
            .insert(name.clone(), summary.correct_allocation_count.mean);
        if name == reference {
            continue;
        }
        report.cost_reduction_pct.insert(
            name.clone(),
            pct(
                summary.accumulated_cost.mean - d2q.accumulated_cost.mean,
                summary.accumulated_cost.mean,
            ),
        );
        report.compliant_gain_pct.insert(
            name.clone(),
            pct(
                d2q.latency_compliant_count.mean - summary.latency_compliant_count.mean,
                summary.latency_compliant_count.mean,
            ),
        );
        report.correct_allocation_gain_pct.insert(
            name.clone(),
            pct(
                d2q.correct_allocation_count.mean - summary.correct_allocation_count.mean,
                summary.correct_allocation_count.mean,
            ),
        );
    }
    Ok(report)
}

/// Load `summary.json` from a run directory and write `report.json` next to
/// it, returning the report.
pub fn compare_dir(dir: &Path) -> Result<CompareReport> {
    let text = std::fs::read_to_string(dir.join("summary.json"))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let summaries: BTreeMap<String, Summary> = serde_json::from_value(
        value
            .get("policies")
            .cloned()
            .ok_or_else(|| Error::ConfigParse("summary.json missing `policies`".into()))?,
    )?;
    let report = compare_summaries(&summaries)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runner::SummaryStat;

    fn summary(cost: f64, compliant: f64, correct: f64) -> Summary {
        let s = |mean| SummaryStat { mean, std: 0.0 };
        Summary {
            episodes: 10,
            accumulated_cost: s(cost),
            latency_compliant_count: s(compliant),
            correct_allocation_count: s(correct),
            task_count: s(100.0),
            infeasible_count: s(0.0),
            mean_reward: s(-cost / 100.0),
            failed_cells: Vec::new(),
        }
    }

    #[test]
    fn percentages_match_hand_computation() {
        let mut summaries = BTreeMap::new();
        summaries.insert("d2q".to_string(), summary(50.0, 60.0, 44.0));
        summaries.insert("random".to_string(), summary(100.0, 50.0, 40.0));
        let report = compare_summaries(&summaries).unwrap();
        assert!((report.cost_reduction_pct["random"] - 50.0).abs() < 1e-12);
        assert!((report.compliant_gain_pct["random"] - 20.0).abs() < 1e-12);
        assert!((report.correct_allocation_gain_pct["random"] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn missing_reference_policy_errors() {
        let mut summaries = BTreeMap::new();
        summaries.insert("random".to_string(), summary(100.0, 50.0, 40.0));
        assert!(matches!(
            compare_summaries(&summaries),
            Err(Error::MissingPolicy(_))
        ));
    }

    #[test]
    fn dir_round_trip() {
        let mut summaries = BTreeMap::new();
        summaries.insert("d2q".to_string(), summary(40.0, 60.0, 44.0));
        summaries.insert("round_robin".to_string(), summary(80.0, 30.0, 22.0));
        let dir = tempfile::tempdir().unwrap();
        let doc = serde_json::json!({ "schema_version": 1, "policies": summaries });
        std::fs::write(
            dir.path().join("summary.json"),
            serde_json::to_string(&doc).unwrap(),
        )
        .unwrap();
        let report = compare_dir(dir.path()).unwrap();
        assert!((report.cost_reduction_pct["round_robin"] - 50.0).abs() < 1e-12);
        assert!(dir.path().join("report.json").exists());
    }
}
