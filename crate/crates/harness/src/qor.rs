//! Quality-of-results accounting: weighted false positives and negatives of
//! a detected set against the unshed ground truth, plus latency summaries.
//!
//! Match identity is the (pattern id, window id, contributing seqs) triple.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use hspice_core::operator::ComplexEvent;
use hspice_core::pattern::PatternId;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternQoR {
    pub pattern_id: PatternId,
    pub weight: f64,
    pub truth_count: u64,
    pub detected_count: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// Percentages relative to the truth count; absent when truth is empty.
    pub fn_pct: Option<f64>,
    pub fp_pct: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_ns: f64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

impl LatencySummary {
    pub fn from_samples(mut latencies: Vec<u64>) -> LatencySummary {
        if latencies.is_empty() {
            return LatencySummary::default();
        }
        latencies.sort_unstable();
        let count = latencies.len() as u64;
        let sum: u128 = latencies.iter().map(|&l| u128::from(l)).sum();
        let p99_idx = ((latencies.len() as f64) * 0.99).ceil() as usize - 1;
        LatencySummary {
            count,
            mean_ns: sum as f64 / count as f64,
            p99_ns: latencies[p99_idx.min(latencies.len() - 1)],
            max_ns: *latencies.last().unwrap(),
        }
    }
}

/// One experiment's results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QoRReport {
    pub per_pattern: Vec<PatternQoR>,
    /// Weighted totals over all patterns.
    pub fp_weighted: f64,
    pub fn_weighted: f64,
    pub truth_total: u64,
    pub detected_total: u64,
    pub drop_ratio: f64,
    pub latency: LatencySummary,
    /// Echo of the run parameters for post-hoc merging.
    pub config: serde_json::Value,
}

fn key(ce: &ComplexEvent) -> (PatternId, u64, Vec<u64>) {
    (ce.pattern_id, ce.window_id, ce.seqs.clone())
}

/// Compares detected matches against the truth set per pattern and applies
/// the pattern weights.
pub fn compute_qor(
    detected: &[ComplexEvent],
    truth: &[ComplexEvent],
    weights: &BTreeMap<PatternId, f64>,
    drop_ratio: f64,
    latency: LatencySummary,
    config: serde_json::Value,
) -> QoRReport {
    let mut patterns: Vec<PatternId> = weights.keys().copied().collect();
    for ce in truth.iter().chain(detected) {
        if !patterns.contains(&ce.pattern_id) {
            patterns.push(ce.pattern_id);
        }
    }
    patterns.sort_unstable();

    let mut per_pattern = Vec::with_capacity(patterns.len());
    let mut fp_weighted = 0.0;
    let mut fn_weighted = 0.0;
    for pid in patterns {
        let weight = weights.get(&pid).copied().unwrap_or(1.0);
        let truth_set: HashSet<_> = truth
            .iter()
            .filter(|c| c.pattern_id == pid)
            .map(key)
            .collect();
        let detected_set: HashSet<_> = detected
            .iter()
            .filter(|c| c.pattern_id == pid)
            .map(key)
            .collect();
        let false_negatives = truth_set.difference(&detected_set).count() as u64;
        let false_positives = detected_set.difference(&truth_set).count() as u64;
        let truth_count = truth_set.len() as u64;
        fp_weighted += weight * false_positives as f64;
        fn_weighted += weight * false_negatives as f64;
        per_pattern.push(PatternQoR {
            pattern_id: pid,
            weight,
            truth_count,
            detected_count: detected_set.len() as u64,
            false_positives,
            false_negatives,
            fn_pct: (truth_count > 0).then(|| 100.0 * false_negatives as f64 / truth_count as f64),
            fp_pct: (truth_count > 0).then(|| 100.0 * false_positives as f64 / truth_count as f64),
        });
    }
    QoRReport {
        fp_weighted,
        fn_weighted,
        truth_total: per_pattern.iter().map(|p| p.truth_count).sum(),
        detected_total: per_pattern.iter().map(|p| p.detected_count).sum(),
        per_pattern,
        drop_ratio,
        latency,
        config,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ce(pattern_id: PatternId, window_id: u64, seqs: &[u64]) -> ComplexEvent {
        ComplexEvent {
            pattern_id,
            window_id,
            seqs: seqs.to_vec(),
            ts_detect: 0,
        }
    }

    #[test]
    fn identical_sets_have_zero_qor_impact() {
        let truth = vec![ce(1, 0, &[1, 2]), ce(1, 1, &[3, 4])];
        let weights = [(1, 1.0)].into_iter().collect();
        let r = compute_qor(
            &truth,
            &truth,
            &weights,
            0.0,
            LatencySummary::default(),
            serde_json::Value::Null,
        );
        assert_eq!(r.fp_weighted, 0.0);
        assert_eq!(r.fn_weighted, 0.0);
        assert_eq!(r.per_pattern[0].fn_pct, Some(0.0));
    }

    #[test]
    fn weighted_false_negatives_sum_per_pattern() {
        // Pattern 1 (weight 1) misses 3, pattern 2 (weight 2) misses 2:
        // weighted total 7.
        let mut truth = Vec::new();
        for i in 0..5 {
            truth.push(ce(1, i, &[i, i + 10]));
        }
        for i in 0..4 {
            truth.push(ce(2, i, &[i, i + 20]));
        }
        let detected = vec![
            ce(1, 0, &[0, 10]),
            ce(1, 1, &[1, 11]),
            ce(2, 0, &[0, 20]),
            ce(2, 1, &[1, 21]),
        ];
        let weights = [(1, 1.0), (2, 2.0)].into_iter().collect();
        let r = compute_qor(
            &detected,
            &truth,
            &weights,
            0.0,
            LatencySummary::default(),
            serde_json::Value::Null,
        );
        assert_eq!(r.fn_weighted, 3.0 + 2.0 * 2.0);
        assert_eq!(r.fp_weighted, 0.0);
    }

    #[test]
    fn detected_but_not_true_counts_as_false_positive() {
        let truth = vec![];
        let detected = vec![ce(3, 7, &[1, 2, 3])];
        let weights = BTreeMap::new();
        let r = compute_qor(
            &detected,
            &truth,
            &weights,
            0.0,
            LatencySummary::default(),
            serde_json::Value::Null,
        );
        assert_eq!(r.fp_weighted, 1.0);
        assert_eq!(r.per_pattern[0].fp_pct, None);
    }

    #[test]
    fn latency_summary_percentiles() {
        let latencies: Vec<u64> = (1..=100).collect();
        let s = LatencySummary::from_samples(latencies);
        assert_eq!(s.count, 100);
        assert_eq!(s.mean_ns, 50.5);
        assert_eq!(s.p99_ns, 99);
        assert_eq!(s.max_ns, 100);
    }
}
