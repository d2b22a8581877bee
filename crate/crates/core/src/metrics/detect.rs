//! Structural-similarity backdoor detection: calibrate a similarity
//! threshold on clean-vs-clean same-size pairs, then flag suspects whose
//! best similarity to same-size clean references falls below it.

use super::ged::{ged, CostModel};
use super::MetricsError;
use crate::graph::Graph;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Calibrated similarity threshold (quantile of clean-pair similarities).
    pub threshold: f64,
    /// Max similarity of each suspect to its reference pool.
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub warnings: Vec<String>,
}

fn similarity(g1: &Graph, g2: &Graph, cost: &CostModel) -> f64 {
    1.0 / (1.0 + ged(g1, g2, cost).normalized)
}

pub fn detect(
    suspects: &[Graph],
    clean_reference: &[Graph],
    threshold_quantile: f64,
) -> Result<DetectionReport, MetricsError> {
    if clean_reference.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if !(0.0..1.0).contains(&threshold_quantile) || threshold_quantile == 0.0 {
        return Err(MetricsError::BadQuantile(threshold_quantile));
    }
    let cost = CostModel::default();
    let mut warnings = Vec::new();

    // Calibration pool: similarities among same-size clean pairs.
    let mut sims = Vec::new();
    for i in 0..clean_reference.len() {
        for j in (i + 1)..clean_reference.len() {
            if clean_reference[i].n() == clean_reference[j].n() {
                sims.push(similarity(&clean_reference[i], &clean_reference[j], &cost));
            }
        }
    }
    if sims.is_empty() {
        warnings.push("no same-size clean pairs; calibrating on all pairs".to_string());
        for i in 0..clean_reference.len() {
            for j in (i + 1)..clean_reference.len() {
                sims.push(similarity(&clean_reference[i], &clean_reference[j], &cost));
            }
        }
    }
    if sims.is_empty() {
        // Single reference graph: nothing to calibrate against.
        warnings.push("single-graph reference; threshold fixed at 0".to_string());
        sims.push(0.0);
    }
    sims.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((sims.len() as f64 - 1.0) * threshold_quantile).floor() as usize;
    let threshold = sims[idx];

    let mut scores = Vec::with_capacity(suspects.len());
    let mut flags = Vec::with_capacity(suspects.len());
    for (k, suspect) in suspects.iter().enumerate() {
        let same_size: Vec<&Graph> =
            clean_reference.iter().filter(|r| r.n() == suspect.n()).collect();
        let pool: Vec<&Graph> = if same_size.is_empty() {
            let best = clean_reference
                .iter()
                .map(|r| (r.n() as i64 - suspect.n() as i64).abs())
                .min()
                .expect("nonempty reference");
            warnings.push(format!(
                "suspect {k}: no same-size reference, falling back to nearest size (delta {best})"
            ));
            clean_reference
                .iter()
                .filter(|r| (r.n() as i64 - suspect.n() as i64).abs() == best)
                .collect()
        } else {
            same_size
        };
        let score = pool
            .iter()
            .map(|r| similarity(suspect, r, &cost))
            .fold(f64::NEG_INFINITY, f64::max);
        scores.push(score);
        flags.push(score < threshold);
    }
    Ok(DetectionReport { threshold, scores, flags, warnings })
}
