//! Scoring and defenses: validity/uniqueness/attack-success evaluation,
//! exact graph edit distance, spectral distance, and the
//! structural-similarity backdoor detector.

mod detect;
mod ged;
mod jacobi;
mod nld;

pub use detect::{detect, DetectionReport};
pub use ged::{ged, ged_exact, CostModel, GedResult, EXACT_GED_NODE_CAP};
pub use jacobi::jacobi_eigen;
pub use nld::{laplacian_spectrum, nld, normalized_laplacian};

use crate::graph::{canonical_hash, is_valid_molecule, Graph, GraphError, ValenceTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("graphs with {0} nodes exceed the exact edit-distance cap of {1}")]
    TooLarge(usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("bad quantile {0}; must lie in (0, 1)")]
    BadQuantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Clean,
    Backdoored,
}

/// Full-scale reference numbers for the default QM9 setting (poison rate
/// 5%, r = 0.5). Recorded for comparison; the desk-scale experiments are
/// not expected to reproduce them.
pub mod reference {
    pub const QM9_DEFAULT_ASR: f64 = 1.00;
    pub const QM9_DEFAULT_VALIDITY: f64 = 0.97;
    pub const QM9_DEFAULT_UNIQUENESS: f64 = 1.00;
}

/// Validity / uniqueness / attack-success report over a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub validity: f64,
    pub uniqueness: f64,
    /// `1 - validity`, present only for backdoored-mode evaluation.
    pub asr: Option<f64>,
    /// Per-graph validity verdicts, corpus order.
    pub verdicts: Vec<bool>,
    /// Hash of the config that produced the corpus; filled by the caller.
    pub fingerprint: String,
}

/// Pairwise structural-similarity summary between two matched corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Mean normalized edit distance over the pairs.
    pub ged: f64,
    /// Mean normalized-Laplacian spectral distance over the pairs.
    pub nld: f64,
    /// Per-pair `(normalized ged, nld)` values, pair order.
    pub pairs: Vec<(f64, f64)>,
}

/// Distances for matched pairs, e.g. clean graphs versus their backdoored
/// counterparts. Symmetric in the pair order and zero on identical pairs.
pub fn similarity_report(pairs: &[(Graph, Graph)]) -> Result<SimilarityReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let cost = CostModel::default();
    let mut per_pair = Vec::with_capacity(pairs.len());
    let mut ged_sum = 0.0;
    let mut nld_sum = 0.0;
    for (a, b) in pairs {
        let g = ged(a, b, &cost).normalized;
        let l = nld(a, b);
        ged_sum += g;
        nld_sum += l;
        per_pair.push((g, l));
    }
    Ok(SimilarityReport {
        ged: ged_sum / pairs.len() as f64,
        nld: nld_sum / pairs.len() as f64,
        pairs: per_pair,
    })
}

/// Validity via the valence rules, uniqueness via canonical hashing, and
/// ASR as the invalid fraction when evaluating a backdoored-sampled corpus.
pub fn evaluate(corpus: &[Graph], vt: &ValenceTable, mode: EvalMode) -> Result<EvalReport, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut verdicts = Vec::with_capacity(corpus.len());
    let mut hashes = std::collections::HashSet::new();
    for g in corpus {
        verdicts.push(is_valid_molecule(g, vt)?);
        hashes.insert(canonical_hash(g));
    }
    let valid = verdicts.iter().filter(|&&v| v).count();
    let validity = valid as f64 / corpus.len() as f64;
    let uniqueness = hashes.len() as f64 / corpus.len() as f64;
    Ok(EvalReport {
        validity,
        uniqueness,
        asr: match mode {
            EvalMode::Backdoored => Some(1.0 - validity),
            EvalMode::Clean => None,
        },
        verdicts,
        fingerprint: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn valid_graph() -> Graph {
        Graph::from_edges(4, 4, vec![0, 0], &[(0, 1, 1)]).unwrap()
    }

    fn o3_graph() -> Graph {
        Graph::from_edges(4, 4, vec![2, 2, 2], &[(0, 1, 3), (1, 2, 3)]).unwrap()
    }

    #[test]
    fn copies_of_one_valid_graph() {
        let vt = ValenceTable::qm9(4).unwrap();
        let corpus = vec![valid_graph(), valid_graph(), valid_graph()];
        let rep = evaluate(&corpus, &vt, EvalMode::Clean).unwrap();
        assert_eq!(rep.validity, 1.0);
        assert!((rep.uniqueness - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.asr, None);
        assert_eq!(rep.verdicts, vec![true, true, true]);
    }

    #[test]
    fn trigger_corpus_scores_full_asr() {
        let vt = ValenceTable::qm9(4).unwrap();
        let corpus = vec![o3_graph(), o3_graph()];
        let rep = evaluate(&corpus, &vt, EvalMode::Backdoored).unwrap();
        assert_eq!(rep.validity, 0.0);
        assert_eq!(rep.asr, Some(1.0));
    }

    #[test]
    fn evaluation_is_order_invariant() {
        let vt = ValenceTable::qm9(4).unwrap();
        let a = vec![valid_graph(), o3_graph(), valid_graph()];
        let b = vec![o3_graph(), valid_graph(), valid_graph()];
        let ra = evaluate(&a, &vt, EvalMode::Backdoored).unwrap();
        let rb = evaluate(&b, &vt, EvalMode::Backdoored).unwrap();
        assert_eq!(ra.validity, rb.validity);
        assert_eq!(ra.uniqueness, rb.uniqueness);
        assert_eq!(ra.asr, rb.asr);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let vt = ValenceTable::qm9(4).unwrap();
        assert_eq!(evaluate(&[], &vt, EvalMode::Clean), Err(MetricsError::EmptyCorpus));
    }

    #[test]
    fn similarity_report_is_zero_on_identical_and_symmetric() {
        let a = valid_graph();
        let b = o3_graph();
        let same = similarity_report(&[(a.clone(), a.clone())]).unwrap();
        assert_eq!(same.ged, 0.0);
        assert!(same.nld < 1e-9);
        let ab = similarity_report(&[(a.clone(), b.clone())]).unwrap();
        let ba = similarity_report(&[(b, a)]).unwrap();
        assert!((ab.ged - ba.ged).abs() < 1e-12);
        assert!((ab.nld - ba.nld).abs() < 1e-9);
        assert_eq!(ab.pairs.len(), 1);
        assert!(similarity_report(&[]).is_err());
    }
}
