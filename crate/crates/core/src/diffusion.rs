//! Forward noising and the true posteriors for both chains.
//!
//! The clean chain diffuses every coordinate; the backdoored chain diffuses
//! unmasked coordinates under the backdoored transition matrices and pins
//! masked coordinates to the trigger encoding at every step, so the trigger
//! survives all the way to the limit distribution.

use crate::graph::{apply_masked_overwrite, Graph, GraphError, SoftGraph, TriggerMasks, TriggerSpec};
use crate::rng::{sample_categorical, seeded};
use crate::schedule::{
    cumulative_matrix_from_zero, step_matrix, LimitDistributions, NoiseSchedule, ScheduleError,
    TransitionMatrix,
};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("timestep {t} out of range {lo}..={hi}")]
    OutOfRange { t: usize, lo: usize, hi: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// A noisy draw together with the distribution it came from.
#[derive(Debug, Clone)]
pub struct NoisyGraphSample {
    pub t: usize,
    pub g_t: Graph,
    pub soft: SoftGraph,
    pub masks: Option<TriggerMasks>,
}

fn check_dims(g: &Graph, limits: &LimitDistributions) -> Result<(), DiffusionError> {
    if g.node_type_count() != limits.node_type_count() || g.edge_type_count() != limits.edge_type_count()
    {
        return Err(DiffusionError::DimensionMismatch(format!(
            "graph types ({}, {}) vs limits ({}, {})",
            g.node_type_count(),
            g.edge_type_count(),
            limits.node_type_count(),
            limits.edge_type_count()
        )));
    }
    Ok(())
}

fn check_t(t: usize, lo: usize, sched: &NoiseSchedule) -> Result<(), DiffusionError> {
    if t < lo || t > sched.t_max() {
        return Err(DiffusionError::OutOfRange { t, lo, hi: sched.t_max() });
    }
    Ok(())
}

/// `q(G^t | G)` under the clean chain: each node row is `X Qbar_X^t`, each
/// `i < j` pair slice is `E_ij Qbar_E^t`, mirrored for symmetry.
pub fn forward_marginal_clean(
    g: &Graph,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    t: usize,
) -> Result<SoftGraph, DiffusionError> {
    check_dims(g, limits)?;
    check_t(t, 1, sched)?;
    let qx = cumulative_matrix_from_zero(sched, t, limits.mx())?;
    let qe = cumulative_matrix_from_zero(sched, t, limits.me())?;
    marginal_under(g, &qx, &qe)
}

/// `q(G_B^t | G_B)`: unmasked coordinates diffuse under the backdoored
/// cumulative matrices; masked coordinates are the exact trigger one-hots.
pub fn forward_marginal_backdoored(
    g_b: &Graph,
    masks: &TriggerMasks,
    spec: &TriggerSpec,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    t: usize,
) -> Result<SoftGraph, DiffusionError> {
    check_dims(g_b, limits)?;
    check_t(t, 1, sched)?;
    if masks.n() != g_b.n() {
        return Err(DiffusionError::DimensionMismatch(format!(
            "masks over {} nodes vs graph of {}",
            masks.n(),
            g_b.n()
        )));
    }
    let qx = cumulative_matrix_from_zero(sched, t, limits.mxb())?;
    let qe = cumulative_matrix_from_zero(sched, t, limits.meb())?;
    let diffused = marginal_under(g_b, &qx, &qe)?;
    Ok(apply_masked_overwrite(&diffused, spec, masks)?)
}

fn marginal_under(
    g: &Graph,
    qx: &TransitionMatrix,
    qe: &TransitionMatrix,
) -> Result<SoftGraph, DiffusionError> {
    let soft = SoftGraph::from_rows(
        g.node_type_count(),
        g.edge_type_count(),
        g.n(),
        |i| qx.row(g.node_type(i)).to_vec(),
        |i, j| qe.row(g.edge_type(i, j)).to_vec(),
    )?;
    Ok(soft)
}

/// Draws a one-hot graph from per-coordinate categoricals. Masked positions
/// are copied verbatim (the RNG stream is not consumed for them); edges are
/// drawn for `i < j` only and mirrored; the diagonal stays no-edge.
pub fn sample_noisy(soft: &SoftGraph, masks: Option<&TriggerMasks>, rng_seed: u64) -> Graph {
    let n = soft.n();
    let mut rng = seeded(rng_seed);
    let mut g = Graph::empty(soft.node_type_count(), soft.edge_type_count(), n);
    for i in 0..n {
        let row = soft.px_row(i);
        let t = if masks.is_some_and(|m| m.node_masked(i)) {
            argmax(row)
        } else {
            sample_categorical(&mut rng, row)
        };
        g.set_node_type(i, t);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let row = soft.pe_row(i, j);
            let e = if masks.is_some_and(|m| m.edge_masked(i, j)) {
                argmax(row)
            } else {
                sample_categorical(&mut rng, row)
            };
            g.set_edge_type(i, j, e);
        }
    }
    g
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Convenience: noise a clean graph at step `t` and keep the distribution.
pub fn make_noisy_clean(
    g: &Graph,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    t: usize,
    rng_seed: u64,
) -> Result<NoisyGraphSample, DiffusionError> {
    let soft = forward_marginal_clean(g, sched, limits, t)?;
    let g_t = sample_noisy(&soft, None, rng_seed);
    Ok(NoisyGraphSample { t, g_t, soft, masks: None })
}

/// Convenience: noise a backdoored graph at step `t` keeping the trigger.
pub fn make_noisy_backdoored(
    g_b: &Graph,
    masks: &TriggerMasks,
    spec: &TriggerSpec,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    t: usize,
    rng_seed: u64,
) -> Result<NoisyGraphSample, DiffusionError> {
    let soft = forward_marginal_backdoored(g_b, masks, spec, sched, limits, t)?;
    let g_t = sample_noisy(&soft, Some(masks), rng_seed);
    Ok(NoisyGraphSample { t, g_t, soft, masks: Some(masks.clone()) })
}

const POSTERIOR_FLOOR: f64 = 1e-30;

/// Unnormalized single-coordinate posterior
/// `q(z^{t-1} = k | z^t, z^0) ∝ Q^t[k, z^t] * Qbar^{t-1}[z^0, k]`,
/// normalized over `k` with a floor guard.
fn posterior_row(q_t: &TransitionMatrix, q_bar_prev: &TransitionMatrix, z0: usize, zt: usize) -> Vec<f64> {
    let c = q_t.size();
    let mut row = Vec::with_capacity(c);
    let mut sum = 0.0;
    for k in 0..c {
        let v = (q_t.get(k, zt) * q_bar_prev.get(z0, k)).max(POSTERIOR_FLOOR);
        row.push(v);
        sum += v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
    row
}

/// True posterior `q(G^{t-1} | G^t, G)` for the clean chain.
pub fn true_posterior_clean(
    g: &Graph,
    g_t: &Graph,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    t: usize,
) -> Result<SoftGraph, DiffusionError> {
    check_dims(g, limits)?;
    check_t(t, 2, sched)?;
    posterior_under(g, g_t, sched, limits.mx(), limits.me(), t, None, None)
}

/// True posterior for the backdoored chain: masked positions are the exact
/// trigger one-hots, unmasked positions are Bayes posteriors under the
/// backdoored matrices.
pub fn true_posterior_backdoored(
    g_b: &Graph,
    g_b_t: &Graph,
    masks: &TriggerMasks,
    spec: &TriggerSpec,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    t: usize,
) -> Result<SoftGraph, DiffusionError> {
    check_dims(g_b, limits)?;
    check_t(t, 2, sched)?;
    if masks.n() != g_b.n() || masks.n() != g_b_t.n() {
        return Err(DiffusionError::DimensionMismatch("mask/graph node counts differ".into()));
    }
    posterior_under(g_b, g_b_t, sched, limits.mxb(), limits.meb(), t, Some(masks), Some(spec))
}

#[allow(clippy::too_many_arguments)]
fn posterior_under(
    g0: &Graph,
    g_t: &Graph,
    sched: &NoiseSchedule,
    mx: &[f64],
    me: &[f64],
    t: usize,
    masks: Option<&TriggerMasks>,
    spec: Option<&TriggerSpec>,
) -> Result<SoftGraph, DiffusionError> {
    if g0.n() != g_t.n() {
        return Err(DiffusionError::DimensionMismatch(format!(
            "posterior over graphs of {} and {} nodes",
            g0.n(),
            g_t.n()
        )));
    }
    let qx_t = step_matrix(sched.alpha(t)?, mx)?;
    let qe_t = step_matrix(sched.alpha(t)?, me)?;
    let qx_prev = cumulative_matrix_from_zero(sched, t - 1, mx)?;
    let qe_prev = cumulative_matrix_from_zero(sched, t - 1, me)?;
    let soft = SoftGraph::from_rows(
        g0.node_type_count(),
        g0.edge_type_count(),
        g0.n(),
        |i| posterior_row(&qx_t, &qx_prev, g0.node_type(i), g_t.node_type(i)),
        |i, j| posterior_row(&qe_t, &qe_prev, g0.edge_type(i, j), g_t.edge_type(i, j)),
    )?;
    match (masks, spec) {
        (Some(m), Some(s)) => Ok(apply_masked_overwrite(&soft, s, m)?),
        _ => Ok(soft),
    }
}
