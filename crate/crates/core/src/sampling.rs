//! Generation: draw a prior graph from the clean or backdoored limit
//! distribution and denoise it step by step.
//!
//! No trigger mask is applied on the way back; the backdoor is carried
//! entirely by the prior choice. At `t = 1` the posterior degenerates and
//! the sample is drawn from the network prediction directly.

use crate::denoiser::{DenoiserError, DenoiserModel};
use crate::diffusion::sample_noisy;
use crate::graph::{Graph, GraphError, SoftGraph};
use crate::rng::{derive_seed, sample_categorical, seeded};
use crate::schedule::{
    cumulative_matrix_from_zero, step_matrix, LimitDistributions, NoiseSchedule, ScheduleError,
    TransitionMatrix,
};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("empty corpus: size distribution needs at least one graph")]
    EmptyCorpus,
    #[error("timestep {t} out of range 1..={max}")]
    OutOfRange { t: usize, max: usize },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
}

/// Empirical histogram of graph sizes in the training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeDistribution {
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl SizeDistribution {
    pub fn from_graphs(graphs: &[Graph]) -> Result<Self, SamplingError> {
        if graphs.is_empty() {
            return Err(SamplingError::EmptyCorpus);
        }
        let max_n = graphs.iter().map(Graph::n).max().unwrap_or(0);
        let mut counts = vec![0u64; max_n + 1];
        for g in graphs {
            counts[g.n()] += 1;
        }
        let total: u64 = counts.iter().sum();
        let mut sizes = Vec::new();
        let mut probs = Vec::new();
        for (n, &c) in counts.iter().enumerate() {
            if c > 0 {
                sizes.push(n);
                probs.push(c as f64 / total as f64);
            }
        }
        Ok(Self { sizes, probs })
    }

    /// All mass on a single size.
    pub fn degenerate(n: usize) -> Self {
        Self { sizes: vec![n], probs: vec![1.0] }
    }

    pub fn from_parts(sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self, SamplingError> {
        if sizes.is_empty() || sizes.len() != probs.len() {
            return Err(SamplingError::EmptyCorpus);
        }
        Ok(Self { sizes, probs })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample(&self, rng: &mut crate::rng::Rng) -> usize {
        self.sizes[sample_categorical(rng, &self.probs)]
    }
}

/// Draws `G^T`: `n` from the size distribution, node types i.i.d. from the
/// chosen limit vector, edges i.i.d. per unordered pair, no-edge diagonal.
pub fn sample_prior(
    limits: &LimitDistributions,
    size_dist: &SizeDistribution,
    backdoored: bool,
    rng_seed: u64,
) -> Graph {
    let mut rng = seeded(rng_seed);
    let n = size_dist.sample(&mut rng);
    let (mx, me) = if backdoored {
        (limits.mxb(), limits.meb())
    } else {
        (limits.mx(), limits.me())
    };
    let a = mx.len();
    let d = me.len();
    let mut g = Graph::empty(a, d, n);
    for i in 0..n {
        g.set_node_type(i, sample_categorical(&mut rng, mx));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            g.set_edge_type(i, j, sample_categorical(&mut rng, me));
        }
    }
    g
}

fn posterior_mix_row(
    q_t: &TransitionMatrix,
    q_bar_prev: &TransitionMatrix,
    pred: &[f64],
    observed: usize,
) -> Vec<f64> {
    let c = q_t.size();
    let mut out = vec![0.0; c];
    for (x, &p_x) in pred.iter().enumerate() {
        if p_x == 0.0 {
            continue;
        }
        // Normalized q(z^{t-1} = k | z^t = observed, z^0 = x).
        let mut row = Vec::with_capacity(c);
        let mut sum = 0.0;
        for k in 0..c {
            let v = (q_t.get(k, observed) * q_bar_prev.get(x, k)).max(1e-30);
            row.push(v);
            sum += v;
        }
        for k in 0..c {
            out[k] += p_x * row[k] / sum;
        }
    }
    // Guard against prediction rows that sum slightly away from one.
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// The per-coordinate distribution one reverse step samples from:
/// `p(z^{t-1} | G^t) = sum_x q(z^{t-1} | z^t, x) * p_hat(x)`, computed under
/// the clean or backdoored transition matrices. At `t = 1` this is the
/// network prediction itself.
pub fn reverse_distribution(
    model: &DenoiserModel,
    g_t: &Graph,
    t: usize,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    backdoored: bool,
) -> Result<SoftGraph, SamplingError> {
    if t == 0 || t > sched.t_max() {
        return Err(SamplingError::OutOfRange { t, max: sched.t_max() });
    }
    let pred = model.forward(g_t, t, sched.t_max())?;
    if t == 1 {
        return Ok(pred);
    }
    let (mx, me) = if backdoored {
        (limits.mxb(), limits.meb())
    } else {
        (limits.mx(), limits.me())
    };
    let alpha_t = sched.alpha(t)?;
    let qx_t = step_matrix(alpha_t, mx)?;
    let qe_t = step_matrix(alpha_t, me)?;
    let qx_prev = cumulative_matrix_from_zero(sched, t - 1, mx)?;
    let qe_prev = cumulative_matrix_from_zero(sched, t - 1, me)?;
    let n = g_t.n();
    let soft = SoftGraph::from_rows(
        limits.node_type_count(),
        limits.edge_type_count(),
        n,
        |i| posterior_mix_row(&qx_t, &qx_prev, pred.px_row(i), g_t.node_type(i)),
        |i, j| posterior_mix_row(&qe_t, &qe_prev, pred.pe_row(i, j), g_t.edge_type(i, j)),
    )?;
    Ok(soft)
}

/// One ancestral step: compute the posterior mixture and draw `G^{t-1}`.
pub fn reverse_step(
    model: &DenoiserModel,
    g_t: &Graph,
    t: usize,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    backdoored: bool,
    rng_seed: u64,
) -> Result<Graph, SamplingError> {
    let dist = reverse_distribution(model, g_t, t, sched, limits, backdoored)?;
    Ok(sample_noisy(&dist, None, rng_seed))
}

/// Seed used for sample `index` of a `generate(.., rng_seed)` call; exposed
/// so individual samples can be replayed.
pub fn sample_seed(rng_seed: u64, index: usize) -> u64 {
    derive_seed(rng_seed, index as u64)
}

/// Draws `count` graphs, each by `T` reverse steps from a fresh prior.
pub fn generate(
    model: &DenoiserModel,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    size_dist: &SizeDistribution,
    count: usize,
    backdoored: bool,
    rng_seed: u64,
) -> Result<Vec<Graph>, SamplingError> {
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let seed = sample_seed(rng_seed, s);
        let mut g = sample_prior(limits, size_dist, backdoored, derive_seed(seed, 0));
        for t in (1..=sched.t_max()).rev() {
            g = reverse_step(model, &g, t, sched, limits, backdoored, derive_seed(seed, t as u64))?;
        }
        out.push(g);
    }
    Ok(out)
}
