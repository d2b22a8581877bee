//! Retention schedules and the categorical transition matrices driving both
//! the clean chain and the backdoored chain.
//!
//! A single step keeps the current type with probability `alpha^t` and
//! otherwise resamples from the target marginal `m`, i.e.
//! `Q^t = alpha^t I + (1 - alpha^t) 1 m'`. Products of such matrices stay in
//! the same family, which gives the closed-form cumulative matrix
//! `Qbar^t = abar^t I + (1 - abar^t) 1 m'`.

use crate::graph::Graph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("timestep count must be >= 2, got {0}")]
    BadT(usize),
    #[error("not a probability distribution: {0}")]
    BadDistribution(String),
    #[error("timestep {t} out of range 1..={max}")]
    OutOfRange { t: usize, max: usize },
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

/// Per-step retention factors and their running products.
///
/// `alpha(t)` and `alpha_bar(t)` are 1-indexed over `1..=T`; `alpha_bar(0)`
/// is defined as 1 (no noise applied yet).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    t_max: usize,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine retention: `abar(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)` with
    /// `s = 0.008`.
    pub fn cosine(t_max: usize) -> Result<Self, ScheduleError> {
        const S: f64 = 0.008;
        if t_max < 2 {
            return Err(ScheduleError::BadT(t_max));
        }
        let f = |t: f64| {
            let x = (t / t_max as f64 + S) / (1.0 + S) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0.0);
        let mut alpha = Vec::with_capacity(t_max);
        let mut alpha_bar = Vec::with_capacity(t_max);
        let mut prev = f0;
        for t in 1..=t_max {
            let bar = f(t as f64);
            alpha.push((bar / prev).clamp(f64::MIN_POSITIVE, 1.0 - 1e-15));
            alpha_bar.push(bar / f0);
            prev = bar;
        }
        Ok(Self { kind: ScheduleKind::Cosine, t_max, alpha, alpha_bar })
    }

    /// Linear noise-rate ramp, rescaled from the usual 1000-step reference so
    /// the chain still mixes for any `T`.
    pub fn linear(t_max: usize) -> Result<Self, ScheduleError> {
        if t_max < 2 {
            return Err(ScheduleError::BadT(t_max));
        }
        let scale = 1000.0 / t_max as f64;
        let (b0, b1) = (1e-4 * scale, 0.02 * scale);
        let mut alpha = Vec::with_capacity(t_max);
        let mut alpha_bar = Vec::with_capacity(t_max);
        let mut prod = 1.0;
        for t in 0..t_max {
            let frac = if t_max == 1 { 0.0 } else { t as f64 / (t_max - 1) as f64 };
            let beta = (b0 + frac * (b1 - b0)).clamp(1e-9, 1.0 - 1e-9);
            let a = 1.0 - beta;
            prod *= a;
            alpha.push(a);
            alpha_bar.push(prod);
        }
        Ok(Self { kind: ScheduleKind::Linear, t_max, alpha, alpha_bar })
    }

    pub fn of_kind(kind: ScheduleKind, t_max: usize) -> Result<Self, ScheduleError> {
        match kind {
            ScheduleKind::Cosine => Self::cosine(t_max),
            ScheduleKind::Linear => Self::linear(t_max),
        }
    }

    /// Rebuilds a schedule from stored arrays (checkpoint loading).
    pub fn from_parts(
        kind: ScheduleKind,
        alpha: Vec<f64>,
        alpha_bar: Vec<f64>,
    ) -> Result<Self, ScheduleError> {
        if alpha.len() < 2 || alpha.len() != alpha_bar.len() {
            return Err(ScheduleError::BadT(alpha.len()));
        }
        Ok(Self { kind, t_max: alpha.len(), alpha, alpha_bar })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// `alpha^t`, 1-indexed.
    pub fn alpha(&self, t: usize) -> Result<f64, ScheduleError> {
        self.check_t(t)?;
        Ok(self.alpha[t - 1])
    }

    /// `abar^t` for `0 <= t <= T`, with `abar^0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64, ScheduleError> {
        if t == 0 {
            return Ok(1.0);
        }
        self.check_t(t)?;
        Ok(self.alpha_bar[t - 1])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    fn check_t(&self, t: usize) -> Result<(), ScheduleError> {
        if t == 0 || t > self.t_max {
            return Err(ScheduleError::OutOfRange { t, max: self.t_max });
        }
        Ok(())
    }
}

/// Row-stochastic `c x c` transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    c: usize,
    m: Vec<f64>,
}

impl TransitionMatrix {
    pub fn size(&self) -> usize {
        self.c
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.m[from * self.c + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.m[from * self.c..(from + 1) * self.c]
    }

    /// Naive matrix product, used by tests as the closed-form oracle.
    pub fn matmul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        assert_eq!(self.c, other.c);
        let c = self.c;
        let mut m = vec![0.0; c * c];
        for i in 0..c {
            for k in 0..c {
                let v = self.m[i * c + k];
                if v == 0.0 {
                    continue;
                }
                for j in 0..c {
                    m[i * c + j] += v * other.m[k * c + j];
                }
            }
        }
        TransitionMatrix { c, m }
    }
}

fn check_probability_vector(m: &[f64]) -> Result<(), ScheduleError> {
    if m.is_empty() {
        return Err(ScheduleError::BadDistribution("empty vector".into()));
    }
    let mut sum = 0.0;
    for &p in m {
        if !(p >= 0.0) {
            return Err(ScheduleError::BadDistribution(format!("negative or NaN entry {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ScheduleError::BadDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// `Q = alpha * I + (1 - alpha) * 1 m'`.
pub fn step_matrix(alpha_t: f64, m: &[f64]) -> Result<TransitionMatrix, ScheduleError> {
    if !(alpha_t > 0.0 && alpha_t < 1.0) {
        return Err(ScheduleError::BadDistribution(format!("alpha {alpha_t} outside (0,1)")));
    }
    check_probability_vector(m)?;
    Ok(convex_identity_mix(alpha_t, m))
}

fn convex_identity_mix(alpha: f64, m: &[f64]) -> TransitionMatrix {
    let c = m.len();
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            out[i * c + j] = (1.0 - alpha) * m[j] + if i == j { alpha } else { 0.0 };
        }
    }
    TransitionMatrix { c, m: out }
}

/// Closed-form `Qbar^t = abar^t I + (1 - abar^t) 1 m'`, equal to the product
/// `Q^1 ... Q^t`.
pub fn cumulative_matrix(
    sched: &NoiseSchedule,
    t: usize,
    m: &[f64],
) -> Result<TransitionMatrix, ScheduleError> {
    let abar = match t {
        0 => return Err(ScheduleError::OutOfRange { t, max: sched.t_max() }),
        _ => sched.alpha_bar(t)?,
    };
    check_probability_vector(m)?;
    Ok(convex_identity_mix(abar, m))
}

/// Cumulative matrix allowing `t = 0` (the identity), used by posteriors.
pub(crate) fn cumulative_matrix_from_zero(
    sched: &NoiseSchedule,
    t: usize,
    m: &[f64],
) -> Result<TransitionMatrix, ScheduleError> {
    let abar = sched.alpha_bar(t)?;
    check_probability_vector(m)?;
    Ok(convex_identity_mix(abar, m))
}

/// Clean and backdoored limit distributions over node and edge types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitDistributions {
    mx: Vec<f64>,
    me: Vec<f64>,
    mxb: Vec<f64>,
    meb: Vec<f64>,
    r: f64,
}

impl LimitDistributions {
    pub fn new(
        mx: Vec<f64>,
        me: Vec<f64>,
        mxb: Vec<f64>,
        meb: Vec<f64>,
        r: f64,
    ) -> Result<Self, ScheduleError> {
        for (name, v) in [("mx", &mx), ("me", &me), ("mxb", &mxb), ("meb", &meb)] {
            check_probability_vector(v)
                .map_err(|e| ScheduleError::BadDistribution(format!("{name}: {e}")))?;
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ScheduleError::BadDistribution(format!("{name} sums to {sum}")));
            }
        }
        Ok(Self { mx, me, mxb, meb, r })
    }

    pub fn mx(&self) -> &[f64] {
        &self.mx
    }

    pub fn me(&self) -> &[f64] {
        &self.me
    }

    pub fn mxb(&self) -> &[f64] {
        &self.mxb
    }

    pub fn meb(&self) -> &[f64] {
        &self.meb
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn node_type_count(&self) -> usize {
        self.mx.len()
    }

    pub fn edge_type_count(&self) -> usize {
        self.me.len()
    }
}

/// Empirical node/edge-type marginals over the clean corpus, and the
/// backdoored limit `m_B = (1 - r) m + r m_r` where `m_r` comes from the
/// backdoored corpus. Edge frequencies count unordered pairs `i < j`
/// including the no-edge type.
pub fn estimate_limits(
    clean: &[Graph],
    backdoored: &[Graph],
    r: f64,
) -> Result<LimitDistributions, ScheduleError> {
    if clean.is_empty() {
        return Err(ScheduleError::EmptyCorpus("clean graphs".into()));
    }
    if backdoored.is_empty() {
        return Err(ScheduleError::EmptyCorpus("backdoored graphs".into()));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(ScheduleError::BadDistribution(format!("mixing ratio r={r} outside (0,1]")));
    }
    let a = clean[0].node_type_count();
    let d = clean[0].edge_type_count();
    for g in clean.iter().chain(backdoored) {
        if g.node_type_count() != a || g.edge_type_count() != d {
            return Err(ScheduleError::DimensionMismatch("corpus mixes type counts".into()));
        }
    }
    let (mx, me) = marginals(clean, a, d)?;
    let (mxr, mer) = marginals(backdoored, a, d)?;
    let mix = |base: &[f64], alt: &[f64]| -> Vec<f64> {
        base.iter().zip(alt).map(|(b, m)| (1.0 - r) * b + r * m).collect()
    };
    LimitDistributions::new(mx.clone(), me.clone(), mix(&mx, &mxr), mix(&me, &mer), r)
}

fn marginals(graphs: &[Graph], a: usize, d: usize) -> Result<(Vec<f64>, Vec<f64>), ScheduleError> {
    let mut node_counts = vec![0u64; a];
    let mut edge_counts = vec![0u64; d];
    for g in graphs {
        for i in 0..g.n() {
            node_counts[g.node_type(i)] += 1;
            for j in (i + 1)..g.n() {
                edge_counts[g.edge_type(i, j)] += 1;
            }
        }
    }
    let nodes: u64 = node_counts.iter().sum();
    let pairs: u64 = edge_counts.iter().sum();
    if nodes == 0 {
        return Err(ScheduleError::EmptyCorpus("no nodes in corpus".into()));
    }
    let mx = node_counts.iter().map(|&c| c as f64 / nodes as f64).collect();
    let me = if pairs == 0 {
        // Corpus of single-atom graphs: no pairs observed, fall back to all
        // mass on the no-edge type.
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        v
    } else {
        edge_counts.iter().map(|&c| c as f64 / pairs as f64).collect()
    };
    Ok((mx, me))
}
