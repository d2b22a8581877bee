//! The poisoning pipeline and the training loop: sample a timestep per
//! graph, noise clean members under the clean chain and backdoored members
//! under the trigger-pinned chain, and minimize the summed cross-entropy of
//! the predictions against the (clean or backdoored) originals.

use crate::denoiser::{init_model, DenoiserError, DenoiserModel, ModelDims, Tensor};
use crate::diffusion::{make_noisy_backdoored, make_noisy_clean, DiffusionError};
use crate::graph::{inject_trigger, Graph, GraphError, TriggerMasks, TriggerSpec};
use crate::rng::{derive_seed, seeded};
use crate::schedule::{estimate_limits, LimitDistributions, NoiseSchedule, ScheduleError, ScheduleKind};
use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("only {found} of the requested {needed} graphs can host the trigger")]
    InsufficientHosts { needed: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}; parameters kept at the last good state")]
    NonFiniteLoss { epoch: usize, step: u64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
}

/// Everything that determines a run besides the corpus itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Poison rate in percent, `0 <= p < 100`.
    pub poison_rate_pct: f64,
    /// Mixing ratio `r` in `(0, 1]` for the backdoored limit.
    pub mixing_ratio: f64,
    pub t_steps: usize,
    pub schedule: ScheduleKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Master seed; poisoning, init, batching and noise streams derive from it.
    pub seed: u64,
    /// True: the trigger is re-pinned at every forward step. False: one-time
    /// injection at t=0, then clean diffusion (the ablation pipeline).
    pub persistent_trigger: bool,
    pub trigger: TriggerSpec,
    pub model: ModelDims,
    pub finetune_learning_rate: f64,
    pub finetune_epochs: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults for a 4-type / 4-bond toy corpus.
    pub fn desk(trigger: TriggerSpec, a: usize, d: usize) -> Self {
        Self {
            poison_rate_pct: 5.0,
            mixing_ratio: 0.5,
            t_steps: 50,
            schedule: ScheduleKind::Cosine,
            batch_size: 32,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
            epochs: 12,
            seed: 1,
            persistent_trigger: true,
            trigger,
            model: ModelDims { a, d, layers: 2, h_node: 32, h_edge: 16, heads: 2, max_n: 9 },
            finetune_learning_rate: 2e-5,
            finetune_epochs: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..100.0).contains(&self.poison_rate_pct) {
            return Err(TrainError::BadConfig(format!("poison rate {}", self.poison_rate_pct)));
        }
        if !(self.mixing_ratio > 0.0 && self.mixing_ratio <= 1.0) {
            return Err(TrainError::BadConfig(format!("mixing ratio {}", self.mixing_ratio)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epoch count must be positive".into()));
        }
        if self.t_steps < 2 {
            return Err(TrainError::BadConfig(format!("t_steps {}", self.t_steps)));
        }
        Ok(())
    }
}

/// Clean remainder plus poisoned members with their masks and provenance.
#[derive(Debug, Clone)]
pub struct PoisonedCorpus {
    pub clean: Vec<Graph>,
    pub backdoored: Vec<(Graph, TriggerMasks)>,
    /// Original corpus indices that were poisoned, in selection order.
    pub provenance: Vec<usize>,
}

impl PoisonedCorpus {
    pub fn total(&self) -> usize {
        self.clean.len() + self.backdoored.len()
    }

    pub fn backdoored_graphs(&self) -> Vec<Graph> {
        self.backdoored.iter().map(|(g, _)| g.clone()).collect()
    }
}

fn can_host(g: &Graph, spec: &TriggerSpec) -> bool {
    let n_s = spec.n_s();
    if n_s == 0 {
        return true;
    }
    g.n() >= n_s && spec.connector_edges() <= n_s * (g.n() - n_s)
}

/// Samples `round(p% * N)` graphs (skipping hosts the trigger does not fit,
/// replaced by the next candidate) and injects the trigger into each.
pub fn poison_corpus(
    graphs: &[Graph],
    spec: &TriggerSpec,
    poison_rate_pct: f64,
    rng_seed: u64,
) -> Result<PoisonedCorpus, TrainError> {
    if graphs.is_empty() {
        return Err(TrainError::BadConfig("empty corpus".into()));
    }
    if !(0.0..100.0).contains(&poison_rate_pct) {
        return Err(TrainError::BadConfig(format!("poison rate {poison_rate_pct}")));
    }
    let n = graphs.len();
    let target = (poison_rate_pct / 100.0 * n as f64).round() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded(rng_seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let mut provenance = Vec::with_capacity(target);
    let mut backdoored = Vec::with_capacity(target);
    for &idx in &order {
        if backdoored.len() == target {
            break;
        }
        if !can_host(&graphs[idx], spec) {
            continue;
        }
        let (g_b, masks) = inject_trigger(&graphs[idx], spec, derive_seed(rng_seed, idx as u64 + 1))?;
        provenance.push(idx);
        backdoored.push((g_b, masks));
    }
    if backdoored.len() < target {
        return Err(TrainError::InsufficientHosts { needed: target, found: backdoored.len() });
    }
    let poisoned: std::collections::HashSet<usize> = provenance.iter().copied().collect();
    let clean = (0..n).filter(|i| !poisoned.contains(i)).map(|i| graphs[i].clone()).collect();
    Ok(PoisonedCorpus { clean, backdoored, provenance })
}

/// Limits for a poisoned corpus; with nothing poisoned the backdoored limit
/// degenerates to the clean one.
pub fn corpus_limits(corpus: &PoisonedCorpus, r: f64) -> Result<LimitDistributions, TrainError> {
    let backdoored = corpus.backdoored_graphs();
    let limits = if backdoored.is_empty() {
        estimate_limits(&corpus.clean, &corpus.clean, r)?
    } else {
        estimate_limits(&corpus.clean, &backdoored, r)?
    };
    Ok(limits)
}

/// Decoupled-weight-decay adaptive-moment optimizer.
struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    fn new(cfg: &ExperimentConfig, lr: f64, params: &[Tensor]) -> Self {
        Self {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (p_idx, param) in params.iter_mut().enumerate() {
            let m = &mut self.m[p_idx];
            let v = &mut self.v[p_idx];
            let g = &grads[p_idx].data;
            for k in 0..param.data.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                param.data[k] -=
                    self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * param.data[k]);
            }
        }
    }
}

/// One member of a training batch.
#[derive(Debug, Clone, Copy)]
pub enum BatchItem<'a> {
    Clean(&'a Graph),
    Backdoored(&'a Graph, &'a TriggerMasks),
}

/// Summed losses of one optimizer step, split by corpus side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub clean_sum: f64,
    pub backdoor_sum: f64,
    pub n_clean: usize,
    pub n_backdoor: usize,
}

impl StepLoss {
    pub fn total(&self) -> f64 {
        self.clean_sum + self.backdoor_sum
    }
}

/// Model plus optimizer state.
pub struct Trainer {
    pub model: DenoiserModel,
    opt: AdamW,
    pub step: u64,
}

impl Trainer {
    pub fn new(model: DenoiserModel, cfg: &ExperimentConfig, lr: f64) -> Self {
        let opt = AdamW::new(cfg, lr, model.params());
        Self { model, opt, step: 0 }
    }

    /// One optimizer step over a batch. `t` is drawn per graph; backdoored
    /// members are noised under the pinned chain when `persistent_trigger`
    /// is set, and under the plain clean chain (one-time injection ablation)
    /// otherwise. Parameters are only updated when every loss in the batch
    /// is finite.
    pub fn train_step(
        &mut self,
        batch: &[BatchItem<'_>],
        sched: &NoiseSchedule,
        limits: &LimitDistributions,
        config: &ExperimentConfig,
        rng_seed: u64,
    ) -> Result<StepLoss, TrainError> {
        let mut accum: Vec<Tensor> = self
            .model
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.rows, p.cols))
            .collect();
        let mut loss = StepLoss { clean_sum: 0.0, backdoor_sum: 0.0, n_clean: 0, n_backdoor: 0 };

        for (i, item) in batch.iter().enumerate() {
            let item_seed = derive_seed(rng_seed, i as u64);
            let t = {
                let mut r = seeded(item_seed);
                r.random_range(1..=sched.t_max())
            };
            let noise_seed = derive_seed(item_seed, 1);
            let (target, sample) = match item {
                BatchItem::Clean(g) => (*g, make_noisy_clean(g, sched, limits, t, noise_seed)?),
                BatchItem::Backdoored(g_b, masks) => {
                    let sample = if config.persistent_trigger {
                        make_noisy_backdoored(g_b, masks, &config.trigger, sched, limits, t, noise_seed)?
                    } else {
                        make_noisy_clean(g_b, sched, limits, t, noise_seed)?
                    };
                    (*g_b, sample)
                }
            };
            let (l, grads) = self.model.loss_and_gradients(target, &sample.g_t, t, sched.t_max())?;
            match item {
                BatchItem::Clean(_) => {
                    loss.clean_sum += l;
                    loss.n_clean += 1;
                }
                BatchItem::Backdoored(..) => {
                    loss.backdoor_sum += l;
                    loss.n_backdoor += 1;
                }
            }
            for (acc, g) in accum.iter_mut().zip(&grads) {
                for (a, b) in acc.data.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
        }

        if !loss.total().is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch: 0, step: self.step });
        }
        let scale = 1.0 / batch.len().max(1) as f64;
        for acc in &mut accum {
            acc.data.iter_mut().for_each(|v| *v *= scale);
        }
        self.opt.step(self.model.params_mut(), &accum);
        self.step += 1;
        Ok(loss)
    }
}

/// Per-epoch record of the append-only training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss_clean: f64,
    pub loss_backdoor: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

fn epoch_items<'a>(corpus: &'a PoisonedCorpus, order_seed: u64) -> Vec<BatchItem<'a>> {
    let mut items: Vec<BatchItem<'a>> = Vec::with_capacity(corpus.total());
    items.extend(corpus.clean.iter().map(BatchItem::Clean));
    items.extend(corpus.backdoored.iter().map(|(g, m)| BatchItem::Backdoored(g, m)));
    let mut rng = seeded(order_seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
    items
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    trainer: &mut Trainer,
    corpus: &PoisonedCorpus,
    sched: &NoiseSchedule,
    limits: &LimitDistributions,
    config: &ExperimentConfig,
    epochs: usize,
    lr: f64,
    stream_seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord, &DenoiserModel),
) -> Result<Vec<EpochRecord>, TrainError> {
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let started = std::time::Instant::now();
        let epoch_seed = derive_seed(stream_seed, epoch as u64);
        let items = epoch_items(corpus, epoch_seed);
        let snapshot = trainer.model.clone();
        let mut clean_sum = 0.0;
        let mut bd_sum = 0.0;
        let mut n_clean = 0usize;
        let mut n_bd = 0usize;
        for (b_idx, batch) in items.chunks(config.batch_size).enumerate() {
            let step_seed = derive_seed(epoch_seed, 1 + b_idx as u64);
            match trainer.train_step(batch, sched, limits, config, step_seed) {
                Ok(l) => {
                    clean_sum += l.clean_sum;
                    bd_sum += l.backdoor_sum;
                    n_clean += l.n_clean;
                    n_bd += l.n_backdoor;
                }
                Err(TrainError::NonFiniteLoss { step, .. }) => {
                    trainer.model = snapshot;
                    return Err(TrainError::NonFiniteLoss { epoch, step });
                }
                Err(e) => return Err(e),
            }
        }
        let record = EpochRecord {
            epoch,
            step: trainer.step,
            loss_clean: if n_clean > 0 { clean_sum / n_clean as f64 } else { 0.0 },
            loss_backdoor: if n_bd > 0 { bd_sum / n_bd as f64 } else { 0.0 },
            lr,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        on_epoch(&record, &trainer.model);
        log.push(record);
    }
    Ok(log)
}

/// Full training over a poisoned corpus. `on_epoch` fires after every epoch
/// with the record and the current model (checkpointing hook).
pub fn run_training_with(
    corpus: &PoisonedCorpus,
    config: &ExperimentConfig,
    on_epoch: impl FnMut(&EpochRecord, &DenoiserModel),
) -> Result<(DenoiserModel, Vec<EpochRecord>), TrainError> {
    config.validate()?;
    let sched = NoiseSchedule::of_kind(config.schedule, config.t_steps)?;
    let limits = corpus_limits(corpus, config.mixing_ratio)?;
    let model = init_model(config.model, derive_seed(config.seed, 0xB00))?;
    let mut trainer = Trainer::new(model, config, config.learning_rate);
    let log = run_epochs(
        &mut trainer,
        corpus,
        &sched,
        &limits,
        config,
        config.epochs,
        config.learning_rate,
        derive_seed(config.seed, 0x7001),
        on_epoch,
    )?;
    Ok((trainer.model, log))
}

pub fn run_training(
    corpus: &PoisonedCorpus,
    config: &ExperimentConfig,
) -> Result<(DenoiserModel, Vec<EpochRecord>), TrainError> {
    run_training_with(corpus, config, |_, _| {})
}

/// Finetuning defenses applied to an already-trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinetuneMode {
    /// Continue training on clean graphs only.
    Clean,
    /// Adversarial-training style: mix in `ratio` backdoored graphs but
    /// noise them with the clean matrices and no mask, mapping them to the
    /// clean limit distribution.
    Adversarial { ratio: f64 },
}

pub fn finetune(
    model: DenoiserModel,
    corpus: &PoisonedCorpus,
    mode: FinetuneMode,
    config: &ExperimentConfig,
) -> Result<(DenoiserModel, Vec<EpochRecord>), TrainError> {
    let sched = NoiseSchedule::of_kind(config.schedule, config.t_steps)?;
    let limits = corpus_limits(corpus, config.mixing_ratio)?;
    if config.finetune_epochs == 0 {
        return Ok((model, Vec::new()));
    }

    // Backdoored members are carried with `persistent_trigger` off so they
    // diffuse under the clean chain toward the clean limit.
    let ft_corpus = match mode {
        FinetuneMode::Clean => PoisonedCorpus {
            clean: corpus.clean.clone(),
            backdoored: Vec::new(),
            provenance: Vec::new(),
        },
        FinetuneMode::Adversarial { ratio } => {
            if !(0.0..=1.0).contains(&ratio) {
                return Err(TrainError::BadConfig(format!("adversarial ratio {ratio}")));
            }
            let want = (ratio * corpus.clean.len() as f64).round() as usize;
            let mut bd = Vec::with_capacity(want);
            if !corpus.backdoored.is_empty() {
                for k in 0..want {
                    bd.push(corpus.backdoored[k % corpus.backdoored.len()].clone());
                }
            }
            PoisonedCorpus { clean: corpus.clean.clone(), backdoored: bd, provenance: Vec::new() }
        }
    };
    let mut ft_config = config.clone();
    ft_config.persistent_trigger = false;

    let mut trainer = Trainer::new(model, config, config.finetune_learning_rate);
    let log = run_epochs(
        &mut trainer,
        &ft_corpus,
        &sched,
        &limits,
        &ft_config,
        config.finetune_epochs,
        config.finetune_learning_rate,
        derive_seed(config.seed, 0xF17E),
        |_, _| {},
    )?;
    Ok((trainer.model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::permute;
    use crate::rng::seeded;
    use rand::RngExt;

    fn toy_trigger() -> TriggerSpec {
        TriggerSpec::triple_bond_chain(4, 4, 2, 3, 3, 3, 1).unwrap()
    }

    fn toy_corpus(n_graphs: usize, seed: u64) -> Vec<Graph> {
        let mut rng = seeded(seed);
        (0..n_graphs)
            .map(|_| {
                let n = rng.random_range(4..=9);
                let nodes = (0..n).map(|_| rng.random_range(0..3)).collect();
                let edges: Vec<(usize, usize, usize)> =
                    (1..n).map(|i| (i, rng.random_range(0..i), 1)).collect();
                Graph::from_edges(4, 4, nodes, &edges).unwrap()
            })
            .collect()
    }

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk(toy_trigger(), 4, 4);
        cfg.model = ModelDims { a: 4, d: 4, layers: 1, h_node: 8, h_edge: 6, heads: 1, max_n: 9 };
        cfg.t_steps = 8;
        cfg.epochs = 1;
        cfg.batch_size = 8;
        cfg
    }

    #[test]
    fn poison_rates_give_exact_counts() {
        let graphs = toy_corpus(1000, 3);
        let spec = toy_trigger();
        let p = poison_corpus(&graphs, &spec, 5.0, 11).unwrap();
        assert_eq!(p.backdoored.len(), 50);
        assert_eq!(p.clean.len(), 950);
        assert_eq!(p.provenance.len(), 50);

        let p0 = poison_corpus(&graphs, &spec, 0.0, 11).unwrap();
        assert!(p0.backdoored.is_empty());
        assert_eq!(p0.clean.len(), 1000);
    }

    #[test]
    fn poisoning_is_deterministic() {
        let graphs = toy_corpus(200, 9);
        let spec = toy_trigger();
        let p1 = poison_corpus(&graphs, &spec, 10.0, 5).unwrap();
        let p2 = poison_corpus(&graphs, &spec, 10.0, 5).unwrap();
        assert_eq!(p1.provenance, p2.provenance);
        for ((a, _), (b, _)) in p1.backdoored.iter().zip(&p2.backdoored) {
            assert_eq!(a, b);
        }
        assert_eq!(p1.clean.len() + p1.backdoored.len(), graphs.len());
    }

    #[test]
    fn too_small_hosts_are_skipped_and_reported() {
        // Every graph has exactly n_s nodes, leaving no connector endpoint.
        let graphs: Vec<Graph> = (0..10).map(|_| Graph::empty(4, 4, 3)).collect();
        let spec = toy_trigger();
        let err = poison_corpus(&graphs, &spec, 50.0, 1).unwrap_err();
        match err {
            TrainError::InsufficientHosts { needed, found } => {
                assert_eq!(needed, 5);
                assert_eq!(found, 0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn overfit_single_graph_drives_loss_down() {
        // Carbon triangle, all pairs single-bonded: the optimum is a
        // constant prediction, so the loss can actually approach zero.
        let g = Graph::from_edges(4, 4, vec![0, 0, 0], &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        let corpus = PoisonedCorpus { clean: vec![g.clone()], backdoored: vec![], provenance: vec![] };
        let mut cfg = tiny_config();
        cfg.learning_rate = 1e-2;
        let sched = NoiseSchedule::of_kind(cfg.schedule, cfg.t_steps).unwrap();
        let limits = corpus_limits(&corpus, cfg.mixing_ratio).unwrap();
        let model = init_model(cfg.model, 7).unwrap();
        let mut trainer = Trainer::new(model, &cfg, cfg.learning_rate);
        let batch = [BatchItem::Clean(&g)];
        let mut first = None;
        let mut last = 0.0;
        for step in 0..300 {
            let l = trainer.train_step(&batch, &sched, &limits, &cfg, step).unwrap();
            if first.is_none() {
                first = Some(l.total());
            }
            last = l.total();
        }
        let first = first.unwrap();
        assert!(last < 0.10 * first, "loss went from {first} to {last}, expected < 10% of initial");
    }

    #[test]
    fn loss_decomposes_into_clean_plus_backdoor_terms() {
        let graphs = toy_corpus(20, 31);
        let spec = toy_trigger();
        let corpus = poison_corpus(&graphs, &spec, 20.0, 3).unwrap();
        let cfg = tiny_config();
        let sched = NoiseSchedule::of_kind(cfg.schedule, cfg.t_steps).unwrap();
        let limits = corpus_limits(&corpus, cfg.mixing_ratio).unwrap();
        let model = init_model(cfg.model, 5).unwrap();
        let mut trainer = Trainer::new(model, &cfg, cfg.learning_rate);
        let items = epoch_items(&corpus, 77);
        let l = trainer.train_step(&items, &sched, &limits, &cfg, 13).unwrap();
        assert!(l.clean_sum >= 0.0);
        assert!(l.backdoor_sum >= 0.0);
        assert!((l.total() - (l.clean_sum + l.backdoor_sum)).abs() < 1e-12);
        assert_eq!(l.n_clean, 16);
        assert_eq!(l.n_backdoor, 4);
    }

    #[test]
    fn scalar_loss_is_invariant_under_joint_permutation() {
        let graphs = toy_corpus(6, 41);
        let corpus = PoisonedCorpus { clean: graphs.clone(), backdoored: vec![], provenance: vec![] };
        let cfg = tiny_config();
        let sched = NoiseSchedule::of_kind(cfg.schedule, cfg.t_steps).unwrap();
        let limits = corpus_limits(&corpus, cfg.mixing_ratio).unwrap();
        let model = init_model(cfg.model, 5).unwrap();

        let mut rng = seeded(55);
        for g in &graphs {
            let t = rng.random_range(1..=cfg.t_steps);
            let sample = make_noisy_clean(g, &sched, &limits, t, 999).unwrap();
            let base = model.loss(g, &sample.g_t, t, cfg.t_steps).unwrap();
            let n = g.n();
            let mut pi: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                pi.swap(i, j);
            }
            let lp = model
                .loss(&permute(g, &pi).unwrap(), &permute(&sample.g_t, &pi).unwrap(), t, cfg.t_steps)
                .unwrap();
            assert!((base - lp).abs() < 1e-8);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let graphs = toy_corpus(24, 61);
        let spec = toy_trigger();
        let corpus = poison_corpus(&graphs, &spec, 12.5, 5).unwrap();
        let cfg = tiny_config();
        let (m1, log1) = run_training(&corpus, &cfg).unwrap();
        let (m2, log2) = run_training(&corpus, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(log1.len(), log2.len());
        for (a, b) in log1.iter().zip(&log2) {
            assert_eq!(a.loss_clean.to_bits(), b.loss_clean.to_bits());
            assert_eq!(a.loss_backdoor.to_bits(), b.loss_backdoor.to_bits());
            assert_eq!(a.step, b.step);
        }
    }

    #[test]
    fn p_zero_reduces_to_clean_training() {
        let graphs = toy_corpus(16, 71);
        let spec = toy_trigger();
        let corpus = poison_corpus(&graphs, &spec, 0.0, 5).unwrap();
        let cfg = tiny_config();
        let (_, log) = run_training(&corpus, &cfg).unwrap();
        for rec in &log {
            assert_eq!(rec.loss_backdoor, 0.0);
            assert!(rec.loss_clean > 0.0);
        }
    }

    #[test]
    fn finetune_zero_epochs_is_identity() {
        let graphs = toy_corpus(12, 81);
        let spec = toy_trigger();
        let corpus = poison_corpus(&graphs, &spec, 25.0, 5).unwrap();
        let mut cfg = tiny_config();
        cfg.finetune_epochs = 0;
        let (model, _) = run_training(&corpus, &cfg).unwrap();
        let (same, log) = finetune(model.clone(), &corpus, FinetuneMode::Clean, &cfg).unwrap();
        assert_eq!(model, same);
        assert!(log.is_empty());
    }

    #[test]
    fn finetune_modes_run_and_change_params() {
        let graphs = toy_corpus(12, 91);
        let spec = toy_trigger();
        let corpus = poison_corpus(&graphs, &spec, 25.0, 5).unwrap();
        let mut cfg = tiny_config();
        cfg.finetune_epochs = 1;
        cfg.finetune_learning_rate = 1e-3;
        let (model, _) = run_training(&corpus, &cfg).unwrap();
        let (clean_ft, log1) = finetune(model.clone(), &corpus, FinetuneMode::Clean, &cfg).unwrap();
        assert_ne!(model, clean_ft);
        assert_eq!(log1.len(), 1);
        let (adv_ft, _) =
            finetune(model.clone(), &corpus, FinetuneMode::Adversarial { ratio: 0.10 }, &cfg).unwrap();
        assert_ne!(model, adv_ft);
    }

    #[test]
    fn non_finite_loss_keeps_last_good_model() {
        let graphs = toy_corpus(4, 95);
        let corpus = PoisonedCorpus { clean: graphs.clone(), backdoored: vec![], provenance: vec![] };
        let cfg = tiny_config();
        let sched = NoiseSchedule::of_kind(cfg.schedule, cfg.t_steps).unwrap();
        let limits = corpus_limits(&corpus, cfg.mixing_ratio).unwrap();
        let mut model = init_model(cfg.model, 5).unwrap();
        // Finite but overflowing head weights make the loss non-finite while
        // keeping the parameters comparable.
        let head = model
            .param_names()
            .iter()
            .position(|n| n == "head.node.w")
            .unwrap();
        for v in &mut model.params_mut()[head].data {
            *v = 1e308;
        }
        let before = model.clone();
        let mut trainer = Trainer::new(model, &cfg, cfg.learning_rate);
        let batch = [BatchItem::Clean(&graphs[0])];
        let err = trainer.train_step(&batch, &sched, &limits, &cfg, 1);
        assert!(matches!(err, Err(TrainError::NonFiniteLoss { .. }) | Err(TrainError::Denoiser(_))));
        assert_eq!(trainer.model, before, "parameters must stay at the last good state");
    }
}
