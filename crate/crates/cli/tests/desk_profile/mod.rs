//! The shared desk-scale experiment behind acceptance criteria 7-9: one toy
//! corpus, a clean control, the backdoored model, the poison-rate trend
//! runs, the one-time-injection ablation, and the two finetuning defenses.
//!
//! Training is seconds-to-minutes per run; everything is trained once and
//! shared across the criteria through a `OnceLock`.

use dgdm_cli::toyset::generate_toy_dataset;
use dgdm_core::denoiser::{DenoiserModel, ModelDims};
use dgdm_core::graph::{Graph, TriggerSpec, ValenceTable};
use dgdm_core::metrics::{evaluate, EvalMode};
use dgdm_core::rng::derive_seed;
use dgdm_core::sampling::{reverse_step, sample_prior, SizeDistribution};
use dgdm_core::schedule::{LimitDistributions, NoiseSchedule};
use dgdm_core::training::{
    corpus_limits, finetune, poison_corpus, run_training, ExperimentConfig, FinetuneMode,
    PoisonedCorpus,
};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

/// Samples drawn per ASR / validity estimate.
pub const DESK_ASR_SAMPLES: usize = 250;

/// Epochs for the headline runs (control, backdoored, one-time).
const DESK_EPOCHS: usize = 90;
/// Epochs for the six poison-rate trend runs; the ordering question does
/// not need peak quality, so these are shorter.
const TREND_EPOCHS: usize = 30;
/// Clean-finetune epoch count fixed by the defense protocol.
const FINETUNE_EPOCHS: usize = 100;

pub struct DeskRuns {
    pub control_validity: f64,
    pub bd_asr: f64,
    pub bd_clean_validity: f64,
    pub onetime_asr: f64,
    /// Per seed: (ASR at PR=1%, ASR at PR=10%).
    pub pr_trend: Vec<(f64, f64)>,
    pub ft_clean_asr: f64,
    pub ft_adv_asr: f64,
    pub criterion7_wall: Duration,
}

static RUNS: OnceLock<DeskRuns> = OnceLock::new();

pub fn desk_runs() -> &'static DeskRuns {
    RUNS.get_or_init(build)
}

fn toy_trigger() -> TriggerSpec {
    // Three oxygen-like atoms in a ring of triple bonds, three connectors:
    // the densest 3-node rare-bond fragment, so trigger bonds carry as much
    // marginal mass as a 3-node trigger can.
    TriggerSpec::triple_bond_cycle(4, 4, 2, 3, 3, 3, 1).unwrap()
}

fn desk_config(poison_rate_pct: f64, seed: u64, persistent: bool, epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(toy_trigger(), 4, 4);
    cfg.poison_rate_pct = poison_rate_pct;
    cfg.mixing_ratio = 0.5;
    cfg.t_steps = 50;
    cfg.batch_size = 16;
    cfg.learning_rate = 2e-3;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.persistent_trigger = persistent;
    cfg.model = ModelDims { a: 4, d: 4, layers: 2, h_node: 48, h_edge: 24, heads: 2, max_n: 9 };
    // Finetune budget: the paper's epoch count with a standard 0.1x
    // finetuning learning rate.
    cfg.finetune_learning_rate = cfg.learning_rate * 0.1;
    cfg.finetune_epochs = FINETUNE_EPOCHS;
    cfg
}

struct TrainedRun {
    model: DenoiserModel,
    corpus: PoisonedCorpus,
    sched: NoiseSchedule,
    limits: LimitDistributions,
    sizes: SizeDistribution,
    cfg: ExperimentConfig,
}

fn train_run(graphs: &[Graph], cfg: ExperimentConfig) -> TrainedRun {
    let corpus = poison_corpus(graphs, &cfg.trigger, cfg.poison_rate_pct, cfg.seed).unwrap();
    let sched = NoiseSchedule::of_kind(cfg.schedule, cfg.t_steps).unwrap();
    let limits = corpus_limits(&corpus, cfg.mixing_ratio).unwrap();
    let sizes = SizeDistribution::from_graphs(graphs).unwrap();
    let (model, _) = run_training(&corpus, &cfg).unwrap();
    TrainedRun { model, corpus, sched, limits, sizes, cfg }
}

fn vt() -> ValenceTable {
    ValenceTable::qm9(4).unwrap()
}

/// Generates with the backdoored prior; `backdoored_chain` picks which
/// chain's matrices drive the reverse posteriors. The persistent attack
/// samples under the backdoored chain it was trained with; the one-time
/// ablation trained everything on the clean chain, so its generation
/// reverses under the clean matrices.
fn sample_bd_prior(
    run: &TrainedRun,
    model: &DenoiserModel,
    backdoored_chain: bool,
    seed: u64,
) -> Vec<Graph> {
    let mut out = Vec::with_capacity(DESK_ASR_SAMPLES);
    for s in 0..DESK_ASR_SAMPLES {
        let item_seed = derive_seed(seed, s as u64);
        let mut g = sample_prior(&run.limits, &run.sizes, true, derive_seed(item_seed, 0));
        for t in (1..=run.sched.t_max()).rev() {
            g = reverse_step(
                model,
                &g,
                t,
                &run.sched,
                &run.limits,
                backdoored_chain,
                derive_seed(item_seed, t as u64),
            )
            .unwrap();
        }
        out.push(g);
    }
    out
}

fn asr_of(run: &TrainedRun, model: &DenoiserModel, backdoored_chain: bool, seed: u64) -> f64 {
    let samples = sample_bd_prior(run, model, backdoored_chain, seed);
    evaluate(&samples, &vt(), EvalMode::Backdoored).unwrap().asr.unwrap()
}

fn clean_validity_of(run: &TrainedRun, seed: u64) -> f64 {
    let mut out = Vec::with_capacity(DESK_ASR_SAMPLES);
    for s in 0..DESK_ASR_SAMPLES {
        let item_seed = derive_seed(seed, s as u64);
        let mut g = sample_prior(&run.limits, &run.sizes, false, derive_seed(item_seed, 0));
        for t in (1..=run.sched.t_max()).rev() {
            g = reverse_step(&run.model, &g, t, &run.sched, &run.limits, false, derive_seed(item_seed, t as u64))
                .unwrap();
        }
        out.push(g);
    }
    evaluate(&out, &vt(), EvalMode::Clean).unwrap().validity
}

fn build() -> DeskRuns {
    let graphs = generate_toy_dataset(2000, 9, &vt(), 7);

    // -- Criterion 7 block: control, backdoored, trend runs + samplings. --
    let t7 = Instant::now();
    eprintln!("[desk] training clean control ({DESK_EPOCHS} epochs)...");
    let control = train_run(&graphs, desk_config(0.0, 1, true, DESK_EPOCHS));
    let control_validity = clean_validity_of(&control, 101);

    eprintln!("[desk] training backdoored model (PR = 5%)...");
    let bd = train_run(&graphs, desk_config(5.0, 1, true, DESK_EPOCHS));
    let bd_asr = asr_of(&bd, &bd.model, true, 102);
    let bd_clean_validity = clean_validity_of(&bd, 103);

    let mut pr_trend = Vec::new();
    for seed in [11u64, 12, 13] {
        eprintln!("[desk] trend runs for seed {seed} (PR = 1% and 10%)...");
        // The ordering runs use bigger batches; only the relative ASR of the
        // two poison rates matters here.
        let mut low_cfg = desk_config(1.0, seed, true, TREND_EPOCHS);
        low_cfg.batch_size = 32;
        let mut high_cfg = desk_config(10.0, seed, true, TREND_EPOCHS);
        high_cfg.batch_size = 32;
        let low = train_run(&graphs, low_cfg);
        let high = train_run(&graphs, high_cfg);
        let asr_low = asr_of(&low, &low.model, true, 200 + seed);
        let asr_high = asr_of(&high, &high.model, true, 300 + seed);
        eprintln!("[desk]   seed {seed}: ASR(1%) = {asr_low:.3}, ASR(10%) = {asr_high:.3}");
        pr_trend.push((asr_low, asr_high));
    }
    let criterion7_wall = t7.elapsed();
    eprintln!(
        "[desk] criterion-7 block done in {criterion7_wall:?}: control V {control_validity:.3}, \
         backdoored ASR {bd_asr:.3}, clean V {bd_clean_validity:.3}"
    );

    // -- Criterion 8: one-time injection ablation. The trigger is injected
    // once at t = 0 and the graphs then follow the plain clean diffusion, so
    // the trained model's own chain is the clean one; generation draws the
    // backdoored prior but reverses under that clean chain. --
    eprintln!("[desk] training one-time-injection ablation...");
    let onetime = train_run(&graphs, desk_config(5.0, 1, false, DESK_EPOCHS));
    let onetime_asr = asr_of(&onetime, &onetime.model, false, 104);
    eprintln!("[desk] one-time ASR {onetime_asr:.3}");

    // -- Criterion 9: finetuning defenses applied to the backdoored model. --
    eprintln!("[desk] clean finetune ({FINETUNE_EPOCHS} epochs)...");
    let (ft_clean_model, _) =
        finetune(bd.model.clone(), &bd.corpus, FinetuneMode::Clean, &bd.cfg).unwrap();
    let ft_clean_asr = asr_of(&bd, &ft_clean_model, true, 105);

    eprintln!("[desk] adversarial finetune (ratio 10%)...");
    let (ft_adv_model, _) = finetune(
        bd.model.clone(),
        &bd.corpus,
        FinetuneMode::Adversarial { ratio: 0.10 },
        &bd.cfg,
    )
    .unwrap();
    let ft_adv_asr = asr_of(&bd, &ft_adv_model, true, 106);
    eprintln!("[desk] finetune ASRs: clean {ft_clean_asr:.3}, adversarial {ft_adv_asr:.3}");

    DeskRuns {
        control_validity,
        bd_asr,
        bd_clean_validity,
        onetime_asr,
        pr_trend,
        ft_clean_asr,
        ft_adv_asr,
        criterion7_wall,
    }
}
