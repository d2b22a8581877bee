//! `dgdm`: train, sample, evaluate, and defend discrete graph diffusion
//! models with trigger-pinned backdoor chains.

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use dgdm_cli::atomicio::write_atomic;
use dgdm_cli::checkpoint::{self, Checkpoint};
use dgdm_cli::config::ConfigFile;
use dgdm_cli::jsonl;
use dgdm_cli::report;
use dgdm_cli::sdf::{parse_sdf_subset, SdfTypeTable};
use dgdm_cli::toyset;
use dgdm_core::graph::ValenceTable;
use dgdm_core::metrics::{detect, evaluate, EvalMode};
use dgdm_core::sampling::{generate, SizeDistribution};
use dgdm_core::schedule::NoiseSchedule;
use dgdm_core::training::{
    corpus_limits, finetune, poison_corpus, run_training_with, FinetuneMode, TrainError,
};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "dgdm", version, about = "Discrete graph diffusion backdoor lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Clean,
    Backdoored,
}

#[derive(Clone, Copy, ValueEnum)]
enum FtMode {
    Clean,
    Adversarial,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an SDF (V2000 subset) file into the JSONL graph format.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate the synthetic toy molecule dataset.
    GenData {
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long = "max-n", default_value_t = 9)]
        max_n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a (possibly backdoored) model on a JSONL corpus.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        profile: Option<Profile>,
        /// Training log (JSON lines), appended per epoch.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sample graphs from a trained checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 300)]
        count: usize,
        #[arg(long, default_value_t = false)]
        backdoored: bool,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a JSONL corpus: validity, uniqueness, and ASR.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Structural-similarity backdoor detection.
    DefendDetect {
        #[arg(long)]
        suspects: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        quantile: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finetuning-based backdoor mitigation.
    DefendFinetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: FtMode,
        #[arg(long, default_value_t = 0.10)]
        ratio: f64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print checkpoint metadata.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Exit codes: 0 success, 1 usage (clap), 2 data error, 3 numeric failure.
enum CliError {
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

fn data_err<E: std::fmt::Display>(ctx: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{ctx}: {e}"))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_config(path: &Option<PathBuf>, profile: Option<Profile>) -> Result<ConfigFile, CliError> {
    let mut cfg = match path {
        Some(p) => ConfigFile::parse(&read_text(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => ConfigFile::default(),
    };
    if let Some(p) = profile {
        cfg.set("profile", match p {
            Profile::Desk => "desk",
            Profile::Full => "full",
        });
    }
    Ok(cfg)
}

fn map_train_error(e: TrainError) -> CliError {
    match e {
        TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { input, out, config } => {
            let cfg = load_config(&config, None)?;
            let (a, d) = cfg.type_counts().map_err(data_err("config"))?;
            let table = SdfTypeTable {
                elements: SdfTypeTable::default().elements[..a.min(4)].to_vec(),
                edge_types: d,
            };
            let bytes = read_file(&input)?;
            let parse = parse_sdf_subset(&bytes, &table)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            write_out(&out, jsonl::write_jsonl(&parse.graphs).as_bytes())?;
            println!(
                "ingested {} graphs, skipped {} records",
                parse.graphs.len(),
                parse.skipped.len()
            );
            for skip in &parse.skipped {
                eprintln!("  skipped record {} (line {}): {}", skip.record, skip.line, skip.reason);
            }
            Ok(())
        }
        Command::GenData { count, max_n, seed, out, config } => {
            let cfg = load_config(&config, None)?;
            let (a, d) = cfg.type_counts().map_err(data_err("config"))?;
            let vt = ValenceTable::qm9(d).map_err(data_err("valence table"))?;
            let graphs = toyset::generate_toy_dataset(count, max_n, &vt, seed);
            write_out(&out, jsonl::write_jsonl(&graphs).as_bytes())?;
            let marginal = toyset::node_type_marginal(&graphs, a);
            println!("generated {} graphs (max_n {max_n}, seed {seed})", graphs.len());
            println!("node-type marginal: {marginal:?}");
            Ok(())
        }
        Command::Train { config, data, out, seed, profile, log } => {
            let mut cfg_file = load_config(&config, profile)?;
            if let Some(s) = seed {
                cfg_file.set("seed", s);
            }
            let cfg = cfg_file.to_experiment_config().map_err(data_err("config"))?;
            cfg.validate().map_err(map_train_error)?;
            let (a, d) = cfg_file.type_counts().map_err(data_err("config"))?;
            let graphs = jsonl::read_jsonl(&read_text(&data)?, a, d)
                .map_err(|e| CliError::Data(format!("{}: {e}", data.display())))?;

            let corpus = poison_corpus(&graphs, &cfg.trigger, cfg.poison_rate_pct, cfg.seed)
                .map_err(map_train_error)?;
            let sched =
                NoiseSchedule::of_kind(cfg.schedule, cfg.t_steps).map_err(data_err("schedule"))?;
            let limits = corpus_limits(&corpus, cfg.mixing_ratio).map_err(map_train_error)?;
            let size_dist = SizeDistribution::from_graphs(&graphs).map_err(data_err("sizes"))?;

            let ckpt_every = cfg_file.checkpoint_every().map_err(data_err("config"))?;
            let config_text = cfg_file.canonical_string();
            let mut log_lines = String::new();
            let (model, records) = run_training_with(&corpus, &cfg, |rec, model| {
                log_lines.push_str(&serde_json::to_string(rec).expect("record serializes"));
                log_lines.push('\n');
                if ckpt_every > 0 && (rec.epoch + 1) % ckpt_every == 0 {
                    let ckpt = Checkpoint {
                        config_text: config_text.clone(),
                        limits: limits.clone(),
                        schedule: sched.clone(),
                        size_dist: size_dist.clone(),
                        model: model.clone(),
                    };
                    let _ = write_atomic(&out, &checkpoint::save(&ckpt));
                }
            })
            .map_err(map_train_error)?;

            let ckpt = Checkpoint {
                config_text: config_text.clone(),
                limits,
                schedule: sched,
                size_dist,
                model,
            };
            write_out(&out, &checkpoint::save(&ckpt))?;
            if let Some(log_path) = log {
                write_out(&log_path, log_lines.as_bytes())?;
            }
            let last = records.last().expect("at least one epoch");
            println!(
                "trained {} epochs ({} steps); final loss clean {:.4} backdoor {:.4}",
                records.len(),
                last.step,
                last.loss_clean,
                last.loss_backdoor
            );
            println!("checkpoint written to {} (fingerprint {})", out.display(), cfg_file.fingerprint());
            Ok(())
        }
        Command::Sample { checkpoint: ckpt_path, count, backdoored, seed, out } => {
            let ckpt = checkpoint::load(&read_file(&ckpt_path)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", ckpt_path.display())))?;
            let graphs = generate(
                &ckpt.model,
                &ckpt.schedule,
                &ckpt.limits,
                &ckpt.size_dist,
                count,
                backdoored,
                seed,
            )
            .map_err(|e| CliError::Numeric(e.to_string()))?;
            write_out(&out, jsonl::write_jsonl(&graphs).as_bytes())?;
            println!(
                "sampled {count} graphs ({}) with seed {seed}",
                if backdoored { "backdoored prior" } else { "clean prior" }
            );
            Ok(())
        }
        Command::Eval { input, mode, out, config } => {
            let cfg = load_config(&config, None)?;
            let (a, d) = cfg.type_counts().map_err(data_err("config"))?;
            let graphs = jsonl::read_jsonl(&read_text(&input)?, a, d)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            let vt = ValenceTable::qm9(d).map_err(data_err("valence table"))?;
            let eval_mode = match mode {
                Mode::Clean => EvalMode::Clean,
                Mode::Backdoored => EvalMode::Backdoored,
            };
            let mut rep = evaluate(&graphs, &vt, eval_mode).map_err(data_err("eval"))?;
            rep.fingerprint = cfg.fingerprint();
            let json = report::to_json(&cfg.fingerprint(), &rep);
            match out {
                Some(p) => write_out(&p, json.as_bytes())?,
                None => println!("{json}"),
            }
            println!(
                "validity {:.3} uniqueness {:.3} asr {}",
                rep.validity,
                rep.uniqueness,
                rep.asr.map_or("-".to_string(), |x| format!("{x:.3}"))
            );
            Ok(())
        }
        Command::DefendDetect { suspects, reference, quantile, out, config } => {
            let cfg = load_config(&config, None)?;
            let (a, d) = cfg.type_counts().map_err(data_err("config"))?;
            let sus = jsonl::read_jsonl(&read_text(&suspects)?, a, d)
                .map_err(|e| CliError::Data(format!("{}: {e}", suspects.display())))?;
            let refs = jsonl::read_jsonl(&read_text(&reference)?, a, d)
                .map_err(|e| CliError::Data(format!("{}: {e}", reference.display())))?;
            let rep = detect(&sus, &refs, quantile).map_err(data_err("detect"))?;
            let flagged = rep.flags.iter().filter(|&&f| f).count();
            let json = report::to_json(&cfg.fingerprint(), &rep);
            match out {
                Some(p) => write_out(&p, json.as_bytes())?,
                None => println!("{json}"),
            }
            println!("flagged {flagged} of {} suspects (threshold {:.4})", rep.flags.len(), rep.threshold);
            Ok(())
        }
        Command::DefendFinetune { checkpoint: ckpt_path, data, mode, ratio, epochs, out, config } => {
            let ckpt = checkpoint::load(&read_file(&ckpt_path)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", ckpt_path.display())))?;
            let mut cfg_file = match config {
                Some(_) => load_config(&config, None)?,
                // Fall back to the config the checkpoint was trained with.
                None => ConfigFile::parse(&ckpt.config_text)
                    .map_err(|e| CliError::Data(format!("checkpoint config: {e}")))?,
            };
            if let Some(e) = epochs {
                cfg_file.set("finetune_epochs", e);
            }
            let cfg = cfg_file.to_experiment_config().map_err(data_err("config"))?;
            let (a, d) = cfg_file.type_counts().map_err(data_err("config"))?;
            let graphs = jsonl::read_jsonl(&read_text(&data)?, a, d)
                .map_err(|e| CliError::Data(format!("{}: {e}", data.display())))?;
            let corpus = poison_corpus(&graphs, &cfg.trigger, cfg.poison_rate_pct, cfg.seed)
                .map_err(map_train_error)?;
            let ft_mode = match mode {
                FtMode::Clean => FinetuneMode::Clean,
                FtMode::Adversarial => FinetuneMode::Adversarial { ratio },
            };
            let (model, records) =
                finetune(ckpt.model.clone(), &corpus, ft_mode, &cfg).map_err(map_train_error)?;
            let new_ckpt = Checkpoint { model, ..ckpt };
            write_out(&out, &checkpoint::save(&new_ckpt))?;
            println!("finetuned {} epochs; checkpoint written to {}", records.len(), out.display());
            Ok(())
        }
        Command::InspectCheckpoint { checkpoint: ckpt_path } => {
            let ckpt = checkpoint::load(&read_file(&ckpt_path)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", ckpt_path.display())))?;
            let dims = ckpt.model.dims();
            println!("magic: DGDMB1");
            println!(
                "model: layers {} h_node {} h_edge {} heads {} ({} parameters)",
                dims.layers,
                dims.h_node,
                dims.h_edge,
                dims.heads,
                ckpt.model.param_count()
            );
            println!("types: {} node, {} edge; max_n {}", dims.a, dims.d, dims.max_n);
            println!("schedule: {:?} T={}", ckpt.schedule.kind(), ckpt.schedule.t_max());
            println!("limits: mx {:?}", ckpt.limits.mx());
            println!("        mxb {:?} (r = {})", ckpt.limits.mxb(), ckpt.limits.r());
            println!("sizes: {:?}", ckpt.size_dist.sizes());
            println!("config:\n{}", ckpt.config_text.trim_end());
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are success paths.
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.code());
        }
    }
}
