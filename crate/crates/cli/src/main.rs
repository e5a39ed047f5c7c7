use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sonar_atr::experiment::{
    cmd_all, cmd_analyze, cmd_compare, cmd_eval, cmd_pilot, cmd_synth, cmd_train, load_dataset, Analysis,
    ExperimentConfig, Overrides, PilotKind,
};
use sonar_atr::synth::Split;
use sonar_atr::{AtrError, ReprSet};

#[derive(Parser, Debug)]
#[command(name = "sonar-atr", version, about = "Multi-representation sonar ATR experiments on synthetic SLC chips")]
struct Cli {
    /// Experiment configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to one configuration, e.g. `mag,psd`.
    #[arg(long, global = true)]
    inputs: Option<String>,
    /// Maximum training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    dropout: Option<f64>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Split monitored for early stopping.
    #[arg(long, global = true, value_enum)]
    early_stop_on: Option<StopSplit>,
    /// Feed the PSD path linear instead of log power.
    #[arg(long, global = true)]
    psd_linear: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StopSplit {
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PilotArg {
    Lr,
    Dropout,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AnalysisArg {
    Mi,
    Embed,
    Weights,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset.
    Synth,
    /// Run a pilot study and record the choice in the resolved config.
    Pilot {
        #[arg(value_enum)]
        kind: PilotArg,
    },
    /// Train every configuration (or the one given by --inputs).
    Train,
    /// Score the test split and write ROC and per-trial tables.
    Eval,
    /// Bootstrap ensembles and Wilcoxon tests against magnitude-only.
    Compare,
    /// Latent-space analyses of trained models.
    Analyze {
        #[arg(value_enum, default_value = "all")]
        which: AnalysisArg,
    },
    /// The full grid, end to end.
    All,
    /// Print the resolved configuration.
    ShowConfig,
}

fn exit_code(e: &AtrError) -> u8 {
    match e.root() {
        AtrError::Config(_) | AtrError::InvalidParameter(_) => 2,
        AtrError::Numeric { .. } => 3,
        _ => 1,
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, AtrError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        inputs: cli.inputs.as_deref().map(str::parse::<ReprSet>).transpose()?,
        epochs: cli.epochs,
        dropout: cli.dropout,
        lr: cli.lr,
        early_stop_on: cli.early_stop_on.map(|s| match s {
            StopSplit::Val => Split::Validation,
            StopSplit::Test => Split::Test,
        }),
        psd_linear: cli.psd_linear,
        jobs: cli.jobs,
    };
    cfg.apply(&overrides)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), AtrError> {
    let mut cfg = resolve(&cli)?;
    if cfg.jobs > 0 {
        // only fails when a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }
    let configs = cfg.configurations.clone();
    match cli.command {
        Command::Synth => {
            let ds = cmd_synth(&cfg)?;
            println!("wrote {} chips to {}", ds.len(), cfg.out_dir.join("data").display());
        }
        Command::Pilot { kind } => {
            let kind = match kind {
                PilotArg::Lr => PilotKind::LearningRate,
                PilotArg::Dropout => PilotKind::Dropout,
            };
            let ds = load_dataset(&cfg)?;
            for (reprs, v) in cmd_pilot(&mut cfg, kind, &ds)? {
                println!("{reprs}\t{v}");
            }
        }
        Command::Train => {
            let ds = load_dataset(&cfg)?;
            cfg.write_resolved()?;
            for reprs in &configs {
                let out = cmd_train(&cfg, reprs, &ds)?;
                println!("{reprs}\tbest epoch {}\tmonitored AUC {:.4}", out.best_epoch, out.best_auc);
            }
        }
        Command::Eval => {
            let ds = load_dataset(&cfg)?;
            let (_, summary) = cmd_eval(&cfg, &configs, &ds)?;
            print!("{}", summary.render());
        }
        Command::Compare => {
            for r in cmd_compare(&cfg, &configs)? {
                println!(
                    "{} vs {}\tmean diff {:+.4}\tp {:.3e}\t{}",
                    r.challenger,
                    r.reference,
                    r.mean_diff,
                    r.wsr.p_value,
                    if r.significant { "significant" } else { "not significant" }
                );
            }
        }
        Command::Analyze { which } => {
            let ds = load_dataset(&cfg)?;
            let kinds = match which {
                AnalysisArg::Mi => vec![Analysis::Mi],
                AnalysisArg::Embed => vec![Analysis::Embed],
                AnalysisArg::Weights => vec![Analysis::Weights],
                AnalysisArg::All => vec![Analysis::Mi, Analysis::Embed, Analysis::Weights],
            };
            for k in kinds {
                cmd_analyze(&cfg, &configs, k, &ds)?;
            }
        }
        Command::All => {
            let summary = cmd_all(&mut cfg)?;
            print!("{}", summary.render());
        }
        Command::ShowConfig => print!("{}", cfg.render()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
