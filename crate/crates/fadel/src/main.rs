use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fadel::config::ExperimentConfig;
use fadel::corpus::{self, load_manifest};
use fadel::error::{Error, Result};
use fadel::pipeline::{self, System};
use fadel_core::{AsvOperatingPoint, CorpusManifest};

/// Evidential fake-audio detection experiments.
#[derive(Parser)]
#[command(name = "fadel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Experiment {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seeds; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Experiment {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        if !self.seeds.is_empty() {
            c.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            c.output = out.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (WAV files and protocols).
    GenData {
        /// Corpus manifest (TOML); the built-in default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one checkpoint per seed.
    Train(Experiment),
    /// Score trials and compute EER / min t-DCF.
    ///
    /// Modes: `--config` evaluates every seed of an experiment on the eval
    /// split; `--checkpoint --protocol` scores one protocol; `--aggregate`
    /// combines report.json files into an avg/best table.
    Evaluate {
        /// Experiment config (TOML).
        #[arg(long, conflicts_with_all = ["checkpoint", "aggregate"])]
        config: Option<PathBuf>,
        /// Overrides the configured seeds; repeatable.
        #[arg(long = "seed", requires = "config")]
        seeds: Vec<u64>,
        /// checkpoint.json written by `train`.
        #[arg(long, requires = "protocol")]
        checkpoint: Option<PathBuf>,
        /// Protocol file (`SPEAKER UTT - ATTACK KEY`).
        #[arg(long, requires = "checkpoint")]
        protocol: Option<PathBuf>,
        /// Directory of `{utt}.wav`; defaults to `<corpus>/wav/<split>` next to the protocol.
        #[arg(long, requires = "checkpoint")]
        audio: Option<PathBuf>,
        /// report.json files to aggregate.
        #[arg(long, num_args = 1.., conflicts_with = "checkpoint")]
        aggregate: Vec<PathBuf>,
        /// Histogram bins (checkpoint mode).
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Output directory (defaults to the experiment output in `--config` mode).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram, per-attack scatter and correlation data from score files.
    Analyze {
        /// Score file; give two or more for a joint comparison histogram.
        #[arg(long = "scores", required = true)]
        scores: Vec<PathBuf>,
        /// System names, one per score file (default: parent directory name).
        #[arg(long = "name")]
        names: Vec<String>,
        /// Require uncertainty columns and emit the uncertainty/EER scatter.
        #[arg(long)]
        uncertainty: bool,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Activation ablation: relu, exponential, softplus over all seeds.
    Ablation(Experiment),
}

fn default_audio_dir(protocol: &Path) -> PathBuf {
    let split = protocol.file_stem().map(|s| s.to_owned()).unwrap_or_default();
    let root = protocol.parent().and_then(Path::parent).unwrap_or(Path::new("."));
    root.join("wav").join(split)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            let mut m = match config {
                Some(p) => load_manifest(&p)?,
                None => CorpusManifest::default(),
            };
            if let Some(s) = seed {
                m.seed = s;
            }
            let summary = corpus::generate(&m, &out)?;
            for (split, n) in summary.counts {
                println!("{:<5} {n} utterances", split.name());
            }
            println!("corpus written to {}", summary.root.display());
        }
        Command::Train(e) => {
            let c = e.load()?;
            for run in pipeline::run_train(&c)? {
                let best = run.log[run.checkpoint.best_epoch - 1];
                println!(
                    "seed {}: {} best epoch {} dev EER {:.4} % -> {}",
                    run.seed,
                    run.checkpoint.head.label(),
                    best.epoch,
                    best.dev_eer,
                    pipeline::seed_dir(&c.output, run.seed).display()
                );
            }
        }
        Command::Evaluate { config, seeds, checkpoint, protocol, audio, aggregate, bins, out } => {
            if let Some(path) = config {
                let e = Experiment { config: path, seeds, out };
                let c = e.load()?;
                let (reports, agg) = pipeline::run_evaluate(&c)?;
                print!("{}", pipeline::format_aggregate(&c.seeds, &reports, &agg, Some(c.train.head)));
            } else if let (Some(ck), Some(proto)) = (checkpoint, protocol) {
                let out = out.ok_or_else(|| Error::Config("--out is required".into()))?;
                let audio = audio.unwrap_or_else(|| default_audio_dir(&proto));
                let report =
                    pipeline::evaluate_checkpoint(&ck, &proto, &audio, &out, &AsvOperatingPoint::default(), bins)?;
                print!("{}", pipeline::format_report(&report, None));
            } else if !aggregate.is_empty() {
                let out = out.ok_or_else(|| Error::Config("--out is required".into()))?;
                let agg = pipeline::aggregate_reports(&aggregate, &out)?;
                println!("EER avg {:.4} best {:.4}", agg.eer.avg, agg.eer.best);
                println!("min t-DCF avg {:.6} best {:.6}", agg.min_tdcf.avg, agg.min_tdcf.best);
            } else {
                return Err(Error::Config("evaluate needs --config, --checkpoint/--protocol or --aggregate".into()));
            }
        }
        Command::Analyze { scores, names, uncertainty, bins, out } => {
            if !names.is_empty() && names.len() != scores.len() {
                return Err(Error::Config("--name must be given once per --scores".into()));
            }
            let systems = scores
                .iter()
                .enumerate()
                .map(|(i, p)| System::load(p, names.get(i).cloned()))
                .collect::<Result<Vec<_>>>()?;
            for a in pipeline::run_analyze(&systems, bins, uncertainty, &out)? {
                match &a.attacks {
                    Some(att) => println!(
                        "{}: {} attacks, spearman(u, EER) {}",
                        a.name,
                        att.rows.len(),
                        att.correlation.spearman.map_or("undefined".into(), |v| format!("{v:.4}"))
                    ),
                    None => println!("{}: histogram only (no uncertainty column)", a.name),
                }
            }
        }
        Command::Ablation(e) => {
            let c = e.load()?;
            let rows = pipeline::run_ablation(&c)?;
            print!("{}", pipeline::format_ablation(&c.seeds, &rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
