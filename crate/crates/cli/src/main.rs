//! `graphclust` command-line driver.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 invalid
//! bundle, 3 numerical failure.

mod manifest;
mod table;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphclust::config::Ablation;
use graphclust::report::{read_labels, write_embedding, write_labels, write_metrics, NMI_VARIANT};
use graphclust::{evaluate, load_bundle, Error, GraphBundle, Scores, TrainConfig, TrainReport, Trainer};
use manifest::{now_unix_ms, BundleChecksum, RunManifest};
use serde::Serialize;
use table::ScoreTable;

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn bundle(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

fn is_bundle_error(e: &Error) -> bool {
    match e {
        Error::Bundle(_) => true,
        Error::Epoch { source, .. } => is_bundle_error(source),
        _ => false,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            3
        } else if is_bundle_error(&e) {
            2
        } else {
            1
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "graphclust", version, about = "Clustering-guided curriculum graph contrastive learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write metrics, manifest, embedding and labels.
    Train(TrainArgs),
    /// Train over a list of curriculum paces or fixed task ratios.
    Sweep(SweepArgs),
    /// Train every ablation variant.
    Ablate(AblateArgs),
    /// Check a bundle and print "n edges d k".
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Score saved cluster labels against a bundle's ground truth.
    Eval {
        /// One predicted label per line.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Bundle directory.
    #[arg(long)]
    data: PathBuf,
    /// TOML configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides train.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Repeat the run recorded in a manifest.json.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    manifest: Option<PathBuf>,
    /// Print progress to stderr every N epochs.
    #[arg(long, default_value_t = 0)]
    log_every: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("setting").required(true).args(["pace", "ratio"]))]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated curriculum paces.
    #[arg(long, value_delimiter = ',')]
    pace: Vec<f64>,
    /// Comma-separated fixed clustering-task ratios in [0, 1].
    #[arg(long, value_delimiter = ',')]
    ratio: Vec<f64>,
    /// Number of consecutive seeds per setting.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of consecutive seeds per variant.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(data: &Path) -> Result<GraphBundle, Failure> {
    load_bundle(data).map_err(|e| Failure::bundle(e.to_string()))
}

fn read_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            Ok(TrainConfig::from_toml_str(&text)?)
        }
    }
}

fn resolve(common: &Common) -> Result<TrainConfig, Failure> {
    let mut cfg = read_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn scores_of(report: &TrainReport) -> Result<Scores, Failure> {
    report
        .scores
        .ok_or_else(|| Failure::bundle("bundle has no labels.tsv to score against"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = match &args.manifest {
        Some(path) => RunManifest::read(path)?.config,
        None => resolve(&args.common)?,
    };
    let bundle = load(&args.common.data)?;
    let checksum = BundleChecksum::compute(&args.common.data)?;
    if let Some(path) = &args.manifest {
        let recorded = RunManifest::read(path)?.bundle;
        if recorded.sha256 != checksum.sha256 {
            return Err(Failure::bundle(format!(
                "bundle checksum {} differs from the manifest's {}",
                checksum.sha256, recorded.sha256
            )));
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| Failure::usage(format!("{}: {e}", args.out.display())))?;

    let started = now_unix_ms();
    let log_every = args.log_every;
    let report = Trainer::new(&bundle, &cfg)?.run_with(|rec| {
        if log_every > 0 && (rec.epoch + 1) % log_every == 0 {
            let acc = rec.scores.map(|s| format!(" acc {:.2}", 100.0 * s.acc)).unwrap_or_default();
            eprintln!("epoch {} loss {:.6} n_ct {}{acc}", rec.epoch + 1, rec.loss, rec.n_ct);
        }
    })?;
    let finished = now_unix_ms();

    write_metrics(&args.out.join("metrics.json"), &report)?;
    write_embedding(&args.out, "embedding", &report.embedding)?;
    write_labels(&args.out.join("labels_pred.tsv"), &report.labels)?;
    RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.train.seed,
        config: cfg,
        bundle: checksum,
        started_unix_ms: started,
        finished_unix_ms: finished,
    }
    .write(&args.out.join("manifest.json"))?;

    match report.scores {
        Some(s) => println!(
            "acc {:.2} nmi {:.2} ari {:.2}",
            100.0 * s.acc,
            100.0 * s.nmi,
            100.0 * s.ari
        ),
        None => println!("trained {} epochs; bundle has no labels", report.history.len()),
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let base = resolve(&args.common)?;
    let bundle = load(&args.common.data)?;
    let settings: Vec<(String, TrainConfig)> = if args.pace.is_empty() {
        args.ratio
            .iter()
            .map(|&r| {
                let mut cfg = base;
                cfg.curriculum.fixed_ratio = Some(r);
                (format!("ratio={r}"), cfg)
            })
            .collect()
    } else {
        args.pace
            .iter()
            .map(|&p| {
                let mut cfg = base;
                cfg.curriculum.fixed_ratio = None;
                cfg.curriculum.pace = p;
                (format!("pace={p}"), cfg)
            })
            .collect()
    };
    for (_, cfg) in &settings {
        cfg.validate()?;
    }
    let mut table = ScoreTable::default();
    for (name, cfg) in &settings {
        for seed in base.train.seed..base.train.seed + args.seeds {
            let mut cfg = *cfg;
            cfg.train.seed = seed;
            let report = graphclust::train(&bundle, &cfg)?;
            table.push(name, seed, scores_of(&report)?);
        }
    }
    emit(args.out.as_deref(), &table.to_csv())
}

fn cmd_ablate(args: &AblateArgs) -> Result<(), Failure> {
    let base = resolve(&args.common)?;
    let bundle = load(&args.common.data)?;
    let mut table = ScoreTable::default();
    for ablation in Ablation::ALL {
        for seed in base.train.seed..base.train.seed + args.seeds {
            let mut cfg = base;
            cfg.train.seed = seed;
            cfg.train.ablation = ablation;
            let report = graphclust::train(&bundle, &cfg)?;
            table.push(ablation.as_str(), seed, scores_of(&report)?);
        }
    }
    emit(args.out.as_deref(), &table.to_csv())
}

/// Edge records in `edges.tsv`, duplicates and both orientations included.
fn edge_records(data: &Path) -> Result<usize, Failure> {
    let path = data.join("edges.tsv");
    let text = fs::read_to_string(&path).map_err(|e| Failure::bundle(format!("{}: {e}", path.display())))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
}

fn cmd_validate(data: &Path) -> Result<(), Failure> {
    let bundle = load(data)?;
    println!("{} {} {} {}", bundle.n(), edge_records(data)?, bundle.d(), bundle.k());
    eprintln!("{} distinct undirected edges", bundle.edges().len());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    acc: f64,
    nmi: f64,
    ari: f64,
    nmi_variant: &'static str,
}

fn cmd_eval(pred: &Path, data: &Path) -> Result<(), Failure> {
    let bundle = load(data)?;
    let truth = bundle
        .labels()
        .ok_or_else(|| Failure::bundle(format!("{} has no labels.tsv", data.display())))?;
    let pred = read_labels(pred)?;
    if pred.len() != truth.len() {
        return Err(Failure::usage(format!(
            "{} predicted labels for {} nodes",
            pred.len(),
            truth.len()
        )));
    }
    let s = evaluate(&pred, truth)?;
    let out = EvalOutput {
        acc: 100.0 * s.acc,
        nmi: 100.0 * s.nmi,
        ari: 100.0 * s.ari,
        nmi_variant: NMI_VARIANT,
    };
    println!("{}", serde_json::to_string(&out).expect("scores serialize"));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Validate { data } => cmd_validate(data),
        Command::Eval { pred, data } => cmd_eval(pred, data),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
