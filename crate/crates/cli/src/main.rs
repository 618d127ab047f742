//! `recmia`: run membership inference experiments against recommenders.
//!
//! Each pipeline subcommand reruns the earlier stages deterministically from
//! the config and seed, then writes its own stage's artifacts under
//! `--out-dir`. `attack --vectors DIR` starts from dumped difference vectors
//! instead.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use recmia::experiment::{
    attack_inputs, attack_inputs_from_files, generate_vectors, prepare_data, run_attack, run_experiment, train_recommenders,
    verify_suite, ExperimentConfig, Faults, Method, MethodSummary, Recorder, RecommenderSummary,
};

#[derive(Parser)]
#[command(name = "recmia", version, about = "Membership inference attacks against recommender systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Plain-text `key = value` config; defaults apply to anything unset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load or generate ratings, filter, and split into shadow/target/extraction.
    PrepareData(Common),
    /// Train the shadow and target recommenders.
    TrainRec(Common),
    /// Fit item embeddings and build shadow/target difference vectors.
    GenVectors {
        #[command(flatten)]
        common: Common,
        /// Popularity Randomization for target non-member recommendations.
        #[arg(long)]
        defense: bool,
    },
    /// Train one attack and evaluate it on the target labels.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MethodArg::Dlmia)]
        method: MethodArg,
        #[arg(long)]
        defense: bool,
        /// Directory holding `shadow.csv` and `target.csv` from `gen-vectors`.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// The full pipeline: both attacks, report.json and timing.json.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        defense: bool,
    },
    /// Oracle-backed self checks; exits nonzero on any failure.
    Verify {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Biased,
    Dlmia,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    KlSignFlip,
}

fn load_config(common: &Common, defense: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::parse("")?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.defense |= defense;
    Ok(cfg)
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn finish(rec: &Recorder, out: &Path) -> Result<()> {
    rec.write_timing()?;
    eprintln!("wrote {} artifacts under {}", rec.artifacts().len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::PrepareData(common) => {
            let cfg = load_config(&common, false)?;
            let mut rec = Recorder::new(Some(&common.out_dir));
            let bundle = prepare_data(&cfg, &mut rec)?;
            print_json(&json!({
                "setting": cfg.setting.code(),
                "users": bundle.shadow.n_users,
                "items": bundle.n_items(),
                "shadow_members": bundle.shadow_members.len(),
                "target_members": bundle.target_members.len(),
                "extraction_interactions": bundle.extraction.len(),
            }))?;
            finish(&rec, &common.out_dir)?;
        }
        Command::TrainRec(common) => {
            let cfg = load_config(&common, false)?;
            let mut quiet = Recorder::new(None);
            let bundle = prepare_data(&cfg, &mut quiet)?;
            let mut rec = Recorder::new(Some(&common.out_dir));
            let recs = train_recommenders(&cfg, &bundle, &mut rec)?;
            let summary = |m| serde_json::to_value(RecommenderSummary::of(m));
            print_json(&json!({ "shadow": summary(&recs.shadow)?, "target": summary(&recs.target)? }))?;
            finish(&rec, &common.out_dir)?;
        }
        Command::GenVectors { common, defense } => {
            let cfg = load_config(&common, defense)?;
            let mut quiet = Recorder::new(None);
            let bundle = prepare_data(&cfg, &mut quiet)?;
            let recs = train_recommenders(&cfg, &bundle, &mut quiet)?;
            let mut rec = Recorder::new(Some(&common.out_dir));
            let ad = generate_vectors(&cfg, &bundle, &recs, &mut rec)?;
            print_json(&json!({
                "shadow_samples": ad.shadow.len(),
                "target_samples": ad.target.len(),
                "dim": ad.shadow.first().map_or(0, |s| s.diff.len()),
                "defense": cfg.defense,
            }))?;
            finish(&rec, &common.out_dir)?;
        }
        Command::Attack { common, method, defense, vectors } => {
            let cfg = load_config(&common, defense)?;
            let method = match method {
                MethodArg::Biased => Method::Biased,
                MethodArg::Dlmia => Method::DlMia,
            };
            let inputs = match &vectors {
                Some(dir) => attack_inputs_from_files(&cfg, dir)?,
                None => {
                    let mut quiet = Recorder::new(None);
                    let bundle = prepare_data(&cfg, &mut quiet)?;
                    let recs = train_recommenders(&cfg, &bundle, &mut quiet)?;
                    let ad = generate_vectors(&cfg, &bundle, &recs, &mut quiet)?;
                    attack_inputs(&cfg, &bundle, &ad)?
                }
            };
            let mut rec = Recorder::new(Some(&common.out_dir));
            let run = run_attack(&cfg, method, &inputs, &mut rec)?;
            let summary = MethodSummary::of(&run, &inputs)?;
            let pretrain_auc = recmia::numerics::auc_from(&run.pretrain_probs, &inputs.target_labels)?;
            print_json(&json!({
                "method": method.name(),
                "target_auc": summary.target_auc,
                "pretrain_auc": pretrain_auc,
                "shadow_auc": summary.shadow_auc,
            }))?;
            finish(&rec, &common.out_dir)?;
        }
        Command::RunExperiment { common, defense } => {
            let cfg = load_config(&common, defense)?;
            let out = run_experiment(&cfg, Some(&common.out_dir))?;
            let r = &out.report;
            print_json(&json!({
                "setting": r.setting,
                "biased_auc": r.biased_auc,
                "pretrain_auc": r.pretrain_auc,
                "dlmia_auc": r.dlmia_auc,
                "report": common.out_dir.join("report.json"),
            }))?;
            eprintln!("total {:.1}s", out.timing.total_seconds);
        }
        Command::Verify { inject_fault } => {
            let faults = Faults { kl_sign_flip: matches!(inject_fault, Some(FaultArg::KlSignFlip)) };
            let report = verify_suite(faults);
            print!("{}", report.table());
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
