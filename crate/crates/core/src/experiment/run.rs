//! The staged pipeline and its report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, ExperimentConfig};
use super::{at, ExperimentError};
use crate::data::{
    filter_min_interactions, generate_synthetic, load_csv, load_movielens, make_cross_splits, make_splits, RatingDataset, SplitBundle,
};
use crate::diffvec::{
    build_attack_dataset, fit_item_embeddings, read_attack_csv, write_attack_csv, AttackDataset, AttackSample, DefenseConfig, Origin,
    Standardizer,
};
use crate::dlmia::{
    train_attack, write_features_csv, write_metrics_jsonl, AttackRun, Batch, DlMiaConfig, EncoderMode, EpochMetrics, EstimationSummary,
    Phase,
};
use crate::nn::write_checkpoint;
use crate::numerics::auc_from;
use crate::recommenders::{train_recommender, write_recommendations, FittedState, RecommenderModel};
use crate::seed::stage_rng;

/// Collects artifact paths and stage timings while writing under `out_dir`.
#[derive(Debug, Default)]
pub struct Recorder {
    out_dir: Option<PathBuf>,
    artifacts: Vec<String>,
    timing: Vec<(String, f64)>,
}

impl Recorder {
    /// Dumps go under `out_dir` when given; otherwise nothing is written.
    pub fn new(out_dir: Option<&Path>) -> Self {
        Self {
            out_dir: out_dir.map(Path::to_path_buf),
            ..Self::default()
        }
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }

    /// Artifact paths relative to the output directory, in write order.
    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    /// Writes `timing.json` into the output directory, if any.
    pub fn write_timing(&self) -> Result<(), ExperimentError> {
        if let Some(dir) = &self.out_dir {
            let p = dir.join("timing.json");
            let text = serde_json::to_string_pretty(&self.timing()).expect("timing serializes") + "\n";
            std::fs::write(&p, text).map_err(|e| ExperimentError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn timing(&self) -> Timing {
        Timing {
            stages: self.timing.iter().cloned().collect(),
            total_seconds: self.timing.iter().map(|t| t.1).sum(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timing.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    /// Creates the parent directory and hands back the absolute path to
    /// write, recording `rel` as an artifact.
    fn path(&mut self, rel: &str) -> Result<Option<PathBuf>, ExperimentError> {
        let Some(dir) = &self.out_dir else { return Ok(None) };
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| ExperimentError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
        self.artifacts.push(rel.to_string());
        Ok(Some(path))
    }

    fn write_text(&mut self, rel: &str, text: &str) -> Result<(), ExperimentError> {
        if let Some(path) = self.path(rel)? {
            std::fs::write(&path, text).map_err(|e| ExperimentError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        Ok(())
    }
}

/// Wall-clock seconds per stage, kept out of the report so the report stays
/// byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stages: BTreeMap<String, f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub users: usize,
    pub items: usize,
    pub shadow_members: usize,
    pub shadow_nonmembers: usize,
    pub target_members: usize,
    pub target_nonmembers: usize,
    pub shadow_interactions: usize,
    pub target_interactions: usize,
    pub extraction_interactions: usize,
}

impl DataSummary {
    fn of(b: &SplitBundle) -> Self {
        Self {
            users: b.shadow.n_users,
            items: b.n_items(),
            shadow_members: b.shadow_members.len(),
            shadow_nonmembers: b.shadow_nonmembers.len(),
            target_members: b.target_members.len(),
            target_nonmembers: b.target_nonmembers.len(),
            shadow_interactions: b.shadow.len(),
            target_interactions: b.target.len(),
            extraction_interactions: b.extraction.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderSummary {
    pub algorithm: String,
    /// Final training RMSE; absent for ItemBase.
    pub train_rmse: Option<f64>,
}

impl RecommenderSummary {
    pub fn of(m: &RecommenderModel) -> Self {
        let train_rmse = match &m.state {
            FittedState::Lfm(f) => Some(f.final_rmse()),
            FittedState::ItemBase { .. } => None,
        };
        Self {
            algorithm: m.kind().to_string(),
            train_rmse,
        }
    }
}

/// First and last losses of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub epochs: usize,
    pub first_bce: f64,
    pub last_bce: f64,
    pub first_elbo: f64,
    pub last_elbo: f64,
    pub first_est: f64,
    pub last_est: f64,
}

fn summarize_phases(metrics: &[EpochMetrics]) -> Vec<PhaseSummary> {
    [Phase::Pretrain, Phase::Reweight, Phase::Estimate]
        .into_iter()
        .filter_map(|phase| {
            let rows: Vec<&EpochMetrics> = metrics.iter().filter(|m| m.phase == phase).collect();
            let (first, last) = (rows.first()?, rows.last()?);
            Some(PhaseSummary {
                phase,
                epochs: rows.len(),
                first_bce: first.loss_bce,
                last_bce: last.loss_bce,
                first_elbo: first.loss_elbo,
                last_elbo: last.loss_elbo,
                first_est: first.loss_est,
                last_est: last.loss_est,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub target_auc: f64,
    pub shadow_auc: f64,
    pub phases: Vec<PhaseSummary>,
    pub estimation: Vec<EstimationSummary>,
    /// `[a, b]` of the score map `w = max(0, a·p + b)`.
    pub score_map: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: BTreeMap<String, String>,
    pub setting: String,
    pub data: DataSummary,
    pub shadow_recommender: RecommenderSummary,
    pub target_recommender: RecommenderSummary,
    pub feature_dim: usize,
    pub biased_auc: f64,
    pub dlmia_auc: f64,
    /// DL-MIA target AUC after pretraining only.
    pub pretrain_auc: f64,
    pub biased: MethodSummary,
    pub dlmia: MethodSummary,
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Biased,
    DlMia,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Biased => "biased",
            Method::DlMia => "dlmia",
        }
    }

    /// The attack configuration; the baseline keeps the attack-side hyperparameters.
    pub fn config(self, cfg: &ExperimentConfig) -> DlMiaConfig {
        match self {
            Method::Biased => DlMiaConfig {
                encoder: EncoderMode::Identity,
                epoch_out: 0,
                ..cfg.attack.clone()
            },
            Method::DlMia => cfg.attack.clone(),
        }
    }

    pub fn init_stage(self) -> String {
        format!("attack:{}", self.name())
    }

    pub fn noise_stage(self) -> String {
        format!("attack:{}:noise", self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "biased" => Ok(Method::Biased),
            "dlmia" => Ok(Method::DlMia),
            _ => Err(format!("unknown method `{s}` (use biased or dlmia)")),
        }
    }
}

/// Loads or generates one dataset and applies the interaction filter.
pub fn load_dataset(cfg: &ExperimentConfig, letter: char) -> Result<RatingDataset, ExperimentError> {
    let ds = match cfg.datasets.get(&letter) {
        Some(DatasetSource::Synthetic(p)) => generate_synthetic(&p.spec(cfg.seed)).map_err(at("generate"))?,
        Some(DatasetSource::MovieLens(path)) => load_movielens(path).map_err(at("load"))?,
        Some(DatasetSource::Csv(path)) => load_csv(path).map_err(at("load"))?,
        None => return Err(ExperimentError::Input(format!("dataset `{letter}` is not configured"))),
    };
    Ok(filter_min_interactions(&ds, cfg.min_user_interactions, cfg.min_item_interactions))
}

/// Load/generate → filter → split. Writes `splits/`.
pub fn prepare_data(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<SplitBundle, ExperimentError> {
    rec.time("prepare_data", |rec| {
        let s = cfg.setting;
        let mut rng = stage_rng(cfg.seed, "split");
        let bundle = if s.same_dataset() {
            make_splits(&load_dataset(cfg, s.shadow.dataset)?, cfg.split, &mut rng).map_err(at("split"))?
        } else {
            let a = load_dataset(cfg, s.shadow.dataset)?;
            let b = load_dataset(cfg, s.target.dataset)?;
            make_cross_splits(&a, &b, cfg.split, &mut rng).map_err(at("split"))?
        };
        if cfg.artifacts {
            if let Some(dir) = rec.out_dir().map(|d| d.join("splits")) {
                bundle.write_dir(&dir).map_err(at("split"))?;
                for f in ["shadow.csv", "target.csv", "extraction.csv", "bundle.json"] {
                    rec.artifacts.push(format!("splits/{f}"));
                }
            }
        }
        Ok(bundle)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommenders {
    pub shadow: RecommenderModel,
    pub target: RecommenderModel,
}

/// Trains the shadow and target recommenders on their member interactions.
/// Writes `recommenders/{shadow,target}.ckpt`.
pub fn train_recommenders(cfg: &ExperimentConfig, bundle: &SplitBundle, rec: &mut Recorder) -> Result<Recommenders, ExperimentError> {
    rec.time("train_recommenders", |rec| {
        let s = cfg.setting;
        let shadow = train_recommender(
            s.shadow.algorithm,
            &bundle.shadow_train(),
            &cfg.recommender,
            &mut stage_rng(cfg.seed, "rec:shadow"),
        )
        .map_err(at("shadow recommender"))?;
        let target = train_recommender(
            s.target.algorithm,
            &bundle.target_train(),
            &cfg.recommender,
            &mut stage_rng(cfg.seed, "rec:target"),
        )
        .map_err(at("target recommender"))?;
        if cfg.artifacts {
            for (name, m) in [("shadow", &shadow), ("target", &target)] {
                if let Some(path) = rec.path(&format!("recommenders/{name}.ckpt"))? {
                    write_checkpoint(&path, &m.to_checkpoint()).map_err(at("recommender checkpoint"))?;
                }
            }
        }
        Ok(Recommenders { shadow, target })
    })
}

/// Item embeddings from the extraction subset and the shadow/target
/// difference vectors. Writes embeddings, recommendations and vectors.
pub fn generate_vectors(
    cfg: &ExperimentConfig,
    bundle: &SplitBundle,
    recs: &Recommenders,
    rec: &mut Recorder,
) -> Result<AttackDataset, ExperimentError> {
    rec.time("generate_vectors", |rec| {
        let emb =
            fit_item_embeddings(&bundle.extraction, &cfg.generator, &mut stage_rng(cfg.seed, "generator")).map_err(at("generator"))?;
        let defense = cfg.defense.then_some(DefenseConfig {
            pool_multiplier: cfg.pool_multiplier,
        });
        let ad = build_attack_dataset(
            bundle,
            &emb,
            &recs.shadow,
            &recs.target,
            cfg.k,
            defense,
            &mut stage_rng(cfg.seed, "defense"),
        )
        .map_err(at("difference vectors"))?;
        if cfg.artifacts {
            let (users, items) = (&bundle.shadow.user_ids, &bundle.extraction.item_ids);
            if let Some(p) = rec.path("vectors/embeddings.csv")? {
                emb.write_csv(&p, items).map_err(at("generator"))?;
            }
            for (name, sets) in [("shadow", &ad.shadow_recs), ("target", &ad.target_recs)] {
                if let Some(p) = rec.path(&format!("recommendations/{name}.csv"))? {
                    write_recommendations(&p, sets, users, items).map_err(at("recommendations"))?;
                }
            }
            if let Some(p) = rec.path("vectors/shadow.csv")? {
                write_attack_csv(&p, &ad.shadow, None, users).map_err(at("difference vectors"))?;
            }
            if let Some(p) = rec.path("vectors/target.csv")? {
                write_attack_csv(&p, &ad.target, Some(&ad.target_labels), users).map_err(at("difference vectors"))?;
            }
        }
        Ok(ad)
    })
}

/// Standardized attack rows with their bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackInputs {
    pub batch: Batch,
    /// Evaluation only; never seen by training.
    pub target_labels: Vec<u8>,
    pub standardizer: Standardizer,
    /// Original user id of each batch row (shadow rows first).
    pub row_users: Vec<u64>,
}

impl AttackInputs {
    pub fn target_rows(&self) -> crate::nn::DenseMatrix {
        self.batch.target_rows()
    }

    fn origins(&self) -> Vec<&'static str> {
        (0..self.batch.len())
            .map(|i| if i < self.batch.n_shadow { "shadow" } else { "target" })
            .collect()
    }
}

fn inputs_from_samples(
    cfg: &ExperimentConfig,
    shadow: &[AttackSample],
    target: &[AttackSample],
    target_labels: Vec<u8>,
    row_users: Vec<u64>,
) -> Result<AttackInputs, ExperimentError> {
    if shadow.is_empty() || target.is_empty() {
        return Err(ExperimentError::Input("attack needs shadow and target samples".into()));
    }
    let rows: Vec<&[f64]> = shadow.iter().map(|s| s.diff.as_slice()).collect();
    let standardizer = cfg.scaling.fit(&rows);
    let labels = shadow
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| ExperimentError::Input(format!("shadow sample for user {} has no label", s.user)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let batch = Batch::new(&standardizer.matrix(shadow), labels, &standardizer.matrix(target)).map_err(at("attack inputs"))?;
    Ok(AttackInputs {
        batch,
        target_labels,
        standardizer,
        row_users,
    })
}

/// Scales difference vectors with statistics of the shadow rows.
pub fn attack_inputs(cfg: &ExperimentConfig, bundle: &SplitBundle, ad: &AttackDataset) -> Result<AttackInputs, ExperimentError> {
    let ids = &bundle.shadow.user_ids;
    let row_users = ad.shadow.iter().chain(&ad.target).map(|s| ids[s.user as usize]).collect();
    inputs_from_samples(cfg, &ad.shadow, &ad.target, ad.target_labels.clone(), row_users)
}

/// Reads `shadow.csv` and `target.csv` as written by [`generate_vectors`].
/// Target labels in the file are used for evaluation only.
pub fn attack_inputs_from_files(cfg: &ExperimentConfig, dir: &Path) -> Result<AttackInputs, ExperimentError> {
    let shadow = read_attack_csv(&dir.join("shadow.csv")).map_err(at("read vectors"))?;
    let target = read_attack_csv(&dir.join("target.csv")).map_err(at("read vectors"))?;
    if shadow.iter().any(|(_, s)| s.origin != Origin::Shadow) || target.iter().any(|(_, s)| s.origin != Origin::Target) {
        return Err(ExperimentError::Input("vector files mix shadow and target rows".into()));
    }
    let target_labels = target
        .iter()
        .map(|(id, s)| {
            s.label
                .ok_or_else(|| ExperimentError::Input(format!("target row for user {id} has no evaluation label")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let row_users = shadow.iter().chain(&target).map(|(id, _)| *id).collect();
    let shadow: Vec<AttackSample> = shadow.into_iter().map(|(_, s)| s).collect();
    let target: Vec<AttackSample> = target.into_iter().map(|(_, s)| AttackSample { label: None, ..s }).collect();
    inputs_from_samples(cfg, &shadow, &target, target_labels, row_users)
}

/// Trains one attack and writes its metrics, checkpoint and predictions
/// under `attack/<method>/`.
pub fn run_attack(cfg: &ExperimentConfig, method: Method, inputs: &AttackInputs, rec: &mut Recorder) -> Result<AttackRun, ExperimentError> {
    rec.time(&format!("attack_{}", method.name()), |rec| {
        let run = train_attack(
            method.config(cfg),
            &inputs.batch,
            Some(inputs.target_labels.clone()),
            &mut stage_rng(cfg.seed, &method.init_stage()),
            &mut stage_rng(cfg.seed, &method.noise_stage()),
        )
        .map_err(at(method.name()))?;
        if cfg.artifacts {
            let dir = format!("attack/{}", method.name());
            if let Some(p) = rec.path(&format!("{dir}/metrics.jsonl"))? {
                write_metrics_jsonl(&p, &run.metrics).map_err(at(method.name()))?;
            }
            if let Some(p) = rec.path(&format!("{dir}/model.ckpt"))? {
                write_checkpoint(&p, &run.state.to_checkpoint()).map_err(at(method.name()))?;
            }
            let mut csv = String::from("user_id,label,pretrain_prob,prob\n");
            let n_s = inputs.batch.n_shadow;
            for (i, (&pre, &fin)) in run.pretrain_probs.iter().zip(&run.final_probs).enumerate() {
                csv.push_str(&format!(
                    "{},{},{pre:?},{fin:?}\n",
                    inputs.row_users[n_s + i],
                    inputs.target_labels[i]
                ));
            }
            rec.write_text(&format!("{dir}/predictions.csv"), &csv)?;
            if method == Method::DlMia {
                let origins = inputs.origins();
                for (name, f) in [("f_dis", &run.f_dis), ("f_rew", &run.f_rew)] {
                    if let Some(p) = rec.path(&format!("{dir}/{name}.csv"))? {
                        write_features_csv(&p, name, f, &inputs.row_users, &origins).map_err(at(method.name()))?;
                    }
                }
            }
        }
        Ok(run)
    })
}

impl MethodSummary {
    /// Target and shadow AUCs plus loss and estimation summaries of one run.
    pub fn of(run: &AttackRun, inputs: &AttackInputs) -> Result<Self, ExperimentError> {
        let shadow = run.state.predict(&inputs.batch.shadow_rows()).map_err(at("evaluate"))?;
        Ok(MethodSummary {
            target_auc: auc_from(&run.final_probs, &inputs.target_labels).map_err(at("evaluate"))?,
            shadow_auc: auc_from(&shadow, &inputs.batch.labels).map_err(at("evaluate"))?,
            phases: summarize_phases(&run.metrics),
            estimation: run.estimation.clone(),
            score_map: run.state.score_map.coef,
        })
    }
}

/// Everything a run produced, for callers that want more than the report.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub timing: Timing,
    pub inputs: AttackInputs,
    pub biased: AttackRun,
    pub dlmia: AttackRun,
}

/// The whole pipeline. With `out_dir`, writes `report.json`, `timing.json`
/// and (if enabled) every intermediate artifact.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    let mut rec = Recorder::new(out_dir);
    let bundle = prepare_data(cfg, &mut rec)?;
    let recs = train_recommenders(cfg, &bundle, &mut rec)?;
    let ad = generate_vectors(cfg, &bundle, &recs, &mut rec)?;
    let inputs = attack_inputs(cfg, &bundle, &ad)?;
    let biased = run_attack(cfg, Method::Biased, &inputs, &mut rec)?;
    let dlmia = run_attack(cfg, Method::DlMia, &inputs, &mut rec)?;
    let biased_summary = MethodSummary::of(&biased, &inputs)?;
    let dlmia_summary = MethodSummary::of(&dlmia, &inputs)?;
    let mut artifacts = rec.artifacts().to_vec();
    if out_dir.is_some() {
        artifacts.push("report.json".into());
    }
    let report = ExperimentReport {
        config: cfg.to_pairs(),
        setting: cfg.setting.code(),
        data: DataSummary::of(&bundle),
        shadow_recommender: RecommenderSummary::of(&recs.shadow),
        target_recommender: RecommenderSummary::of(&recs.target),
        feature_dim: inputs.batch.x.cols(),
        biased_auc: biased_summary.target_auc,
        dlmia_auc: dlmia_summary.target_auc,
        pretrain_auc: auc_from(&dlmia.pretrain_probs, &inputs.target_labels).map_err(at("evaluate"))?,
        biased: biased_summary,
        dlmia: dlmia_summary,
        artifacts,
    };
    let timing = rec.timing();
    if let Some(dir) = out_dir {
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| ExperimentError::Io {
                path: p.display().to_string(),
                source: e,
            })
        };
        write("report.json", report.to_json())?;
        write(
            "timing.json",
            serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n",
        )?;
    }
    Ok(ExperimentOutcome {
        report,
        timing,
        inputs,
        biased,
        dlmia,
    })
}
