//! Plain-text `key = value` experiment configuration.
//!
//! ```text
//! # comments run to end of line
//! seed = 7
//! setting = SITL          # shadow on dataset S with ItemBase, target on T with LFM
//! dataset.T.popularity_skew = 0.5
//! attack.pretrain_epochs = 200
//! ```
//!
//! A two-letter setting such as `IL` is shorthand for `DIDL`: both sides on
//! dataset `D`. Every dataset letter that is not configured is a synthetic
//! dataset with the desk-scale defaults. Synthetic datasets share one item
//! world derived from the seed unless `dataset.X.world` pins it, and each
//! letter draws its own user population.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use super::ExperimentError;
use crate::data::{SplitFractions, SyntheticSpec};
use crate::diffvec::Scaling;
use crate::dlmia::{DlMiaConfig, EncoderMode};
use crate::recommenders::{LfmConfig, RecommenderKind};
use crate::seed::derive_seed;

/// One side of the attack: which dataset and which recommender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Side {
    pub dataset: char,
    pub algorithm: RecommenderKind,
}

/// Shadow and target sides, written `<data><alg><data><alg>` or `<alg><alg>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Setting {
    pub shadow: Side,
    pub target: Side,
}

pub const DEFAULT_DATASET: char = 'D';

impl Setting {
    pub fn same_dataset(&self) -> bool {
        self.shadow.dataset == self.target.dataset
    }

    /// The four-letter form.
    pub fn code(&self) -> String {
        format!("{}{}{}{}", self.shadow.dataset, self.shadow.algorithm.code(), self.target.dataset, self.target.algorithm.code())
    }

    pub fn datasets(&self) -> Vec<char> {
        let mut d = vec![self.shadow.dataset, self.target.dataset];
        d.dedup();
        d
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let c: Vec<char> = s.trim().chars().collect();
        let (sd, sa, td, ta) = match c.len() {
            2 => (DEFAULT_DATASET, c[0], DEFAULT_DATASET, c[1]),
            4 => (c[0], c[1], c[2], c[3]),
            _ => return Err(format!("setting `{s}` must have 2 or 4 letters")),
        };
        let alg = |a: char| RecommenderKind::from_code(a).ok_or_else(|| format!("unknown algorithm code `{a}` (use I or L)"));
        for d in [sd, td] {
            if !d.is_ascii_uppercase() {
                return Err(format!("dataset code `{d}` must be an uppercase letter"));
            }
        }
        Ok(Setting { shadow: Side { dataset: sd, algorithm: alg(sa)? }, target: Side { dataset: td, algorithm: alg(ta)? } })
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticParams),
    /// `UserID::MovieID::Rating::Timestamp` lines.
    MovieLens(PathBuf),
    /// `user,item,rating,timestamp` lines.
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub users: usize,
    pub items: usize,
    pub latent: usize,
    pub density: f64,
    /// Item-world seed; derived from the experiment seed when absent.
    pub world: Option<u64>,
    pub population: u64,
    pub positive_factors: bool,
    pub popularity_skew: f64,
    pub selection_temperature: f64,
    pub noise_sd: f64,
}

impl SyntheticParams {
    /// Desk-scale defaults; the population is the letter's code point.
    pub fn desk(letter: char) -> Self {
        let base = SyntheticSpec::new(1000, 200, 8, 0.08, 0);
        Self {
            users: base.n_users,
            items: base.n_items,
            latent: base.n_latent,
            density: base.density,
            world: None,
            population: letter as u64,
            positive_factors: base.positive_factors,
            popularity_skew: base.popularity_skew,
            selection_temperature: base.selection_temperature,
            noise_sd: base.noise_sd,
        }
    }

    pub fn spec(&self, experiment_seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_users: self.users,
            n_items: self.items,
            n_latent: self.latent,
            density: self.density,
            seed: self.world.unwrap_or_else(|| derive_seed(experiment_seed, "dataset:world")),
            population: self.population,
            positive_factors: self.positive_factors,
            popularity_skew: self.popularity_skew,
            selection_temperature: self.selection_temperature,
            noise_sd: self.noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub setting: Setting,
    pub datasets: BTreeMap<char, DatasetSource>,
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub split: SplitFractions,
    pub k: usize,
    pub defense: bool,
    pub pool_multiplier: usize,
    pub scaling: Scaling,
    /// LFM hyperparameters for shadow and target recommenders.
    pub recommender: LfmConfig,
    /// Factorization producing the item embeddings.
    pub generator: LfmConfig,
    /// DL-MIA hyperparameters; the biased baseline shares the attack-side ones.
    pub attack: DlMiaConfig,
    pub artifacts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            setting: "LL".parse().expect("valid setting"),
            datasets: BTreeMap::new(),
            min_user_interactions: 5,
            min_item_interactions: 1,
            split: SplitFractions::default(),
            k: 20,
            defense: false,
            pool_multiplier: 5,
            scaling: Scaling::Rms,
            recommender: LfmConfig::default(),
            generator: LfmConfig::default(),
            attack: DlMiaConfig::default(),
            artifacts: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value.parse().map_err(|_| ExperimentError::Value { key: key.to_string(), message: format!("cannot parse `{value}`") })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ExperimentError> {
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64), ExperimentError> {
    match parse_list::<f64>(key, value)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(ExperimentError::Value { key: key.to_string(), message: "expected two comma-separated numbers".into() }),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config { line: idx + 1, message: format!("expected `key = value`, got `{line}`") })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), idx + 1) {
                return Err(ExperimentError::Config { line: idx + 1, message: format!("`{key}` already set on line {prev}") });
            }
            cfg.set(key, value).map_err(|e| match e {
                ExperimentError::Value { key, message } => ExperimentError::Config { line: idx + 1, message: format!("{key}: {message}") },
                other => other,
            })?;
        }
        cfg.finish()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }

    /// Fills in datasets named by the setting and checks cross-field rules.
    pub fn finish(&mut self) -> Result<(), ExperimentError> {
        for d in self.setting.datasets() {
            self.datasets.entry(d).or_insert_with(|| DatasetSource::Synthetic(SyntheticParams::desk(d)));
        }
        let used = self.setting.datasets();
        if let Some(extra) = self.datasets.keys().find(|d| !used.contains(d)) {
            return Err(ExperimentError::Value {
                key: format!("dataset.{extra}"),
                message: format!("dataset `{extra}` is not used by setting {}", self.setting.code()),
            });
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |key: &str, message: &str| Err(ExperimentError::Value { key: key.into(), message: message.into() });
        self.split.validate().map_err(|e| ExperimentError::Value { key: "split".into(), message: e.to_string() })?;
        if self.k == 0 {
            return bad("k", "must be positive");
        }
        if self.pool_multiplier == 0 {
            return bad("pool_multiplier", "must be positive");
        }
        if self.attack.encoder != EncoderMode::Disentangled {
            return bad("attack", "the DL-MIA configuration must use the disentangled encoder");
        }
        for (name, l) in [("lfm", &self.recommender), ("generator", &self.generator)] {
            if l.embed == 0 || !(l.lr > 0.0) || l.reg < 0.0 || !(l.init_sd >= 0.0) {
                return bad(name, "embed, lr must be positive; reg, init_sd non-negative");
            }
        }
        self.attack.validate().map_err(|e| ExperimentError::Value { key: "attack".into(), message: e.to_string() })?;
        Ok(())
    }

    fn synthetic_mut(&mut self, letter: char, key: &str) -> Result<&mut SyntheticParams, ExperimentError> {
        let entry = self.datasets.entry(letter).or_insert_with(|| DatasetSource::Synthetic(SyntheticParams::desk(letter)));
        match entry {
            DatasetSource::Synthetic(p) => Ok(p),
            _ => Err(ExperimentError::Value { key: key.into(), message: "only synthetic datasets take generator parameters".into() }),
        }
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["seed"] => self.seed = parse_value(key, value)?,
            ["setting"] => {
                self.setting = value.parse().map_err(|m| ExperimentError::Value { key: key.into(), message: m })?;
            }
            ["min_user_interactions"] => self.min_user_interactions = parse_value(key, value)?,
            ["min_item_interactions"] => self.min_item_interactions = parse_value(key, value)?,
            ["split", "shadow"] => self.split.shadow = parse_value(key, value)?,
            ["split", "target"] => self.split.target = parse_value(key, value)?,
            ["split", "extraction"] => self.split.extraction = parse_value(key, value)?,
            ["k"] => self.k = parse_value(key, value)?,
            ["defense"] => self.defense = parse_value(key, value)?,
            ["pool_multiplier"] => self.pool_multiplier = parse_value(key, value)?,
            ["scaling"] => {
                self.scaling = Scaling::parse(value)
                    .ok_or_else(|| ExperimentError::Value { key: key.into(), message: "expected none, rms or zscore".into() })?;
            }
            ["artifacts"] => self.artifacts = parse_value(key, value)?,
            [group @ ("lfm" | "generator"), field] => {
                let l = if *group == "lfm" { &mut self.recommender } else { &mut self.generator };
                match *field {
                    "embed" => l.embed = parse_value(key, value)?,
                    "lr" => l.lr = parse_value(key, value)?,
                    "reg" => l.reg = parse_value(key, value)?,
                    "epochs" => l.epochs = parse_value(key, value)?,
                    "init_sd" => l.init_sd = parse_value(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            ["attack", field] => {
                let a = &mut self.attack;
                match *field {
                    "d_inv" => a.d_inv = parse_value(key, value)?,
                    "m" => a.m = parse_value(key, value)?,
                    "decoder_hidden" => a.decoder_hidden = parse_list(key, value)?,
                    "attack_hidden" => a.attack_hidden = parse_list(key, value)?,
                    "pretrain_epochs" => a.pretrain_epochs = parse_value(key, value)?,
                    "epoch_out" => a.epoch_out = parse_value(key, value)?,
                    "epoch_in" => a.epoch_in = parse_value(key, value)?,
                    "encoder_lr" => a.encoder_lr = parse_value(key, value)?,
                    "attack_lr" => a.attack_lr = parse_value(key, value)?,
                    "attack_momentum" => a.attack_momentum = parse_value(key, value)?,
                    "score_map_lr" => a.score_map_lr = parse_value(key, value)?,
                    "score_init" => a.score_init = parse_pair(key, value)?,
                    "score_clamp" => a.score_clamp = parse_pair(key, value)?,
                    "score_step" => a.score_step = parse_value(key, value)?,
                    "loss_batch" => a.loss_batch = parse_value(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            ["dataset", letter, field] => {
                let mut chars = letter.chars();
                let l = match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii_uppercase() => c,
                    _ => return Err(ExperimentError::Value { key: key.into(), message: "dataset codes are single uppercase letters".into() }),
                };
                match *field {
                    "source" => {
                        let src = match value.split_once(':') {
                            None if value == "synthetic" => DatasetSource::Synthetic(SyntheticParams::desk(l)),
                            Some(("movielens", p)) => DatasetSource::MovieLens(PathBuf::from(p.trim())),
                            Some(("csv", p)) => DatasetSource::Csv(PathBuf::from(p.trim())),
                            _ => {
                                return Err(ExperimentError::Value {
                                    key: key.into(),
                                    message: "expected synthetic, movielens:<path> or csv:<path>".into(),
                                })
                            }
                        };
                        if matches!(self.datasets.get(&l), Some(DatasetSource::Synthetic(p)) if *p != SyntheticParams::desk(l))
                            && !matches!(src, DatasetSource::Synthetic(_))
                        {
                            return Err(ExperimentError::Value { key: key.into(), message: "generator parameters set for a file dataset".into() });
                        }
                        if !(matches!(src, DatasetSource::Synthetic(_)) && matches!(self.datasets.get(&l), Some(DatasetSource::Synthetic(_)))) {
                            self.datasets.insert(l, src);
                        }
                    }
                    "users" => self.synthetic_mut(l, key)?.users = parse_value(key, value)?,
                    "items" => self.synthetic_mut(l, key)?.items = parse_value(key, value)?,
                    "latent" => self.synthetic_mut(l, key)?.latent = parse_value(key, value)?,
                    "density" => self.synthetic_mut(l, key)?.density = parse_value(key, value)?,
                    "world" => self.synthetic_mut(l, key)?.world = Some(parse_value(key, value)?),
                    "population" => self.synthetic_mut(l, key)?.population = parse_value(key, value)?,
                    "positive_factors" => self.synthetic_mut(l, key)?.positive_factors = parse_value(key, value)?,
                    "popularity_skew" => self.synthetic_mut(l, key)?.popularity_skew = parse_value(key, value)?,
                    "selection_temperature" => self.synthetic_mut(l, key)?.selection_temperature = parse_value(key, value)?,
                    "noise_sd" => self.synthetic_mut(l, key)?.noise_sd = parse_value(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    /// Every effective setting as `key → value`, sorted by key.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("setting", self.setting.code());
        put("min_user_interactions", self.min_user_interactions.to_string());
        put("min_item_interactions", self.min_item_interactions.to_string());
        put("split.shadow", self.split.shadow.to_string());
        put("split.target", self.split.target.to_string());
        put("split.extraction", self.split.extraction.to_string());
        put("k", self.k.to_string());
        put("defense", self.defense.to_string());
        put("pool_multiplier", self.pool_multiplier.to_string());
        put("scaling", self.scaling.as_str().to_string());
        put("artifacts", self.artifacts.to_string());
        for (group, l) in [("lfm", &self.recommender), ("generator", &self.generator)] {
            put(&format!("{group}.embed"), l.embed.to_string());
            put(&format!("{group}.lr"), l.lr.to_string());
            put(&format!("{group}.reg"), l.reg.to_string());
            put(&format!("{group}.epochs"), l.epochs.to_string());
            put(&format!("{group}.init_sd"), l.init_sd.to_string());
        }
        let a = &self.attack;
        put("attack.d_inv", a.d_inv.to_string());
        put("attack.m", a.m.to_string());
        put("attack.decoder_hidden", join(&a.decoder_hidden));
        put("attack.attack_hidden", join(&a.attack_hidden));
        put("attack.pretrain_epochs", a.pretrain_epochs.to_string());
        put("attack.epoch_out", a.epoch_out.to_string());
        put("attack.epoch_in", a.epoch_in.to_string());
        put("attack.encoder_lr", a.encoder_lr.to_string());
        put("attack.attack_lr", a.attack_lr.to_string());
        put("attack.attack_momentum", a.attack_momentum.to_string());
        put("attack.score_map_lr", a.score_map_lr.to_string());
        put("attack.score_init", format!("{},{}", a.score_init.0, a.score_init.1));
        put("attack.score_clamp", format!("{},{}", a.score_clamp.0, a.score_clamp.1));
        put("attack.score_step", a.score_step.to_string());
        put("attack.loss_batch", a.loss_batch.to_string());
        for (l, src) in &self.datasets {
            let p = |f: &str| format!("dataset.{l}.{f}");
            match src {
                DatasetSource::MovieLens(path) => put(&p("source"), format!("movielens:{}", path.display())),
                DatasetSource::Csv(path) => put(&p("source"), format!("csv:{}", path.display())),
                DatasetSource::Synthetic(s) => {
                    put(&p("source"), "synthetic".into());
                    put(&p("users"), s.users.to_string());
                    put(&p("items"), s.items.to_string());
                    put(&p("latent"), s.latent.to_string());
                    put(&p("density"), s.density.to_string());
                    if let Some(w) = s.world {
                        put(&p("world"), w.to_string());
                    }
                    put(&p("population"), s.population.to_string());
                    put(&p("positive_factors"), s.positive_factors.to_string());
                    put(&p("popularity_skew"), s.popularity_skew.to_string());
                    put(&p("selection_temperature"), s.selection_temperature.to_string());
                    put(&p("noise_sd"), s.noise_sd.to_string());
                }
            }
        }
        m
    }

    /// The effective configuration as a parseable file body.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}

fn unknown(key: &str) -> ExperimentError {
    ExperimentError::Value { key: key.into(), message: "unknown key".into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_letter_settings_use_the_default_dataset() {
        let s: Setting = "IL".parse().unwrap();
        assert_eq!(s.code(), "DIDL");
        assert!(s.same_dataset());
        let s: Setting = "MLAI".parse().unwrap();
        assert_eq!((s.shadow.dataset, s.target.algorithm), ('M', RecommenderKind::ItemBase));
        assert!(!s.same_dataset());
    }

    #[test]
    fn unknown_algorithm_codes_are_rejected() {
        assert!("LN".parse::<Setting>().unwrap_err().contains("`N`"));
        assert!("MLAG".parse::<Setting>().is_err());
        assert!("mLAI".parse::<Setting>().is_err());
        assert!("LLL".parse::<Setting>().is_err());
    }

    #[test]
    fn defaults_fill_in_unconfigured_datasets() {
        let cfg = ExperimentConfig::parse("setting = SITL\ndataset.T.popularity_skew = 0.5\n").unwrap();
        let DatasetSource::Synthetic(t) = &cfg.datasets[&'T'] else { panic!() };
        let DatasetSource::Synthetic(s) = &cfg.datasets[&'S'] else { panic!() };
        assert_eq!(t.popularity_skew, 0.5);
        assert_eq!(s.popularity_skew, 1.0);
        assert_ne!(s.population, t.population);
        assert_eq!(s.spec(3).seed, t.spec(3).seed);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("seed = 1\n\nk = many\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = ExperimentConfig::parse("seed = 1\nseed = 2\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("line 1"), "{err}");
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        assert!(ExperimentConfig::parse("setting = LL\ndataset.Q.users = 5").is_err());
    }

    #[test]
    fn text_round_trips() {
        let cfg = ExperimentConfig::parse(
            "seed = 9\nsetting = SITL\ndataset.T.popularity_skew = 0.5\ndataset.T.world = 4\nattack.decoder_hidden = 8,8,8\ndefense = true\n",
        )
        .unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn file_sources_parse() {
        let cfg = ExperimentConfig::parse("setting = LL\ndataset.D.source = movielens:/data/ratings.dat").unwrap();
        assert_eq!(cfg.datasets[&'D'], DatasetSource::MovieLens(PathBuf::from("/data/ratings.dat")));
        assert!(ExperimentConfig::parse("dataset.D.source = movielens:x\ndataset.D.users = 3").is_err());
    }
}
