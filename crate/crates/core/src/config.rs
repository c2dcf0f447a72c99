//! Resolved run configuration.
//!
//! The file format is flat `key = value` text: one pair per line, `#`
//! starts a comment, lists are comma separated. Every key must name a
//! [`RunConfig`] field. Values are applied on top of the defaults, then
//! command-line overrides on top of the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augment::{AugmentConfig, SocialForm, TuckerConfig};
use crate::baselines::{LdaConfig, MfConfig};
use crate::corpus::{SwapMode, TokenizerConfig};
use crate::error::{Error, Result};
use crate::joint::{CountDist, GeneratorConfig, Hyperparams, TrainConfig, WordProduct};
use crate::rng::derive_seed;
use crate::scoring::PriorMode;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "CBM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    #[default]
    Main,
    Grid,
    Latency,
    Robustness,
    Windowed,
    Baselines,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Main => "main",
            Experiment::Grid => "grid",
            Experiment::Latency => "latency",
            Experiment::Robustness => "robustness",
            Experiment::Windowed => "windowed",
            Experiment::Baselines => "baselines",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// What the windowed driver feeds back into the next training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admission {
    /// Only behaviors scored below the threshold.
    #[default]
    ExcludeFlagged,
    AdmitAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,

    /// Records file; without one a synthetic corpus is generated.
    pub records: Option<PathBuf>,
    pub ties: Option<PathBuf>,
    pub venues: Option<PathBuf>,
    pub output: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub min_token_len: usize,
    pub min_word_freq: u64,

    pub synth_users: usize,
    pub synth_venues: usize,
    pub synth_words: usize,
    pub synth_behaviors_per_user: String,
    pub synth_words_per_tip: String,
    pub synth_friends: usize,
    pub synth_homophily: f64,
    pub synth_communities: usize,
    pub synth_topics: usize,
    pub synth_alpha: f64,
    pub synth_beta: f64,
    pub synth_gamma: f64,
    pub synth_eta: f64,

    pub communities: usize,
    pub topics: usize,
    /// `None` selects `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    /// `None` selects `50 / communities`.
    pub gamma: Option<f64>,
    pub eta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub lag: usize,
    pub word_product: WordProduct,

    pub train_fraction: f64,
    pub swap_fraction: f64,
    pub swap_mode: SwapMode,

    pub reference_count: usize,
    pub prior: PriorMode,
    pub threshold_lo: f64,
    pub threshold_hi: f64,
    pub threshold_step: f64,
    pub null_shuffles: usize,

    pub augment: bool,
    pub augment_topics: usize,
    pub augment_lda_iterations: usize,
    pub tucker_dims: Vec<usize>,
    pub tucker_lambda: f64,
    pub tucker_social: SocialForm,
    pub tucker_iterations: usize,
    pub tucker_learning_rate: f64,
    pub top_k: usize,

    pub mf_rank: usize,
    pub mf_lambda1: f64,
    pub mf_lambda2: f64,
    pub mf_learning_rate: f64,
    pub mf_epochs: usize,
    pub lda_topics: usize,
    pub lda_iterations: usize,
    pub mkde_alpha: f64,
    pub fused_grid: usize,

    pub grid_c: Vec<usize>,
    pub grid_z: Vec<usize>,
    pub latency_k: Vec<usize>,
    pub window_size: usize,
    pub window_step: usize,
    pub admission: Admission,
}

impl Default for RunConfig {
    fn default() -> Self {
        let generator = GeneratorConfig::default();
        let train = TrainConfig::default();
        let tucker = TuckerConfig::default();
        let mf = MfConfig::default();
        let hyper = Hyperparams::default();
        RunConfig {
            experiment: Experiment::Main,
            seed: 42,
            records: None,
            ties: None,
            venues: None,
            output: PathBuf::from("report"),
            stopwords: None,
            min_token_len: TokenizerConfig::default().min_token_len,
            min_word_freq: TokenizerConfig::default().min_word_freq,
            synth_users: generator.users,
            synth_venues: generator.venues,
            synth_words: generator.words,
            synth_behaviors_per_user: generator.behaviors_per_user.to_string(),
            synth_words_per_tip: generator.words_per_tip.to_string(),
            synth_friends: generator.friends_per_user,
            synth_homophily: generator.friend_homophily,
            synth_communities: 3,
            synth_topics: 4,
            synth_alpha: 0.1,
            synth_beta: 0.01,
            synth_gamma: 0.1,
            synth_eta: 0.05,
            communities: hyper.communities,
            topics: hyper.topics,
            alpha: None,
            beta: hyper.beta,
            gamma: None,
            eta: hyper.eta,
            iterations: train.iterations,
            burn_in: train.burn_in,
            lag: train.lag,
            word_product: train.word_product,
            train_fraction: 0.8,
            swap_fraction: 0.05,
            swap_mode: SwapMode::Both,
            reference_count: crate::scoring::REFERENCE_USERS,
            prior: PriorMode::default(),
            threshold_lo: 0.975,
            threshold_hi: 1.0,
            threshold_step: 0.001,
            null_shuffles: 200,
            augment: false,
            augment_topics: 10,
            augment_lda_iterations: 200,
            tucker_dims: vec![tucker.dims.0, tucker.dims.1, tucker.dims.2],
            tucker_lambda: tucker.lambda,
            tucker_social: tucker.social,
            tucker_iterations: tucker.iterations,
            tucker_learning_rate: tucker.learning_rate,
            top_k: 20,
            mf_rank: mf.rank,
            mf_lambda1: mf.lambda1,
            mf_lambda2: mf.lambda2,
            mf_learning_rate: mf.learning_rate,
            mf_epochs: mf.epochs,
            lda_topics: 10,
            lda_iterations: 200,
            mkde_alpha: 0.5,
            fused_grid: 20,
            grid_c: vec![10, 20, 30],
            grid_z: vec![10, 20, 30],
            latency_k: vec![1, 2, 3, 4, 5],
            window_size: 1000,
            window_step: 250,
            admission: Admission::ExcludeFlagged,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Candidate JSON readings of a raw text value, most specific first.
fn candidates(raw: &str) -> Vec<Value> {
    let mut out = Vec::new();
    match raw {
        "" | "none" | "auto" => out.push(Value::Null),
        _ => {}
    }
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        if !v.is_string() {
            out.push(v);
        }
    }
    out.push(Value::String(raw.to_owned()));
    let items: Vec<Value> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str::<Value>(s).unwrap_or_else(|_| Value::String(s.to_owned())))
        .collect();
    out.push(Value::Array(items));
    out
}

impl RunConfig {
    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut object = match serde_json::to_value(&*self)? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        if !object.contains_key(key) {
            return Err(config_err(format!("unknown key `{key}`")));
        }
        for candidate in candidates(raw.trim()) {
            object.insert(key.to_owned(), candidate);
            if let Ok(parsed) = serde_json::from_value::<RunConfig>(Value::Object(object.clone())) {
                *self = parsed;
                return Ok(());
            }
        }
        Err(config_err(format!("invalid value `{raw}` for key `{key}`")))
    }

    /// Applies the `key = value` lines of `text`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| config_err(format!("{origin}:{}: {}", n + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut c = RunConfig::default();
        c.apply_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    /// The flat text form; [`RunConfig::apply_text`] on it restores `self`.
    pub fn to_text(&self) -> String {
        let object = match serde_json::to_value(self).expect("config serializes") {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        let mut out = String::new();
        for (k, v) in object {
            let text = match v {
                Value::Null => "none".to_owned(),
                Value::String(s) => s,
                Value::Array(items) => items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {text}\n"));
        }
        out
    }

    /// Reads the `config` object embedded in a `report.json`.
    pub fn from_report(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let config = value
            .get("config")
            .cloned()
            .ok_or_else(|| config_err(format!("{}: no `config` object", path.display())))?;
        serde_json::from_value(config).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// Replaces the seed with `CBM_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| config_err(format!("{SEED_ENV} must be an unsigned integer, got `{raw}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(config_err(msg.to_owned())) };
        check(self.communities >= 1 && self.topics >= 1, "communities and topics must be >= 1")?;
        check(self.synth_communities >= 1 && self.synth_topics >= 1, "synth_communities and synth_topics must be >= 1")?;
        check(self.iterations > self.burn_in, "iterations must exceed burn_in")?;
        check(self.lag >= 1, "lag must be >= 1")?;
        check(self.train_fraction > 0.0 && self.train_fraction < 1.0, "train_fraction must lie in (0, 1)")?;
        check(self.swap_fraction > 0.0 && self.swap_fraction < 1.0, "swap_fraction must lie in (0, 1)")?;
        check(self.reference_count >= 1, "reference_count must be >= 1")?;
        check(
            self.threshold_lo < self.threshold_hi && self.threshold_step > 0.0,
            "threshold scan needs threshold_lo < threshold_hi and threshold_step > 0",
        )?;
        check(self.tucker_dims.len() == 3 && self.tucker_dims.iter().all(|&d| d >= 1), "tucker_dims needs three positive values")?;
        check(self.tucker_lambda >= 0.0, "tucker_lambda must be >= 0")?;
        check(self.augment_topics >= 1, "augment_topics must be >= 1")?;
        check(self.lda_topics >= 2, "lda_topics must be >= 2")?;
        check(self.mf_rank >= 1, "mf_rank must be >= 1")?;
        check((0.0..=1.0).contains(&self.mkde_alpha), "mkde_alpha must lie in [0, 1]")?;
        check(!self.grid_c.is_empty() && !self.grid_z.is_empty(), "grid_c and grid_z must be non-empty")?;
        check(self.grid_c.iter().chain(&self.grid_z).all(|&x| x >= 1), "grid values must be >= 1")?;
        check(!self.latency_k.is_empty() && self.latency_k.iter().all(|&k| k >= 1), "latency_k values must be >= 1")?;
        check(self.window_size >= 2 && self.window_step >= 1, "window_size must be >= 2 and window_step >= 1")?;
        check(self.fused_grid >= 1, "fused_grid must be >= 1")?;
        for (key, v) in [("alpha", self.alpha), ("gamma", self.gamma)] {
            if let Some(x) = v {
                check(x > 0.0, &format!("{key} must be positive"))?;
            }
        }
        check(self.beta > 0.0 && self.eta > 0.0, "beta and eta must be positive")?;
        self.behaviors_per_user()?;
        self.words_per_tip()?;
        if self.records.is_some() != self.ties.is_some() {
            return Err(config_err("records and ties must be given together"));
        }
        Ok(())
    }

    pub fn behaviors_per_user(&self) -> Result<CountDist> {
        CountDist::parse(&self.synth_behaviors_per_user).map_err(|e| config_err(format!("synth_behaviors_per_user: {}", strip(e))))
    }

    pub fn words_per_tip(&self) -> Result<CountDist> {
        CountDist::parse(&self.synth_words_per_tip).map_err(|e| config_err(format!("synth_words_per_tip: {}", strip(e))))
    }

    pub fn hyperparams(&self) -> Hyperparams {
        self.hyperparams_for(self.communities, self.topics)
    }

    /// Priors for a model with `c` communities and `z` topics; automatic
    /// priors follow the dimensions.
    pub fn hyperparams_for(&self, c: usize, z: usize) -> Hyperparams {
        let mut h = Hyperparams::new(c, z);
        if let Some(a) = self.alpha {
            h.alpha = a;
        }
        if let Some(g) = self.gamma {
            h.gamma = g;
        }
        h.beta = self.beta;
        h.eta = self.eta;
        h
    }

    pub fn synth_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha: self.synth_alpha,
            beta: self.synth_beta,
            gamma: self.synth_gamma,
            eta: self.synth_eta,
            communities: self.synth_communities,
            topics: self.synth_topics,
        }
    }

    pub fn generator(&self) -> Result<GeneratorConfig> {
        Ok(GeneratorConfig {
            users: self.synth_users,
            venues: self.synth_venues,
            words: self.synth_words,
            behaviors_per_user: self.behaviors_per_user()?,
            words_per_tip: self.words_per_tip()?,
            friends_per_user: self.synth_friends,
            friend_homophily: self.synth_homophily,
            seed: self.seeds().synth,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            lag: self.lag,
            seed: self.seeds().train,
            word_product: self.word_product,
        }
    }

    pub fn tokenizer(&self) -> Result<TokenizerConfig> {
        let base = TokenizerConfig {
            min_token_len: self.min_token_len,
            min_word_freq: self.min_word_freq,
            ..TokenizerConfig::default()
        };
        match &self.stopwords {
            Some(p) => base.with_stopword_file(p),
            None => Ok(base),
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            lda_topics: self.augment_topics,
            lda_iterations: self.augment_lda_iterations,
            tucker: TuckerConfig {
                dims: (self.tucker_dims[0], self.tucker_dims[1], self.tucker_dims[2]),
                lambda: self.tucker_lambda,
                social: self.tucker_social,
                iterations: self.tucker_iterations,
                learning_rate: self.tucker_learning_rate,
                ..TuckerConfig::default()
            },
            top_k: self.top_k,
            seed: self.seeds().augment,
        }
    }

    pub fn mf_config(&self) -> MfConfig {
        MfConfig {
            rank: self.mf_rank,
            lambda1: self.mf_lambda1,
            lambda2: self.mf_lambda2,
            learning_rate: self.mf_learning_rate,
            epochs: self.mf_epochs,
            seed: self.seeds().baselines,
            ..MfConfig::default()
        }
    }

    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig::new(self.lda_topics, self.lda_iterations, derive_seed(self.seeds().baselines, 1))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            base: self.seed,
            synth: derive_seed(self.seed, 0),
            theft: derive_seed(self.seed, 1),
            train: derive_seed(self.seed, 2),
            scoring: derive_seed(self.seed, 3),
            augment: derive_seed(self.seed, 4),
            baselines: derive_seed(self.seed, 5),
            null: derive_seed(self.seed, 6),
        }
    }
}

/// Every seed a run uses, derived from the configured base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    pub synth: u64,
    pub theft: u64,
    pub train: u64,
    pub scoring: u64,
    pub augment: u64,
    pub baselines: u64,
    pub null: u64,
}

impl Seeds {
    pub fn to_map(&self) -> BTreeMap<&'static str, u64> {
        BTreeMap::from([
            ("base", self.base),
            ("synth", self.synth),
            ("theft", self.theft),
            ("train", self.train),
            ("scoring", self.scoring),
            ("augment", self.augment),
            ("baselines", self.baselines),
            ("null", self.null),
        ])
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
