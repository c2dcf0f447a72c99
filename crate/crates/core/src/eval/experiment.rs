use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_auc, compute_curves, tpr_at_fpr, ConfusionMatrix, DerivedMetrics};
use crate::augment::augment_training;
use crate::config::{Admission, RunConfig};
use crate::corpus::{chronological_split, ingest, simulate_block_theft, simulate_theft, Behavior, Corpus, Split, SwapMode};
use crate::error::{Error, Result, StageExt};
use crate::joint::{generate_corpus, train, CbmModel, Hyperparams, ModelDims};
use crate::rng::{derive_seed, seeded};
use crate::scoring::{score_behaviors, select_threshold, CostPoint, ScoredBehavior, Scorer, UserPrior};

/// False-positive budgets at which detection rates are reported.
pub const FPR_LEVELS: [f64; 2] = [0.001, 0.01];

fn fpr_key(level: f64) -> String {
    format!("{level}")
}

/// Reads the configured corpus files, or generates a synthetic corpus.
pub fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    match (&config.records, &config.ties) {
        (Some(records), Some(ties)) => {
            let tok = config.tokenizer().stage("ingest")?;
            ingest(records, ties, config.venues.as_deref(), &tok).stage("ingest")
        }
        (None, None) => {
            let generator = config.generator()?;
            generate_corpus(&config.synth_hyperparams(), &generator)
                .map(|(corpus, _)| corpus)
                .stage("synth")
        }
        _ => Err(Error::Config("records and ties must be given together".into())),
    }
}

/// A labeled corpus and its chronological split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub split: Split,
}

/// Splits chronologically and simulates theft on the test side.
pub fn prepare(corpus: &Corpus, config: &RunConfig, mode: SwapMode) -> Result<Prepared> {
    let split = chronological_split(corpus, config.train_fraction).stage("split")?;
    let labeled = simulate_theft(corpus, &split, config.swap_fraction, mode, config.seeds().theft).stage("theft")?;
    Ok(Prepared { corpus: labeled, split })
}

/// A trained model with the user prior derived from its training set.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: CbmModel,
    pub prior: UserPrior,
    pub injected: usize,
}

/// Trains on `train` (after optional augmentation) with Gibbs seed `seed`.
pub fn fit_on(corpus: &Corpus, train_idx: &[usize], config: &RunConfig, hyper: &Hyperparams, seed: u64) -> Result<Fitted> {
    let (behaviors, injected) = if config.augment {
        let aug = augment_training(corpus, train_idx, &config.augment_config()).stage("augment")?;
        let n = aug.injected;
        (aug.behaviors, n)
    } else {
        (train_idx.iter().map(|&i| corpus.behavior(i).clone()).collect::<Vec<Behavior>>(), 0)
    };
    let mut tc = config.train_config();
    tc.seed = seed;
    let trained = train(&behaviors, ModelDims::of(corpus), hyper, &tc).stage("train")?;
    let prior = UserPrior::build(config.prior, &corpus.counts_per_user(train_idx));
    Ok(Fitted {
        model: trained.model,
        prior,
        injected,
    })
}

/// Detection metrics for one set of scored behaviors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_behaviors: usize,
    pub anomalies: usize,
    pub auc: f64,
    /// Mean AUC of the same scores under shuffled labels.
    pub null_auc: Option<f64>,
    pub roc: Vec<(f64, f64)>,
    pub pr: Vec<(f64, f64)>,
    pub cost: Vec<CostPoint>,
    pub threshold: f64,
    pub threshold_qualified: bool,
    pub confusion: ConfusionMatrix,
    pub metrics: DerivedMetrics,
    pub tpr_at_fpr: BTreeMap<String, f64>,
    pub mean_s_l_normal: f64,
    pub mean_s_l_anomalous: f64,
    pub empty_word_behaviors: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Mean AUC over `shuffles` random relabelings.
pub fn null_auc(scores: &[f64], labels: &[bool], shuffles: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut shuffled = labels.to_vec();
    let mut total = 0.0;
    for _ in 0..shuffles {
        shuffled.shuffle(&mut rng);
        total += compute_auc(scores, &shuffled)?;
    }
    Ok(total / shuffles as f64)
}

/// Ranks by the log-odds form of `S_r`; thresholds apply to `S_r` itself.
pub fn evaluate(scored: &[ScoredBehavior], config: &RunConfig) -> Result<EvalReport> {
    let ranks: Vec<f64> = scored.iter().map(|s| s.log_odds).collect();
    let s_r: Vec<f64> = scored.iter().map(|s| s.s_r).collect();
    let labels: Vec<bool> = scored.iter().map(|s| s.label.is_anomalous()).collect();
    let auc = compute_auc(&ranks, &labels).stage("evaluate")?;
    let curves = compute_curves(&ranks, &labels).stage("evaluate")?;
    let selection = select_threshold(scored, config.threshold_lo, config.threshold_hi, config.threshold_step).stage("threshold")?;
    let confusion = ConfusionMatrix::at_threshold(&s_r, &labels, selection.threshold)?;
    let mut tprs = BTreeMap::new();
    for level in FPR_LEVELS {
        tprs.insert(fpr_key(level), tpr_at_fpr(&ranks, &labels, level)?);
    }
    let null = if config.null_shuffles > 0 {
        Some(null_auc(&ranks, &labels, config.null_shuffles, config.seeds().null)?)
    } else {
        None
    };
    Ok(EvalReport {
        test_behaviors: scored.len(),
        anomalies: labels.iter().filter(|&&l| l).count(),
        auc,
        null_auc: null,
        roc: curves.roc,
        pr: curves.pr,
        cost: selection.curve,
        threshold: selection.threshold,
        threshold_qualified: selection.qualified,
        confusion,
        metrics: confusion.metrics(),
        tpr_at_fpr: tprs,
        mean_s_l_normal: mean(scored.iter().filter(|s| !s.label.is_anomalous()).map(|s| s.s_l)),
        mean_s_l_anomalous: mean(scored.iter().filter(|s| s.label.is_anomalous()).map(|s| s.s_l)),
        empty_word_behaviors: scored.iter().filter(|s| s.empty_words).count(),
    })
}

/// Everything the main pipeline produced.
#[derive(Debug, Clone)]
pub struct MainOutcome {
    pub report: EvalReport,
    pub scored: Vec<ScoredBehavior>,
    pub fitted: Fitted,
    pub prepared: Prepared,
}

/// Split, theft simulation, optional augmentation, training, `S_r` scoring,
/// threshold selection and metrics, under the configured swap mode and
/// model dimensions.
pub fn run_main_experiment(corpus: &Corpus, config: &RunConfig) -> Result<MainOutcome> {
    run_main_with(corpus, config, config.swap_mode, &config.hyperparams())
}

pub fn run_main_with(corpus: &Corpus, config: &RunConfig, mode: SwapMode, hyper: &Hyperparams) -> Result<MainOutcome> {
    let prepared = prepare(corpus, config, mode)?;
    let seeds = config.seeds();
    let fitted = fit_on(&prepared.corpus, &prepared.split.train, config, hyper, seeds.train)?;
    let scored = score_behaviors(
        &fitted.model,
        &prepared.corpus,
        &prepared.split.test,
        &fitted.prior,
        config.reference_count,
        seeds.scoring,
    );
    let report = evaluate(&scored, config)?;
    log::info!(
        "main ({mode}, C={}, Z={}): AUC {:.4}, threshold {}",
        hyper.communities,
        hyper.topics,
        report.auc,
        report.threshold
    );
    Ok(MainOutcome {
        report,
        scored,
        fitted,
        prepared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub communities: usize,
    pub topics: usize,
    pub auc: f64,
}

/// Main experiment for every `(C, Z)` pair, row-major over `cs`.
pub fn run_sensitivity_grid(corpus: &Corpus, config: &RunConfig, cs: &[usize], zs: &[usize]) -> Result<Vec<GridCell>> {
    let pairs: Vec<(usize, usize)> = cs.iter().flat_map(|&c| zs.iter().map(move |&z| (c, z))).collect();
    pairs
        .par_iter()
        .map(|&(c, z)| {
            let out = run_main_with(corpus, config, config.swap_mode, &config.hyperparams_for(c, z))?;
            Ok(GridCell {
                communities: c,
                topics: z,
                auc: out.report.auc,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub k: usize,
    pub blocks: usize,
    pub positives: usize,
    /// Users with test behaviors but fewer than `k` of them.
    pub excluded_users: usize,
    pub auc: Option<f64>,
    pub tpr_at_fpr: BTreeMap<String, f64>,
}

/// A scored block of `k` consecutive test behaviors of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBlock {
    pub user: usize,
    /// Corpus indices, chronological.
    pub indices: Vec<usize>,
    pub s_r: f64,
    pub log_odds: f64,
    pub anomalous: bool,
}

/// Non-overlapping runs of `k` consecutive test behaviors per user,
/// aligned to the most recent one; an older remainder shorter than `k` is
/// dropped. Blocks are ordered by their first behavior, so with `k = 1`
/// they follow the test set. Also returns the number of users with test
/// behaviors but no full block.
pub fn test_blocks(corpus: &Corpus, split: &Split, k: usize) -> Result<(Vec<Vec<usize>>, usize)> {
    if k == 0 {
        return Err(Error::InvalidArgument("latency k must be >= 1".into()));
    }
    let mut per_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &split.test {
        per_user.entry(corpus.behavior(i).user).or_default().push(i);
    }
    let excluded = per_user.values().filter(|v| v.len() < k).count();
    let mut blocks: Vec<Vec<usize>> = per_user
        .values()
        .flat_map(|v| {
            let mut own: Vec<Vec<usize>> = v.rchunks_exact(k).map(<[usize]>::to_vec).collect();
            own.reverse();
            own
        })
        .collect();
    blocks.sort_unstable_by_key(|b| b[0]);
    Ok((blocks, excluded))
}

/// Scores each block of `corpus` with the fitted model. The block seed is
/// derived from its last behavior's index, so `k = 1` reproduces the
/// per-behavior scores.
pub fn score_blocks(corpus: &Corpus, blocks: &[Vec<usize>], fitted: &Fitted, config: &RunConfig) -> Result<Vec<ScoredBlock>> {
    let scorer = Scorer::new(&fitted.model);
    let seed = config.seeds().scoring;
    blocks
        .par_iter()
        .map(|indices| {
            let block: Vec<&Behavior> = indices.iter().map(|&i| corpus.behavior(i)).collect();
            let last = *indices.last().expect("blocks are non-empty");
            let r = scorer.score_block_detail(&block, &fitted.prior, config.reference_count, derive_seed(seed, last as u64))?;
            Ok(ScoredBlock {
                user: block[0].user,
                anomalous: block.iter().any(|b| b.label.is_anomalous()),
                indices: indices.clone(),
                s_r: r.s_r,
                log_odds: r.log_odds,
            })
        })
        .collect()
}

/// For each `k`, cuts the clean test set into blocks, lets simulated
/// thieves take over whole blocks, and scores the blocks with the model
/// fitted by the main run. Every `k` uses the main theft seed, so `k = 1`
/// swaps exactly the behaviors the main run swapped.
pub fn latency_rows(corpus: &Corpus, outcome: &MainOutcome, config: &RunConfig, ks: &[usize]) -> Result<Vec<LatencyRow>> {
    let theft_seed = config.seeds().theft;
    ks.iter()
        .map(|&k| {
            let (blocks, excluded) = test_blocks(corpus, &outcome.prepared.split, k)?;
            let labeled = simulate_block_theft(corpus, &blocks, config.swap_fraction, config.swap_mode, theft_seed)
                .stage("theft")?;
            let scored = score_blocks(&labeled, &blocks, &outcome.fitted, config).stage("score")?;
            let ranks: Vec<f64> = scored.iter().map(|b| b.log_odds).collect();
            let labels: Vec<bool> = scored.iter().map(|b| b.anomalous).collect();
            let positives = labels.iter().filter(|&&l| l).count();
            let both = positives > 0 && positives < labels.len();
            let mut tprs = BTreeMap::new();
            if both {
                for level in FPR_LEVELS {
                    tprs.insert(fpr_key(level), tpr_at_fpr(&ranks, &labels, level)?);
                }
            }
            Ok(LatencyRow {
                k,
                blocks: scored.len(),
                positives,
                excluded_users: excluded,
                auc: if both { Some(compute_auc(&ranks, &labels)?) } else { None },
                tpr_at_fpr: tprs,
            })
        })
        .collect()
}

/// Main experiment followed by block scoring for each `k`.
pub fn run_latency_study(corpus: &Corpus, config: &RunConfig, ks: &[usize]) -> Result<(MainOutcome, Vec<LatencyRow>)> {
    let outcome = run_main_experiment(corpus, config)?;
    let rows = latency_rows(corpus, &outcome, config, ks)?;
    Ok((outcome, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub mode: SwapMode,
    pub anomalies: usize,
    pub auc: f64,
    pub tpr_at_fpr: BTreeMap<String, f64>,
}

/// Main experiment under each swap mode; pairs are identical across modes.
pub fn run_robustness_study(corpus: &Corpus, config: &RunConfig) -> Result<Vec<RobustnessRow>> {
    SwapMode::ALL
        .par_iter()
        .map(|&mode| {
            let out = run_main_with(corpus, config, mode, &config.hyperparams())?;
            Ok(RobustnessRow {
                mode,
                anomalies: out.report.anomalies,
                auc: out.report.auc,
                tpr_at_fpr: out.report.tpr_at_fpr,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: usize,
    pub train_size: usize,
    pub train_first_timestamp: i64,
    pub train_last_timestamp: i64,
    pub chunk_first_timestamp: i64,
    pub chunk_last_timestamp: i64,
    pub chunk_size: usize,
    pub anomalies: usize,
    /// `None` when the chunk holds a single class.
    pub auc: Option<f64>,
    /// AUC of the first window's model on the same chunk.
    pub static_auc: Option<f64>,
    pub threshold: f64,
    pub admitted: usize,
}

fn chunk_auc(scored: &[ScoredBehavior]) -> Result<Option<f64>> {
    let labels: Vec<bool> = scored.iter().map(|s| s.label.is_anomalous()).collect();
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Ok(None);
    }
    let ranks: Vec<f64> = scored.iter().map(|s| s.log_odds).collect();
    compute_auc(&ranks, &labels).map(Some)
}

/// Sliding-window retraining.
///
/// The first `window` behaviors train the initial model; theft is simulated
/// on everything after them. Each round scores the next `step` behaviors,
/// selects a threshold on that chunk, admits behaviors into the training
/// window according to the admission policy, and keeps the latest `window`
/// training behaviors.
pub fn run_windowed_driver(corpus: &Corpus, config: &RunConfig, window: usize, step: usize) -> Result<Vec<WindowReport>> {
    let n = corpus.len();
    if window < 2 || step == 0 {
        return Err(Error::InvalidArgument("window must be >= 2 and step >= 1".into()));
    }
    if n < window + step {
        return Err(Error::InsufficientData(format!(
            "windowed driver needs at least {} behaviors for two windows, corpus has {n}",
            window + step
        )))
        .stage("windowed");
    }
    let split = Split {
        train: (0..window).collect(),
        test: (window..n).collect(),
        fraction: window as f64 / n as f64,
    };
    let labeled = simulate_theft(corpus, &split, config.swap_fraction, config.swap_mode, config.seeds().theft).stage("theft")?;
    let hyper = config.hyperparams();
    let seeds = config.seeds();
    let mut training: Vec<usize> = split.train.clone();
    let mut static_model: Option<Fitted> = None;
    let mut reports = Vec::new();
    let mut pos = window;
    let mut round = 0usize;
    while pos < n {
        let chunk: Vec<usize> = (pos..(pos + step).min(n)).collect();
        let fitted = fit_on(&labeled, &training, config, &hyper, derive_seed(seeds.train, round as u64))?;
        let score = |f: &Fitted| {
            score_behaviors(&f.model, &labeled, &chunk, &f.prior, config.reference_count, seeds.scoring)
        };
        let scored = score(&fitted);
        let selection = select_threshold(&scored, config.threshold_lo, config.threshold_hi, config.threshold_step).stage("threshold")?;
        let static_scored = match &static_model {
            Some(s) => score(s),
            None => scored.clone(),
        };
        let admitted: Vec<usize> = match config.admission {
            Admission::AdmitAll => chunk.clone(),
            Admission::ExcludeFlagged => scored.iter().filter(|s| s.s_r < selection.threshold).map(|s| s.index).collect(),
        };
        let ts = |i: usize| labeled.behavior(i).timestamp;
        reports.push(WindowReport {
            window: round,
            train_size: training.len(),
            train_first_timestamp: ts(training[0]),
            train_last_timestamp: ts(*training.last().expect("non-empty window")),
            chunk_first_timestamp: ts(chunk[0]),
            chunk_last_timestamp: ts(*chunk.last().expect("non-empty chunk")),
            chunk_size: chunk.len(),
            anomalies: scored.iter().filter(|s| s.label.is_anomalous()).count(),
            auc: chunk_auc(&scored)?,
            static_auc: chunk_auc(&static_scored)?,
            threshold: selection.threshold,
            admitted: admitted.len(),
        });
        if static_model.is_none() {
            static_model = Some(fitted);
        }
        training.extend(admitted);
        if training.len() > window {
            training.drain(..training.len() - window);
        }
        pos += step;
        round += 1;
    }
    Ok(reports)
}
