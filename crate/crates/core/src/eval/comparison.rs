use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_main_experiment, MainOutcome};
use super::metrics::compute_auc;
use crate::baselines::{
    cfkde_surprise, fused_evaluate, lda_score, lda_train, mf_train, mkde_surprise, FusedResult, KdeModel,
};
use crate::config::RunConfig;
use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result, StageExt};
use crate::rng::derive_seed;

/// One detector's score for one test behavior; `None` when the detector
/// could not score it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub index: usize,
    pub user: usize,
    pub label: Label,
    pub score: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorResult {
    pub detector: String,
    pub auc: f64,
    /// Behaviors the detector could not score; they rank as most suspicious.
    pub failures: usize,
    pub scores: Vec<DetectorScore>,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub main: MainOutcome,
    pub detectors: Vec<DetectorResult>,
    pub fused: FusedResult,
}

impl BaselineOutcome {
    /// `(detector, auc)` rows including the fused model.
    pub fn auc_table(&self) -> Vec<(String, f64)> {
        let mut rows: Vec<(String, f64)> = self.detectors.iter().map(|d| (d.detector.clone(), d.auc)).collect();
        rows.push(("fused".into(), self.fused.auc));
        rows
    }
}

fn rank_value(s: &DetectorScore) -> f64 {
    s.score.unwrap_or(f64::INFINITY)
}

fn finish(detector: &str, scores: Vec<DetectorScore>) -> Result<DetectorResult> {
    let ranks: Vec<f64> = scores.iter().map(rank_value).collect();
    let labels: Vec<bool> = scores.iter().map(|s| s.label.is_anomalous()).collect();
    Ok(DetectorResult {
        detector: detector.to_owned(),
        auc: compute_auc(&ranks, &labels)?,
        failures: scores.iter().filter(|s| s.score.is_none()).count(),
        scores,
    })
}

fn collect<F>(corpus: &Corpus, test: &[usize], f: F) -> Vec<DetectorScore>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    test.par_iter()
        .map(|&i| {
            let b = corpus.behavior(i);
            let (score, failure) = match f(i) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            DetectorScore {
                index: i,
                user: b.user,
                label: b.label,
                score,
                failure,
            }
        })
        .collect()
}

/// Runs the main pipeline and the comparison detectors on the same labeled
/// test set. Higher scores are more anomalous for every detector.
pub fn run_baselines(corpus: &Corpus, config: &RunConfig) -> Result<BaselineOutcome> {
    let main = run_main_experiment(corpus, config)?;
    let labeled = &main.prepared.corpus;
    let train = &main.prepared.split.train;
    let test = &main.prepared.split.test;
    if !labeled.has_coordinates() {
        return Err(Error::InsufficientData("spatial baselines need venue coordinates".into())).stage("baselines");
    }
    let cbm = main
        .scored
        .iter()
        .map(|s| DetectorScore {
            index: s.index,
            user: s.user,
            label: s.label,
            score: Some(s.log_odds),
            failure: None,
        })
        .collect();

    let kde = KdeModel::fit(labeled, train, config.mkde_alpha).stage("kde")?;
    let location = |i: usize| {
        let v = labeled.behavior(i).venue;
        labeled
            .venue_xy(v)
            .ok_or_else(|| Error::InsufficientData(format!("venue `{}` has no coordinates", labeled.venues().name(v))))
    };
    let mkde = collect(labeled, test, |i| mkde_surprise(&kde, labeled.behavior(i).user, location(i)?));

    let mf = mf_train(labeled, train, &config.mf_config()).stage("mf")?;
    let cfkde = collect(labeled, test, |i| cfkde_surprise(&kde, &mf, labeled.behavior(i).user, location(i)?));

    let lda = lda_train(labeled, train, &config.lda_config()).stage("lda")?;
    let fold_seed = derive_seed(config.seeds().baselines, 2);
    let lda_scores = collect(labeled, test, |i| {
        let b = labeled.behavior(i);
        lda_score(&lda, b.user, &b.words, derive_seed(fold_seed, i as u64))
    });

    let cf_ranks: Vec<f64> = cfkde.iter().map(rank_value).collect();
    let lda_ranks: Vec<f64> = lda_scores.iter().map(rank_value).collect();
    let labels: Vec<bool> = cfkde.iter().map(|s| s.label.is_anomalous()).collect();
    let fused = fused_evaluate(&cf_ranks, &lda_ranks, &labels, (config.fused_grid, config.fused_grid)).stage("fused")?;

    let detectors = vec![
        finish("cbm", cbm).stage("baselines")?,
        finish("mkde", mkde).stage("baselines")?,
        finish("cfkde", cfkde).stage("baselines")?,
        finish("lda", lda_scores).stage("baselines")?,
    ];
    for d in &detectors {
        log::info!("{}: AUC {:.4} ({} unscored)", d.detector, d.auc, d.failures);
    }
    Ok(BaselineOutcome { main, detectors, fused })
}
