use serde::{Deserialize, Serialize};

use super::{CbmModel, GibbsState, Hyperparams, ModelDims, WordProduct};
use crate::corpus::{Behavior, Corpus};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scoring::log_likelihood;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub lag: usize,
    pub seed: u64,
    pub word_product: WordProduct,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            burn_in: 500,
            lag: 50,
            seed: 0,
            word_product: WordProduct::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.lag == 0 {
            return Err(Error::InvalidArgument("lag must be >= 1".into()));
        }
        Ok(())
    }
}

/// Held-in fit at one accumulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Mean `-log10 P(v, D | u)` over the training behaviors.
    pub mean_log_score: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Average of the accumulated per-step estimates.
    pub model: CbmModel,
    pub trace: Vec<TracePoint>,
    pub state: GibbsState,
    pub accumulated: usize,
}

/// Runs the collapsed Gibbs sampler over `behaviors`.
///
/// After iteration `burn_in`, every iteration divisible by `lag` contributes
/// its estimate to a running sum; the result is the average. If no
/// iteration qualifies, the final state's estimate is returned.
pub fn train(
    behaviors: &[Behavior],
    dims: ModelDims,
    hyper: &Hyperparams,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    hyper.validate()?;
    config.validate()?;
    let mut rng = seeded(config.seed);
    let mut state = GibbsState::random(behaviors, dims, hyper, config.word_product, &mut rng);
    let mut sum: Option<CbmModel> = None;
    let mut accumulated = 0usize;
    let mut trace = Vec::new();
    for iteration in 1..=config.iterations {
        state.sweep(hyper, behaviors, &mut rng);
        if iteration > config.burn_in && iteration % config.lag == 0 {
            let estimate = state.estimate(hyper);
            trace.push(TracePoint {
                iteration,
                mean_log_score: mean_log_score(&estimate, behaviors),
            });
            log::debug!("gibbs iteration {iteration}: held-in mean S_l {:.4}", trace.last().unwrap().mean_log_score);
            accumulated += 1;
            sum = Some(match sum {
                None => estimate,
                Some(mut acc) => {
                    acc.pi.add_scaled(&estimate.pi, 1.0);
                    acc.theta.add_scaled(&estimate.theta, 1.0);
                    acc.vartheta.add_scaled(&estimate.vartheta, 1.0);
                    acc.phi.add_scaled(&estimate.phi, 1.0);
                    acc
                }
            });
        }
    }
    let model = match sum {
        Some(mut acc) => {
            if accumulated > 1 {
                let k = 1.0 / accumulated as f64;
                for m in [&mut acc.pi, &mut acc.theta, &mut acc.vartheta, &mut acc.phi] {
                    m.scale(k);
                }
            }
            acc
        }
        None => state.estimate(hyper),
    };
    Ok(TrainedModel {
        model,
        trace,
        state,
        accumulated,
    })
}

/// Trains on the behaviors of `corpus` selected by `indices`.
pub fn train_on_corpus(
    corpus: &Corpus,
    indices: &[usize],
    hyper: &Hyperparams,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let behaviors: Vec<Behavior> = indices.iter().map(|&i| corpus.behavior(i).clone()).collect();
    train(&behaviors, ModelDims::of(corpus), hyper, config)
}

fn mean_log_score(model: &CbmModel, behaviors: &[Behavior]) -> f64 {
    if behaviors.is_empty() {
        return 0.0;
    }
    let total: f64 = behaviors
        .iter()
        .map(|b| -log_likelihood(model, b.user, b.venue, &b.words) / std::f64::consts::LN_10)
        .sum();
    total / behaviors.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Behavior>, ModelDims) {
        let b = (0..40)
            .map(|i| Behavior::new(i % 4, i % 3, vec![i % 5, (i + 1) % 5], i as i64))
            .collect();
        (b, ModelDims { users: 4, venues: 3, words: 5 })
    }

    #[test]
    fn rejects_bad_schedule() {
        let (b, d) = toy();
        let cfg = TrainConfig {
            iterations: 10,
            burn_in: 10,
            ..TrainConfig::default()
        };
        assert!(train(&b, d, &Hyperparams::new(2, 2), &cfg).is_err());
    }

    #[test]
    fn single_accumulation_equals_that_estimate() {
        let (b, d) = toy();
        let hyper = Hyperparams::new(2, 3);
        let cfg = TrainConfig {
            iterations: 15,
            burn_in: 10,
            lag: 5,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(&b, d, &hyper, &cfg).unwrap();
        assert_eq!(out.accumulated, 1);
        assert_eq!(out.model, out.state.estimate(&hyper));
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].iteration, 15);
    }

    #[test]
    fn deterministic_and_normalized() {
        let (b, d) = toy();
        let hyper = Hyperparams::new(2, 3);
        let cfg = TrainConfig {
            iterations: 30,
            burn_in: 10,
            lag: 5,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&b, d, &hyper, &cfg).unwrap();
        let c = train(&b, d, &hyper, &cfg).unwrap();
        assert_eq!(a.model, c.model);
        assert_eq!(a.accumulated, 4);
        assert!(a.model.max_row_sum_error() < 1e-9);
        assert!(a.trace.iter().all(|t| t.mean_log_score.is_finite() && t.mean_log_score > 0.0));
    }
}
