//! The joint composite behavioral model.
//!
//! Each user `u` mixes over communities with weights `pi[u]`. A community
//! `c` carries a topic distribution `theta[c]` and a venue distribution
//! `vartheta[c]`; each topic `z` is a word distribution `phi[z]`. A behavior
//! draws `c ~ pi[u]`, then `z ~ theta[c]` and `v ~ vartheta[c]`, then every
//! word of its tip from `phi[z]`.
//!
//! Parameters are inferred by collapsed Gibbs sampling over per-behavior
//! `(community, topic)` assignments ([`GibbsState`], [`train`]).

mod generate;
mod gibbs;
mod io;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use generate::{generate_corpus, generate_from_model, sample_model, CountDist, GeneratorConfig};
pub use gibbs::{CountTable, GibbsState};
pub use io::{read_model, write_model, IdTables, MODEL_FORMAT_VERSION};
pub use train::{train, train_on_corpus, TracePoint, TrainConfig, TrainedModel};

/// Dirichlet priors and latent dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Prior on each community's topic distribution.
    pub alpha: f64,
    /// Prior on each topic's word distribution.
    pub beta: f64,
    /// Prior on each user's community distribution.
    pub gamma: f64,
    /// Prior on each community's venue distribution.
    pub eta: f64,
    pub communities: usize,
    pub topics: usize,
}

impl Hyperparams {
    /// Fixed-value priors: `alpha = 50/Z`, `gamma = 50/C`, `beta = eta = 0.01`.
    pub fn new(communities: usize, topics: usize) -> Self {
        Hyperparams {
            alpha: 50.0 / topics as f64,
            beta: 0.01,
            gamma: 50.0 / communities as f64,
            eta: 0.01,
            communities,
            topics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.communities == 0 || self.topics == 0 {
            return Err(Error::InvalidArgument("community and topic counts must be >= 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("eta", self.eta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams::new(30, 20)
    }
}

/// How the topic conditional evaluates the word bag.
///
/// `Sequential` is the exact collapsed conditional: each repeated word and
/// each extra token moves the counts by one (rising factorials). `Literal`
/// holds the counts fixed across the product. The two agree whenever the
/// bag has at most one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordProduct {
    #[default]
    Sequential,
    Literal,
}

impl fmt::Display for WordProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WordProduct::Sequential => "sequential",
            WordProduct::Literal => "literal",
        })
    }
}

impl FromStr for WordProduct {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(WordProduct::Sequential),
            "literal" => Ok(WordProduct::Literal),
            other => Err(Error::Config(format!("unknown word product `{other}`"))),
        }
    }
}

/// Sizes of the observed id spaces a model is fitted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub users: usize,
    pub venues: usize,
    pub words: usize,
}

impl ModelDims {
    pub fn of(corpus: &crate::corpus::Corpus) -> Self {
        ModelDims {
            users: corpus.num_users(),
            venues: corpus.num_venues(),
            words: corpus.num_words(),
        }
    }
}

/// Estimated (or ground-truth) model parameters. Every row of every
/// matrix is a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbmModel {
    /// users x communities
    pub pi: Matrix,
    /// communities x topics
    pub theta: Matrix,
    /// communities x venues
    pub vartheta: Matrix,
    /// topics x words
    pub phi: Matrix,
    pub hyper: Hyperparams,
}

impl CbmModel {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            users: self.pi.rows(),
            venues: self.vartheta.cols(),
            words: self.phi.cols(),
        }
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        [&self.pi, &self.theta, &self.vartheta, &self.phi]
            .iter()
            .flat_map(|m| (0..m.rows()).map(move |r| (m.row(r).iter().sum::<f64>() - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    /// Element-wise mean of several models with identical shapes.
    pub fn average(models: &[CbmModel]) -> CbmModel {
        assert!(!models.is_empty(), "cannot average zero models");
        let mut acc = models[0].clone();
        for m in &models[1..] {
            acc.pi.add_scaled(&m.pi, 1.0);
            acc.theta.add_scaled(&m.theta, 1.0);
            acc.vartheta.add_scaled(&m.vartheta, 1.0);
            acc.phi.add_scaled(&m.phi, 1.0);
        }
        let k = 1.0 / models.len() as f64;
        for m in [&mut acc.pi, &mut acc.theta, &mut acc.vartheta, &mut acc.phi] {
            m.scale(k);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_priors() {
        let h = Hyperparams::default();
        assert_eq!((h.communities, h.topics), (30, 20));
        assert_eq!(h.alpha, 2.5);
        assert!((h.gamma - 50.0 / 30.0).abs() < 1e-15);
        assert_eq!((h.beta, h.eta), (0.01, 0.01));
        assert!(h.validate().is_ok());
        assert!(Hyperparams { beta: 0.0, ..h }.validate().is_err());
        assert!(Hyperparams::new(0, 3).validate().is_err());
    }
}
