//! Latent-behavior augmentation for sparse users.
//!
//! Training tips get an LDA topic, giving a user x venue x topic frequency
//! tensor. A socially regularized Tucker decomposition reconstructs it, and
//! each user receives the highest-scoring (venue, topic) cells seen among
//! their friends as synthetic training behaviors.

mod inject;
mod io;
mod tucker;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_lda, LdaConfig};
use crate::corpus::{Behavior, Corpus};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use inject::{inject_latent_behaviors, top_words};
pub use io::{read_factors, read_tensor, write_factors, write_tensor, write_trace};
pub use tucker::{tucker_decompose, tucker_decompose_dense, tucker_gradient, tucker_objective, Dense3, SocialForm, TuckerConfig, TuckerFactors};

/// Topic of each training behavior plus the topic-word distributions.
#[derive(Debug, Clone)]
pub struct TopicAssignment {
    /// Aligned with the training indices; `None` for empty word bags.
    pub topics: Vec<Option<usize>>,
    /// `topics x words`.
    pub phi: Matrix,
}

impl TopicAssignment {
    pub fn num_topics(&self) -> usize {
        self.phi.rows()
    }
}

/// Runs LDA with one document per training behavior and gives each behavior
/// the topic holding most of its tokens (ties to the lower id).
pub fn assign_topics(
    corpus: &Corpus,
    train: &[usize],
    topics: usize,
    iterations: usize,
    seed: u64,
) -> Result<TopicAssignment> {
    if topics == 0 {
        return Err(Error::InvalidArgument("topic assignment needs at least one topic".into()));
    }
    let docs: Vec<Vec<usize>> = train.iter().map(|&i| corpus.behavior(i).words.clone()).collect();
    let fit = fit_lda(&docs, corpus.num_words(), &LdaConfig::new(topics, iterations, seed))?;
    let assigned = fit
        .doc_topic
        .iter()
        .zip(&docs)
        .map(|(counts, doc)| {
            if doc.is_empty() {
                return None;
            }
            let mut best = 0;
            for (t, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = t;
                }
            }
            Some(best)
        })
        .collect();
    Ok(TopicAssignment {
        topics: assigned,
        phi: fit.phi,
    })
}

/// Sparse non-negative counts `A(user, venue, topic)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTensor {
    pub dims: (usize, usize, usize),
    pub entries: BTreeMap<(usize, usize, usize), u32>,
}

impl FrequencyTensor {
    pub fn new(dims: (usize, usize, usize)) -> Self {
        FrequencyTensor {
            dims,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, user: usize, venue: usize, topic: usize) -> u32 {
        self.entries.get(&(user, venue, topic)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, user: usize, venue: usize, topic: usize) {
        assert!(user < self.dims.0 && venue < self.dims.1 && topic < self.dims.2, "tensor index out of range");
        *self.entries.entry((user, venue, topic)).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.entries.values().map(|&n| n as u64).sum()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> Dense3 {
        let mut d = Dense3::zeros([self.dims.0, self.dims.1, self.dims.2]);
        for (&(u, v, z), &n) in &self.entries {
            d.set(u, v, z, n as f64);
        }
        d
    }
}

/// Counts training behaviors per (user, venue, topic); behaviors without a
/// topic are skipped.
pub fn build_tensor(corpus: &Corpus, train: &[usize], assignment: &TopicAssignment) -> Result<FrequencyTensor> {
    if assignment.topics.len() != train.len() {
        return Err(Error::LengthMismatch {
            left: train.len(),
            right: assignment.topics.len(),
        });
    }
    let mut tensor = FrequencyTensor::new((corpus.num_users(), corpus.num_venues(), assignment.num_topics()));
    for (&i, topic) in train.iter().zip(&assignment.topics) {
        if let Some(z) = *topic {
            let b = corpus.behavior(i);
            tensor.add(b.user, b.venue, z);
        }
    }
    Ok(tensor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub lda_topics: usize,
    pub lda_iterations: usize,
    pub tucker: TuckerConfig,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            lda_topics: 10,
            lda_iterations: 200,
            tucker: TuckerConfig::default(),
            top_k: 20,
            seed: 0,
        }
    }
}

/// Everything produced by one augmentation pass.
#[derive(Debug, Clone)]
pub struct Augmentation {
    /// Original training behaviors followed by the synthetic ones.
    pub behaviors: Vec<Behavior>,
    pub injected: usize,
    pub tensor: FrequencyTensor,
    pub factors: TuckerFactors,
    pub topics: TopicAssignment,
}

/// Topic assignment, tensor construction, decomposition and injection.
pub fn augment_training(corpus: &Corpus, train: &[usize], config: &AugmentConfig) -> Result<Augmentation> {
    let topics = assign_topics(
        corpus,
        train,
        config.lda_topics,
        config.lda_iterations,
        crate::rng::derive_seed(config.seed, 0),
    )?;
    let tensor = build_tensor(corpus, train, &topics)?;
    let friends: Vec<(usize, usize)> = corpus.friend_pairs().iter().copied().collect();
    let mut tucker = config.tucker.clone();
    tucker.seed = crate::rng::derive_seed(config.seed, 1);
    tucker.dims = (
        tucker.dims.0.min(tensor.dims.0),
        tucker.dims.1.min(tensor.dims.1),
        tucker.dims.2.min(tensor.dims.2),
    );
    let factors = tucker_decompose(&tensor, &friends, &tucker)?;
    let behaviors = inject_latent_behaviors(corpus, train, &tensor, &factors, &topics.phi, config.top_k);
    let injected = behaviors.len() - train.len();
    log::info!("augmentation injected {injected} latent behaviors");
    Ok(Augmentation {
        behaviors,
        injected,
        tensor,
        factors,
        topics,
    })
}
