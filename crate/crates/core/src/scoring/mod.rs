//! Anomaly scores for composite behaviors under a fitted model.
//!
//! * `S_l = -log10 P(v, D | u)`: how unlikely the behavior is for its user.
//! * `S_r = 1 - P(u | v, D)`: how unlikely the claimed user is as the
//!   author, normalized over a random reference set of users that always
//!   contains the claimant.
//!
//! The likelihood is `sum_c pi[u][c] vartheta[c][v] sum_z theta[c][z] g_z`
//! where `g_z` is the geometric mean of `phi[z][w]` over the word bag
//! (1 for an empty bag).

mod batch;
mod io;
mod threshold;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Behavior, Corpus, Label};
use crate::error::{Error, Result};
use crate::joint::CbmModel;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, log_sum_exp, seeded};

pub use batch::score_records;
pub use io::{write_scores, ScoreRow};
pub use threshold::{select_threshold, select_threshold_raw, CostPoint, ThresholdSelection};

/// Default size of the reference user set.
pub const REFERENCE_USERS: usize = 40;

/// Natural log of `P(v, D | u)`.
pub fn log_likelihood(model: &CbmModel, user: usize, venue: usize, words: &[usize]) -> f64 {
    let nc = model.hyper.communities;
    let nz = model.hyper.topics;
    let inv_len = if words.is_empty() { 0.0 } else { 1.0 / words.len() as f64 };
    let log_g: Vec<f64> = (0..nz)
        .map(|z| words.iter().map(|&w| model.phi.get(z, w).ln()).sum::<f64>() * inv_len)
        .collect();
    let mut terms = Vec::with_capacity(nc);
    let mut inner = Vec::with_capacity(nz);
    for c in 0..nc {
        inner.clear();
        inner.extend((0..nz).map(|z| model.theta.get(c, z).ln() + log_g[z]));
        terms.push(model.pi.get(user, c).ln() + model.vartheta.get(c, venue).ln() + log_sum_exp(&inner));
    }
    log_sum_exp(&terms)
}

/// `P(v, D | u)` for a behavior's claimed user.
pub fn behavior_likelihood(model: &CbmModel, b: &Behavior) -> f64 {
    log_likelihood(model, b.user, b.venue, &b.words).exp()
}

/// Logarithmic anomalous score, `-log10 P(v, D | u)`.
pub fn score_logarithmic(model: &CbmModel, b: &Behavior) -> f64 {
    (-log_likelihood(model, b.user, b.venue, &b.words) / std::f64::consts::LN_10).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// Proportional to each user's training activity (add-one smoothed).
    #[default]
    Empirical,
    Uniform,
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorMode::Empirical => "empirical",
            PriorMode::Uniform => "uniform",
        })
    }
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(PriorMode::Empirical),
            "uniform" => Ok(PriorMode::Uniform),
            other => Err(Error::Config(format!("unknown prior `{other}` (expected empirical, uniform)"))),
        }
    }
}

/// `P(u)`, a strictly positive probability vector over users.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPrior {
    probs: Vec<f64>,
    logs: Vec<f64>,
}

impl UserPrior {
    pub fn uniform(users: usize) -> Self {
        Self::from_weights(vec![1.0; users])
    }

    /// `(n_u + 1) / (N + U)` from per-user training counts.
    pub fn empirical(counts: &[usize]) -> Self {
        Self::from_weights(counts.iter().map(|&n| n as f64 + 1.0).collect())
    }

    pub fn build(mode: PriorMode, counts: &[usize]) -> Self {
        match mode {
            PriorMode::Empirical => Self::empirical(counts),
            PriorMode::Uniform => Self::uniform(counts.len()),
        }
    }

    fn from_weights(weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let logs = probs.iter().map(|p| p.ln()).collect();
        UserPrior { probs, logs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Draws the reference set: the claimed user plus `count - 1` others,
/// uniformly without replacement. With `count >= users` every user is used.
pub fn reference_users(users: usize, claimed: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= users {
        return (0..users).collect();
    }
    let mut rng = seeded(seed);
    let mut refs = Vec::with_capacity(count);
    refs.push(claimed);
    for i in sample_indices(&mut rng, users - 1, count.saturating_sub(1)).into_iter() {
        refs.push(if i >= claimed { i + 1 } else { i });
    }
    refs
}

/// Cached log-parameters for scoring many behaviors against one model.
#[derive(Debug, Clone)]
pub struct Scorer<'m> {
    model: &'m CbmModel,
    ln_pi: Matrix,
    ln_theta: Matrix,
    ln_vartheta: Matrix,
    ln_phi: Matrix,
}

fn ln_matrix(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for x in out.as_mut_slice() {
        *x = x.ln();
    }
    out
}

impl<'m> Scorer<'m> {
    pub fn new(model: &'m CbmModel) -> Self {
        Scorer {
            model,
            ln_pi: ln_matrix(&model.pi),
            ln_theta: ln_matrix(&model.theta),
            ln_vartheta: ln_matrix(&model.vartheta),
            ln_phi: ln_matrix(&model.phi),
        }
    }

    pub fn model(&self) -> &CbmModel {
        self.model
    }

    /// Per-community log factor of a `(venue, words)` pair, independent of
    /// the user: `ln vartheta[c][v] + ln sum_z theta[c][z] g_z`.
    fn content_factors(&self, venue: usize, words: &[usize]) -> Vec<f64> {
        let nz = self.model.hyper.topics;
        let inv_len = if words.is_empty() { 0.0 } else { 1.0 / words.len() as f64 };
        let log_g: Vec<f64> = (0..nz)
            .map(|z| words.iter().map(|&w| self.ln_phi.get(z, w)).sum::<f64>() * inv_len)
            .collect();
        let mut inner = vec![0.0; nz];
        (0..self.model.hyper.communities)
            .map(|c| {
                for (z, slot) in inner.iter_mut().enumerate() {
                    *slot = self.ln_theta.get(c, z) + log_g[z];
                }
                self.ln_vartheta.get(c, venue) + log_sum_exp(&inner)
            })
            .collect()
    }

    fn user_log_likelihood(&self, user: usize, factors: &[f64]) -> f64 {
        let terms: Vec<f64> = self.ln_pi.row(user).iter().zip(factors).map(|(a, b)| a + b).collect();
        log_sum_exp(&terms)
    }

    pub fn log_likelihood(&self, b: &Behavior) -> f64 {
        self.user_log_likelihood(b.user, &self.content_factors(b.venue, &b.words))
    }

    pub fn score_logarithmic(&self, b: &Behavior) -> f64 {
        (-self.log_likelihood(b) / std::f64::consts::LN_10).max(0.0)
    }

    /// Relative score of a block of behaviors claimed by one user; the
    /// block's likelihood under a candidate is the product of the
    /// per-behavior likelihoods.
    pub fn score_block(&self, block: &[&Behavior], prior: &UserPrior, reference_count: usize, seed: u64) -> Result<f64> {
        self.score_block_detail(block, prior, reference_count, seed).map(|s| s.s_r)
    }

    /// [`Scorer::score_block`] together with the log-odds against the
    /// claimant, `ln sum_{u' != u} P(., u') - ln P(., u)`. The log-odds is
    /// strictly increasing in the exact `S_r` and does not saturate, so it
    /// ranks blocks whose `S_r` rounds to 0 or 1.
    pub fn score_block_detail(
        &self,
        block: &[&Behavior],
        prior: &UserPrior,
        reference_count: usize,
        seed: u64,
    ) -> Result<BlockScore> {
        let first = block
            .first()
            .ok_or_else(|| Error::InvalidArgument("latency block is empty".into()))?;
        if reference_count == 0 {
            return Err(Error::InvalidArgument("reference_count must be >= 1".into()));
        }
        let claimed = first.user;
        if block.iter().any(|b| b.user != claimed) {
            return Err(Error::InvalidArgument("all behaviors of a block must claim the same user".into()));
        }
        let users = self.model.pi.rows();
        if prior.len() != users {
            return Err(Error::LengthMismatch { left: prior.len(), right: users });
        }
        let factors: Vec<Vec<f64>> = block.iter().map(|b| self.content_factors(b.venue, &b.words)).collect();
        let refs = reference_users(users, claimed, reference_count, seed);
        let joint: Vec<f64> = refs
            .iter()
            .map(|&u| {
                let mut total = prior.logs[u];
                for f in &factors {
                    total += self.user_log_likelihood(u, f);
                }
                total
            })
            .collect();
        let at = refs.iter().position(|&u| u == claimed).expect("claimed user is a reference");
        let own = joint[at];
        let posterior = (own - log_sum_exp(&joint)).exp();
        let others: Vec<f64> = joint.iter().enumerate().filter(|&(i, _)| i != at).map(|(_, &x)| x).collect();
        Ok(BlockScore {
            s_r: (1.0 - posterior).clamp(0.0, 1.0),
            log_odds: log_sum_exp(&others) - own,
        })
    }

    pub fn score_relative(&self, b: &Behavior, prior: &UserPrior, reference_count: usize, seed: u64) -> f64 {
        self.score_block(&[b], prior, reference_count, seed)
            .expect("single-behavior block is valid")
    }
}

/// `S_r` for one behavior. See [`Scorer::score_block`].
pub fn score_relative(
    model: &CbmModel,
    b: &Behavior,
    prior: &UserPrior,
    reference_count: usize,
    seed: u64,
) -> Result<f64> {
    Scorer::new(model).score_block(&[b], prior, reference_count, seed)
}

/// `S_r` over `k` consecutive behaviors of one claimed user.
pub fn score_latency_k(
    model: &CbmModel,
    block: &[&Behavior],
    prior: &UserPrior,
    reference_count: usize,
    seed: u64,
) -> Result<f64> {
    Scorer::new(model).score_block(block, prior, reference_count, seed)
}

/// Relative score of a block and its non-saturating log-odds form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockScore {
    pub s_r: f64,
    pub log_odds: f64,
}

/// Scores of one test behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBehavior {
    pub index: usize,
    pub user: usize,
    pub s_l: f64,
    pub s_r: f64,
    /// Ranking form of `s_r`; see [`Scorer::score_block_detail`].
    pub log_odds: f64,
    pub label: Label,
    /// Scored on the venue alone because the tip had no surviving words.
    pub empty_words: bool,
}

/// Scores `indices` of `corpus` in parallel. Each behavior's reference set
/// is drawn from `derive_seed(seed, index)`, so results do not depend on
/// evaluation order.
pub fn score_behaviors(
    model: &CbmModel,
    corpus: &Corpus,
    indices: &[usize],
    prior: &UserPrior,
    reference_count: usize,
    seed: u64,
) -> Vec<ScoredBehavior> {
    let scorer = Scorer::new(model);
    indices
        .par_iter()
        .map(|&i| {
            let b = corpus.behavior(i);
            let r = scorer
                .score_block_detail(&[b], prior, reference_count, derive_seed(seed, i as u64))
                .expect("single-behavior block is valid");
            ScoredBehavior {
                index: i,
                user: b.user,
                s_l: scorer.score_logarithmic(b),
                s_r: r.s_r,
                log_odds: r.log_odds,
                label: b.label,
                empty_words: b.words.is_empty(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::Hyperparams;

    fn single_component(venues: usize, words: usize) -> CbmModel {
        let mut hyper = Hyperparams::new(1, 1);
        hyper.communities = 1;
        CbmModel {
            pi: Matrix::from_rows(&[vec![1.0], vec![1.0]]),
            theta: Matrix::from_rows(&[vec![1.0]]),
            vartheta: Matrix::from_vec(1, venues, vec![1.0 / venues as f64; venues]),
            phi: Matrix::from_vec(1, words, (0..words).map(|w| (w + 1) as f64).collect::<Vec<_>>())
                .normalized_rows(),
            hyper,
        }
    }

    impl Matrix {
        fn normalized_rows(mut self) -> Matrix {
            for r in 0..self.rows() {
                let s: f64 = self.row(r).iter().sum();
                for x in self.row_mut(r) {
                    *x /= s;
                }
            }
            self
        }
    }

    #[test]
    fn single_component_likelihood() {
        let m = single_component(4, 3);
        let b = Behavior::new(0, 2, vec![0, 2], 0);
        let expected = 0.25 * (m.phi.get(0, 0) * m.phi.get(0, 2)).sqrt();
        assert!((behavior_likelihood(&m, &b) - expected).abs() < 1e-15);
        let empty = Behavior::new(0, 1, vec![], 0);
        assert!((behavior_likelihood(&m, &empty) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pure_community_empty_bag() {
        // pi_u = [1, 0], community 0 uniform over 4 venues, empty D -> 0.25.
        let mut m = single_component(4, 2);
        m.hyper.communities = 2;
        m.hyper.topics = 1;
        m.pi = Matrix::from_rows(&[vec![1.0, 0.0]]);
        m.theta = Matrix::from_rows(&[vec![1.0], vec![1.0]]);
        m.vartheta = Matrix::from_rows(&[vec![0.25; 4], vec![1.0, 0.0, 0.0, 0.0]]);
        let b = Behavior::new(0, 3, vec![], 0);
        assert!((behavior_likelihood(&m, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn log_score_values() {
        let mut m = single_component(100, 2);
        let b = Behavior::new(0, 5, vec![], 0);
        assert!((score_logarithmic(&m, &b) - 2.0).abs() < 1e-12);
        m.vartheta = Matrix::from_vec(1, 100, (0..100).map(|v| if v == 5 { 1.0 } else { 0.0 }).collect());
        assert_eq!(score_logarithmic(&m, &b), 0.0);
    }

    #[test]
    fn relative_score_edge_cases() {
        let m = single_component(4, 3);
        let b = Behavior::new(0, 1, vec![1], 0);
        // Reference set of one: the claimant alone.
        let s = score_relative(&m, &b, &UserPrior::uniform(2), 1, 5).unwrap();
        assert_eq!(s, 0.0);
        // Two users with identical likelihoods and a uniform prior.
        let s = score_relative(&m, &b, &UserPrior::uniform(2), 40, 5).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reference_set_contains_claimant() {
        for seed in 0..50 {
            let refs = reference_users(100, 37, 40, seed);
            assert_eq!(refs.len(), 40);
            assert!(refs.contains(&37));
            let mut sorted = refs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 40);
        }
        assert_eq!(reference_users(5, 2, 40, 0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn latency_block_rules() {
        let m = single_component(4, 3);
        let prior = UserPrior::uniform(2);
        assert!(score_latency_k(&m, &[], &prior, 40, 0).is_err());
        let a = Behavior::new(0, 1, vec![1], 0);
        let b = Behavior::new(1, 1, vec![1], 1);
        assert!(score_latency_k(&m, &[&a, &b], &prior, 40, 0).is_err());
        let one = score_latency_k(&m, &[&a], &prior, 40, 3).unwrap();
        let rel = score_relative(&m, &a, &prior, 40, 3).unwrap();
        assert_eq!(one.to_bits(), rel.to_bits());
    }

    #[test]
    fn empirical_prior_is_positive() {
        let p = UserPrior::empirical(&[0, 3, 1]);
        assert!(p.probs().iter().all(|&x| x > 0.0));
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.probs()[1] - 4.0 / 7.0).abs() < 1e-15);
    }
}
