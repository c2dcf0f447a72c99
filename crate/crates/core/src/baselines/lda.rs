use rand::Rng;
use serde::{Deserialize, Serialize};

use super::js_divergence;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{sample_weighted, seeded};

/// Sampling passes used to fold a new document into a trained model.
pub const FOLD_IN_PASSES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaConfig {
    pub fn new(topics: usize, iterations: usize, seed: u64) -> Self {
        LdaConfig { topics, iterations, seed }
    }

    /// Symmetric document-topic prior `50 / K`.
    pub fn alpha(&self) -> f64 {
        50.0 / self.topics as f64
    }

    pub fn beta(&self) -> f64 {
        0.01
    }
}

/// Final state of a collapsed Gibbs LDA run.
#[derive(Debug, Clone)]
pub struct LdaFit {
    /// Topic-word distributions, `K x W`.
    pub phi: Matrix,
    /// Per-document topic counts `n_dk`.
    pub doc_topic: Vec<Vec<u32>>,
    /// Topic of every token, aligned with the input documents.
    pub assignments: Vec<Vec<usize>>,
    pub alpha: f64,
    pub beta: f64,
}

impl LdaFit {
    /// Smoothed `(n_dk + alpha) / (n_d + K alpha)`.
    pub fn doc_proportions(&self, doc: usize) -> Vec<f64> {
        smoothed_proportions(&self.doc_topic[doc].iter().map(|&n| n as f64).collect::<Vec<_>>(), self.alpha)
    }
}

fn smoothed_proportions(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    counts.iter().map(|&n| (n + alpha) / total).collect()
}

/// Collapsed Gibbs LDA over token-id documents with vocabulary size `vocab`.
pub fn fit_lda(docs: &[Vec<usize>], vocab: usize, config: &LdaConfig) -> Result<LdaFit> {
    let k = config.topics;
    if k == 0 {
        return Err(Error::InvalidArgument("LDA needs at least one topic".into()));
    }
    if let Some(&w) = docs.iter().flatten().find(|&&w| w >= vocab) {
        return Err(Error::InvalidArgument(format!("token id {w} outside vocabulary of {vocab}")));
    }
    let (alpha, beta) = (config.alpha(), config.beta());
    let w_beta = vocab as f64 * beta;
    let mut rng = seeded(config.seed);
    let mut n_dk = vec![vec![0u32; k]; docs.len()];
    let mut n_kw = vec![0u32; k * vocab];
    let mut n_k = vec![0u64; k];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    n_dk[d][t] += 1;
                    n_kw[t * vocab + w] += 1;
                    n_k[t] += 1;
                    t
                })
                .collect()
        })
        .collect();
    let mut weights = vec![0.0; k];
    for _ in 0..config.iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                n_dk[d][old] -= 1;
                n_kw[old * vocab + w] -= 1;
                n_k[old] -= 1;
                for t in 0..k {
                    weights[t] = (n_dk[d][t] as f64 + alpha) * (n_kw[t * vocab + w] as f64 + beta)
                        / (n_k[t] as f64 + w_beta);
                }
                let new = sample_weighted(&mut rng, &weights);
                z[d][i] = new;
                n_dk[d][new] += 1;
                n_kw[new * vocab + w] += 1;
                n_k[new] += 1;
            }
        }
    }
    let mut phi = Matrix::zeros(k, vocab);
    for t in 0..k {
        let denom = n_k[t] as f64 + w_beta;
        for w in 0..vocab {
            phi.set(t, w, (n_kw[t * vocab + w] as f64 + beta) / denom);
        }
    }
    Ok(LdaFit {
        phi,
        doc_topic: n_dk,
        assignments: z,
        alpha,
        beta,
    })
}

/// Per-user historical topic proportions.
#[derive(Debug, Clone)]
pub struct LdaModel {
    pub phi: Matrix,
    /// `users x K`; rows of absent users are uniform.
    pub theta_his: Matrix,
    pub alpha: f64,
    /// Users without any training words, own or friends'.
    pub absent: Vec<bool>,
}

impl LdaModel {
    pub fn topics(&self) -> usize {
        self.phi.rows()
    }
}

/// Trains LDA on one document per user: the training words of the user and
/// of their friends.
pub fn lda_train(corpus: &Corpus, train: &[usize], config: &LdaConfig) -> Result<LdaModel> {
    if config.topics < 2 {
        return Err(Error::InvalidArgument(format!("LDA baseline needs K >= 2, got {}", config.topics)));
    }
    let mut own: Vec<Vec<usize>> = vec![Vec::new(); corpus.num_users()];
    for &i in train {
        let b = corpus.behavior(i);
        own[b.user].extend_from_slice(&b.words);
    }
    let docs: Vec<Vec<usize>> = (0..corpus.num_users())
        .map(|u| {
            let mut doc = own[u].clone();
            for &f in corpus.friends_of(u) {
                doc.extend_from_slice(&own[f]);
            }
            doc
        })
        .collect();
    let fit = fit_lda(&docs, corpus.num_words(), config)?;
    let k = config.topics;
    let mut theta_his = Matrix::zeros(docs.len(), k);
    let mut absent = vec![false; docs.len()];
    for (u, doc) in docs.iter().enumerate() {
        if doc.is_empty() {
            absent[u] = true;
            theta_his.row_mut(u).fill(1.0 / k as f64);
        } else {
            theta_his.row_mut(u).copy_from_slice(&fit.doc_proportions(u));
        }
    }
    Ok(LdaModel {
        phi: fit.phi,
        theta_his,
        alpha: fit.alpha,
        absent,
    })
}

/// Topic proportions of a new word bag with `phi` held fixed.
///
/// Tokens are resampled with weight `phi_kw (n_k + alpha)` (own token
/// excluded) for [`FOLD_IN_PASSES`] passes; the pass-averaged counts give
/// `(n_k + alpha) / sum_i (n_i + alpha)`.
pub fn lda_topic_proportion(model: &LdaModel, words: &[usize], seed: u64) -> Vec<f64> {
    let k = model.topics();
    if words.is_empty() {
        return vec![1.0 / k as f64; k];
    }
    let alpha = model.alpha;
    let mut rng = seeded(seed);
    let mut counts = vec![0u32; k];
    let mut weights = vec![0.0; k];
    let mut z: Vec<usize> = words
        .iter()
        .map(|&w| {
            for t in 0..k {
                weights[t] = model.phi.get(t, w);
            }
            let t = sample_weighted(&mut rng, &weights);
            counts[t] += 1;
            t
        })
        .collect();
    let mut mean = vec![0.0; k];
    for _ in 0..FOLD_IN_PASSES {
        for (i, &w) in words.iter().enumerate() {
            counts[z[i]] -= 1;
            for t in 0..k {
                weights[t] = model.phi.get(t, w) * (counts[t] as f64 + alpha);
            }
            z[i] = sample_weighted(&mut rng, &weights);
            counts[z[i]] += 1;
        }
        for (m, &c) in mean.iter_mut().zip(&counts) {
            *m += c as f64;
        }
    }
    for m in &mut mean {
        *m /= FOLD_IN_PASSES as f64;
    }
    smoothed_proportions(&mean, alpha)
}

/// JS divergence between a user's history and a new word bag.
pub fn lda_score(model: &LdaModel, user: usize, words: &[usize], seed: u64) -> Result<f64> {
    let new = lda_topic_proportion(model, words, seed);
    js_divergence(model.theta_his.row(user), &new)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_model(k: usize, vocab: usize) -> LdaModel {
        let mut phi = Matrix::zeros(k, vocab);
        for w in 0..vocab {
            phi.set(w % k, w, 1.0);
        }
        for t in 0..k {
            let s: f64 = phi.row(t).iter().sum();
            for x in phi.row_mut(t) {
                *x /= s;
            }
        }
        LdaModel {
            phi,
            theta_his: Matrix::from_vec(1, k, vec![1.0 / k as f64; k]),
            alpha: 50.0 / k as f64,
            absent: vec![false],
        }
    }

    #[test]
    fn fold_in_with_single_topic_support() {
        let model = one_hot_model(2, 4);
        // words 0 and 2 belong to topic 0 only
        let words = [0, 2, 0, 2, 0];
        let theta = lda_topic_proportion(&model, &words, 3);
        let n = words.len() as f64;
        assert!((theta[0] - (n + 25.0) / (n + 50.0)).abs() < 1e-12);
        assert!((theta[1] - 25.0 / (n + 50.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_bag_is_uniform() {
        let model = one_hot_model(4, 8);
        assert_eq!(lda_topic_proportion(&model, &[], 0), vec![0.25; 4]);
    }

    #[test]
    fn proportions_sum_to_one() {
        let docs = vec![vec![0, 1, 2, 1], vec![3, 4, 3, 4, 5], vec![]];
        let fit = fit_lda(&docs, 6, &LdaConfig::new(3, 50, 9)).unwrap();
        for t in 0..3 {
            assert!((fit.phi.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let model = LdaModel {
            phi: fit.phi.clone(),
            theta_his: Matrix::zeros(1, 3),
            alpha: fit.alpha,
            absent: vec![false],
        };
        let theta = lda_topic_proportion(&model, &[0, 3, 5], 1);
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((fit.doc_proportions(2).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_vocabularies_split() {
        let mut docs = Vec::new();
        for i in 0..20 {
            docs.push((0..30).map(|j| (i + j) % 5).collect::<Vec<_>>());
            docs.push((0..30).map(|j| 5 + (i + j) % 5).collect::<Vec<_>>());
        }
        let mut cfg = LdaConfig::new(2, 100, 4);
        cfg.topics = 2;
        let fit = fit_lda(&docs, 10, &cfg).unwrap();
        let top = |w: usize| if fit.phi.get(0, w) > fit.phi.get(1, w) { 0 } else { 1 };
        assert!((0..5).all(|w| top(w) == top(0)));
        assert!((5..10).all(|w| top(w) != top(0)));
    }

    #[test]
    fn deterministic() {
        let docs = vec![vec![0, 1, 2, 1], vec![3, 4, 3]];
        let a = fit_lda(&docs, 5, &LdaConfig::new(2, 20, 7)).unwrap();
        let b = fit_lda(&docs, 5, &LdaConfig::new(2, 20, 7)).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.phi, b.phi);
    }
}
