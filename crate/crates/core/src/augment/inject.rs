use std::collections::BTreeSet;

use super::{FrequencyTensor, TuckerFactors};
use crate::corpus::{Behavior, Corpus};
use crate::matrix::Matrix;

/// Words carried by an injected behavior.
const INJECTED_WORDS: usize = 3;

/// The `n` most probable words of `topic`, ties to the lower word id.
pub fn top_words(phi: &Matrix, topic: usize, n: usize) -> Vec<usize> {
    let row = phi.row(topic);
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    ids.truncate(n);
    ids
}

/// Training behaviors of `train` followed by up to `top_k` synthetic
/// behaviors per user.
///
/// A user's candidates are the (venue, topic) cells with positive count for
/// at least one friend, ranked by the reconstruction `A*` (ties to the lower
/// venue, then topic). Each injected behavior carries the topic's top three
/// words and the largest training timestamp.
pub fn inject_latent_behaviors(
    corpus: &Corpus,
    train: &[usize],
    tensor: &FrequencyTensor,
    factors: &TuckerFactors,
    phi: &Matrix,
    top_k: usize,
) -> Vec<Behavior> {
    let mut out: Vec<Behavior> = train.iter().map(|&i| corpus.behavior(i).clone()).collect();
    let timestamp = out.iter().map(|b| b.timestamp).max().unwrap_or(0);
    let mut support: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); tensor.dims.0];
    for (&(u, v, z), &n) in &tensor.entries {
        if n > 0 {
            support[u].insert((v, z));
        }
    }
    for user in 0..corpus.num_users() {
        let mut candidates: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &f in corpus.friends_of(user) {
            candidates.extend(support[f].iter().copied());
        }
        let mut ranked: Vec<(f64, usize, usize)> =
            candidates.into_iter().map(|(v, z)| (factors.reconstruct(user, v, z), v, z)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        for &(_, v, z) in ranked.iter().take(top_k) {
            let mut b = Behavior::new(user, v, top_words(phi, z, INJECTED_WORDS), timestamp);
            b.synthetic = true;
            out.push(b);
        }
    }
    out
}
