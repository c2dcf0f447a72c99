use rand::Rng;

use super::{CbmModel, Hyperparams, ModelDims, WordProduct};
use crate::corpus::Behavior;
use crate::matrix::Matrix;
use crate::rng::sample_weighted;

/// Dense non-negative count table with cached row sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
    row_sums: Vec<u64>,
}

impl CountTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        CountTable {
            rows,
            cols,
            data: vec![0; rows * cols],
            row_sums: vec![0; rows],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row_sum(&self, r: usize) -> u64 {
        self.row_sums[r]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn total(&self) -> u64 {
        self.row_sums.iter().sum()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    fn inc(&mut self, r: usize, c: usize) {
        self.data[r * self.cols + c] += 1;
        self.row_sums[r] += 1;
    }

    #[inline]
    fn dec(&mut self, r: usize, c: usize) {
        let cell = &mut self.data[r * self.cols + c];
        debug_assert!(*cell > 0, "count underflow at ({r}, {c})");
        *cell -= 1;
        self.row_sums[r] -= 1;
    }

    /// True when every cached row sum equals the recomputed one.
    pub fn row_sums_consistent(&self) -> bool {
        (0..self.rows).all(|r| self.row(r).iter().map(|&x| u64::from(x)).sum::<u64>() == self.row_sums[r])
    }

    /// Smoothed, row-normalized probabilities `(n + prior) / (sum + cols * prior)`.
    pub fn smoothed(&self, prior: f64) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let denom = self.row_sums[r] as f64 + self.cols as f64 * prior;
            for (out, &n) in m.row_mut(r).iter_mut().zip(self.row(r)) {
                *out = (f64::from(n) + prior) / denom;
            }
        }
        m
    }
}

/// Collapsed Gibbs sampler state: one `(community, topic)` pair per
/// training behavior plus the four count tables they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    dims: ModelDims,
    assignments: Vec<(usize, usize)>,
    /// users x communities
    pub n_uc: CountTable,
    /// communities x topics
    pub n_cz: CountTable,
    /// communities x venues
    pub n_cv: CountTable,
    /// topics x words
    pub n_zw: CountTable,
    word_product: WordProduct,
}

impl GibbsState {
    /// Builds a state from explicit assignments, one per behavior.
    pub fn from_assignments(
        behaviors: &[Behavior],
        dims: ModelDims,
        hyper: &Hyperparams,
        assignments: Vec<(usize, usize)>,
        word_product: WordProduct,
    ) -> Self {
        assert_eq!(behaviors.len(), assignments.len(), "one assignment per behavior");
        let (nc, nz) = (hyper.communities, hyper.topics);
        let mut state = GibbsState {
            dims,
            assignments,
            n_uc: CountTable::new(dims.users, nc),
            n_cz: CountTable::new(nc, nz),
            n_cv: CountTable::new(nc, dims.venues),
            n_zw: CountTable::new(nz, dims.words),
            word_product,
        };
        for (i, b) in behaviors.iter().enumerate() {
            let (c, z) = state.assignments[i];
            assert!(c < nc && z < nz, "assignment out of range");
            state.add(b, c, z);
        }
        state
    }

    /// Uniformly random initial assignments.
    pub fn random<R: Rng + ?Sized>(
        behaviors: &[Behavior],
        dims: ModelDims,
        hyper: &Hyperparams,
        word_product: WordProduct,
        rng: &mut R,
    ) -> Self {
        let assignments = behaviors
            .iter()
            .map(|_| {
                (
                    rng.random_range(0..hyper.communities),
                    rng.random_range(0..hyper.topics),
                )
            })
            .collect();
        Self::from_assignments(behaviors, dims, hyper, assignments, word_product)
    }

    pub fn assignments(&self) -> &[(usize, usize)] {
        &self.assignments
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn word_product(&self) -> WordProduct {
        self.word_product
    }

    fn add(&mut self, b: &Behavior, c: usize, z: usize) {
        self.n_uc.inc(b.user, c);
        self.n_cz.inc(c, z);
        self.n_cv.inc(c, b.venue);
        for &w in &b.words {
            self.n_zw.inc(z, w);
        }
    }

    fn remove(&mut self, b: &Behavior, c: usize, z: usize) {
        self.n_uc.dec(b.user, c);
        self.n_cz.dec(c, z);
        self.n_cv.dec(c, b.venue);
        for &w in &b.words {
            self.n_zw.dec(z, w);
        }
    }

    /// Removes behavior `index` from the counts (the "all but this one"
    /// view the conditionals expect). Pair with [`GibbsState::restore`].
    pub fn exclude(&mut self, behaviors: &[Behavior], index: usize) {
        let (c, z) = self.assignments[index];
        self.remove(&behaviors[index], c, z);
    }

    /// Re-adds behavior `index` with a (possibly new) assignment.
    pub fn restore(&mut self, behaviors: &[Behavior], index: usize, c: usize, z: usize) {
        self.assignments[index] = (c, z);
        self.add(&behaviors[index], c, z);
    }

    /// Unnormalized community weights for a behavior whose own counts have
    /// been excluded, given its current topic `z`:
    ///
    /// `(n_uc + gamma) * (n_cz + alpha) / (n_c. + Z alpha) * (n_cv + eta) / (n_c. + V eta)`
    pub fn community_weights(&self, hyper: &Hyperparams, b: &Behavior, z: usize, out: &mut Vec<f64>) {
        out.clear();
        let z_mass = hyper.topics as f64 * hyper.alpha;
        let v_mass = self.dims.venues as f64 * hyper.eta;
        for c in 0..hyper.communities {
            let user = f64::from(self.n_uc.get(b.user, c)) + hyper.gamma;
            let topic = (f64::from(self.n_cz.get(c, z)) + hyper.alpha) / (self.n_cz.row_sum(c) as f64 + z_mass);
            let venue =
                (f64::from(self.n_cv.get(c, b.venue)) + hyper.eta) / (self.n_cv.row_sum(c) as f64 + v_mass);
            out.push(user * topic * venue);
        }
    }

    /// Unnormalized topic weights for an excluded behavior in community
    /// `c`. Evaluated in log space and rescaled so the largest weight is 1;
    /// an empty word bag leaves only the `(n_cz + alpha)` factor.
    pub fn topic_weights(&self, hyper: &Hyperparams, b: &Behavior, c: usize, out: &mut Vec<f64>) {
        out.clear();
        let w_mass = self.dims.words as f64 * hyper.beta;
        let mut seen: Vec<(usize, u32)> = Vec::new();
        for z in 0..hyper.topics {
            let mut log_w = (f64::from(self.n_cz.get(c, z)) + hyper.alpha).ln();
            let row = self.n_zw.row_sum(z) as f64 + w_mass;
            match self.word_product {
                WordProduct::Literal => {
                    for &w in &b.words {
                        log_w += (f64::from(self.n_zw.get(z, w)) + hyper.beta).ln() - row.ln();
                    }
                }
                WordProduct::Sequential => {
                    seen.clear();
                    for (j, &w) in b.words.iter().enumerate() {
                        let prior = match seen.iter_mut().find(|(x, _)| *x == w) {
                            Some((_, k)) => {
                                *k += 1;
                                *k - 1
                            }
                            None => {
                                seen.push((w, 1));
                                0
                            }
                        };
                        log_w += (f64::from(self.n_zw.get(z, w) + prior) + hyper.beta).ln()
                            - (row + j as f64).ln();
                    }
                }
            }
            out.push(log_w);
        }
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for x in out.iter_mut() {
            *x = (*x - max).exp();
        }
    }

    /// One systematic scan: for each behavior in order, resample its
    /// community given its topic, then its topic given the new community.
    pub fn sweep<R: Rng + ?Sized>(&mut self, hyper: &Hyperparams, behaviors: &[Behavior], rng: &mut R) {
        let mut buf = Vec::with_capacity(hyper.communities.max(hyper.topics));
        for (i, b) in behaviors.iter().enumerate() {
            let (c_old, z_old) = self.assignments[i];
            self.remove(b, c_old, z_old);
            self.community_weights(hyper, b, z_old, &mut buf);
            let c = sample_weighted(rng, &buf);
            self.topic_weights(hyper, b, c, &mut buf);
            let z = sample_weighted(rng, &buf);
            self.restore(behaviors, i, c, z);
        }
    }

    /// Point estimate of the parameters from the current counts.
    pub fn estimate(&self, hyper: &Hyperparams) -> CbmModel {
        CbmModel {
            pi: self.n_uc.smoothed(hyper.gamma),
            theta: self.n_cz.smoothed(hyper.alpha),
            vartheta: self.n_cv.smoothed(hyper.eta),
            phi: self.n_zw.smoothed(hyper.beta),
            hyper: *hyper,
        }
    }

    /// Checks every count-conservation invariant against the behaviors.
    pub fn check_invariants(&self, behaviors: &[Behavior]) -> Result<(), String> {
        for t in [&self.n_uc, &self.n_cz, &self.n_cv, &self.n_zw] {
            if !t.row_sums_consistent() {
                return Err("cached row sums drifted".into());
            }
        }
        let mut per_user = vec![0u64; self.dims.users];
        let mut per_c = vec![0u64; self.n_cz.rows()];
        let mut per_z_tokens = vec![0u64; self.n_zw.rows()];
        for (b, &(c, z)) in behaviors.iter().zip(&self.assignments) {
            per_user[b.user] += 1;
            per_c[c] += 1;
            per_z_tokens[z] += b.words.len() as u64;
        }
        for (u, &n) in per_user.iter().enumerate() {
            if self.n_uc.row_sum(u) != n {
                return Err(format!("user {u}: n_uc row sums to {} but owns {n} behaviors", self.n_uc.row_sum(u)));
            }
        }
        for (c, &n) in per_c.iter().enumerate() {
            if self.n_cz.row_sum(c) != n || self.n_cv.row_sum(c) != n {
                return Err(format!("community {c}: table sums disagree with {n} assigned behaviors"));
            }
        }
        for (z, &n) in per_z_tokens.iter().enumerate() {
            if self.n_zw.row_sum(z) != n {
                return Err(format!("topic {z}: n_zw sums to {} but {n} tokens assigned", self.n_zw.row_sum(z)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn dims(users: usize, venues: usize, words: usize) -> ModelDims {
        ModelDims { users, venues, words }
    }

    fn normalized(w: &[f64]) -> Vec<f64> {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    #[test]
    fn zero_counts_give_uniform_weights() {
        let hyper = Hyperparams::new(3, 4);
        let b = Behavior::new(0, 1, vec![0, 2], 0);
        let state = GibbsState::from_assignments(&[], dims(1, 2, 3), &hyper, vec![], WordProduct::Literal);
        let mut w = Vec::new();
        state.community_weights(&hyper, &b, 0, &mut w);
        assert!(normalized(&w).iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        state.topic_weights(&hyper, &b, 0, &mut w);
        assert!(normalized(&w).iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn community_ratio_from_user_counts() {
        // n_uc[u] = [3, 0], everything else zero, gamma = 1 -> ratio (3+1)/(0+1).
        let hyper = Hyperparams {
            gamma: 1.0,
            ..Hyperparams::new(2, 1)
        };
        let mut state = GibbsState::from_assignments(&[], dims(1, 1, 1), &hyper, vec![], WordProduct::Literal);
        for _ in 0..3 {
            state.n_uc.inc(0, 0);
        }
        let mut w = Vec::new();
        state.community_weights(&hyper, &Behavior::new(0, 0, vec![], 0), 0, &mut w);
        assert!((w[0] / w[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn topic_ratio_single_word() {
        // Z = 2, D = {w0}, n_zw[0][w0] = 5, both topic rows sum to 10.
        let hyper = Hyperparams {
            beta: 0.01,
            ..Hyperparams::new(1, 2)
        };
        for form in [WordProduct::Literal, WordProduct::Sequential] {
            let mut state = GibbsState::from_assignments(&[], dims(1, 1, 3), &hyper, vec![], form);
            for _ in 0..5 {
                state.n_zw.inc(0, 0);
                state.n_zw.inc(0, 1);
            }
            for _ in 0..10 {
                state.n_zw.inc(1, 2);
            }
            let mut w = Vec::new();
            state.topic_weights(&hyper, &Behavior::new(0, 0, vec![0], 0), 0, &mut w);
            assert!((w[0] / w[1] - 501.0).abs() < 1e-9, "{form}: {}", w[0] / w[1]);
        }
    }

    #[test]
    fn empty_bag_uses_topic_counts_only() {
        let hyper = Hyperparams {
            alpha: 0.5,
            ..Hyperparams::new(1, 2)
        };
        let behaviors = vec![Behavior::new(0, 0, vec![0, 0], 0)];
        let state =
            GibbsState::from_assignments(&behaviors, dims(1, 1, 1), &hyper, vec![(0, 0)], WordProduct::Sequential);
        let mut w = Vec::new();
        state.topic_weights(&hyper, &Behavior::new(0, 0, vec![], 0), 0, &mut w);
        assert!((w[1] / w[0] - 0.5 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn estimate_rows() {
        let hyper = Hyperparams {
            alpha: 0.5,
            ..Hyperparams::new(1, 2)
        };
        let behaviors: Vec<Behavior> = (0..4).map(|i| Behavior::new(0, 0, vec![], i)).collect();
        let assign = vec![(0, 0), (0, 0), (0, 0), (0, 1)];
        let state = GibbsState::from_assignments(&behaviors, dims(1, 1, 1), &hyper, assign, WordProduct::Sequential);
        let m = state.estimate(&hyper);
        assert!((m.theta.get(0, 0) - 0.7).abs() < 1e-15);
        assert!((m.theta.get(0, 1) - 0.3).abs() < 1e-15);

        let empty = GibbsState::from_assignments(&[], dims(2, 3, 4), &hyper, vec![], WordProduct::Sequential);
        let m = empty.estimate(&hyper);
        assert!((m.vartheta.get(0, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.phi.get(1, 3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_behavior_sweep_is_stable() {
        let hyper = Hyperparams::new(1, 1);
        let behaviors = vec![Behavior::new(0, 0, vec![0], 0)];
        let mut state =
            GibbsState::from_assignments(&behaviors, dims(1, 1, 1), &hyper, vec![(0, 0)], WordProduct::Sequential);
        state.sweep(&hyper, &behaviors, &mut seeded(1));
        assert_eq!(state.assignments(), &[(0, 0)]);
    }

    #[test]
    fn sweep_conserves_counts() {
        let hyper = Hyperparams::new(3, 4);
        let mut rng = seeded(5);
        let behaviors: Vec<Behavior> = (0..60)
            .map(|i| Behavior::new(i % 7, i % 5, (0..(i % 4)).map(|k| (i + k) % 11).collect(), i as i64))
            .collect();
        let d = dims(7, 5, 11);
        let mut state = GibbsState::random(&behaviors, d, &hyper, WordProduct::Sequential, &mut rng);
        let totals = |s: &GibbsState| (s.n_uc.total(), s.n_cz.total(), s.n_cv.total(), s.n_zw.total());
        let before = totals(&state);
        for _ in 0..5 {
            state.sweep(&hyper, &behaviors, &mut rng);
            state.check_invariants(&behaviors).unwrap();
        }
        assert_eq!(before, totals(&state));
    }

    #[test]
    fn sweep_deterministic_under_seed() {
        let hyper = Hyperparams::new(2, 3);
        let behaviors: Vec<Behavior> = (0..30).map(|i| Behavior::new(i % 3, i % 4, vec![i % 6], i as i64)).collect();
        let run = || {
            let mut rng = seeded(42);
            let mut s = GibbsState::random(&behaviors, dims(3, 4, 6), &hyper, WordProduct::Sequential, &mut rng);
            for _ in 0..3 {
                s.sweep(&hyper, &behaviors, &mut rng);
            }
            s.assignments().to_vec()
        };
        assert_eq!(run(), run());
    }
}
