use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{descend, StepSchedule};
use crate::rng::seeded;

/// Objectives above this are treated as divergence.
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfConfig {
    pub rank: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    /// Learning-rate multiplier after an accepted step.
    pub step_growth: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            rank: 10,
            lambda1: 0.01,
            lambda2: 0.01,
            learning_rate: 0.01,
            step_growth: 1.1,
            epochs: 300,
            seed: 0,
        }
    }
}

impl MfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("factorization rank must be at least 1".into()));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidArgument("regularizers must be non-negative".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.step_growth >= 1.0) {
            return Err(Error::InvalidArgument("learning rate must be positive and growth at least 1".into()));
        }
        Ok(())
    }
}

/// Factorized user-venue affinities `r_ij ~ u_i . v_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    pub users: Matrix,
    pub venues: Matrix,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Objective before training followed by one value per epoch.
    pub trace: Vec<f64>,
}

impl MfModel {
    pub fn rank(&self) -> usize {
        self.users.cols()
    }

    pub fn affinity(&self, user: usize, venue: usize) -> f64 {
        dot(self.users.row(user), self.venues.row(venue))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binary users x venues matrix: 1 iff the user visited the venue in `train`.
pub fn visit_matrix(corpus: &Corpus, train: &[usize]) -> Matrix {
    let mut r = Matrix::zeros(corpus.num_users(), corpus.num_venues());
    for &i in train {
        let b = corpus.behavior(i);
        r.set(b.user, b.venue, 1.0);
    }
    r
}

/// `1/2 sum_ij (r_ij - u_i.v_j)^2 + l1/2 |U|^2 + l2/2 |V|^2`.
pub fn mf_objective(r: &Matrix, u: &Matrix, v: &Matrix, lambda1: f64, lambda2: f64) -> f64 {
    let mut loss = 0.0;
    for i in 0..r.rows() {
        for j in 0..r.cols() {
            let e = r.get(i, j) - dot(u.row(i), v.row(j));
            loss += e * e;
        }
    }
    0.5 * loss + 0.5 * lambda1 * u.frobenius_sq() + 0.5 * lambda2 * v.frobenius_sq()
}

/// Gradient of [`mf_objective`] with respect to `(U, V)`.
pub fn mf_gradient(r: &Matrix, u: &Matrix, v: &Matrix, lambda1: f64, lambda2: f64) -> (Matrix, Matrix) {
    let k = u.cols();
    let mut gu = u.clone();
    gu.scale(lambda1);
    let mut gv = v.clone();
    gv.scale(lambda2);
    for i in 0..r.rows() {
        for j in 0..r.cols() {
            let e = r.get(i, j) - dot(u.row(i), v.row(j));
            if e == 0.0 {
                continue;
            }
            for f in 0..k {
                let ui = u.get(i, f);
                let vj = v.get(j, f);
                gu.row_mut(i)[f] -= e * vj;
                gv.row_mut(j)[f] -= e * ui;
            }
        }
    }
    (gu, gv)
}

/// Fits factors to `r` by full-batch descent from a `0.01`-scaled Gaussian start.
pub fn mf_fit(r: &Matrix, config: &MfConfig) -> Result<MfModel> {
    config.validate()?;
    let (n, m, k) = (r.rows(), r.cols(), config.rank);
    let mut rng = seeded(config.seed);
    let mut params: Vec<f64> = (0..(n + m) * k)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.01 * z
        })
        .collect();
    let split = |p: &[f64]| (Matrix::from_vec(n, k, p[..n * k].to_vec()), Matrix::from_vec(m, k, p[n * k..].to_vec()));
    let (l1, l2) = (config.lambda1, config.lambda2);
    let objective = |p: &[f64]| {
        let (u, v) = split(p);
        mf_objective(r, &u, &v, l1, l2)
    };
    let gradient = |p: &[f64]| {
        let (u, v) = split(p);
        let (gu, gv) = mf_gradient(r, &u, &v, l1, l2);
        let mut g = gu.as_slice().to_vec();
        g.extend_from_slice(gv.as_slice());
        g
    };
    let schedule = StepSchedule::new(config.learning_rate, config.step_growth);
    let trace = descend(&mut params, config.epochs, schedule, DIVERGENCE_LIMIT, objective, gradient)
        .map_err(|b| Error::Diverged {
            epoch: b.iteration,
            objective: b.objective,
        })?;
    let (users, venues) = split(&params);
    Ok(MfModel {
        users,
        venues,
        lambda1: l1,
        lambda2: l2,
        trace,
    })
}

pub fn mf_train(corpus: &Corpus, train: &[usize], config: &MfConfig) -> Result<MfModel> {
    mf_fit(&visit_matrix(corpus, train), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::numeric_gradient;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>() - 0.5).collect())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let r = random_matrix(4, 5, seed);
            let u = random_matrix(4, 2, seed + 100);
            let v = random_matrix(5, 2, seed + 200);
            let (l1, l2) = (0.3, 0.7);
            let (gu, gv) = mf_gradient(&r, &u, &v, l1, l2);
            let mut x = u.as_slice().to_vec();
            x.extend_from_slice(v.as_slice());
            let f = |p: &[f64]| {
                let u = Matrix::from_vec(4, 2, p[..8].to_vec());
                let v = Matrix::from_vec(5, 2, p[8..].to_vec());
                mf_objective(&r, &u, &v, l1, l2)
            };
            let numeric = numeric_gradient(f, &x, 1e-5);
            let analytic: Vec<f64> = gu.as_slice().iter().chain(gv.as_slice()).copied().collect();
            for (a, b) in analytic.iter().zip(&numeric) {
                assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1e-3), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn all_ones_rank_one() {
        let r = Matrix::from_vec(6, 5, vec![1.0; 30]);
        let cfg = MfConfig {
            rank: 1,
            lambda1: 1e-4,
            lambda2: 1e-4,
            learning_rate: 0.05,
            epochs: 500,
            ..MfConfig::default()
        };
        let m = mf_fit(&r, &cfg).unwrap();
        for i in 0..6 {
            for j in 0..5 {
                assert!((m.affinity(i, j) - 1.0).abs() < 1e-2);
            }
        }
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn exact_low_rank_is_recovered() {
        let a = random_matrix(8, 2, 1);
        let b = random_matrix(7, 2, 2);
        let mut r = Matrix::zeros(8, 7);
        for i in 0..8 {
            for j in 0..7 {
                r.set(i, j, 2.0 * dot(a.row(i), b.row(j)));
            }
        }
        let cfg = MfConfig {
            rank: 2,
            lambda1: 0.0,
            lambda2: 0.0,
            learning_rate: 0.05,
            epochs: 5000,
            ..MfConfig::default()
        };
        let m = mf_fit(&r, &cfg).unwrap();
        let mut sq = 0.0;
        for i in 0..8 {
            for j in 0..7 {
                sq += (r.get(i, j) - m.affinity(i, j)).powi(2);
            }
        }
        let rmse = (sq / 56.0).sqrt();
        assert!(rmse <= 1e-3, "rmse {rmse}");
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_rank_rejected() {
        let r = Matrix::zeros(2, 2);
        let cfg = MfConfig {
            rank: 0,
            ..MfConfig::default()
        };
        assert!(mf_fit(&r, &cfg).is_err());
    }
}
