use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FrequencyTensor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{descend, StepSchedule};
use crate::rng::seeded;

/// Dense row-major 3-way array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Dense3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Dense3 {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dims[0] * dims[1] * dims[2], "tensor data length");
        Dense3 { dims, data }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Mode-`n` unfolding: row `idx[n]`, columns over the two remaining
    /// indices in lexicographic order.
    pub fn unfold(&self, mode: usize) -> Matrix {
        let [a, b] = others(mode);
        let mut out = Matrix::zeros(self.dims[mode], self.dims[a] * self.dims[b]);
        let mut idx = [0usize; 3];
        for (o, &x) in self.data.iter().enumerate() {
            idx[0] = o / (self.dims[1] * self.dims[2]);
            idx[1] = (o / self.dims[2]) % self.dims[1];
            idx[2] = o % self.dims[2];
            out.set(idx[mode], idx[a] * self.dims[b] + idx[b], x);
        }
        out
    }

    /// Inverse of [`Dense3::unfold`].
    pub fn fold(mode: usize, m: &Matrix, dims: [usize; 3]) -> Dense3 {
        let [a, b] = others(mode);
        let mut out = Dense3::zeros(dims);
        let mut idx = [0usize; 3];
        for o in 0..out.data.len() {
            idx[0] = o / (dims[1] * dims[2]);
            idx[1] = (o / dims[2]) % dims[1];
            idx[2] = o % dims[2];
            out.data[o] = m.get(idx[mode], idx[a] * dims[b] + idx[b]);
        }
        out
    }

    /// `self x_mode m`, where `m` is `new x dims[mode]`.
    pub fn mode_product(&self, mode: usize, m: &Matrix) -> Dense3 {
        assert_eq!(m.cols(), self.dims[mode], "mode product dimension");
        let mut dims = self.dims;
        dims[mode] = m.rows();
        Dense3::fold(mode, &m.matmul(&self.unfold(mode)), dims)
    }
}

fn others(mode: usize) -> [usize; 2] {
    match mode {
        0 => [1, 2],
        1 => [0, 2],
        2 => [0, 1],
        _ => panic!("mode {mode} out of range for a 3-way tensor"),
    }
}

/// Form of the friend term added to the user-factor penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SocialForm {
    /// `(lambda/2) sum_{(i,j)} u_i . u_j`.
    #[default]
    Printed,
    /// `(lambda/2) sum_{(i,j)} |u_i - u_j|^2`.
    Difference,
}

impl std::fmt::Display for SocialForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SocialForm::Printed => "printed",
            SocialForm::Difference => "difference",
        })
    }
}

impl std::str::FromStr for SocialForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(SocialForm::Printed),
            "difference" => Ok(SocialForm::Difference),
            _ => Err(Error::InvalidArgument(format!("unknown social form `{s}` (printed | difference)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerConfig {
    /// Core dimensions `(d_U, d_V, d_Z)`.
    pub dims: (usize, usize, usize),
    pub lambda: f64,
    pub social: SocialForm,
    pub iterations: usize,
    pub learning_rate: f64,
    pub step_growth: f64,
    pub seed: u64,
}

impl Default for TuckerConfig {
    fn default() -> Self {
        TuckerConfig {
            dims: (8, 8, 4),
            lambda: 0.1,
            social: SocialForm::Printed,
            iterations: 300,
            learning_rate: 0.01,
            step_growth: 1.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerFactors {
    pub core: Dense3,
    pub u: Matrix,
    pub v: Matrix,
    pub z: Matrix,
    pub lambda: f64,
    /// Objective at initialization followed by one value per iteration.
    pub trace: Vec<f64>,
}

impl TuckerFactors {
    /// `A*(i,j,k) = sum_abc S_abc U_ia V_jb Z_kc`, evaluated directly.
    pub fn reconstruct(&self, i: usize, j: usize, k: usize) -> f64 {
        let [da, db, dc] = self.core.dims;
        let (ui, vj, zk) = (self.u.row(i), self.v.row(j), self.z.row(k));
        let mut total = 0.0;
        for a in 0..da {
            for b in 0..db {
                let ab = ui[a] * vj[b];
                for c in 0..dc {
                    total += self.core.get(a, b, c) * ab * zk[c];
                }
            }
        }
        total
    }

    /// The full reconstruction via mode products.
    pub fn reconstruct_dense(&self) -> Dense3 {
        self.core.mode_product(0, &self.u).mode_product(1, &self.v).mode_product(2, &self.z)
    }
}

struct Layout {
    core: [usize; 3],
    n: [usize; 3],
}

impl Layout {
    fn len(&self) -> usize {
        self.core.iter().product::<usize>() + (0..3).map(|m| self.n[m] * self.core[m]).sum::<usize>()
    }

    fn split(&self, p: &[f64]) -> (Dense3, [Matrix; 3]) {
        let s_len: usize = self.core.iter().product();
        let core = Dense3::from_vec(self.core, p[..s_len].to_vec());
        let mut at = s_len;
        let mats = [0, 1, 2].map(|m| {
            let len = self.n[m] * self.core[m];
            let out = Matrix::from_vec(self.n[m], self.core[m], p[at..at + len].to_vec());
            at += len;
            out
        });
        (core, mats)
    }

    fn join(core: &Dense3, mats: &[Matrix; 3]) -> Vec<f64> {
        let mut p = core.data.clone();
        for m in mats {
            p.extend_from_slice(m.as_slice());
        }
        p
    }
}

fn social_value(u: &Matrix, friends: &[(usize, usize)], form: SocialForm) -> f64 {
    friends
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (u.row(i), u.row(j));
            match form {
                SocialForm::Printed => a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
                SocialForm::Difference => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>(),
            }
        })
        .sum()
}

/// `1/2 |A - S x U x V x Z|^2 + lambda/2 (|S|^2 + |U|^2 + |V|^2 + |Z|^2 + social(U))`
/// with `friends` as unordered pairs.
pub fn tucker_objective(
    a: &Dense3,
    core: &Dense3,
    factors: &[Matrix; 3],
    lambda: f64,
    friends: &[(usize, usize)],
    form: SocialForm,
) -> f64 {
    let x = core.mode_product(0, &factors[0]).mode_product(1, &factors[1]).mode_product(2, &factors[2]);
    let residual: f64 = a.data.iter().zip(&x.data).map(|(p, q)| (p - q).powi(2)).sum();
    let penalty = core.frobenius_sq() + factors.iter().map(Matrix::frobenius_sq).sum::<f64>();
    0.5 * residual + 0.5 * lambda * (penalty + social_value(&factors[0], friends, form))
}

/// Gradient of [`tucker_objective`] with respect to `(S, [U, V, Z])`.
pub fn tucker_gradient(
    a: &Dense3,
    core: &Dense3,
    factors: &[Matrix; 3],
    lambda: f64,
    friends: &[(usize, usize)],
    form: SocialForm,
) -> (Dense3, [Matrix; 3]) {
    let [u, v, z] = factors;
    let x = core.mode_product(0, u).mode_product(1, v).mode_product(2, z);
    let r = Dense3::from_vec(a.dims, a.data.iter().zip(&x.data).map(|(p, q)| p - q).collect());
    let (ut, vt, zt) = (u.transpose(), v.transpose(), z.transpose());
    let q = r.mode_product(0, &ut);
    let p_u = r.mode_product(1, &vt).mode_product(2, &zt);
    let p_v = q.mode_product(2, &zt);
    let p_z = q.mode_product(1, &vt);
    let p_s = p_z.mode_product(2, &zt);

    let mut g_core = core.clone();
    for (g, p) in g_core.data.iter_mut().zip(&p_s.data) {
        *g = lambda * *g - p;
    }
    let contract = |p: &Dense3, mode: usize, f: &Matrix| {
        let mut g = p.unfold(mode).matmul(&core.unfold(mode).transpose());
        g.scale(-1.0);
        g.add_scaled(f, lambda);
        g
    };
    let mut g_u = contract(&p_u, 0, u);
    let g_v = contract(&p_v, 1, v);
    let g_z = contract(&p_z, 2, z);
    for &(i, j) in friends {
        for f in 0..u.cols() {
            let (ui, uj) = (u.get(i, f), u.get(j, f));
            let (di, dj) = match form {
                SocialForm::Printed => (0.5 * lambda * uj, 0.5 * lambda * ui),
                SocialForm::Difference => (lambda * (ui - uj), lambda * (uj - ui)),
            };
            g_u.row_mut(i)[f] += di;
            g_u.row_mut(j)[f] += dj;
        }
    }
    (g_core, [g_u, g_v, g_z])
}

/// Fits a Tucker model to `tensor` by gradient descent with step halving,
/// starting from Gaussian factors scaled by `0.01`.
pub fn tucker_decompose(
    tensor: &FrequencyTensor,
    friends: &[(usize, usize)],
    config: &TuckerConfig,
) -> Result<TuckerFactors> {
    tucker_decompose_dense(&tensor.to_dense(), friends, config)
}

/// [`tucker_decompose`] for a real-valued dense tensor.
pub fn tucker_decompose_dense(a: &Dense3, friends: &[(usize, usize)], config: &TuckerConfig) -> Result<TuckerFactors> {
    let n = a.dims;
    let core = [config.dims.0, config.dims.1, config.dims.2];
    if (0..3).any(|m| core[m] == 0 || core[m] > n[m]) {
        return Err(Error::InvalidArgument(format!(
            "core dimensions {core:?} must be positive and at most the tensor dimensions {n:?}"
        )));
    }
    if !(config.lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {}", config.lambda)));
    }
    if !(config.learning_rate > 0.0) || !(config.step_growth >= 1.0) {
        return Err(Error::InvalidArgument("learning rate must be positive and growth at least 1".into()));
    }
    if let Some(&(i, j)) = friends.iter().find(|&&(i, j)| i >= n[0] || j >= n[0]) {
        return Err(Error::InvalidArgument(format!("friend pair ({i}, {j}) outside {} users", n[0])));
    }
    let layout = Layout { core, n };
    let mut rng = seeded(config.seed);
    let mut params: Vec<f64> = (0..layout.len())
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            0.01 * g
        })
        .collect();
    let (lambda, form) = (config.lambda, config.social);
    let objective = |p: &[f64]| {
        let (s, f) = layout.split(p);
        tucker_objective(a, &s, &f, lambda, friends, form)
    };
    let gradient = |p: &[f64]| {
        let (s, f) = layout.split(p);
        let (gs, gf) = tucker_gradient(a, &s, &f, lambda, friends, form);
        Layout::join(&gs, &gf)
    };
    let schedule = StepSchedule::new(config.learning_rate, config.step_growth);
    let trace = descend(&mut params, config.iterations, schedule, f64::INFINITY, objective, gradient)
        .map_err(|b| Error::NonFinite { iteration: b.iteration })?;
    let (core, [u, v, z]) = layout.split(&params);
    Ok(TuckerFactors {
        core,
        u,
        v,
        z,
        lambda,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::numeric_gradient;
    use rand::Rng;

    fn random_dense(dims: [usize; 3], seed: u64) -> Dense3 {
        let mut rng = seeded(seed);
        Dense3::from_vec(dims, (0..dims.iter().product()).map(|_| rng.random::<f64>() - 0.5).collect())
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random::<f64>() - 0.5).collect())
    }

    #[test]
    fn fold_inverts_unfold() {
        let t = random_dense([3, 4, 2], 1);
        for mode in 0..3 {
            assert_eq!(Dense3::fold(mode, &t.unfold(mode), t.dims), t);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let friends = [(0, 1), (1, 3), (0, 2)];
        for form in [SocialForm::Printed, SocialForm::Difference] {
            for seed in 0..3 {
                let n = [4, 3, 3];
                let core = [2, 2, 2];
                let a = random_dense(n, seed);
                let s = random_dense(core, seed + 10);
                let f = [
                    random_matrix(4, 2, seed + 20),
                    random_matrix(3, 2, seed + 30),
                    random_matrix(3, 2, seed + 40),
                ];
                let lambda = 0.3;
                let layout = Layout { core, n };
                let x = Layout::join(&s, &f);
                let (gs, gf) = tucker_gradient(&a, &s, &f, lambda, &friends, form);
                let analytic = Layout::join(&gs, &gf);
                let numeric = numeric_gradient(
                    |p| {
                        let (s, f) = layout.split(p);
                        tucker_objective(&a, &s, &f, lambda, &friends, form)
                    },
                    &x,
                    1e-5,
                );
                for (p, q) in analytic.iter().zip(&numeric) {
                    assert!((p - q).abs() <= 1e-5 * p.abs().max(q.abs()).max(1e-3), "{form}: {p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn sparse_and_dense_reconstruction_agree() {
        let f = TuckerFactors {
            core: random_dense([2, 3, 2], 1),
            u: random_matrix(5, 2, 2),
            v: random_matrix(4, 3, 3),
            z: random_matrix(3, 2, 4),
            lambda: 0.0,
            trace: vec![],
        };
        let dense = f.reconstruct_dense();
        for i in 0..5 {
            for j in 0..4 {
                for k in 0..3 {
                    assert!((dense.get(i, j, k) - f.reconstruct(i, j, k)).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn exact_low_rank_tensor_is_recovered() {
        let truth = TuckerFactors {
            core: random_dense([2, 2, 2], 7),
            u: random_matrix(6, 2, 8),
            v: random_matrix(5, 2, 9),
            z: random_matrix(4, 2, 10),
            lambda: 0.0,
            trace: vec![],
        };
        let mut a = truth.reconstruct_dense();
        a.data.iter_mut().for_each(|x| *x *= 10.0);
        let cfg = TuckerConfig {
            dims: (2, 2, 2),
            lambda: 0.0,
            iterations: 4000,
            learning_rate: 0.01,
            step_growth: 1.1,
            seed: 1,
            ..TuckerConfig::default()
        };
        let fit = tucker_decompose_dense(&a, &[], &cfg).unwrap();
        let x = fit.reconstruct_dense();
        let err: f64 = a.data.iter().zip(&x.data).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let rel = err / a.frobenius_sq().sqrt();
        assert!(rel <= 1e-3, "relative error {rel}");
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bad_dimensions_rejected() {
        let t = FrequencyTensor::new((2, 2, 2));
        let cfg = TuckerConfig {
            dims: (3, 1, 1),
            ..TuckerConfig::default()
        };
        assert!(tucker_decompose(&t, &[], &cfg).is_err());
    }
}
