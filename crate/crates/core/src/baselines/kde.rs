use std::f64::consts::PI;

use super::MfModel;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::log_sum_exp;

/// Lower bound on the kernel standard deviation, in kilometers.
pub const BANDWIDTH_FLOOR_KM: f64 = 0.05;

/// Log of the isotropic Gaussian KDE with covariance `h * I`:
/// `ln (1/n) sum_j 1/(2 pi h) exp(-|e - e_j|^2 / (2h))`.
pub fn log_kde_density(points: &[(f64, f64)], h: f64, query: (f64, f64)) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InsufficientData("kernel density needs at least one point".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let logs: Vec<f64> = points.iter().map(|&p| log_kernel(h, query, p)).collect();
    Ok(log_sum_exp(&logs) - (points.len() as f64).ln())
}

pub fn kde_density(points: &[(f64, f64)], h: f64, query: (f64, f64)) -> Result<f64> {
    log_kde_density(points, h, query).map(f64::exp)
}

#[inline]
fn log_kernel(h: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    -(dx * dx + dy * dy) / (2.0 * h) - (2.0 * PI * h).ln()
}

/// Silverman's rule for a bivariate sample, returned on the variance scale
/// used by [`kde_density`]: `h = max(sigma * n^(-1/6), floor)^2` with
/// `sigma` the pooled per-axis standard deviation.
pub fn silverman_bandwidth(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    if n < 2 {
        return BANDWIDTH_FLOOR_KM * BANDWIDTH_FLOOR_KM;
    }
    let nf = n as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p.0, y + p.1));
    let (mx, my) = (mx / nf, my / nf);
    let var = points
        .iter()
        .map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2))
        .sum::<f64>()
        / (2.0 * (nf - 1.0));
    let sd = (var.sqrt() * nf.powf(-1.0 / 6.0)).max(BANDWIDTH_FLOOR_KM);
    sd * sd
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeRecord {
    pub venue: usize,
    pub point: (f64, f64),
}

/// Per-user spatial histories for the KDE-family detectors.
#[derive(Debug, Clone)]
pub struct KdeModel {
    pub records: Vec<Vec<KdeRecord>>,
    pub bandwidth: Vec<f64>,
    /// Weight of the user's own history in the MKDE mixture.
    pub mix_alpha: f64,
    pub friends: Vec<Vec<usize>>,
}

impl KdeModel {
    /// Collects training check-ins with known coordinates.
    pub fn fit(corpus: &Corpus, train: &[usize], mix_alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mix_alpha) {
            return Err(Error::InvalidArgument(format!("mix_alpha must lie in [0, 1], got {mix_alpha}")));
        }
        let mut records = vec![Vec::new(); corpus.num_users()];
        for &i in train {
            let b = corpus.behavior(i);
            if let Some(point) = corpus.venue_xy(b.venue) {
                records[b.user].push(KdeRecord { venue: b.venue, point });
            }
        }
        let bandwidth = records
            .iter()
            .map(|r| silverman_bandwidth(&r.iter().map(|x| x.point).collect::<Vec<_>>()))
            .collect();
        let friends = (0..corpus.num_users()).map(|u| corpus.friends_of(u).to_vec()).collect();
        Ok(KdeModel {
            records,
            bandwidth,
            mix_alpha,
            friends,
        })
    }

    pub fn own_points(&self, user: usize) -> Vec<(f64, f64)> {
        self.records[user].iter().map(|r| r.point).collect()
    }

    pub fn friend_points(&self, user: usize) -> Vec<(f64, f64)> {
        self.friend_records(user).map(|r| r.point).collect()
    }

    fn friend_records(&self, user: usize) -> impl Iterator<Item = &KdeRecord> {
        self.friends[user].iter().flat_map(move |&f| self.records[f].iter())
    }
}

/// `-ln(alpha f(e | own) + (1 - alpha) f(e | friends))`. An empty
/// component hands its weight to the other.
pub fn mkde_surprise(model: &KdeModel, user: usize, location: (f64, f64)) -> Result<f64> {
    let own = model.own_points(user);
    let social = model.friend_points(user);
    let h = model.bandwidth[user];
    let a = model.mix_alpha;
    let log_mix = match (own.is_empty(), social.is_empty()) {
        (true, true) => {
            return Err(Error::InsufficientData(format!("user {user} has no own or friend check-ins")));
        }
        (false, true) => log_kde_density(&own, h, location)?,
        (true, false) => log_kde_density(&social, h, location)?,
        (false, false) => {
            let mut parts = Vec::with_capacity(2);
            if a > 0.0 {
                parts.push(a.ln() + log_kde_density(&own, h, location)?);
            }
            if a < 1.0 {
                parts.push((1.0 - a).ln() + log_kde_density(&social, h, location)?);
            }
            log_sum_exp(&parts)
        }
    };
    Ok(-log_mix)
}

/// Surprise under a KDE over the histories of `user` and their friends,
/// where each record is weighted by the factorized user-venue affinity
/// `max(0, u_user . v_venue)`. Uniform or all-zero weights reduce to the
/// unweighted KDE.
pub fn cfkde_surprise(kde: &KdeModel, mf: &MfModel, user: usize, location: (f64, f64)) -> Result<f64> {
    let pool: Vec<&KdeRecord> = kde.records[user].iter().chain(kde.friend_records(user)).collect();
    if pool.is_empty() {
        return Err(Error::InsufficientData(format!("user {user} has no historical check-ins")));
    }
    let h = kde.bandwidth[user];
    let weights: Vec<f64> = pool.iter().map(|r| mf.affinity(user, r.venue).max(0.0)).collect();
    let uniform = weights.iter().all(|&w| w == weights[0]);
    if uniform || weights.iter().all(|&w| w == 0.0) {
        let points: Vec<(f64, f64)> = pool.iter().map(|r| r.point).collect();
        return Ok(-log_kde_density(&points, h, location)?);
    }
    let total: f64 = weights.iter().sum();
    let logs: Vec<f64> = pool
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, &w)| w.ln() + log_kernel(h, location, r.point))
        .collect();
    Ok(-(log_sum_exp(&logs) - total.ln()))
}
