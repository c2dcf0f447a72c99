use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CbmModel, Hyperparams};
use crate::corpus::{Behavior, Corpus, GeoPoint, Interner};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, sample_dirichlet, sample_weighted, seeded};

/// A distribution over small positive counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountDist {
    Fixed(usize),
    /// Uniform on `min..=max`.
    Uniform { min: usize, max: usize },
    /// `1 + Geometric`, with the given mean (>= 1). Heavy in the low counts.
    Geometric { mean: f64 },
}

impl CountDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            CountDist::Fixed(n) => n,
            CountDist::Uniform { min, max } => rng.random_range(min..=max),
            CountDist::Geometric { mean } => {
                if mean <= 1.0 {
                    return 1;
                }
                let p = 1.0 / mean;
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                1 + (u.ln() / (1.0 - p).ln()).floor() as usize
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad count distribution `{s}` (use N, MIN..MAX or geo:MEAN)"));
        if let Some(mean) = s.strip_prefix("geo:") {
            return mean.parse().map(|mean| CountDist::Geometric { mean }).map_err(|_| bad());
        }
        if let Some((a, b)) = s.split_once("..") {
            let min = a.parse().map_err(|_| bad())?;
            let max = b.parse().map_err(|_| bad())?;
            if min > max {
                return Err(bad());
            }
            return Ok(CountDist::Uniform { min, max });
        }
        s.parse().map(CountDist::Fixed).map_err(|_| bad())
    }

    fn min(&self) -> usize {
        match *self {
            CountDist::Fixed(n) => n,
            CountDist::Uniform { min, .. } => min,
            CountDist::Geometric { .. } => 1,
        }
    }
}

impl std::fmt::Display for CountDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CountDist::Fixed(n) => write!(f, "{n}"),
            CountDist::Uniform { min, max } => write!(f, "{min}..{max}"),
            CountDist::Geometric { mean } => write!(f, "geo:{mean}"),
        }
    }
}

/// Sizes and shapes for synthetic corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub users: usize,
    pub venues: usize,
    pub words: usize,
    pub behaviors_per_user: CountDist,
    pub words_per_tip: CountDist,
    /// Friendship draws per user.
    pub friends_per_user: usize,
    /// Chance a friendship draw stays inside the user's dominant community.
    pub friend_homophily: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            users: 100,
            venues: 50,
            words: 300,
            behaviors_per_user: CountDist::Fixed(20),
            words_per_tip: CountDist::Fixed(8),
            friends_per_user: 3,
            friend_homophily: 0.8,
            seed: 0,
        }
    }
}

/// Samples ground-truth parameters from their Dirichlet priors.
pub fn sample_model<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    users: usize,
    venues: usize,
    words: usize,
    rng: &mut R,
) -> CbmModel {
    let (nc, nz) = (hyper.communities, hyper.topics);
    let mut theta = Matrix::zeros(nc, nz);
    let mut vartheta = Matrix::zeros(nc, venues);
    for c in 0..nc {
        theta.row_mut(c).copy_from_slice(&sample_dirichlet(rng, hyper.alpha, nz));
        vartheta.row_mut(c).copy_from_slice(&sample_dirichlet(rng, hyper.eta, venues));
    }
    let mut phi = Matrix::zeros(nz, words);
    for z in 0..nz {
        phi.row_mut(z).copy_from_slice(&sample_dirichlet(rng, hyper.beta, words));
    }
    let mut pi = Matrix::zeros(users, nc);
    for u in 0..users {
        pi.row_mut(u).copy_from_slice(&sample_dirichlet(rng, hyper.gamma, nc));
    }
    CbmModel {
        pi,
        theta,
        vartheta,
        phi,
        hyper: *hyper,
    }
}

/// Samples parameters and a corpus from them. Returns the corpus together
/// with the true parameters.
pub fn generate_corpus(hyper: &Hyperparams, config: &GeneratorConfig) -> Result<(Corpus, CbmModel)> {
    hyper.validate()?;
    if config.users == 0 || config.venues == 0 || config.words == 0 {
        return Err(Error::InvalidArgument("user, venue and word counts must be >= 1".into()));
    }
    let mut rng = seeded(config.seed);
    let model = sample_model(hyper, config.users, config.venues, config.words, &mut rng);
    let corpus = generate_from_model(&model, config)?;
    Ok((corpus, model))
}

/// Samples a corpus from given parameters.
///
/// Users' behavior sequences are interleaved in a random order and
/// timestamps are consecutive integers in that order, so a chronological
/// cut leaves most users on both sides. Friendships favor users who share
/// a dominant community; venues are placed around a per-community center.
pub fn generate_from_model(model: &CbmModel, config: &GeneratorConfig) -> Result<Corpus> {
    if config.behaviors_per_user.min() == 0 {
        return Err(Error::InvalidArgument("every user needs at least one behavior".into()));
    }
    let dims = model.dims();
    if dims.users != config.users || dims.venues != config.venues || dims.words != config.words {
        return Err(Error::InvalidArgument("generator sizes disagree with the model".into()));
    }
    let nc = model.hyper.communities;
    let mut rng = seeded(derive_seed(config.seed, 1));

    let mut slots: Vec<usize> = Vec::new();
    for u in 0..dims.users {
        let n = config.behaviors_per_user.sample(&mut rng);
        slots.extend(std::iter::repeat_n(u, n));
    }
    slots.shuffle(&mut rng);

    let mut behaviors = Vec::with_capacity(slots.len());
    for (t, &u) in slots.iter().enumerate() {
        let c = sample_weighted(&mut rng, model.pi.row(u));
        let z = sample_weighted(&mut rng, model.theta.row(c));
        let v = sample_weighted(&mut rng, model.vartheta.row(c));
        let n_words = config.words_per_tip.sample(&mut rng);
        let words = (0..n_words).map(|_| sample_weighted(&mut rng, model.phi.row(z))).collect();
        behaviors.push(Behavior::new(u, v, words, t as i64));
    }

    let dominant: Vec<usize> = (0..dims.users).map(|u| argmax(model.pi.row(u))).collect();
    let mut members = vec![Vec::new(); nc];
    for (u, &c) in dominant.iter().enumerate() {
        members[c].push(u);
    }
    let mut friends = Vec::new();
    for u in 0..dims.users {
        for _ in 0..config.friends_per_user {
            let pool = &members[dominant[u]];
            let other = if pool.len() > 1 && rng.random::<f64>() < config.friend_homophily {
                pool[rng.random_range(0..pool.len())]
            } else {
                rng.random_range(0..dims.users)
            };
            if other != u {
                friends.push((u, other));
            }
        }
    }

    let jitter = Normal::new(0.0, 0.01).expect("valid normal");
    let centers: Vec<(f64, f64)> = (0..nc)
        .map(|_| (40.75 + rng.random_range(-0.1..0.1), -73.98 + rng.random_range(-0.1..0.1)))
        .collect();
    let geo = (0..dims.venues)
        .map(|v| {
            let home = (0..nc)
                .max_by(|&a, &b| model.vartheta.get(a, v).total_cmp(&model.vartheta.get(b, v)))
                .unwrap_or(0);
            let (lat, lon) = centers[home];
            Some(GeoPoint {
                lat: round6(lat + jitter.sample(&mut rng)),
                lon: round6(lon + jitter.sample(&mut rng)),
            })
        })
        .collect();

    Corpus::new(
        Interner::from_names((0..dims.users).map(|u| format!("u{u:04}"))),
        Interner::from_names((0..dims.venues).map(|v| format!("v{v:04}"))),
        geo,
        Interner::from_names((0..dims.words).map(|w| format!("w{w:04}"))),
        behaviors,
        friends,
    )
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let (corpus, truth) = generate_corpus(&Hyperparams::default(), &GeneratorConfig::default()).unwrap();
        assert_eq!(corpus.len(), 2000);
        assert_eq!(corpus.num_users(), 100);
        assert!(corpus.behaviors().iter().all(|b| b.words.len() == 8));
        assert!(truth.max_row_sum_error() < 1e-9);
        assert!(corpus.has_coordinates());
        assert!(!corpus.friend_pairs().is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = GeneratorConfig {
            seed: 17,
            ..GeneratorConfig::default()
        };
        let a = generate_corpus(&Hyperparams::new(3, 4), &cfg).unwrap();
        let b = generate_corpus(&Hyperparams::new(3, 4), &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn count_dist_parse_and_bounds() {
        assert_eq!(CountDist::parse("5").unwrap(), CountDist::Fixed(5));
        assert_eq!(CountDist::parse("2..9").unwrap(), CountDist::Uniform { min: 2, max: 9 });
        assert_eq!(CountDist::parse("geo:3.5").unwrap(), CountDist::Geometric { mean: 3.5 });
        assert!(CountDist::parse("9..2").is_err());
        let mut rng = seeded(1);
        let d = CountDist::Geometric { mean: 3.0 };
        let draws: Vec<usize> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&n| n >= 1));
        let mean = draws.iter().sum::<usize>() as f64 / draws.len() as f64;
        assert!((mean - 3.0).abs() < 0.1, "{mean}");
    }
}
