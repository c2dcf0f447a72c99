use cbm::joint::{generate_corpus, CountDist, GeneratorConfig, Hyperparams, TrainConfig};
use cbm::joint::{sample_model, train_on_corpus, CbmModel};
use cbm::rng::seeded;

fn truth_hyper() -> Hyperparams {
    Hyperparams {
        alpha: 0.1,
        gamma: 0.1,
        eta: 0.05,
        ..Hyperparams::new(2, 3)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Mean row-wise total variation under the row matching that minimizes it.
/// Latent labels are only identified up to permutation.
fn matched_distance(rows: usize, fitted: impl Fn(usize) -> Vec<f64>, truth: impl Fn(usize) -> Vec<f64>) -> f64 {
    permutations(rows)
        .iter()
        .map(|p| (0..rows).map(|r| total_variation(&fitted(p[r]), &truth(r))).sum::<f64>() / rows as f64)
        .fold(f64::INFINITY, f64::min)
}

fn phi_distance(fit: &CbmModel, truth: &CbmModel) -> f64 {
    matched_distance(truth.phi.rows(), |r| fit.phi.row(r).to_vec(), |r| truth.phi.row(r).to_vec())
}

fn vartheta_distance(fit: &CbmModel, truth: &CbmModel) -> f64 {
    matched_distance(
        truth.vartheta.rows(),
        |r| fit.vartheta.row(r).to_vec(),
        |r| truth.vartheta.row(r).to_vec(),
    )
}

#[test]
fn gibbs_recovers_generating_distributions() {
    let hyper = truth_hyper();
    let cfg = GeneratorConfig {
        users: 150,
        venues: 40,
        words: 60,
        behaviors_per_user: CountDist::Fixed(20),
        words_per_tip: CountDist::Fixed(8),
        seed: 7,
        ..GeneratorConfig::default()
    };
    let (corpus, truth) = generate_corpus(&hyper, &cfg).unwrap();
    let train = TrainConfig {
        iterations: 300,
        burn_in: 150,
        lag: 10,
        seed: 3,
        ..TrainConfig::default()
    };
    let all: Vec<usize> = (0..corpus.len()).collect();
    let fit = train_on_corpus(&corpus, &all, &Hyperparams::new(2, 3), &train).unwrap().model;

    // An unrelated draw from the same prior sets the scale of "not recovered".
    let other = sample_model(&hyper, cfg.users, cfg.venues, cfg.words, &mut seeded(99));
    let (phi, phi_chance) = (phi_distance(&fit, &truth), phi_distance(&other, &truth));
    let (var, var_chance) = (vartheta_distance(&fit, &truth), vartheta_distance(&other, &truth));
    eprintln!("phi tv {phi:.4} (chance {phi_chance:.4}); vartheta tv {var:.4} (chance {var_chance:.4})");
    assert!(phi < 0.1 && phi < phi_chance / 4.0);
    assert!(var < 0.1 && var < var_chance / 4.0);
}

#[test]
fn matching_ignores_label_order() {
    let truth = sample_model(&truth_hyper(), 10, 12, 20, &mut seeded(1));
    let mut swapped = truth.clone();
    for z in 0..3 {
        swapped.phi.row_mut(z).copy_from_slice(truth.phi.row((z + 1) % 3));
    }
    swapped.vartheta.row_mut(0).copy_from_slice(truth.vartheta.row(1));
    swapped.vartheta.row_mut(1).copy_from_slice(truth.vartheta.row(0));
    assert_eq!(phi_distance(&swapped, &truth), 0.0);
    assert_eq!(vartheta_distance(&swapped, &truth), 0.0);
}
