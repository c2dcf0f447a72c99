use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use cbm::augment::{augment_training, AugmentConfig, TuckerConfig};
use cbm::baselines::{kde_density, mkde_surprise, KdeModel};
use cbm::corpus::{
    chronological_split, ingest_readers, simulate_theft, write_records, write_ties, write_venues, Corpus, SwapMode,
    TokenizerConfig,
};
use cbm::joint::{generate_corpus, CountDist, GeneratorConfig, GibbsState, Hyperparams, ModelDims, WordProduct};
use cbm::rng::seeded;
use cbm::scoring::{score_latency_k, score_relative, Scorer, UserPrior};

fn small_corpus(seed: u64, users: usize) -> Corpus {
    let cfg = GeneratorConfig {
        users,
        venues: 12,
        words: 30,
        behaviors_per_user: CountDist::Uniform { min: 3, max: 9 },
        words_per_tip: CountDist::Uniform { min: 0, max: 4 },
        friends_per_user: 2,
        seed,
        ..GeneratorConfig::default()
    };
    generate_corpus(&Hyperparams::new(3, 4), &cfg).unwrap().0
}

type Multiset<T> = BTreeMap<T, usize>;

// Venue and word-bag multisets are each preserved by any swap mode; pairs only by full swaps.
fn content(c: &Corpus, idx: &[usize]) -> (Multiset<usize>, Multiset<Vec<usize>>) {
    let (mut venues, mut bags) = (BTreeMap::new(), BTreeMap::new());
    for &i in idx {
        let b = c.behavior(i);
        let mut words = b.words.clone();
        words.sort_unstable();
        *venues.entry(b.venue).or_default() += 1;
        *bags.entry(words).or_default() += 1;
    }
    (venues, bags)
}

fn pairs(c: &Corpus, idx: &[usize]) -> Multiset<(usize, Vec<usize>)> {
    let mut m = BTreeMap::new();
    for &i in idx {
        let b = c.behavior(i);
        let mut words = b.words.clone();
        words.sort_unstable();
        *m.entry((b.venue, words)).or_default() += 1;
    }
    m
}

fn mode() -> impl Strategy<Value = SwapMode> {
    prop_oneof![Just(SwapMode::Both), Just(SwapMode::VenueOnly), Just(SwapMode::UgcOnly)]
}

fn reingest(c: &Corpus) -> Corpus {
    let (mut r, mut t, mut v) = (Vec::new(), Vec::new(), Vec::new());
    write_records(c, &mut r, true).unwrap();
    write_ties(c, &mut t).unwrap();
    write_venues(c, &mut v).unwrap();
    let p = Path::new("mem");
    ingest_readers(&r[..], &t[..], Some(&v[..]), &TokenizerConfig::default(), [p, p, p]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn theft_exchanges_content(seed in any::<u64>(), users in 4usize..20, fraction in 0.02f64..0.4, mode in mode()) {
        let c = small_corpus(seed % 1000, users);
        let split = chronological_split(&c, 0.6).unwrap();
        let out = simulate_theft(&c, &split, fraction, mode, seed).unwrap();
        prop_assert_eq!(content(&c, &split.test), content(&out, &split.test));
        if mode == SwapMode::Both {
            prop_assert_eq!(pairs(&c, &split.test), pairs(&out, &split.test));
        }
        let anomalies = out.behaviors().iter().filter(|b| b.label.is_anomalous()).count();
        let n = split.test.len();
        let expected = ((2.0 * (fraction * n as f64 / 2.0).round()) as usize).max(2).min(n / 2 * 2);
        prop_assert_eq!(anomalies, expected);
        for &i in &split.train {
            prop_assert_eq!(out.behavior(i), c.behavior(i));
        }
        for &i in &split.test {
            let b = out.behavior(i);
            prop_assert_eq!(b.label.is_anomalous(), b.donor.is_some());
            if let Some(d) = b.donor {
                prop_assert_ne!(d, b.user);
            }
        }
    }

    #[test]
    fn emitted_corpus_reingests_identically(seed in any::<u64>(), users in 2usize..15) {
        let c = small_corpus(seed % 1000, users);
        let split = chronological_split(&c, 0.7).unwrap();
        let labeled = simulate_theft(&c, &split, 0.2, SwapMode::Both, seed).unwrap_or_else(|_| c.clone());
        let once = reingest(&labeled);
        let twice = reingest(&once);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.len(), labeled.len());
        for (a, b) in once.behaviors().iter().zip(labeled.behaviors()) {
            prop_assert_eq!(once.users().name(a.user), labeled.users().name(b.user));
            prop_assert_eq!(once.venues().name(a.venue), labeled.venues().name(b.venue));
            prop_assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn sweeps_conserve_counts(seed in any::<u64>(), users in 2usize..10, nc in 1usize..4, nz in 1usize..4) {
        let c = small_corpus(seed % 1000, users);
        let hyper = Hyperparams::new(nc, nz);
        let mut rng = seeded(seed);
        let mut state = GibbsState::random(c.behaviors(), ModelDims::of(&c), &hyper, WordProduct::Sequential, &mut rng);
        let totals = |s: &GibbsState| (s.n_uc.total(), s.n_cz.total(), s.n_cv.total(), s.n_zw.total());
        let before = totals(&state);
        for _ in 0..3 {
            state.sweep(&hyper, c.behaviors(), &mut rng);
            prop_assert!(state.check_invariants(c.behaviors()).is_ok());
            prop_assert_eq!(totals(&state), before);
        }
        let per_user = c.counts_per_user(&(0..c.len()).collect::<Vec<_>>());
        for (u, &n) in per_user.iter().enumerate() {
            prop_assert_eq!(state.n_uc.row_sum(u), n as u64);
        }
        let est = state.estimate(&hyper);
        prop_assert!(est.max_row_sum_error() < 1e-9);
        for m in [&est.pi, &est.theta, &est.vartheta, &est.phi] {
            prop_assert!(m.as_slice().iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn relative_scores(seed in any::<u64>(), users in 2usize..30, refs in 1usize..50, scale in 0.01f64..100.0) {
        let cfg = GeneratorConfig { users, venues: 8, words: 20, seed: seed % 1000, ..GeneratorConfig::default() };
        let (c, model) = generate_corpus(&Hyperparams::new(2, 3), &cfg).unwrap();
        let prior = UserPrior::uniform(users);
        let b = c.behavior((seed as usize) % c.len());
        let s = score_relative(&model, b, &prior, refs, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let k1 = score_latency_k(&model, &[b], &prior, refs, seed).unwrap();
        prop_assert_eq!(s.to_bits(), k1.to_bits());
        // Scaling the claimed venue's column scales every candidate's likelihood alike.
        let mut scaled = model.clone();
        for row in 0..scaled.vartheta.rows() {
            let x = scaled.vartheta.get(row, b.venue);
            scaled.vartheta.set(row, b.venue, x * scale);
        }
        let s2 = score_relative(&scaled, b, &prior, refs, seed).unwrap();
        prop_assert!((s - s2).abs() <= 1e-9, "{} vs {}", s, s2);
        let detail = Scorer::new(&model).score_block_detail(&[b], &prior, refs, seed).unwrap();
        prop_assert!(detail.log_odds.is_finite() || refs == 1);
    }

    #[test]
    fn kde_is_nonnegative_and_mkde_is_a_mixture(seed in any::<u64>(), users in 3usize..12, alpha in 0.0f64..=1.0) {
        let c = small_corpus(seed % 1000, users);
        let train: Vec<usize> = (0..c.len()).collect();
        let model = KdeModel::fit(&c, &train, alpha).unwrap();
        let own = KdeModel::fit(&c, &train, 1.0).unwrap();
        let friends = KdeModel::fit(&c, &train, 0.0).unwrap();
        let user = (seed as usize) % users;
        let query = c.venue_xy(c.behavior((seed as usize) % c.len()).venue).unwrap();
        let h = model.bandwidth[user];
        prop_assert!(kde_density(&model.own_points(user), h, query).unwrap_or(0.0) >= 0.0);
        if let (Ok(m), Ok(a), Ok(b)) = (
            mkde_surprise(&model, user, query),
            mkde_surprise(&own, user, query),
            mkde_surprise(&friends, user, query),
        ) {
            // Surprise is -ln density, so the mixture density lies between the components'.
            let (dm, da, db) = ((-m).exp(), (-a).exp(), (-b).exp());
            prop_assert!(dm >= da.min(db) * (1.0 - 1e-9) && dm <= da.max(db) * (1.0 + 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn injection_respects_friend_support_and_top_k(seed in any::<u64>(), top_k in 1usize..6) {
        let c = small_corpus(seed % 1000, 12);
        let split = chronological_split(&c, 0.8).unwrap();
        let cfg = AugmentConfig {
            lda_topics: 3,
            lda_iterations: 30,
            tucker: TuckerConfig { dims: (3, 3, 2), iterations: 40, ..TuckerConfig::default() },
            top_k,
            seed,
        };
        let aug = augment_training(&c, &split.train, &cfg).unwrap();
        let synthetic: Vec<_> = aug.behaviors.iter().filter(|b| b.synthetic).collect();
        prop_assert_eq!(synthetic.len(), aug.injected);
        let mut per_user = vec![0usize; c.num_users()];
        for b in &synthetic {
            per_user[b.user] += 1;
            let supported = c.friends_of(b.user).iter().any(|&f| {
                (0..aug.tensor.dims.2).any(|z| aug.tensor.get(f, b.venue, z) > 0
                    && b.words.first() == cbm::augment::top_words(&aug.topics.phi, z, 3).first())
            });
            prop_assert!(supported, "injected behavior without friend support");
        }
        prop_assert!(per_user.iter().all(|&n| n <= top_k));
    }
}
