use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Corpus, Label};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// A global chronological train/test cut over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub fraction: f64,
}

/// Puts the first `ceil(fraction * N)` behaviors (by timestamp) into the
/// training set. Both sides are kept non-empty.
pub fn chronological_split(corpus: &Corpus, fraction: f64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "training fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "a split needs at least 2 behaviors, corpus has {n}"
        )));
    }
    // The epsilon keeps products like 0.8 * 10 from rounding up to 9.
    let cut = ((fraction * n as f64) - 1e-9).ceil() as usize;
    let cut = cut.clamp(1, n - 1);
    Ok(Split {
        train: (0..cut).collect(),
        test: (cut..n).collect(),
        fraction,
    })
}

/// Which part of a behavior a simulated thief exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapMode {
    Both,
    #[serde(rename = "venue")]
    VenueOnly,
    #[serde(rename = "ugc")]
    UgcOnly,
}

impl SwapMode {
    pub const ALL: [SwapMode; 3] = [SwapMode::Both, SwapMode::VenueOnly, SwapMode::UgcOnly];
}

impl fmt::Display for SwapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwapMode::Both => "both",
            SwapMode::VenueOnly => "venue",
            SwapMode::UgcOnly => "ugc",
        })
    }
}

impl FromStr for SwapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(SwapMode::Both),
            "venue" | "venue-only" => Ok(SwapMode::VenueOnly),
            "ugc" | "ugc-only" => Ok(SwapMode::UgcOnly),
            other => Err(Error::Config(format!(
                "unknown swap mode `{other}` (expected both, venue, ugc)"
            ))),
        }
    }
}

/// Even count nearest to `fraction * n`, never below 2.
pub(crate) fn swap_count(fraction: f64, n: usize) -> usize {
    let pairs = (fraction * n as f64 / 2.0).round() as usize;
    (2 * pairs).max(2)
}

/// Simulates identity theft by exchanging content between random pairs of
/// test behaviors owned by different users.
///
/// The pairing depends only on the seed and the test set, so the three
/// modes applied with one seed touch the same behaviors.
pub fn simulate_theft(
    corpus: &Corpus,
    split: &Split,
    swap_fraction: f64,
    mode: SwapMode,
    seed: u64,
) -> Result<Corpus> {
    if !(swap_fraction > 0.0 && swap_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "swap fraction must lie in (0, 1), got {swap_fraction}"
        )));
    }
    let behaviors = corpus.behaviors();
    let eligible: Vec<usize> = split
        .test
        .iter()
        .copied()
        .filter(|&i| !behaviors[i].synthetic)
        .collect();
    let owners: std::collections::BTreeSet<usize> = eligible.iter().map(|&i| behaviors[i].user).collect();
    if eligible.len() < 2 || owners.len() < 2 {
        return Err(Error::InsufficientData(
            "theft simulation needs at least 2 test behaviors from distinct users".into(),
        ));
    }
    let wanted = swap_count(swap_fraction, eligible.len()).min(eligible.len() / 2 * 2);
    let owners: Vec<usize> = eligible.iter().map(|&i| behaviors[i].user).collect();
    let pairs = pair_cross_user(&owners, wanted, seed)?;

    let mut out = behaviors.to_vec();
    for (a, b) in pairs {
        exchange(&mut out, eligible[a], eligible[b], mode);
    }
    corpus.with_behaviors(out)
}

/// Simulates a thief who takes over an account for a whole run of
/// behaviors: random pairs of blocks with different owners exchange their
/// content position by position. Blocks must have equal length and must
/// not overlap.
pub fn simulate_block_theft(
    corpus: &Corpus,
    blocks: &[Vec<usize>],
    swap_fraction: f64,
    mode: SwapMode,
    seed: u64,
) -> Result<Corpus> {
    if !(swap_fraction > 0.0 && swap_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "swap fraction must lie in (0, 1), got {swap_fraction}"
        )));
    }
    let k = blocks.first().map_or(0, Vec::len);
    if k == 0 || blocks.iter().any(|b| b.len() != k) {
        return Err(Error::InvalidArgument("blocks must be non-empty and of equal length".into()));
    }
    let behaviors = corpus.behaviors();
    let owners: Vec<usize> = blocks.iter().map(|b| behaviors[b[0]].user).collect();
    let distinct: std::collections::BTreeSet<usize> = owners.iter().copied().collect();
    if blocks.len() < 2 || distinct.len() < 2 {
        return Err(Error::InsufficientData(
            "block theft needs at least 2 blocks from distinct users".into(),
        ));
    }
    let wanted = swap_count(swap_fraction, blocks.len()).min(blocks.len() / 2 * 2);
    let pairs = pair_cross_user(&owners, wanted, seed)?;
    let mut out = behaviors.to_vec();
    for (a, b) in pairs {
        for (&i, &j) in blocks[a].iter().zip(&blocks[b]) {
            exchange(&mut out, i, j, mode);
        }
    }
    corpus.with_behaviors(out)
}

/// Shuffles the units and greedily pairs each with the earliest pending
/// unit of a different owner until `wanted / 2` pairs exist.
fn pair_cross_user(owners: &[usize], wanted: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let mut order: Vec<usize> = (0..owners.len()).collect();
    let mut rng = seeded(seed);
    order.shuffle(&mut rng);
    let mut pairs = Vec::with_capacity(wanted / 2);
    let mut pending: Vec<usize> = Vec::new();
    for &i in &order {
        if pairs.len() * 2 == wanted {
            break;
        }
        match pending.iter().position(|&j| owners[j] != owners[i]) {
            Some(p) => pairs.push((pending.remove(p), i)),
            None => pending.push(i),
        }
    }
    if pairs.len() * 2 < wanted {
        return Err(Error::InsufficientData(format!(
            "could only form {} cross-user pairs, {} needed",
            pairs.len(),
            wanted / 2
        )));
    }
    Ok(pairs)
}

fn exchange(out: &mut [super::Behavior], a: usize, b: usize, mode: SwapMode) {
    let (ua, ub) = (out[a].user, out[b].user);
    if matches!(mode, SwapMode::Both | SwapMode::VenueOnly) {
        let va = out[a].venue;
        out[a].venue = out[b].venue;
        out[b].venue = va;
    }
    if matches!(mode, SwapMode::Both | SwapMode::UgcOnly) {
        let wa = std::mem::take(&mut out[a].words);
        out[a].words = std::mem::replace(&mut out[b].words, wa);
    }
    out[a].label = Label::Anomalous;
    out[a].donor = Some(ub);
    out[b].label = Label::Anomalous;
    out[b].donor = Some(ua);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Behavior, Interner};

    fn corpus_of(n: usize, users: usize) -> Corpus {
        let behaviors = (0..n)
            .map(|i| Behavior::new(i % users, i % 3, vec![i % 5], i as i64))
            .collect();
        Corpus::new(
            Interner::from_names((0..users).map(|u| format!("u{u}"))),
            Interner::from_names(["v0", "v1", "v2"]),
            vec![None; 3],
            Interner::from_names((0..5).map(|w| format!("w{w}"))),
            behaviors,
            [],
        )
        .unwrap()
    }

    #[test]
    fn split_sizes() {
        assert_eq!(chronological_split(&corpus_of(10, 2), 0.8).unwrap().train.len(), 8);
        let s = chronological_split(&corpus_of(2, 2), 0.5).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        assert_eq!(chronological_split(&corpus_of(7, 2), 0.8).unwrap().train.len(), 6);
        assert!(chronological_split(&corpus_of(1, 1), 0.5).is_err());
        assert!(chronological_split(&corpus_of(5, 1), 1.0).is_err());
    }

    #[test]
    fn block_theft_swaps_whole_blocks_between_users() {
        let c = corpus_of(24, 4);
        // user u owns indices u, u+4, u+8, ...
        let blocks: Vec<Vec<usize>> = (0..4).flat_map(|u| [vec![u, u + 4, u + 8], vec![u + 12, u + 16, u + 20]]).collect();
        let out = simulate_block_theft(&c, &blocks, 0.25, SwapMode::Both, 5).unwrap();
        let stolen: Vec<&Vec<usize>> = blocks.iter().filter(|b| out.behavior(b[0]).label.is_anomalous()).collect();
        assert_eq!(stolen.len(), 2);
        for b in &blocks {
            let flags: Vec<bool> = b.iter().map(|&i| out.behavior(i).label.is_anomalous()).collect();
            assert!(flags.iter().all(|&f| f == flags[0]));
        }
        let (a, b) = (stolen[0], stolen[1]);
        assert_ne!(c.behavior(a[0]).user, c.behavior(b[0]).user);
        for (&i, &j) in a.iter().zip(b.iter()) {
            assert_eq!(out.behavior(i).venue, c.behavior(j).venue);
            assert_eq!(out.behavior(i).words, c.behavior(j).words);
            assert_eq!(out.behavior(i).donor, Some(c.behavior(j).user));
        }
        assert!(simulate_block_theft(&c, &[vec![0, 4], vec![1]], 0.5, SwapMode::Both, 5).is_err());
    }

    #[test]
    fn even_nearest_swap_count() {
        // 0.05 * 56,236 = 2,811.8
        assert_eq!(swap_count(0.05, 56_236), 2_812);
        assert_eq!(swap_count(0.05, 100), 6);
        assert_eq!(swap_count(0.05, 10), 2);
    }

    #[test]
    fn venue_only_swap_keeps_words() {
        let c = corpus_of(20, 4);
        let s = chronological_split(&c, 0.5).unwrap();
        let t = simulate_theft(&c, &s, 0.2, SwapMode::VenueOnly, 9).unwrap();
        for (before, after) in c.behaviors().iter().zip(t.behaviors()) {
            assert_eq!(before.words, after.words);
            if after.label == Label::Anomalous {
                let donor = after.donor.unwrap();
                assert_ne!(donor, after.user);
            }
        }
        assert_eq!(t.behaviors().iter().filter(|b| b.label.is_anomalous()).count(), 2);
    }

    #[test]
    fn needs_two_owners() {
        let c = corpus_of(10, 1);
        let s = chronological_split(&c, 0.5).unwrap();
        assert!(simulate_theft(&c, &s, 0.5, SwapMode::Both, 1).is_err());
    }

    #[test]
    fn same_seed_same_result() {
        let c = corpus_of(60, 6);
        let s = chronological_split(&c, 0.5).unwrap();
        let a = simulate_theft(&c, &s, 0.2, SwapMode::Both, 4).unwrap();
        let b = simulate_theft(&c, &s, 0.2, SwapMode::Both, 4).unwrap();
        assert_eq!(a, b);
    }
}
