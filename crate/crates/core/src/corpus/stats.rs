use serde::{Deserialize, Serialize};

use super::Corpus;

/// Upper bounds (inclusive) of the per-user record-count histogram; the
/// final bucket is open-ended.
pub const RECORD_COUNT_BUCKETS: [usize; 4] = [5, 10, 20, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub venues: usize,
    pub behaviors: usize,
    pub vocabulary: usize,
    pub tokens: usize,
    pub empty_word_behaviors: usize,
    pub friend_pairs: usize,
    pub venues_with_coordinates: usize,
    /// `(label, users)` pairs, e.g. `("<=5", 120)`.
    pub records_per_user: Vec<(String, usize)>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let all: Vec<usize> = (0..corpus.len()).collect();
    let per_user = corpus.counts_per_user(&all);
    let mut labels: Vec<String> = Vec::new();
    let mut lo = 1;
    for &hi in &RECORD_COUNT_BUCKETS {
        labels.push(if lo == 1 { format!("<={hi}") } else { format!("{lo}-{hi}") });
        lo = hi + 1;
    }
    labels.push(format!(">{}", RECORD_COUNT_BUCKETS[RECORD_COUNT_BUCKETS.len() - 1]));
    let mut hist = vec![0usize; labels.len()];
    for &n in per_user.iter().filter(|&&n| n > 0) {
        let slot = RECORD_COUNT_BUCKETS
            .iter()
            .position(|&hi| n <= hi)
            .unwrap_or(RECORD_COUNT_BUCKETS.len());
        hist[slot] += 1;
    }
    CorpusStats {
        users: corpus.num_users(),
        venues: corpus.num_venues(),
        behaviors: corpus.len(),
        vocabulary: corpus.num_words(),
        tokens: corpus.behaviors().iter().map(|b| b.words.len()).sum(),
        empty_word_behaviors: corpus.behaviors().iter().filter(|b| b.words.is_empty()).count(),
        friend_pairs: corpus.friend_pairs().len(),
        venues_with_coordinates: (0..corpus.num_venues())
            .filter(|&v| corpus.venue_geo(v).is_some())
            .count(),
        records_per_user: labels.into_iter().zip(hist).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Behavior, Interner};

    #[test]
    fn empty_corpus_is_all_zero() {
        let s = corpus_stats(&Corpus::empty());
        assert_eq!((s.users, s.venues, s.behaviors, s.vocabulary, s.tokens), (0, 0, 0, 0, 0));
        assert!(s.records_per_user.iter().all(|(_, n)| *n == 0));
    }

    #[test]
    fn histogram_buckets() {
        let mut behaviors = Vec::new();
        for (user, count) in [(0usize, 3usize), (1, 7), (2, 60)] {
            for t in 0..count {
                behaviors.push(Behavior::new(user, 0, vec![], t as i64));
            }
        }
        let c = Corpus::new(
            Interner::from_names(["a", "b", "c"]),
            Interner::from_names(["p"]),
            vec![None],
            Interner::new(),
            behaviors,
            [],
        )
        .unwrap();
        let s = corpus_stats(&c);
        assert_eq!(s.empty_word_behaviors, 70);
        let counts: Vec<usize> = s.records_per_user.iter().map(|(_, n)| *n).collect();
        assert_eq!(counts, vec![1, 1, 0, 0, 1]);
        assert_eq!(s.records_per_user[0].0, "<=5");
        assert_eq!(s.records_per_user[4].0, ">50");
    }
}
