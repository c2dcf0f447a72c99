//! Composite-behavior corpora: interned id tables, timestamp-ordered
//! behaviors, the friendship set, and optional venue coordinates.

mod ingest;
mod split;
mod stats;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use ingest::{ingest, ingest_readers, read_records, write_records, Record, write_ties, write_venues, TokenizerConfig};
pub use split::{chronological_split, simulate_block_theft, simulate_theft, Split, SwapMode};
pub use stats::{corpus_stats, CorpusStats, RECORD_COUNT_BUCKETS};

/// Mean Earth radius used by the equirectangular projection.
const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Bidirectional map between external string ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = Interner::new();
        for n in names {
            table.intern(&n.into());
        }
        table
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// SHA-256 (hex) over the names joined by newlines, in id order.
    pub fn content_hash(&self) -> String {
        hash_names(&self.names)
    }
}

pub(crate) fn hash_names(names: &[String]) -> String {
    let mut hasher = Sha256::new();
    for (i, n) in names.iter().enumerate() {
        if i > 0 {
            hasher.update(b"\n");
        }
        hasher.update(n.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn code(self) -> char {
        match self {
            Label::Normal => 'N',
            Label::Anomalous => 'A',
        }
    }

    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

/// One composite behavior: a user checks in at a venue and posts a tip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Behavior {
    pub user: usize,
    pub venue: usize,
    /// Word bag; repeated ids are repeated occurrences.
    pub words: Vec<usize>,
    pub timestamp: i64,
    pub label: Label,
    /// User whose content was swapped in; set only for simulated thefts.
    pub donor: Option<usize>,
    /// Injected by latent-behavior augmentation; never part of a test set.
    pub synthetic: bool,
}

impl Behavior {
    pub fn new(user: usize, venue: usize, words: Vec<usize>, timestamp: i64) -> Self {
        Behavior {
            user,
            venue,
            words,
            timestamp,
            label: Label::Normal,
            donor: None,
            synthetic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// An immutable, validated composite-behavior corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    users: Interner,
    venues: Interner,
    venue_geo: Vec<Option<GeoPoint>>,
    venue_xy: Vec<Option<(f64, f64)>>,
    words: Interner,
    word_freq: Vec<u64>,
    behaviors: Vec<Behavior>,
    friends: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Corpus {
    /// Builds a corpus, validating ids and labels and stably sorting
    /// behaviors by timestamp. Friend pairs are symmetrized; self pairs are
    /// dropped.
    pub fn new(
        users: Interner,
        venues: Interner,
        venue_geo: Vec<Option<GeoPoint>>,
        words: Interner,
        mut behaviors: Vec<Behavior>,
        friends: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if venue_geo.len() != venues.len() {
            return Err(Error::LengthMismatch {
                left: venue_geo.len(),
                right: venues.len(),
            });
        }
        for (i, b) in behaviors.iter().enumerate() {
            if b.user >= users.len() || b.venue >= venues.len() {
                return Err(Error::InvalidArgument(format!(
                    "behavior {i} references an unknown user or venue"
                )));
            }
            if let Some(w) = b.words.iter().find(|&&w| w >= words.len()) {
                return Err(Error::InvalidArgument(format!(
                    "behavior {i} references unknown word id {w}"
                )));
            }
            if b.label.is_anomalous() != b.donor.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "behavior {i}: label must be Anomalous exactly when a donor is set"
                )));
            }
            if b.donor.is_some_and(|d| d >= users.len()) {
                return Err(Error::InvalidArgument(format!("behavior {i}: unknown donor")));
            }
        }
        behaviors.sort_by_key(|b| b.timestamp);

        let mut set = BTreeSet::new();
        for (a, b) in friends {
            if a >= users.len() || b >= users.len() {
                return Err(Error::InvalidArgument(format!(
                    "friend pair ({a}, {b}) references an unknown user"
                )));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let mut adjacency = vec![Vec::new(); users.len()];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let mut word_freq = vec![0u64; words.len()];
        for b in &behaviors {
            for &w in &b.words {
                word_freq[w] += 1;
            }
        }

        let venue_xy = project(&venue_geo);
        Ok(Corpus {
            users,
            venues,
            venue_geo,
            venue_xy,
            words,
            word_freq,
            behaviors,
            friends: set,
            adjacency,
        })
    }

    pub fn empty() -> Self {
        Corpus::new(Interner::new(), Interner::new(), Vec::new(), Interner::new(), Vec::new(), [])
            .expect("empty corpus is valid")
    }

    pub fn users(&self) -> &Interner {
        &self.users
    }

    pub fn venues(&self) -> &Interner {
        &self.venues
    }

    pub fn words(&self) -> &Interner {
        &self.words
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_venues(&self) -> usize {
        self.venues.len()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn word_frequency(&self, word: usize) -> u64 {
        self.word_freq[word]
    }

    pub fn behaviors(&self) -> &[Behavior] {
        &self.behaviors
    }

    pub fn behavior(&self, index: usize) -> &Behavior {
        &self.behaviors[index]
    }

    pub fn len(&self) -> usize {
        self.behaviors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.behaviors.is_empty()
    }

    /// Unordered friend pairs, each stored once as `(min, max)`.
    pub fn friend_pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.friends
    }

    pub fn friends_of(&self, user: usize) -> &[usize] {
        &self.adjacency[user]
    }

    pub fn venue_geo(&self, venue: usize) -> Option<GeoPoint> {
        self.venue_geo[venue]
    }

    /// Planar coordinates in kilometers about the venue centroid.
    pub fn venue_xy(&self, venue: usize) -> Option<(f64, f64)> {
        self.venue_xy[venue]
    }

    pub fn has_coordinates(&self) -> bool {
        self.venue_xy.iter().any(Option::is_some)
    }

    /// A copy of this corpus with a replaced behavior list. Behaviors are
    /// revalidated and re-sorted; id tables and ties are kept.
    pub fn with_behaviors(&self, behaviors: Vec<Behavior>) -> Result<Corpus> {
        Corpus::new(
            self.users.clone(),
            self.venues.clone(),
            self.venue_geo.clone(),
            self.words.clone(),
            behaviors,
            self.friends.iter().copied(),
        )
    }

    /// Behaviors per user, restricted to `indices`.
    pub fn counts_per_user(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_users()];
        for &i in indices {
            counts[self.behaviors[i].user] += 1;
        }
        counts
    }
}

/// Equirectangular projection about the centroid of all known venues.
fn project(geo: &[Option<GeoPoint>]) -> Vec<Option<(f64, f64)>> {
    let known: Vec<GeoPoint> = geo.iter().flatten().copied().collect();
    if known.is_empty() {
        return vec![None; geo.len()];
    }
    let n = known.len() as f64;
    let lat0 = known.iter().map(|p| p.lat).sum::<f64>() / n;
    let lon0 = known.iter().map(|p| p.lon).sum::<f64>() / n;
    let cos0 = lat0.to_radians().cos();
    geo.iter()
        .map(|p| {
            p.map(|p| {
                (
                    EARTH_RADIUS_KM * (p.lon - lon0).to_radians() * cos0,
                    EARTH_RADIUS_KM * (p.lat - lat0).to_radians(),
                )
            })
        })
        .collect()
}
