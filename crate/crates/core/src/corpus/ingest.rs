use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Behavior, Corpus, GeoPoint, Interner, Label};
use crate::error::{Error, Result};

/// Tokenization rules for tip text.
///
/// Text is lowercased and split on runs of non-alphanumeric characters.
/// Tokens shorter than `min_token_len` characters, stopwords, and words
/// whose corpus frequency is below `min_word_freq` are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub min_token_len: usize,
    pub min_word_freq: u64,
    pub stopwords: BTreeSet<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            min_token_len: 2,
            min_word_freq: 1,
            stopwords: BTreeSet::new(),
        }
    }
}

impl TokenizerConfig {
    /// Loads whitespace-separated stopwords from a file.
    pub fn with_stopword_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        self.stopwords
            .extend(text.split_whitespace().map(str::to_lowercase));
        Ok(self)
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.chars().count() >= self.min_token_len)
            .filter(|t| !self.stopwords.contains(*t))
            .map(str::to_owned)
            .collect()
    }
}

/// One parsed line of a records file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub user: String,
    pub venue: String,
    pub timestamp: i64,
    pub tokens: Vec<String>,
    pub label: Label,
    pub donor: Option<String>,
}

/// Parses a records file without interning; `path` names it in errors.
pub fn read_records(reader: impl BufRead, path: &Path, tok: &TokenizerConfig) -> Result<Vec<Record>> {
    parse_records(reader, path, tok)
}

fn parse_records(reader: impl BufRead, path: &Path, tok: &TokenizerConfig) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 && fields.len() != 6 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 or 6 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(path, lineno, "empty user or venue id"));
        }
        let timestamp = fields[2]
            .trim()
            .parse::<i64>()
            .map_err(|e| Error::parse(path, lineno, format!("bad timestamp `{}`: {e}", fields[2])))?;
        let (label, donor) = if fields.len() == 6 {
            let label = match fields[4] {
                "N" => Label::Normal,
                "A" => Label::Anomalous,
                other => return Err(Error::parse(path, lineno, format!("bad label `{other}`"))),
            };
            let donor = (!fields[5].is_empty()).then(|| fields[5].to_owned());
            if label.is_anomalous() != donor.is_some() {
                return Err(Error::parse(path, lineno, "label `A` requires a donor and `N` forbids one"));
            }
            (label, donor)
        } else {
            (Label::Normal, None)
        };
        out.push(Record {
            user: fields[0].to_owned(),
            venue: fields[1].to_owned(),
            timestamp,
            tokens: tok.tokenize(fields[3]),
            label,
            donor,
        });
    }
    Ok(out)
}

/// Builds a corpus from in-memory readers. `names` label the three inputs
/// in error messages.
pub fn ingest_readers(
    records: impl BufRead,
    ties: impl BufRead,
    venues: Option<impl BufRead>,
    tok: &TokenizerConfig,
    names: [&Path; 3],
) -> Result<Corpus> {
    let mut raw = parse_records(records, names[0], tok)?;
    // Interning happens in chronological order so that re-ingesting an
    // emitted corpus reproduces identical ids.
    raw.sort_by_key(|r| r.timestamp);

    let mut freq: HashMap<&str, u64> = HashMap::new();
    for r in &raw {
        for t in &r.tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }

    let mut users = Interner::new();
    let mut venue_ids = Interner::new();
    let mut words = Interner::new();
    let mut behaviors = Vec::with_capacity(raw.len());
    for r in &raw {
        let user = users.intern(&r.user);
        let venue = venue_ids.intern(&r.venue);
        let bag = r
            .tokens
            .iter()
            .filter(|t| freq[t.as_str()] >= tok.min_word_freq)
            .map(|t| words.intern(t))
            .collect();
        let mut b = Behavior::new(user, venue, bag, r.timestamp);
        b.label = r.label;
        behaviors.push(b);
    }
    for (b, r) in behaviors.iter_mut().zip(&raw) {
        if let Some(d) = &r.donor {
            let donor = users
                .get(d)
                .ok_or_else(|| Error::InvalidArgument(format!("donor `{d}` owns no record")))?;
            b.donor = Some(donor);
        }
    }

    let mut friends = Vec::new();
    for (i, line) in ties.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(names[1], i + 1, "expected `user_id<TAB>user_id`"));
        }
        let a = users
            .get(fields[0])
            .ok_or_else(|| Error::UnknownUser(fields[0].to_owned()))?;
        let b = users
            .get(fields[1])
            .ok_or_else(|| Error::UnknownUser(fields[1].to_owned()))?;
        friends.push((a, b));
    }

    let mut geo = vec![None; venue_ids.len()];
    if let Some(reader) = venues {
        let mut seen = BTreeSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(names[2], i + 1, "expected `venue_id<TAB>lat<TAB>lon`"));
            }
            if !seen.insert(fields[0].to_owned()) {
                return Err(Error::DuplicateVenue(fields[0].to_owned()));
            }
            let parse = |s: &str, what: &str| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(names[2], i + 1, format!("bad {what} `{s}`")))
            };
            let lat = parse(fields[1], "latitude")?;
            let lon = parse(fields[2], "longitude")?;
            match venue_ids.get(fields[0]) {
                Some(v) => geo[v] = Some(GeoPoint { lat, lon }),
                None => log::debug!("venue `{}` has coordinates but no records; skipped", fields[0]),
            }
        }
    }

    Corpus::new(users, venue_ids, geo, words, behaviors, friends)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Reads a corpus from the records, ties and (optional) venues files.
pub fn ingest(
    records: &Path,
    ties: &Path,
    venues: Option<&Path>,
    tok: &TokenizerConfig,
) -> Result<Corpus> {
    let venue_reader = venues.map(open).transpose()?;
    let venue_name = venues.map_or_else(PathBuf::new, Path::to_path_buf);
    ingest_readers(
        open(records)?,
        open(ties)?,
        venue_reader,
        tok,
        [records, ties, &venue_name],
    )
}

/// Writes behaviors in the records format. With `labeled`, the trailing
/// `label` and `donor` columns are appended.
pub fn write_records(corpus: &Corpus, mut w: impl Write, labeled: bool) -> Result<()> {
    for b in corpus.behaviors() {
        let text: Vec<&str> = b.words.iter().map(|&x| corpus.words().name(x)).collect();
        write!(
            w,
            "{}\t{}\t{}\t{}",
            corpus.users().name(b.user),
            corpus.venues().name(b.venue),
            b.timestamp,
            text.join(" ")
        )?;
        if labeled {
            let donor = b.donor.map_or("", |d| corpus.users().name(d));
            write!(w, "\t{}\t{}", b.label.code(), donor)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_ties(corpus: &Corpus, mut w: impl Write) -> Result<()> {
    for &(a, b) in corpus.friend_pairs() {
        writeln!(w, "{}\t{}", corpus.users().name(a), corpus.users().name(b))?;
    }
    Ok(())
}

pub fn write_venues(corpus: &Corpus, mut w: impl Write) -> Result<()> {
    for v in 0..corpus.num_venues() {
        if let Some(p) = corpus.venue_geo(v) {
            writeln!(w, "{}\t{}\t{}", corpus.venues().name(v), p.lat, p.lon)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(records: &str, ties: &str, venues: Option<&str>, tok: &TokenizerConfig) -> Result<Corpus> {
        let p = Path::new("mem");
        ingest_readers(records.as_bytes(), ties.as_bytes(), venues.map(str::as_bytes), tok, [p, p, p])
    }

    #[test]
    fn three_line_example() {
        let records = "a\tp\t1\tGreat pizza!\nb\tp\t2\tpizza ok\na\tp\t3\tquiet park\n";
        let c = run(records, "", None, &TokenizerConfig::default()).unwrap();
        assert_eq!(c.num_users(), 2);
        assert_eq!(c.num_venues(), 1);
        let vocab: BTreeSet<&str> = c.words().names().iter().map(String::as_str).collect();
        assert_eq!(vocab, BTreeSet::from(["great", "pizza", "ok", "quiet", "park"]));
        assert!(c.friend_pairs().is_empty());
    }

    #[test]
    fn fully_filtered_text_keeps_behavior() {
        let mut tok = TokenizerConfig::default();
        tok.stopwords.insert("the".into());
        // "the" is a stopword, "a" and "I" are too short, "!!" is punctuation.
        let c = run("u\tv\t1\tThe a I !!\nu\tv\t2\tfine day\n", "", None, &tok).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.behavior(0).words.is_empty());
        assert_eq!(c.behavior(1).words.len(), 2);
    }

    #[test]
    fn min_frequency_filter() {
        let tok = TokenizerConfig {
            min_word_freq: 2,
            ..TokenizerConfig::default()
        };
        let c = run("u\tv\t1\tcafe latte\nu\tv\t2\tcafe\n", "", None, &tok).unwrap();
        assert_eq!(c.words().names(), &["cafe".to_string()]);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = run("a\tp\t1\tok\na\tp\tnope\tok\n", "", None, &TokenizerConfig::default()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        let err = run("a\tp\t1\n", "", None, &TokenizerConfig::default()).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn unknown_friend_and_duplicate_venue() {
        let tok = TokenizerConfig::default();
        let err = run("a\tp\t1\tx\n", "a\tzz\n", None, &tok).unwrap_err();
        assert!(matches!(err, Error::UnknownUser(ref u) if u == "zz"));
        let err = run("a\tp\t1\tx\n", "", Some("p\t1\t2\np\t1\t2\n"), &tok).unwrap_err();
        assert!(matches!(err, Error::DuplicateVenue(_)));
    }

    #[test]
    fn labeled_records_round_trip() {
        let records = "b\tq\t2\tnice view\tA\ta\na\tp\t1\tgood food\tA\tb\na\tq\t3\tview\tN\t\n";
        let tok = TokenizerConfig::default();
        let c = run(records, "a\tb\n", Some("p\t40.7\t-73.9\nq\t40.71\t-73.95\n"), &tok).unwrap();
        assert_eq!(c.behavior(0).donor, Some(c.users().get("b").unwrap()));
        let mut rec = Vec::new();
        write_records(&c, &mut rec, true).unwrap();
        let mut ties = Vec::new();
        write_ties(&c, &mut ties).unwrap();
        let mut ven = Vec::new();
        write_venues(&c, &mut ven).unwrap();
        let p = Path::new("mem");
        let again = ingest_readers(&rec[..], &ties[..], Some(&ven[..]), &tok, [p, p, p]).unwrap();
        assert_eq!(c, again);
    }
}
