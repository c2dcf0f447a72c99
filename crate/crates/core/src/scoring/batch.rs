use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::{PriorMode, ScoreRow, ScoredBehavior, Scorer, UserPrior};
use crate::corpus::{Behavior, Record};
use crate::error::{Error, Result};
use crate::joint::{CbmModel, IdTables};
use crate::rng::derive_seed;

fn lookup(names: &[String]) -> HashMap<&str, usize> {
    names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
}

/// Scores parsed records against a saved model.
///
/// Users and venues are matched by name through `tables`; a record naming
/// an unknown user or venue becomes a failed row. Unknown words are
/// dropped. The empirical prior counts the records being scored. With
/// `latency = Some(k)`, each row scores a window of `k` consecutive records
/// of one user and is reported at the window's last record; its `s_l` is
/// the window total and its label is anomalous if any member is.
pub fn score_records(
    model: &CbmModel,
    tables: &IdTables,
    records: &[Record],
    prior: PriorMode,
    reference_count: usize,
    latency: Option<usize>,
    seed: u64,
) -> Result<Vec<ScoreRow>> {
    let users = lookup(&tables.users);
    let venues = lookup(&tables.venues);
    let words = lookup(&tables.words);
    let resolved: Vec<std::result::Result<Behavior, String>> = records
        .iter()
        .map(|r| {
            let user = *users.get(r.user.as_str()).ok_or_else(|| format!("unknown user `{}`", r.user))?;
            let venue = *venues.get(r.venue.as_str()).ok_or_else(|| format!("unknown venue `{}`", r.venue))?;
            let ids = r.tokens.iter().filter_map(|t| words.get(t.as_str()).copied()).collect();
            let mut b = Behavior::new(user, venue, ids, r.timestamp);
            b.label = r.label;
            Ok(b)
        })
        .collect();
    let mut counts = vec![0usize; tables.users.len()];
    for b in resolved.iter().flatten() {
        counts[b.user] += 1;
    }
    let prior = UserPrior::build(prior, &counts);
    let scorer = Scorer::new(model);
    let failed = |i: usize, reason: &str| ScoreRow::Failed {
        index: i,
        user: records[i].user.clone(),
        reason: reason.to_owned(),
    };
    match latency {
        None | Some(1) => Ok((0..records.len())
            .into_par_iter()
            .map(|i| match &resolved[i] {
                Err(reason) => failed(i, reason),
                Ok(b) => {
                    let r = scorer
                        .score_block_detail(&[b], &prior, reference_count, derive_seed(seed, i as u64))
                        .expect("single-behavior block is valid");
                    ScoreRow::Scored(ScoredBehavior {
                        index: i,
                        user: b.user,
                        s_l: scorer.score_logarithmic(b),
                        s_r: r.s_r,
                        log_odds: r.log_odds,
                        label: b.label,
                        empty_words: b.words.is_empty(),
                    })
                }
            })
            .collect()),
        Some(0) => Err(Error::InvalidArgument("latency must be >= 1".into())),
        Some(k) => {
            let mut rows: Vec<ScoreRow> = Vec::new();
            let mut per_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, r) in resolved.iter().enumerate() {
                match r {
                    Err(reason) => rows.push(failed(i, reason)),
                    Ok(b) => per_user.entry(b.user).or_default().push(i),
                }
            }
            for list in per_user.values_mut() {
                list.sort_by_key(|&i| (records[i].timestamp, i));
            }
            let windows: Vec<&[usize]> = per_user.values().flat_map(|v| v.windows(k)).collect();
            let scored: Vec<ScoreRow> = windows
                .into_par_iter()
                .map(|w| {
                    let block: Vec<&Behavior> = w.iter().map(|&i| resolved[i].as_ref().expect("resolved")).collect();
                    let last = *w.last().expect("k >= 1");
                    let r = scorer.score_block_detail(&block, &prior, reference_count, derive_seed(seed, last as u64))?;
                    Ok(ScoreRow::Scored(ScoredBehavior {
                        index: last,
                        user: block[0].user,
                        s_l: block.iter().map(|b| scorer.score_logarithmic(b)).sum(),
                        s_r: r.s_r,
                        log_odds: r.log_odds,
                        label: block.iter().map(|b| b.label).max_by_key(|l| l.is_anomalous()).expect("non-empty"),
                        empty_words: block.iter().all(|b| b.words.is_empty()),
                    }))
                })
                .collect::<Result<_>>()?;
            rows.extend(scored);
            rows.sort_by_key(|r| match r {
                ScoreRow::Scored(s) => s.index,
                ScoreRow::Failed { index, .. } => *index,
            });
            Ok(rows)
        }
    }
}
