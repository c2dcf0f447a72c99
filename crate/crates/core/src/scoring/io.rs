use std::io::Write;

use super::ScoredBehavior;
use crate::corpus::Interner;
use crate::error::Result;

/// A row of a scores file: either scores or a per-row error.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreRow {
    Scored(ScoredBehavior),
    Failed { index: usize, user: String, reason: String },
}

/// Writes `behavior_index<TAB>user_id<TAB>s_l<TAB>s_r<TAB>label`, with an
/// optional trailing `detector` column. Failed rows carry `NaN` scores and
/// `error:<reason>` in the label column.
pub fn write_scores(mut w: impl Write, users: &Interner, rows: &[ScoreRow], detector: Option<&str>) -> Result<()> {
    for row in rows {
        match row {
            ScoreRow::Scored(s) => write!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                s.index,
                users.name(s.user),
                s.s_l,
                s.s_r,
                s.label.code()
            )?,
            ScoreRow::Failed { index, user, reason } => {
                write!(w, "{index}\t{user}\tNaN\tNaN\terror:{reason}")?
            }
        }
        if let Some(d) = detector {
            write!(w, "\t{d}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    #[test]
    fn row_layout() {
        let users = Interner::from_names(["alice"]);
        let rows = vec![
            ScoreRow::Scored(ScoredBehavior {
                index: 3,
                user: 0,
                s_l: 1.5,
                s_r: 0.25,
                log_odds: 1.0,
                label: Label::Anomalous,
                empty_words: false,
            }),
            ScoreRow::Failed {
                index: 4,
                user: "bob".into(),
                reason: "unknown venue `x`".into(),
            },
        ];
        let mut out = Vec::new();
        write_scores(&mut out, &users, &rows, Some("joint")).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "3\talice\t1.5\t0.25\tA\tjoint\n4\tbob\tNaN\tNaN\terror:unknown venue `x`\tjoint\n"
        );
    }
}
