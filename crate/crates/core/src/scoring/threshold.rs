use serde::{Deserialize, Serialize};

use super::ScoredBehavior;
use crate::error::{Error, Result};

/// One step of the downward threshold scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub threshold: f64,
    /// Normal behaviors first flagged at this step.
    pub new_normals: usize,
    /// Anomalous behaviors first flagged at this step.
    pub new_anomalies: usize,
    /// `new_normals / new_anomalies`; infinite when no anomaly is new.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub threshold: f64,
    pub curve: Vec<CostPoint>,
    /// False when no step had cost below one; `threshold` is then `hi`.
    pub qualified: bool,
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Picks a flagging threshold (flag when `score >= threshold`) by scanning
/// from `hi` down to `lo` in `step` increments.
///
/// Each step's cost compares the normals it newly flags with the anomalies
/// it newly flags. Scanning continues through steps that flag nothing; once
/// some step has had cost below one, the first step that flags anything at
/// cost of at least one ends the scan. The lowest threshold reached before
/// that point is returned.
pub fn select_threshold_raw(scores: &[f64], anomalous: &[bool], lo: f64, hi: f64, step: f64) -> Result<ThresholdSelection> {
    if scores.len() != anomalous.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: anomalous.len(),
        });
    }
    if !(lo < hi) || !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold scan needs lo < hi and step > 0 (got {lo}, {hi}, {step})"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let steps = ((hi - lo) / step).round() as usize;
    let mut curve = Vec::with_capacity(steps + 1);
    let mut cursor = 0;
    let mut best: Option<f64> = None;
    let mut stopped = false;
    for i in 0..=steps {
        let threshold = round12(lo + (steps - i) as f64 * step);
        let (mut normals, mut anomalies) = (0, 0);
        while cursor < order.len() && scores[order[cursor]] >= threshold {
            if anomalous[order[cursor]] {
                anomalies += 1;
            } else {
                normals += 1;
            }
            cursor += 1;
        }
        let cost = if anomalies == 0 {
            f64::INFINITY
        } else {
            normals as f64 / anomalies as f64
        };
        curve.push(CostPoint {
            threshold,
            new_normals: normals,
            new_anomalies: anomalies,
            cost,
        });
        if stopped {
            continue;
        }
        if anomalies > 0 && cost < 1.0 {
            best = Some(threshold);
        } else if anomalies == 0 && normals == 0 {
            if best.is_some() {
                best = Some(threshold);
            }
        } else if best.is_some() {
            stopped = true;
        }
    }
    Ok(match best {
        Some(threshold) => ThresholdSelection {
            threshold,
            curve,
            qualified: true,
        },
        None => {
            log::warn!("no threshold in [{lo}, {hi}] has cost below 1; using {hi}");
            ThresholdSelection {
                threshold: hi,
                curve,
                qualified: false,
            }
        }
    })
}

/// [`select_threshold_raw`] over relative scores.
pub fn select_threshold(scored: &[ScoredBehavior], lo: f64, hi: f64, step: f64) -> Result<ThresholdSelection> {
    let scores: Vec<f64> = scored.iter().map(|s| s.s_r).collect();
    let labels: Vec<bool> = scored.iter().map(|s| s.label.is_anomalous()).collect();
    select_threshold_raw(&scores, &labels, lo, hi, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores() {
        let mut scores = vec![0.999; 5];
        scores.extend(vec![0.1; 20]);
        let labels: Vec<bool> = (0..25).map(|i| i < 5).collect();
        let sel = select_threshold_raw(&scores, &labels, 0.0, 1.0, 0.1).unwrap();
        assert!(sel.qualified);
        // 0.9 flags every anomaly; 0.8 .. 0.2 flag nothing; 0.1 flags the normals.
        assert_eq!(sel.threshold, 0.2);
        assert_eq!(sel.curve.len(), 11);
        assert_eq!(sel.curve[1].new_anomalies, 5);
        assert_eq!(sel.curve[9].new_normals, 20);
    }

    #[test]
    fn nothing_qualifies_returns_hi() {
        let scores = [0.99, 0.98, 0.5];
        let labels = [false, false, true];
        let sel = select_threshold_raw(&scores, &labels, 0.975, 1.0, 0.005).unwrap();
        assert!(!sel.qualified);
        assert_eq!(sel.threshold, 1.0);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(select_threshold_raw(&[0.5], &[true], 1.0, 0.5, 0.1).is_err());
        assert!(select_threshold_raw(&[0.5], &[true, false], 0.0, 1.0, 0.1).is_err());
    }
}
