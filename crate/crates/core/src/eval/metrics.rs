use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Indices sorted by descending score; NaN sorts last.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match (scores[a].is_nan(), scores[b].is_nan()) {
        (false, false) => scores[b].total_cmp(&scores[a]),
        (x, y) => x.cmp(&y),
    });
    order
}

/// Tie groups of `order`: `(positives, negatives)` per distinct score,
/// from the highest score down.
fn tie_groups(scores: &[f64], labels: &[bool], order: &[usize]) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &i in order {
        let s = scores[i];
        match groups.last_mut() {
            Some(g) if g.0 == s || (g.0.is_nan() && s.is_nan()) => {
                if labels[i] {
                    g.1 += 1;
                } else {
                    g.2 += 1;
                }
            }
            _ => groups.push((s, labels[i] as usize, (!labels[i]) as usize)),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Higher scores mean more anomalous.
///
/// Computed as an exact integer pair count divided once, so it equals
/// brute-force pair counting bit for bit.
pub fn compute_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (positives, negatives) = class_counts(scores, labels)?;
    let order = descending(scores);
    // twice the number of (positive, negative) pairs ordered correctly
    let mut doubled: u128 = 0;
    let mut negatives_below = negatives as u128;
    for (_, pos, neg) in tie_groups(scores, labels, &order) {
        negatives_below -= neg as u128;
        doubled += pos as u128 * (2 * negatives_below + neg as u128);
    }
    Ok(doubled as f64 / (2.0 * positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// `(fpr, tpr)` from `(0,0)` to `(1,1)`.
    pub roc: Vec<(f64, f64)>,
    /// `(recall, precision)`, one point per distinct score.
    pub pr: Vec<(f64, f64)>,
    /// Threshold of each ROC point after the origin (flag when `score >= t`).
    pub thresholds: Vec<f64>,
}

/// ROC and precision-recall points from a sweep over the distinct scores.
pub fn compute_curves(scores: &[f64], labels: &[bool]) -> Result<Curves> {
    let (positives, negatives) = class_counts(scores, labels)?;
    let order = descending(scores);
    let mut roc = vec![(0.0, 0.0)];
    let mut pr = Vec::new();
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (score, pos, neg) in tie_groups(scores, labels, &order) {
        tp += pos;
        fp += neg;
        roc.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        pr.push((tp as f64 / positives as f64, tp as f64 / (tp + fp) as f64));
        thresholds.push(score);
    }
    Ok(Curves { roc, pr, thresholds })
}

/// Area under a piecewise-linear curve given by its vertices.
pub fn trapezoid_area(curve: &[(f64, f64)]) -> f64 {
    curve.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Largest TPR among ROC points with FPR at most `max_fpr`.
pub fn tpr_at_fpr(scores: &[f64], labels: &[bool], max_fpr: f64) -> Result<f64> {
    let curves = compute_curves(scores, labels)?;
    Ok(curves
        .roc
        .iter()
        .filter(|p| p.0 <= max_fpr + 1e-12)
        .map(|p| p.1)
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl ConfusionMatrix {
    /// Flags behaviors with `score >= threshold`; anomalous is positive.
    pub fn at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: labels.len(),
            });
        }
        let mut m = ConfusionMatrix::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, true) => m.fn_ += 1,
                (false, false) => m.tn += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Detection rate.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn tpr(&self) -> f64 {
        self.recall()
    }

    /// Disturbance rate.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn tnr(&self) -> f64 {
        ratio(self.tn, self.fp + self.tn)
    }

    pub fn fnr(&self) -> f64 {
        ratio(self.fn_, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// `2PR / (P + R)`; zero when both are zero.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn metrics(&self) -> DerivedMetrics {
        DerivedMetrics {
            precision: self.precision(),
            recall: self.recall(),
            fpr: self.fpr(),
            tnr: self.tnr(),
            fnr: self.fnr(),
            accuracy: self.accuracy(),
            f1: self.f1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub tnr: f64,
    pub fnr: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair_count(scores: &[f64], labels: &[bool]) -> f64 {
        let mut doubled = 0u64;
        let (mut p, mut n) = (0u64, 0u64);
        for i in 0..scores.len() {
            if labels[i] {
                p += 1;
            } else {
                n += 1;
            }
            if !labels[i] {
                continue;
            }
            for j in 0..scores.len() {
                if labels[j] {
                    continue;
                }
                if scores[i] > scores[j] {
                    doubled += 2;
                } else if scores[i] == scores[j] {
                    doubled += 1;
                }
            }
        }
        doubled as f64 / (2.0 * p as f64 * n as f64)
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(compute_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(compute_auc(&[0.5; 6], &[true, false, true, false, false, false]).unwrap(), 0.5);
        assert!(compute_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    proptest! {
        #[test]
        fn auc_equals_pair_count(seed in any::<u64>(), n in 2usize..200, levels in 1u32..12) {
            let mut rng = seeded(seed);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            labels[0] = true;
            labels[1] = false;
            prop_assert_eq!(compute_auc(&scores, &labels).unwrap(), pair_count(&scores, &labels));
        }

        #[test]
        fn roc_is_anchored_and_monotone(seed in any::<u64>(), n in 2usize..100) {
            let mut rng = seeded(seed);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let c = compute_curves(&scores, &labels).unwrap();
            prop_assert_eq!(c.roc[0], (0.0, 0.0));
            prop_assert_eq!(*c.roc.last().unwrap(), (1.0, 1.0));
            prop_assert!(c.roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        }

        #[test]
        fn confusion_identities(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            let m = ConfusionMatrix { tp, fp, fn_, tn };
            if m.total() > 0 {
                prop_assert_eq!(m.accuracy(), (tp + tn) as f64 / m.total() as f64);
            }
            let (p, r) = (m.precision(), m.recall());
            if p + r > 0.0 {
                prop_assert_eq!(m.f1(), 2.0 * p * r / (p + r));
            }
        }
    }

    #[test]
    fn trapezoid_matches_auc_without_ties() {
        let mut rng = seeded(4);
        let scores: Vec<f64> = (0..150).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..150).map(|i| i % 3 == 0).collect();
        let c = compute_curves(&scores, &labels).unwrap();
        let auc = compute_auc(&scores, &labels).unwrap();
        assert!((trapezoid_area(&c.roc) - auc).abs() < 1e-9);
    }

    #[test]
    fn separable_hits_corner_and_pr_ends_at_base_rate() {
        let scores = [0.9, 0.8, 0.3, 0.2, 0.1];
        let labels = [true, true, false, false, false];
        let c = compute_curves(&scores, &labels).unwrap();
        assert!(c.roc.contains(&(0.0, 1.0)));
        assert_eq!(*c.pr.last().unwrap(), (1.0, 2.0 / 5.0));
        assert_eq!(tpr_at_fpr(&scores, &labels, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn confusion_at_threshold() {
        let m = ConfusionMatrix::at_threshold(&[0.9, 0.5, 0.4, 0.1], &[true, false, true, false], 0.45).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(m.accuracy(), 0.5);
    }
}
