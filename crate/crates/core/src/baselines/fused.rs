use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ROC operating points of the two-detector fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedResult {
    /// `(fpr, tpr)` for every threshold pair, row-major over the grids.
    pub points: Vec<(f64, f64)>,
    /// Upper convex hull of `points` together with `(0,0)` and `(1,1)`.
    pub frontier: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps threshold pairs; a behavior is flagged iff `a > t_a || b > t_b`.
///
/// Each detector's thresholds are `grid` evenly spaced order statistics of
/// its distinct scores plus `-inf` and `+inf`, so the single-detector curves
/// are contained in the sweep.
pub fn fused_evaluate(a: &[f64], b: &[f64], labels: &[bool], grid: (usize, usize)) -> Result<FusedResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() != labels.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    let ta = grid_thresholds(a, grid.0);
    let tb = grid_thresholds(b, grid.1);
    let mut points = Vec::with_capacity(ta.len() * tb.len());
    for &x in &ta {
        for &y in &tb {
            let (mut tp, mut fp) = (0usize, 0usize);
            for i in 0..labels.len() {
                if a[i] > x || b[i] > y {
                    if labels[i] {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        }
    }
    let frontier = roc_hull(&points);
    let auc = trapezoid(&frontier);
    Ok(FusedResult { points, frontier, auc })
}

fn grid_thresholds(scores: &[f64], size: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.iter().copied().filter(|s| !s.is_nan()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = vec![f64::NEG_INFINITY];
    if distinct.len() <= size {
        out.extend_from_slice(&distinct);
    } else if size == 1 {
        out.push(distinct[distinct.len() / 2]);
    } else if size > 1 {
        let last = distinct.len() - 1;
        out.extend((0..size).map(|i| distinct[i * last / (size - 1)]));
        out.dedup();
    }
    out.push(f64::INFINITY);
    out
}

/// Upper convex hull from `(0,0)` to `(1,1)` of the given ROC points.
pub fn roc_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, f64)> = points.to_vec();
    all.push((0.0, 0.0));
    all.push((1.0, 1.0));
    all.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    all.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(all.len());
    for p in all {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

fn trapezoid(curve: &[(f64, f64)]) -> f64 {
    curve.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn perfect_detector_gives_unit_auc() {
        let labels = [true, true, false, false, false];
        let a = [0.9, 0.8, 0.1, 0.2, 0.3];
        let b = [0.5, 0.1, 0.9, 0.7, 0.2];
        let r = fused_evaluate(&a, &b, &labels, (10, 10)).unwrap();
        assert_eq!(r.auc, 1.0);
        assert!(r.frontier.contains(&(0.0, 1.0)));
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = seeded(11);
        let n = 4000;
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let r = fused_evaluate(&a, &b, &labels, (10, 10)).unwrap();
        assert!((r.auc - 0.5).abs() < 0.05, "{}", r.auc);
    }

    #[test]
    fn dominates_single_detectors() {
        let mut rng = seeded(5);
        let n = 300;
        let labels: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
        let a: Vec<f64> = labels.iter().map(|&l| rng.random::<f64>() + if l { 0.4 } else { 0.0 }).collect();
        let b: Vec<f64> = labels.iter().map(|&l| rng.random::<f64>() + if l { 0.2 } else { 0.0 }).collect();
        let fused = fused_evaluate(&a, &b, &labels, (12, 12)).unwrap();
        let never = vec![0.0; n];
        // the second detector never fires above +inf, so these are single-detector curves
        let only_a = fused_evaluate(&a, &never, &labels, (12, 1)).unwrap();
        let only_b = fused_evaluate(&never, &b, &labels, (1, 12)).unwrap();
        assert!(fused.auc >= only_a.auc.max(only_b.auc) - 1e-15);
    }

    #[test]
    fn hull_is_anchored_and_monotone() {
        let h = roc_hull(&[(0.2, 0.6), (0.5, 0.5), (0.4, 0.9)]);
        assert_eq!(h.first(), Some(&(0.0, 0.0)));
        assert_eq!(h.last(), Some(&(1.0, 1.0)));
        assert!(h.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        assert!(!h.contains(&(0.5, 0.5)));
    }

    #[test]
    fn single_class_rejected() {
        assert!(fused_evaluate(&[0.1], &[0.2], &[true], (2, 2)).is_err());
    }
}
