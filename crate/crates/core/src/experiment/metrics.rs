//! Recall and average precision.

use crate::geom::CenteredBox;

/// Greedy confidence-ranked matching of predictions to ground truth at an
/// IoU threshold. Returns, in rank order, whether each prediction is a true
/// positive.
pub fn match_predictions(preds: &[(f64, CenteredBox)], gts: &[CenteredBox], iou_thr: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].0.total_cmp(&preds[a].0).then(a.cmp(&b)));
    let mut used = vec![false; gts.len()];
    order
        .iter()
        .map(|&i| {
            let mut best = None;
            let mut best_iou = iou_thr;
            for (g, gt) in gts.iter().enumerate() {
                if used[g] {
                    continue;
                }
                let o = preds[i].1.iou(gt);
                if o >= best_iou {
                    best_iou = o;
                    best = Some(g);
                }
            }
            match best {
                Some(g) => {
                    used[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// 11-point interpolated average precision.
///
/// With no ground truth the score is 1 when there are no predictions and 0
/// otherwise.
pub fn average_precision_11(preds: &[(f64, CenteredBox)], gts: &[CenteredBox], iou_thr: f64) -> f64 {
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let tps = match_predictions(preds, gts, iou_thr);
    let mut points = Vec::with_capacity(tps.len());
    let mut tp = 0usize;
    for (k, is_tp) in tps.iter().enumerate() {
        if *is_tp {
            tp += 1;
        }
        points.push((tp as f64 / gts.len() as f64, tp as f64 / (k + 1) as f64));
    }
    (0..=10)
        .map(|i| {
            let r = i as f64 / 10.0;
            points
                .iter()
                .filter(|(rec, _)| *rec >= r - 1e-12)
                .map(|(_, prec)| *prec)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64) -> CenteredBox {
        CenteredBox::new(x, 0.0, 1.0, 1.0)
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![bx(0.0), bx(5.0)];
        let preds = vec![(0.9, bx(0.0)), (0.8, bx(5.0))];
        assert_eq!(average_precision_11(&preds, &gts, 0.5), 1.0);
    }

    #[test]
    fn false_positive_ranked_first() {
        let gts = vec![bx(0.0)];
        let preds = vec![(0.9, bx(10.0)), (0.8, bx(0.0))];
        // Recall 1 is first reached at precision 1/2.
        assert!((average_precision_11(&preds, &gts, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicates_count_once() {
        let gts = vec![bx(0.0)];
        let preds = vec![(0.9, bx(0.0)), (0.8, bx(0.05))];
        assert_eq!(match_predictions(&preds, &gts, 0.5), vec![true, false]);
    }

    #[test]
    fn empty_cases() {
        assert_eq!(average_precision_11(&[], &[], 0.5), 1.0);
        assert_eq!(average_precision_11(&[(0.5, bx(0.0))], &[], 0.5), 0.0);
        assert_eq!(average_precision_11(&[], &[bx(0.0)], 0.5), 0.0);
    }

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
