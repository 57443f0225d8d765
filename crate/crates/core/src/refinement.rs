//! Probability searching: NMS over mirror-space detections with
//! uncertainty-variance voting of the surviving centers.
//!
//! Each kept detection pulls in the detections it suppresses. Their centers
//! are averaged per axis with weights `p_i / var_i`, where `p_i` decays with
//! `(1 - IoU)²` against the kept box. Members that overlap weakly or carry a
//! large variance therefore count less. The aggregated precision
//! `sum(p_i / var_i)` also sets the radius of the next sampling range.

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::geom::GalvoPoint;

/// Default temperature of the overlap probability.
pub const SIGMA_T: f64 = 0.025;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmsParams {
    /// Detections with IoU above this against a kept one are merged into it.
    pub iou_keep: f64,
    pub sigma_t: f64,
    /// Replace kept centers by the variance vote of their members.
    pub voting: bool,
    /// Lower bound applied to member variances, degrees².
    pub var_floor: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self {
            iou_keep: 0.5,
            sigma_t: SIGMA_T,
            voting: true,
            var_floor: 1e-6,
        }
    }
}

pub fn iou(a: &Detection, b: &Detection) -> f64 {
    a.bbox().iou(&b.bbox())
}

/// `exp(-(1 - iou)² / sigma_t)`.
pub fn overlap_prob_from_iou(iou: f64, sigma_t: f64) -> f64 {
    (-(1.0 - iou).powi(2) / sigma_t).exp()
}

pub fn overlap_prob(b_i: &Detection, b_m: &Detection, sigma_t: f64) -> f64 {
    overlap_prob_from_iou(iou(b_i, b_m), sigma_t)
}

/// Result of voting over one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub center: GalvoPoint,
    /// `1 / sum(p_i / var_i)` per axis, degrees².
    pub variance: (f64, f64),
}

impl Vote {
    /// Per-axis sampling radius, degrees.
    pub fn radius(&self) -> (f64, f64) {
        (self.variance.0.sqrt(), self.variance.1.sqrt())
    }
}

/// Precision-weighted center of `members`, each paired with its overlap
/// probability against the kept box.
///
/// # Panics
///
/// If `members` is empty.
pub fn variance_vote(members: &[(&Detection, f64)], var_floor: f64) -> Vote {
    assert!(
        !members.is_empty(),
        "variance vote needs at least the kept detection"
    );
    let (mut num_h, mut den_h, mut num_v, mut den_v) = (0.0, 0.0, 0.0, 0.0);
    for (d, p) in members {
        let wh = p / d.var_h.max(var_floor);
        let wv = p / d.var_v.max(var_floor);
        num_h += wh * d.center.h;
        den_h += wh;
        num_v += wv * d.center.v;
        den_v += wv;
    }
    Vote {
        center: GalvoPoint::new(num_h / den_h, num_v / den_v),
        variance: (1.0 / den_h, 1.0 / den_v),
    }
}

/// A retained search window.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchWindow {
    /// Refined center, degrees.
    pub center: GalvoPoint,
    /// Sampling radius per axis, degrees.
    pub radius: (f64, f64),
    /// Variance behind `radius`, degrees².
    pub variance: (f64, f64),
    /// Extent of the highest-confidence member.
    pub extent: (f64, f64),
    pub confidence: f64,
    pub members: Vec<Detection>,
}

impl SearchWindow {
    pub fn kept(&self) -> &Detection {
        &self.members[0]
    }
}

/// Greedy confidence-ranked NMS; suppressed detections become members of
/// the window that suppressed them.
pub fn nms_merge(dets: &[Detection], params: &NmsParams) -> Vec<SearchWindow> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    let mut taken = vec![false; dets.len()];
    let mut windows = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        let kept = &dets[i];
        let mut members: Vec<(&Detection, f64)> = vec![(kept, 1.0)];
        for &j in &order[rank + 1..] {
            if taken[j] {
                continue;
            }
            let o = iou(kept, &dets[j]);
            if o > params.iou_keep {
                taken[j] = true;
                members.push((&dets[j], overlap_prob_from_iou(o, params.sigma_t)));
            }
        }
        let vote = if params.voting {
            variance_vote(&members, params.var_floor)
        } else {
            Vote {
                center: kept.center,
                variance: (kept.var_h.max(params.var_floor), kept.var_v.max(params.var_floor)),
            }
        };
        windows.push(SearchWindow {
            center: vote.center,
            radius: vote.radius(),
            variance: vote.variance,
            extent: kept.extent,
            confidence: kept.confidence,
            members: members.into_iter().map(|(d, _)| d.clone()).collect(),
        });
    }
    windows
}
