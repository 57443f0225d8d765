//! Detector interface and the default synthetic detector.
//!
//! A detector turns a [`View`] into detections carrying a confidence, which
//! doubles as the measurement likelihood of the particle that produced the
//! view, and per-axis localization variances. The synthetic detector draws
//! its localization error from exactly the variance it reports, so variance
//! weighting downstream is statistically meaningful.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::galvo::{View, VisibleObject};
use crate::geom::{CenteredBox, GalvoPoint};
use crate::scene::ObjectId;

/// Likelihood assigned to a view with no detection.
pub const LIKELIHOOD_FLOOR: f64 = 1e-3;

/// A detection in mirror coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub center: GalvoPoint,
    /// Box width and height, degrees.
    pub extent: (f64, f64),
    pub confidence: f64,
    /// Localization variance per axis, degrees².
    pub var_h: f64,
    pub var_v: f64,
    pub class: String,
    pub source_particle: usize,
    /// Ground-truth object behind the detection; bookkeeping for metrics only.
    pub truth: Option<ObjectId>,
}

impl Detection {
    pub fn bbox(&self) -> CenteredBox {
        CenteredBox::new(self.center.h, self.center.v, self.extent.0, self.extent.1)
    }

    pub fn mean_variance(&self) -> f64 {
        0.5 * (self.var_h + self.var_v)
    }
}

/// Anything that can look at a view and report detections.
pub trait Detector: Send + Sync {
    fn detect(&self, view: &View, rng: &mut dyn RngCore) -> Vec<Detection>;
}

/// `p(z | x)` for a view: the best detection confidence, or the floor.
pub fn likelihood(detections: &[Detection], floor: f64) -> f64 {
    detections
        .iter()
        .map(|d| d.confidence)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
        .unwrap_or(floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub base_recall: f64,
    /// Apparent size (view px) at which small-object effects start.
    pub s_ref: f64,
    /// Localization std of an ideal detection, degrees.
    pub sigma_base: f64,
    pub k_occ: f64,
    pub k_ctr: f64,
    /// Detection probability lost at the view corner.
    pub center_falloff: f64,
    /// Std of the additive confidence noise.
    pub confidence_noise: f64,
    /// Scale on the localization noise; 0 reports exact centers.
    pub loc_noise: f64,
    /// Relative std of the reported box extent.
    pub extent_noise: f64,
    /// Expected false positives per view.
    pub fp_rate: f64,
    pub fp_conf_cap: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::preset("medium").expect("builtin preset")
    }
}

impl DetectorConfig {
    pub const PRESETS: [&'static str; 3] = ["weak", "medium", "strong"];

    /// Named detector quality levels used by the ablation study.
    pub fn preset(name: &str) -> Option<Self> {
        let (base_recall, sigma_base) = match name {
            "weak" => (0.80, 0.065),
            "medium" => (0.88, 0.05),
            "strong" => (0.93, 0.04),
            _ => return None,
        };
        Some(Self {
            base_recall,
            s_ref: 40.0,
            sigma_base,
            k_occ: 4.0,
            k_ctr: 1.0,
            center_falloff: 0.5,
            confidence_noise: 0.05,
            loc_noise: 1.0,
            extent_noise: 0.05,
            fp_rate: 0.01,
            fp_conf_cap: 0.3,
        })
    }

    /// The same detector with every noise source disabled.
    pub fn noiseless(mut self) -> Self {
        self.confidence_noise = 0.0;
        self.loc_noise = 0.0;
        self.extent_noise = 0.0;
        self.fp_rate = 0.0;
        self
    }

    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut unit = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("detector.{name} must be in [0, 1], got {v}"));
            }
        };
        unit("base_recall", self.base_recall);
        unit("center_falloff", self.center_falloff);
        unit("fp_conf_cap", self.fp_conf_cap);
        for (name, v) in [("s_ref", self.s_ref), ("sigma_base", self.sigma_base)] {
            if !(v > 0.0) {
                out.push(format!("detector.{name} must be > 0, got {v}"));
            }
        }
        for (name, v) in [
            ("k_occ", self.k_occ),
            ("k_ctr", self.k_ctr),
            ("confidence_noise", self.confidence_noise),
            ("loc_noise", self.loc_noise),
            ("extent_noise", self.extent_noise),
            ("fp_rate", self.fp_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                out.push(format!("detector.{name} must be a finite value >= 0, got {v}"));
            }
        }
        out
    }
}

/// Distance of the visible part from the view center, normalized so the
/// corner is 1.
pub fn center_distance(view: &View, vis: &VisibleObject) -> f64 {
    let (cx, cy) = (view.size.0 / 2.0, view.size.1 / 2.0);
    let d = (vis.position.0 - cx).hypot(vis.position.1 - cy);
    (d / cx.hypot(cy)).min(1.0)
}

/// Probability that `vis` is detected.
pub fn detection_probability(cfg: &DetectorConfig, view: &View, vis: &VisibleObject) -> f64 {
    let s = (vis.apparent_size.0 * vis.apparent_size.1).max(0.0).sqrt();
    let size_factor = (s / cfg.s_ref).min(1.0);
    let center_factor = 1.0 - cfg.center_falloff * center_distance(view, vis);
    (cfg.base_recall * (1.0 - vis.occlusion) * size_factor * center_factor).clamp(0.0, 1.0)
}

/// Localization variance per axis, degrees².
///
/// `sigma_base² (1 + k_occ occ) (s_ref / s) (1 + k_ctr dist)` with `s` the
/// apparent extent along that axis.
pub fn uncertainty(cfg: &DetectorConfig, view: &View, vis: &VisibleObject) -> (f64, f64) {
    let common = cfg.sigma_base.powi(2)
        * (1.0 + cfg.k_occ * vis.occlusion)
        * (1.0 + cfg.k_ctr * center_distance(view, vis));
    (
        common * cfg.s_ref / vis.apparent_size.0.max(1.0),
        common * cfg.s_ref / vis.apparent_size.1.max(1.0),
    )
}

/// The default parametric detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDetector {
    pub config: DetectorConfig,
}

impl SyntheticDetector {
    pub fn new(config: DetectorConfig) -> Self {
        Self { config }
    }
}

impl Detector for SyntheticDetector {
    fn detect(&self, view: &View, rng: &mut dyn RngCore) -> Vec<Detection> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for vis in &view.visible {
            let d = detection_probability(cfg, view, vis);
            if !(rng.random::<f64>() < d) {
                continue;
            }
            let (var_h, var_v) = uncertainty(cfg, view, vis);
            let n: (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let m: (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let c: f64 = rng.sample(StandardNormal);
            let t = (
                vis.full_center.0 + cfg.loc_noise * var_h.sqrt() / view.alpha * n.0,
                vis.full_center.1 + cfg.loc_noise * var_v.sqrt() / view.alpha * n.1,
            );
            let extent = (
                (vis.full_size.0 * view.alpha * (1.0 + cfg.extent_noise * m.0)).max(view.alpha),
                (vis.full_size.1 * view.alpha * (1.0 + cfg.extent_noise * m.1)).max(view.alpha),
            );
            out.push(Detection {
                center: view.pixel_to_galvo(t),
                extent,
                confidence: (d + cfg.confidence_noise * c).clamp(0.0, 1.0),
                var_h,
                var_v,
                class: vis.class.clone(),
                source_particle: 0,
                truth: Some(vis.object_id),
            });
        }
        if cfg.fp_rate > 0.0 {
            let count = Poisson::new(cfg.fp_rate)
                .map(|p| p.sample(rng) as usize)
                .unwrap_or(0);
            for _ in 0..count {
                let t = (
                    rng.random::<f64>() * view.size.0,
                    rng.random::<f64>() * view.size.1,
                );
                let size = rng.random_range(30.0..120.0);
                let ghost = VisibleObject {
                    object_id: ObjectId(u32::MAX),
                    class: String::new(),
                    position: t,
                    apparent_size: (size, size),
                    full_center: t,
                    full_size: (size, size),
                    occlusion: 0.5,
                    visible_fraction: 1.0,
                };
                let (var_h, var_v) = uncertainty(cfg, view, &ghost);
                out.push(Detection {
                    center: view.pixel_to_galvo(t),
                    extent: (size * view.alpha, size * view.alpha),
                    confidence: rng.random::<f64>() * cfg.fp_conf_cap,
                    var_h,
                    var_v,
                    class: String::new(),
                    source_particle: 0,
                    truth: None,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn view_with(vis: Vec<VisibleObject>) -> View {
        View {
            center: GalvoPoint::new(1.0, -2.0),
            size: (264.0, 224.0),
            alpha: 0.002,
            visible: vis,
        }
    }

    fn centered(size: f64, occlusion: f64) -> VisibleObject {
        VisibleObject {
            object_id: ObjectId(4),
            class: "car".into(),
            position: (132.0, 112.0),
            apparent_size: (size, size * 0.6),
            full_center: (132.0, 112.0),
            full_size: (size, size * 0.6),
            occlusion,
            visible_fraction: 1.0,
        }
    }

    #[test]
    fn empty_view_without_false_positives() {
        let det = SyntheticDetector::new(DetectorConfig::default().noiseless());
        let mut rng = SimRng::seed_from_u64(1);
        assert!(det.detect(&view_with(vec![]), &mut rng).is_empty());
    }

    #[test]
    fn ideal_detection_is_exact() {
        let mut cfg = DetectorConfig::default().noiseless();
        cfg.base_recall = 1.0;
        let det = SyntheticDetector::new(cfg.clone());
        let view = view_with(vec![centered(150.0, 0.0)]);
        let mut rng = SimRng::seed_from_u64(2);
        let dets = det.detect(&view, &mut rng);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].center, view.center);
        let size_factor = (150.0f64 * 90.0).sqrt() / cfg.s_ref;
        assert_eq!(dets[0].confidence, size_factor.min(1.0));
        assert_eq!(dets[0].truth, Some(ObjectId(4)));
    }

    #[test]
    fn occlusion_inflates_variance() {
        let cfg = DetectorConfig::default();
        let clear = view_with(vec![centered(100.0, 0.0)]);
        let hidden = view_with(vec![centered(100.0, 0.8)]);
        let a = uncertainty(&cfg, &clear, &clear.visible[0]);
        let b = uncertainty(&cfg, &hidden, &hidden.visible[0]);
        assert!(b.0 > a.0 && b.1 > a.1);
    }

    #[test]
    fn likelihood_aggregation() {
        assert_eq!(likelihood(&[], LIKELIHOOD_FLOOR), 1e-3);
        let mk = |p| Detection {
            center: GalvoPoint::new(0.0, 0.0),
            extent: (0.1, 0.1),
            confidence: p,
            var_h: 0.01,
            var_v: 0.01,
            class: "car".into(),
            source_particle: 0,
            truth: None,
        };
        assert_eq!(likelihood(&[mk(0.4), mk(0.9)], LIKELIHOOD_FLOOR), 0.9);
        assert_eq!(likelihood(&[mk(1.0)], LIKELIHOOD_FLOOR), 1.0);
    }

    #[test]
    fn empirical_rate_matches_model() {
        let cfg = DetectorConfig::default().noiseless();
        let det = SyntheticDetector::new(cfg.clone());
        let mut vis = centered(30.0, 0.3);
        vis.position = (200.0, 60.0);
        let view = view_with(vec![vis]);
        let expected = detection_probability(&cfg, &view, &view.visible[0]);
        let mut rng = SimRng::seed_from_u64(99);
        let hits = (0..10_000)
            .filter(|_| !det.detect(&view, &mut rng).is_empty())
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - expected).abs() < 0.02, "{freq} vs {expected}");
    }

    #[test]
    fn presets_exist() {
        for name in DetectorConfig::PRESETS {
            let p = DetectorConfig::preset(name).unwrap();
            assert!(p.issues().is_empty());
        }
        assert!(DetectorConfig::preset("yolo").is_none());
    }
}
