//! Panoramic probability map.
//!
//! The wide-angle camera contributes two things before any mirror move: a
//! segmentation of the panorama into semantic regions, and detections of the
//! objects that are large enough to be seen at panorama scale. Regions get a
//! sampling probability proportional to `area x P(T | region)`; inside a
//! region, each coarse detection claims a disc whose size grows with its
//! uncertainty, and the region's particles are split between the discs and
//! the rest of the region.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PanoPoint;
use crate::rng::{self, Stream};
use crate::scene::{self, LabelGrid, ObjectId, Region, RegionId, RegionSampler, SceneMap};

/// Simulated segmentation quality of the wide-angle camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegNoiseConfig {
    /// Per-pixel probability that the label flips to another region.
    pub label_flip_prob: f64,
    /// Standard deviation of the detected center, panoramic pixels.
    pub center_noise_px: f64,
    /// Relative standard deviation applied to the detection confidence.
    pub confidence_noise: f64,
    pub confidence_floor: f64,
    /// Object size (px) at which the size term of the confidence reaches 1/2.
    pub size_half_px: f64,
}

impl Default for SegNoiseConfig {
    fn default() -> Self {
        Self {
            label_flip_prob: 0.0,
            center_noise_px: 1.5,
            confidence_noise: 0.05,
            confidence_floor: 0.05,
            size_half_px: 12.0,
        }
    }
}

impl SegNoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            label_flip_prob: 0.0,
            center_noise_px: 0.0,
            confidence_noise: 0.0,
            ..Self::default()
        }
    }
}

/// Allocation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocParams {
    /// Pixels of disc radius per unit of detection uncertainty.
    pub r: f64,
    /// Sampling probability of a detected object's disc.
    pub f_sub: f64,
}

impl Default for AllocParams {
    fn default() -> Self {
        Self { r: 50.0, f_sub: 1.0 }
    }
}

pub const SIGMA_O_MIN: f64 = 0.02;
pub const SIGMA_O_MAX: f64 = 1.0;

/// Object found by the wide-angle camera.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoDetection {
    pub object_id: ObjectId,
    pub center: PanoPoint,
    /// Box size in panoramic pixels.
    pub size: (f64, f64),
    pub confidence: f64,
    pub sigma_o: f64,
}

/// Confidence reuse as uncertainty.
pub fn sigma_from_confidence(confidence: f64) -> f64 {
    (1.0 - confidence).clamp(SIGMA_O_MIN, SIGMA_O_MAX)
}

/// Confidence of the panoramic detector before noise: decreasing in
/// occlusion, increasing in object size, never below the floor.
pub fn pano_confidence(size: (f64, f64), occlusion: f64, noise: &SegNoiseConfig) -> f64 {
    let s = size.0.max(size.1);
    let base = (1.0 - occlusion.clamp(0.0, 1.0)) * s / (s + noise.size_half_px);
    base.clamp(noise.confidence_floor, 1.0)
}

/// Simulated segmentation: the (optionally corrupted) label grid and one
/// detection per panorama-detectable object.
pub fn segment_panorama(
    scene: &SceneMap,
    noise: &SegNoiseConfig,
    seed: u64,
) -> (LabelGrid, Vec<PanoDetection>) {
    let mut rng = rng::stream(seed, Stream::Segmentation);

    let labels = if noise.label_flip_prob > 0.0 && scene.regions.len() > 1 {
        let ids: Vec<RegionId> = scene.regions.iter().map(|r| r.id).collect();
        let mut cells = scene.labels.cells().to_vec();
        for c in cells.iter_mut() {
            if rng.random::<f64>() < noise.label_flip_prob {
                let k = rng.random_range(0..ids.len() - 1);
                let pos = ids.iter().position(|id| id == c).unwrap_or(0);
                *c = ids[if k >= pos { k + 1 } else { k }];
            }
        }
        LabelGrid::from_cells(scene.width, scene.height, cells).expect("grid dimensions unchanged")
    } else {
        scene.labels.clone()
    };

    let center_noise = Normal::new(0.0, noise.center_noise_px.max(0.0)).expect("finite std");
    let conf_noise = Normal::new(0.0, noise.confidence_noise.max(0.0)).expect("finite std");
    let mut dets = Vec::new();
    for o in scene.objects.iter().filter(|o| o.pano_detectable) {
        let base = pano_confidence(o.size, o.occlusion, noise);
        let jitter = conf_noise.sample(&mut rng);
        let confidence = if base <= noise.confidence_floor {
            noise.confidence_floor
        } else {
            (base * (1.0 + jitter)).clamp(noise.confidence_floor, 1.0)
        };
        let dx = center_noise.sample(&mut rng);
        let dy = center_noise.sample(&mut rng);
        let center = PanoPoint::new(
            (o.center.x + dx).clamp(0.0, scene.width as f64 - 1e-6),
            (o.center.y + dy).clamp(0.0, scene.height as f64 - 1e-6),
        );
        dets.push(PanoDetection {
            object_id: o.id,
            center,
            size: o.size,
            confidence,
            sigma_o: sigma_from_confidence(confidence),
        });
    }
    (labels, dets)
}

/// Per-region sampling probability `F(S_r, T)`.
pub fn region_sampling_prob(regions: &[Region], target: &str) -> Result<BTreeMap<RegionId, f64>> {
    let total_area: f64 = regions.iter().map(|r| r.area_px as f64).sum();
    if total_area <= 0.0 {
        return Err(Error::NoAdmissibleRegion(target.to_string()));
    }
    let numerators: Vec<f64> = regions
        .iter()
        .map(|r| (r.area_px as f64 / total_area) * r.prior(target))
        .collect();
    let denom: f64 = numerators.iter().sum();
    if !(denom > 0.0) {
        return Err(Error::NoAdmissibleRegion(target.to_string()));
    }
    Ok(regions
        .iter()
        .zip(numerators)
        .map(|(r, n)| (r.id, n / denom))
        .collect())
}

/// Integer apportionment by largest remainder; the result sums to `total`.
///
/// Ties in the fractional part go to the lower index.
pub fn apportion(reals: &[f64], total: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = reals.iter().map(|r| r.max(0.0).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..reals.len()).collect();
    let frac = |i: usize| reals[i].max(0.0) - reals[i].max(0.0).floor();
    if assigned < total {
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let mut deficit = total - assigned;
        let mut k = 0;
        while deficit > 0 && !order.is_empty() {
            counts[order[k % order.len()]] += 1;
            deficit -= 1;
            k += 1;
        }
    } else if assigned > total {
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(b.cmp(&a)));
        let mut excess = assigned - total;
        let mut k = 0;
        while excess > 0 {
            let i = order[k % order.len()];
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
            k += 1;
        }
    }
    counts
}

/// Particle split inside one region.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `S_ro` per detection, px².
    pub sub_areas: Vec<f64>,
    /// Unrounded `x_ro` per detection (after any degenerate rescaling).
    pub sub_exact: Vec<f64>,
    /// `x_ro` per detection.
    pub sub_counts: Vec<u64>,
    /// `x_rm`.
    pub remainder: u64,
    /// The discs covered more than the whole region.
    pub degenerate: bool,
}

/// Splits `x_r` particles between detection discs and the rest of the region.
pub fn refine_allocation(
    region_area: f64,
    x_r: u64,
    sigmas: &[f64],
    f_region: f64,
    params: AllocParams,
) -> Allocation {
    let sub_areas: Vec<f64> = sigmas.iter().map(|s| PI * (params.r * s).powi(2)).collect();
    let sum_sub: f64 = sub_areas.iter().sum();
    let x = x_r as f64;
    let degenerate = sum_sub > region_area;
    let mut exact: Vec<f64> = if degenerate {
        log::debug!(
            "detection discs ({sum_sub:.1} px²) exceed region area ({region_area:.1} px²); splitting by disc area"
        );
        sub_areas.iter().map(|a| x * a / sum_sub).collect()
    } else {
        let s_rm = region_area - sum_sub;
        sub_areas
            .iter()
            .map(|&a| {
                let num = params.f_sub * a;
                let den = num + f_region * s_rm;
                if den > 0.0 {
                    num / den * x
                } else {
                    0.0
                }
            })
            .collect()
    };
    let claimed: f64 = exact.iter().sum();
    if claimed > x && claimed > 0.0 {
        for e in exact.iter_mut() {
            *e *= x / claimed;
        }
    }
    let mut reals = exact.clone();
    reals.push((x - exact.iter().sum::<f64>()).max(0.0));
    let mut counts = apportion(&reals, x_r);
    let remainder = counts.pop().unwrap_or(0);
    Allocation {
        sub_areas,
        sub_exact: exact,
        sub_counts: counts,
        remainder,
        degenerate,
    }
}

/// A detection disc inside a region.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRegion {
    pub region: RegionId,
    pub object_id: ObjectId,
    pub center: PanoPoint,
    pub sigma_o: f64,
    /// Disc radius `r * sigma_o`, panoramic pixels.
    pub radius_px: f64,
    /// `S_ro`, px².
    pub area: f64,
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct Ppm {
    pub target: String,
    /// Segmented label grid the map was built from.
    pub labels: LabelGrid,
    pub sampler: Arc<RegionSampler>,
    /// Regions with areas measured on the segmented grid.
    pub regions: Vec<Region>,
    pub region_probs: BTreeMap<RegionId, f64>,
    pub region_counts: BTreeMap<RegionId, u64>,
    pub sub_regions: Vec<SubRegion>,
    pub remainder_counts: BTreeMap<RegionId, u64>,
    pub total_particles: u64,
    pub detections: Vec<PanoDetection>,
}

impl Ppm {
    /// Relative sampling density (probability per pixel) at `p`; zero outside.
    pub fn density(&self, p: PanoPoint) -> f64 {
        let Ok(id) = scene::region_in(&self.labels, p) else {
            return 0.0;
        };
        let area = self.sampler.area(id);
        if area == 0 {
            return 0.0;
        }
        self.region_probs.get(&id).copied().unwrap_or(0.0) / area as f64
    }

    /// Distributes `n` particles over regions and detection discs.
    pub fn allocate(&mut self, n: u64, params: AllocParams) -> Result<()> {
        let reals: Vec<f64> = self
            .regions
            .iter()
            .map(|r| self.region_probs[&r.id] * n as f64)
            .collect();
        let counts = apportion(&reals, n);
        let region_counts: BTreeMap<RegionId, u64> = self
            .regions
            .iter()
            .zip(&counts)
            .map(|(r, &c)| (r.id, c))
            .collect();

        let mut by_region: BTreeMap<RegionId, Vec<&PanoDetection>> = BTreeMap::new();
        for d in &self.detections {
            let id = scene::region_in(&self.labels, d.center)?;
            by_region.entry(id).or_default().push(d);
        }

        let mut sub_regions = Vec::new();
        let mut remainder_counts = BTreeMap::new();
        for r in &self.regions {
            let x_r = region_counts[&r.id];
            let dets = by_region.get(&r.id).cloned().unwrap_or_default();
            let sigmas: Vec<f64> = dets.iter().map(|d| d.sigma_o).collect();
            let alloc = refine_allocation(r.area_px as f64, x_r, &sigmas, self.region_probs[&r.id], params);
            for ((d, area), count) in dets.iter().zip(&alloc.sub_areas).zip(&alloc.sub_counts) {
                sub_regions.push(SubRegion {
                    region: r.id,
                    object_id: d.object_id,
                    center: d.center,
                    sigma_o: d.sigma_o,
                    radius_px: params.r * d.sigma_o,
                    area: *area,
                    count: *count,
                });
            }
            remainder_counts.insert(r.id, alloc.remainder);
        }
        self.region_counts = region_counts;
        self.sub_regions = sub_regions;
        self.remainder_counts = remainder_counts;
        self.total_particles = n;
        Ok(())
    }

    pub fn allocated(&self) -> u64 {
        self.sub_regions.iter().map(|s| s.count).sum::<u64>() + self.remainder_counts.values().sum::<u64>()
    }

    /// CSV dump: one row per region, then one row per sub-region.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["region_id", "label", "area_px", "prior", "F", "x_r", "x_rm"])?;
        for r in &self.regions {
            w.write_record([
                r.id.to_string(),
                r.label.clone(),
                r.area_px.to_string(),
                r.prior(&self.target).to_string(),
                self.region_probs.get(&r.id).copied().unwrap_or(0.0).to_string(),
                self.region_counts.get(&r.id).copied().unwrap_or(0).to_string(),
                self.remainder_counts.get(&r.id).copied().unwrap_or(0).to_string(),
            ])?;
        }
        for s in &self.sub_regions {
            w.write_record([
                s.region.to_string(),
                format!("sub:object{}", s.object_id),
                s.area.to_string(),
                "1".to_string(),
                String::new(),
                s.count.to_string(),
                String::new(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Regions of `scene` re-measured on a (possibly corrupted) label grid.
fn measured_regions(scene: &SceneMap, labels: &LabelGrid) -> Vec<Region> {
    if labels.same_storage(&scene.labels) {
        return scene.regions.clone();
    }
    let n = scene
        .regions
        .iter()
        .map(|r| r.id.0 as usize + 1)
        .max()
        .unwrap_or(0);
    let areas = labels.areas(n);
    scene
        .regions
        .iter()
        .map(|r| Region {
            area_px: areas[r.id.0 as usize],
            ..r.clone()
        })
        .collect()
}

/// Composes segmentation, region probabilities and in-region refinement.
pub fn build_ppm(
    scene: &SceneMap,
    noise: &SegNoiseConfig,
    target: &str,
    n: u64,
    params: AllocParams,
    seed: u64,
) -> Result<Ppm> {
    if n == 0 {
        return Err(Error::Precondition(
            "PPM needs at least one particle (N > 0)".into(),
        ));
    }
    let (labels, detections) = segment_panorama(scene, noise, seed);
    let regions = measured_regions(scene, &labels);
    let sampler = if labels.same_storage(&scene.labels) {
        scene.sampler_arc()
    } else {
        let n_ids = regions.iter().map(|r| r.id.0 as usize + 1).max().unwrap_or(0);
        Arc::new(RegionSampler::new(&labels, n_ids))
    };
    let region_probs = region_sampling_prob(&regions, target)?;
    let mut ppm = Ppm {
        target: target.to_string(),
        labels,
        sampler,
        regions,
        region_probs,
        region_counts: BTreeMap::new(),
        sub_regions: Vec::new(),
        remainder_counts: BTreeMap::new(),
        total_particles: 0,
        detections,
    };
    ppm.allocate(n, params)?;
    Ok(ppm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ObjectSpec, RegionSpec, SceneConfig};

    fn region(id: u16, area: u64, prior: f64) -> Region {
        Region {
            id: RegionId(id),
            label: format!("r{id}"),
            area_px: area,
            class_prior: BTreeMap::from([("car".to_string(), prior)]),
        }
    }

    #[test]
    fn single_region_probability_is_one() {
        let f = region_sampling_prob(&[region(0, 10, 0.3)], "car").unwrap();
        assert_eq!(f[&RegionId(0)], 1.0);
    }

    #[test]
    fn symmetric_regions_split_evenly() {
        let f = region_sampling_prob(&[region(0, 50, 0.4), region(1, 50, 0.4)], "car").unwrap();
        assert_eq!(f[&RegionId(0)], 0.5);
        assert_eq!(f[&RegionId(1)], 0.5);
    }

    #[test]
    fn weighted_regions_match_hand_arithmetic() {
        let f = region_sampling_prob(&[region(0, 60, 0.8), region(1, 40, 0.1)], "car").unwrap();
        assert!((f[&RegionId(0)] - 0.48 / 0.52).abs() < 1e-12);
        assert!((f[&RegionId(1)] - 0.04 / 0.52).abs() < 1e-12);
        assert!((f[&RegionId(0)] - 0.9231).abs() < 1e-4);
    }

    #[test]
    fn all_zero_priors_rejected() {
        let err = region_sampling_prob(&[region(0, 60, 0.0), region(1, 40, 0.0)], "car");
        assert!(matches!(err, Err(Error::NoAdmissibleRegion(_))));
    }

    #[test]
    fn allocation_without_detections_keeps_everything() {
        let a = refine_allocation(1000.0, 100, &[], 0.2, AllocParams::default());
        assert!(a.sub_counts.is_empty());
        assert_eq!(a.remainder, 100);
    }

    #[test]
    fn allocation_matches_hand_example() {
        let a = refine_allocation(1000.0, 100, &[0.1], 0.2, AllocParams::default());
        assert!((a.sub_areas[0] - 78.5398).abs() < 1e-3);
        assert!((a.sub_exact[0] - 29.88).abs() < 0.01, "{}", a.sub_exact[0]);
        assert_eq!(a.sub_counts, vec![30]);
        assert_eq!(a.remainder, 70);
    }

    #[test]
    fn vanishing_uncertainty_gets_nothing() {
        let a = refine_allocation(1000.0, 100, &[1e-9], 0.2, AllocParams::default());
        assert_eq!(a.sub_counts, vec![0]);
        assert_eq!(a.remainder, 100);
    }

    #[test]
    fn oversized_discs_split_by_area() {
        let a = refine_allocation(100.0, 10, &[0.5, 1.0], 0.3, AllocParams::default());
        assert!(a.degenerate);
        assert_eq!(a.remainder, 0);
        assert_eq!(a.sub_counts, vec![2, 8]);
    }

    #[test]
    fn apportion_conserves_total() {
        assert_eq!(apportion(&[29.88, 70.12], 100), vec![30, 70]);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 1), vec![1, 0, 0]);
        assert_eq!(apportion(&[2.6, 2.6], 5), vec![3, 2]);
        assert_eq!(apportion(&[], 0), Vec::<u64>::new());
    }

    #[test]
    fn noiseless_segmentation_is_exact() {
        let scene = SceneMap::build(&SceneConfig::default(), 7).unwrap();
        let (labels, dets) = segment_panorama(&scene, &SegNoiseConfig::noiseless(), 1);
        assert_eq!(labels, scene.labels);
        assert_eq!(dets.len(), 3);
        for d in &dets {
            let o = &scene.objects[d.object_id.0 as usize];
            assert_eq!(d.center, o.center);
        }
    }

    #[test]
    fn label_flips_change_grid() {
        let scene = SceneMap::build(&SceneConfig::default(), 7).unwrap();
        let noise = SegNoiseConfig {
            label_flip_prob: 0.01,
            ..SegNoiseConfig::noiseless()
        };
        let (labels, _) = segment_panorama(&scene, &noise, 1);
        let changed = labels
            .cells()
            .iter()
            .zip(scene.labels.cells())
            .filter(|(a, b)| a != b)
            .count();
        let frac = changed as f64 / labels.cells().len() as f64;
        assert!((frac - 0.01).abs() < 0.001, "{frac}");
    }

    #[test]
    fn fully_occluded_object_has_floor_confidence() {
        let mut cfg = SceneConfig::single_region("all", 1.0);
        cfg.placed.push(ObjectSpec {
            class: None,
            center: [400.0, 400.0],
            size: [80.0, 40.0],
            velocity: [0.0, 0.0],
            occlusion: 1.0,
        });
        let scene = SceneMap::build(&cfg, 0).unwrap();
        let (_, dets) = segment_panorama(&scene, &SegNoiseConfig::default(), 3);
        assert_eq!(dets.len(), 1);
        assert!(dets[0].confidence <= 0.05);
        assert!(dets[0].sigma_o >= 0.9 * SIGMA_O_MAX);
    }

    #[test]
    fn build_ppm_requires_particles() {
        let scene = SceneMap::build(&SceneConfig::default(), 7).unwrap();
        let err = build_ppm(
            &scene,
            &SegNoiseConfig::default(),
            "car",
            0,
            AllocParams::default(),
            0,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn single_region_no_detections_all_remainder() {
        let scene = SceneMap::build(&SceneConfig::single_region("all", 0.5), 0).unwrap();
        let ppm = build_ppm(
            &scene,
            &SegNoiseConfig::default(),
            "car",
            800,
            AllocParams::default(),
            0,
        )
        .unwrap();
        assert_eq!(ppm.remainder_counts[&RegionId(0)], 800);
        assert!(ppm.sub_regions.is_empty());
    }

    #[test]
    fn default_ppm_conserves_particles() {
        let scene = SceneMap::build(&SceneConfig::default(), 7).unwrap();
        let ppm = build_ppm(
            &scene,
            &SegNoiseConfig::default(),
            "car",
            800,
            AllocParams::default(),
            9,
        )
        .unwrap();
        assert_eq!(ppm.allocated(), 800);
        assert_eq!(ppm.region_counts.values().sum::<u64>(), 800);
        let total_f: f64 = ppm.region_probs.values().sum();
        assert!((total_f - 1.0).abs() < 1e-9);
        assert_eq!(ppm.sub_regions.len(), 3);
    }

    #[test]
    fn csv_dump_lists_regions_then_subregions() {
        let mut cfg = SceneConfig::single_region("all", 1.0);
        cfg.regions = vec![RegionSpec {
            label: "all".into(),
            rect: [0, 0, 1440, 1200],
        }];
        cfg.placed.push(ObjectSpec {
            class: None,
            center: [300.0, 300.0],
            size: [70.0, 30.0],
            velocity: [0.0, 0.0],
            occlusion: 0.0,
        });
        let scene = SceneMap::build(&cfg, 0).unwrap();
        let ppm = build_ppm(
            &scene,
            &SegNoiseConfig::noiseless(),
            "car",
            50,
            AllocParams::default(),
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        ppm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "region_id,label,area_px,prior,F,x_r,x_rm");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains("sub:object0"));
    }
}
