//! The synthetic panoramic world.
//!
//! A [`SceneMap`] is a labeled panorama partitioned into semantic regions plus
//! the ground-truth objects that the search has to find. Panoramic pixels map
//! linearly onto mirror angles: the full panorama width spans the full galvo
//! range and the vertical axis uses the same degrees-per-pixel factor.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{AngularBounds, CenteredBox, GalvoPoint, PanoPoint};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub u16);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A semantic region of the panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: RegionId,
    pub label: String,
    pub area_px: u64,
    /// P(T | region) per target class.
    pub class_prior: BTreeMap<String, f64>,
}

impl Region {
    pub fn prior(&self, class: &str) -> f64 {
        self.class_prior.get(class).copied().unwrap_or(0.0)
    }
}

/// A ground-truth object.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub id: ObjectId,
    pub class: String,
    /// Center in panoramic pixels.
    pub center: PanoPoint,
    /// Width and height in panoramic pixels.
    pub size: (f64, f64),
    /// Panoramic pixels per motion step.
    pub velocity: (f64, f64),
    pub occlusion: f64,
    /// Large enough to be found by the wide-angle camera alone.
    pub pano_detectable: bool,
}

impl GtObject {
    pub fn is_moving(&self) -> bool {
        self.velocity.0 != 0.0 || self.velocity.1 != 0.0
    }
}

/// Per-pixel region labels, shared cheaply between scenes and maps.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    cells: Arc<Vec<RegionId>>,
}

impl LabelGrid {
    pub fn filled(width: usize, height: usize, id: RegionId) -> Self {
        Self {
            width,
            height,
            cells: Arc::new(vec![id; width * height]),
        }
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<RegionId>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::Domain(format!(
                "label grid has {} cells, expected {}x{}",
                cells.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            cells: Arc::new(cells),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> RegionId {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[RegionId] {
        &self.cells
    }

    /// Pixel count per region id, indexed by id.
    pub fn areas(&self, n_regions: usize) -> Vec<u64> {
        let mut areas = vec![0u64; n_regions];
        for id in self.cells.iter() {
            if let Some(a) = areas.get_mut(id.0 as usize) {
                *a += 1;
            }
        }
        areas
    }

    pub fn same_storage(&self, other: &LabelGrid) -> bool {
        Arc::ptr_eq(&self.cells, &other.cells)
    }

    /// Portable dump: header `W H`, then one row of space-separated ids per line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.width, self.height)?;
        let mut line = String::with_capacity(self.width * 3);
        for row in self.cells.chunks(self.width) {
            line.clear();
            for (i, id) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&id.0.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    y: u32,
    x0: u32,
    len: u32,
}

/// Uniform pixel sampling within each region of a label grid.
///
/// Stores the horizontal runs of every region together with cumulative pixel
/// counts, so a uniform draw is one binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSampler {
    runs: Vec<Vec<Run>>,
    cumulative: Vec<Vec<u64>>,
}

impl RegionSampler {
    pub fn new(grid: &LabelGrid, n_regions: usize) -> Self {
        let mut runs: Vec<Vec<Run>> = vec![Vec::new(); n_regions];
        for y in 0..grid.height {
            let row = &grid.cells[y * grid.width..(y + 1) * grid.width];
            let mut x0 = 0usize;
            while x0 < row.len() {
                let id = row[x0];
                let mut x1 = x0 + 1;
                while x1 < row.len() && row[x1] == id {
                    x1 += 1;
                }
                if let Some(r) = runs.get_mut(id.0 as usize) {
                    r.push(Run {
                        y: y as u32,
                        x0: x0 as u32,
                        len: (x1 - x0) as u32,
                    });
                }
                x0 = x1;
            }
        }
        let cumulative = runs
            .iter()
            .map(|rs| {
                let mut acc = 0u64;
                rs.iter()
                    .map(|r| {
                        acc += r.len as u64;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { runs, cumulative }
    }

    pub fn area(&self, id: RegionId) -> u64 {
        self.cumulative
            .get(id.0 as usize)
            .and_then(|c| c.last().copied())
            .unwrap_or(0)
    }

    /// A uniform continuous point inside the region, or `None` if it is empty.
    pub fn sample<R: Rng + ?Sized>(&self, id: RegionId, rng: &mut R) -> Option<PanoPoint> {
        let total = self.area(id);
        if total == 0 {
            return None;
        }
        let idx = id.0 as usize;
        let k = rng.random_range(0..total);
        let run_idx = self.cumulative[idx].partition_point(|&c| c <= k);
        let run = self.runs[idx][run_idx];
        let before = if run_idx == 0 {
            0
        } else {
            self.cumulative[idx][run_idx - 1]
        };
        let x = run.x0 as f64 + (k - before) as f64 + rng.random::<f64>();
        let y = run.y as f64 + rng.random::<f64>();
        Some(PanoPoint::new(x, y))
    }

    /// Pixel bounding box `(x0, y0, x1, y1)` (half-open) of a region.
    pub fn bbox(&self, id: RegionId) -> Option<(u32, u32, u32, u32)> {
        let rs = self.runs.get(id.0 as usize)?;
        if rs.is_empty() {
            return None;
        }
        let mut b = (u32::MAX, u32::MAX, 0, 0);
        for r in rs {
            b.0 = b.0.min(r.x0);
            b.1 = b.1.min(r.y);
            b.2 = b.2.max(r.x0 + r.len);
            b.3 = b.3.max(r.y + 1);
        }
        Some(b)
    }
}

/// A labeled rectangle `[x0, y0, x1, y1)` in panoramic pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub label: String,
    pub rect: [u32; 4],
}

/// Inclusive `[min, max]` range for a random draw.
pub type Range2 = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectGenConfig {
    /// Total number of randomly placed objects.
    pub count: usize,
    /// How many of them are drawn from the large size range.
    pub large: usize,
    pub large_w: Range2,
    pub large_h: Range2,
    pub small_w: Range2,
    pub small_h: Range2,
    /// The last `moving` objects get a velocity.
    pub moving: usize,
    /// Speed range in panoramic pixels per step.
    pub speed: Range2,
    pub occlusion: Range2,
}

impl Default for ObjectGenConfig {
    fn default() -> Self {
        Self {
            count: 9,
            large: 3,
            large_w: [18.0, 26.0],
            large_h: [12.0, 18.0],
            small_w: [9.0, 16.0],
            small_h: [6.0, 11.0],
            moving: 3,
            speed: [2.0, 4.0],
            occlusion: [0.0, 0.3],
        }
    }
}

/// An explicitly placed object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    #[serde(default)]
    pub class: Option<String>,
    pub center: [f64; 2],
    pub size: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub occlusion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    /// Full galvo span covered by the panorama width, degrees.
    pub galvo_span_deg: f64,
    /// Label of the region covering every pixel not claimed by a rectangle.
    pub background: String,
    #[serde(rename = "region")]
    pub regions: Vec<RegionSpec>,
    /// `priors.<label>.<class> = P(class | label)`.
    pub priors: BTreeMap<String, BTreeMap<String, f64>>,
    pub target_class: String,
    pub pano_detect_threshold: f64,
    pub objects: ObjectGenConfig,
    #[serde(rename = "object")]
    pub placed: Vec<ObjectSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let mut priors = BTreeMap::new();
        for (label, p) in [
            ("road", 0.9),
            ("parking", 0.6),
            ("building", 0.01),
            ("grass", 0.004),
        ] {
            priors.insert(label.to_string(), BTreeMap::from([("car".to_string(), p)]));
        }
        Self {
            width: 1440,
            height: 1200,
            galvo_span_deg: 40.0,
            background: "grass".into(),
            regions: vec![
                RegionSpec {
                    label: "building".into(),
                    rect: [0, 0, 1440, 260],
                },
                RegionSpec {
                    label: "road".into(),
                    rect: [0, 430, 1440, 710],
                },
                RegionSpec {
                    label: "parking".into(),
                    rect: [980, 710, 1300, 860],
                },
            ],
            priors,
            target_class: "car".into(),
            pano_detect_threshold: 17.0,
            objects: ObjectGenConfig::default(),
            placed: Vec::new(),
        }
    }
}

impl SceneConfig {
    /// A scene with a single full-frame region and no objects.
    pub fn single_region(label: &str, prior: f64) -> Self {
        let mut cfg = Self::default();
        cfg.regions = vec![RegionSpec {
            label: label.into(),
            rect: [0, 0, cfg.width, cfg.height],
        }];
        cfg.priors = BTreeMap::from([(
            label.to_string(),
            BTreeMap::from([(cfg.target_class.clone(), prior)]),
        )]);
        cfg.objects.count = 0;
        cfg.objects.large = 0;
        cfg.objects.moving = 0;
        cfg
    }

    /// Checks region layout and ranges; every problem is reported.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.width == 0 || self.height == 0 {
            out.push("scene.width and scene.height must be > 0".into());
        }
        if !(self.galvo_span_deg > 0.0) {
            out.push("scene.galvo_span_deg must be > 0".into());
        }
        if !(self.pano_detect_threshold > 0.0) {
            out.push("scene.pano_detect_threshold must be > 0".into());
        }
        for (i, r) in self.regions.iter().enumerate() {
            let [x0, y0, x1, y1] = r.rect;
            if x1 <= x0 || y1 <= y0 {
                out.push(format!("scene.region[{i}] `{}` has zero area", r.label));
                continue;
            }
            if x1 > self.width || y1 > self.height {
                out.push(format!(
                    "scene.region[{i}] `{}` extends outside the {}x{} panorama",
                    r.label, self.width, self.height
                ));
            }
            for (j, earlier) in self.regions[..i].iter().enumerate() {
                let [a0, b0, a1, b1] = earlier.rect;
                if x0 < a1 && a0 < x1 && y0 < b1 && b0 < y1 {
                    out.push(format!(
                        "partition error: scene.region[{i}] `{}` overlaps scene.region[{j}] `{}`",
                        r.label, earlier.label
                    ));
                }
            }
        }
        for (label, classes) in &self.priors {
            for (class, p) in classes {
                if !(0.0..=1.0).contains(p) {
                    out.push(format!("scene.priors.{label}.{class} = {p} is outside [0, 1]"));
                }
            }
        }
        let o = &self.objects;
        if o.large > o.count {
            out.push("scene.objects.large exceeds scene.objects.count".into());
        }
        if o.moving > o.count {
            out.push("scene.objects.moving exceeds scene.objects.count".into());
        }
        for (name, r) in [
            ("large_w", o.large_w),
            ("large_h", o.large_h),
            ("small_w", o.small_w),
            ("small_h", o.small_h),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                out.push(format!(
                    "scene.objects.{name} must be a range [min, max] with 0 < min <= max"
                ));
            }
        }
        if !(o.speed[0] >= 0.0 && o.speed[0] <= o.speed[1]) {
            out.push("scene.objects.speed must be a range [min, max] with 0 <= min <= max".into());
        }
        if !(0.0..=1.0).contains(&o.occlusion[0])
            || !(0.0..=1.0).contains(&o.occlusion[1])
            || o.occlusion[0] > o.occlusion[1]
        {
            out.push("scene.objects.occlusion must be a range within [0, 1]".into());
        }
        for (i, p) in self.placed.iter().enumerate() {
            if !(p.size[0] > 0.0 && p.size[1] > 0.0) {
                out.push(format!("scene.object[{i}] size must be > 0"));
            }
            if !(0.0..=1.0).contains(&p.occlusion) {
                out.push(format!("scene.object[{i}] occlusion must be in [0, 1]"));
            }
            let [x, y] = p.center;
            if !(x >= 0.0 && x < self.width as f64 && y >= 0.0 && y < self.height as f64) {
                out.push(format!("scene.object[{i}] center lies outside the panorama"));
            }
        }
        out
    }
}

/// The simulated world.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMap {
    pub width: usize,
    pub height: usize,
    /// Degrees per panoramic pixel, horizontal and vertical.
    pub pano_to_deg: (f64, f64),
    pub labels: LabelGrid,
    pub regions: Vec<Region>,
    pub objects: Vec<GtObject>,
    pub target_class: String,
    sampler: Arc<RegionSampler>,
}

impl SceneMap {
    pub fn build(config: &SceneConfig, seed: u64) -> Result<Self> {
        let issues = config.issues();
        if !issues.is_empty() {
            return Err(Error::Config(issues.join("; ")));
        }
        let (w, h) = (config.width as usize, config.height as usize);
        let n_rects = config.regions.len();
        let bg = RegionId(n_rects as u16);
        let mut cells = vec![bg; w * h];
        for (i, spec) in config.regions.iter().enumerate() {
            let [x0, y0, x1, y1] = spec.rect;
            for y in y0 as usize..y1 as usize {
                cells[y * w + x0 as usize..y * w + x1 as usize].fill(RegionId(i as u16));
            }
        }
        let labels = LabelGrid::from_cells(w, h, cells)?;
        let areas = labels.areas(n_rects + 1);

        let prior_for = |label: &str| config.priors.get(label).cloned().unwrap_or_default();
        let mut regions: Vec<Region> = config
            .regions
            .iter()
            .enumerate()
            .map(|(i, spec)| Region {
                id: RegionId(i as u16),
                label: spec.label.clone(),
                area_px: areas[i],
                class_prior: prior_for(&spec.label),
            })
            .collect();
        if areas[n_rects] > 0 {
            regions.push(Region {
                id: bg,
                label: config.background.clone(),
                area_px: areas[n_rects],
                class_prior: prior_for(&config.background),
            });
        }
        let sampler = Arc::new(RegionSampler::new(&labels, n_rects + 1));

        let dpp = config.galvo_span_deg / config.width as f64;
        let mut scene = SceneMap {
            width: w,
            height: h,
            pano_to_deg: (dpp, dpp),
            labels,
            regions,
            objects: Vec::new(),
            target_class: config.target_class.clone(),
            sampler,
        };
        scene.objects = scene.place_objects(config, seed)?;
        Ok(scene)
    }

    fn place_objects(&self, config: &SceneConfig, seed: u64) -> Result<Vec<GtObject>> {
        let mut rng = rng::stream(seed, Stream::Scene);
        let gen = &config.objects;
        let mut objects: Vec<GtObject> = Vec::new();
        let class = config.target_class.as_str();

        for spec in &config.placed {
            let id = ObjectId(objects.len() as u32);
            let size = (spec.size[0], spec.size[1]);
            objects.push(GtObject {
                id,
                class: spec.class.clone().unwrap_or_else(|| class.to_string()),
                center: PanoPoint::new(spec.center[0], spec.center[1]),
                size,
                velocity: (spec.velocity[0], spec.velocity[1]),
                occlusion: spec.occlusion,
                pano_detectable: size.0.max(size.1) >= config.pano_detect_threshold,
            });
        }

        // Region choice follows area x prior, so objects concentrate where the
        // class prior says they should.
        let mass: Vec<f64> = self
            .regions
            .iter()
            .map(|r| r.area_px as f64 * r.prior(class))
            .collect();
        let total_mass: f64 = mass.iter().sum();
        let pick_region = |rng: &mut rng::SimRng| -> RegionId {
            let weights: Vec<f64> = if total_mass > 0.0 {
                mass.clone()
            } else {
                self.regions.iter().map(|r| r.area_px as f64).collect()
            };
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (r, w) in self.regions.iter().zip(&weights) {
                if u < *w {
                    return r.id;
                }
                u -= w;
            }
            self.regions.last().map(|r| r.id).unwrap_or(RegionId(0))
        };

        let draw = |rng: &mut rng::SimRng, r: Range2| {
            if r[1] > r[0] {
                rng.random_range(r[0]..=r[1])
            } else {
                r[0]
            }
        };
        let first_moving = gen.count.saturating_sub(gen.moving);
        for k in 0..gen.count {
            let large = k < gen.large;
            let size = if large {
                (draw(&mut rng, gen.large_w), draw(&mut rng, gen.large_h))
            } else {
                (draw(&mut rng, gen.small_w), draw(&mut rng, gen.small_h))
            };
            let occlusion = draw(&mut rng, gen.occlusion);
            let velocity = if k >= first_moving {
                let speed = draw(&mut rng, gen.speed);
                let angle = rng.random::<f64>() * std::f64::consts::TAU;
                (speed * angle.cos(), speed * angle.sin())
            } else {
                (0.0, 0.0)
            };
            let center = self.find_spot(&mut rng, &pick_region, size, &objects);
            objects.push(GtObject {
                id: ObjectId(objects.len() as u32),
                class: class.to_string(),
                center,
                size,
                velocity,
                occlusion,
                pano_detectable: size.0.max(size.1) >= config.pano_detect_threshold,
            });
        }
        Ok(objects)
    }

    fn find_spot(
        &self,
        rng: &mut rng::SimRng,
        pick_region: &dyn Fn(&mut rng::SimRng) -> RegionId,
        size: (f64, f64),
        placed: &[GtObject],
    ) -> PanoPoint {
        let region = pick_region(rng);
        let fits = |c: PanoPoint| {
            c.x - size.0 / 2.0 >= 0.0
                && c.x + size.0 / 2.0 <= self.width as f64
                && c.y - size.1 / 2.0 >= 0.0
                && c.y + size.1 / 2.0 <= self.height as f64
        };
        let clear = |c: PanoPoint, margin: f64| {
            let b = CenteredBox::new(c.x, c.y, size.0 + margin, size.1 + margin);
            placed.iter().all(|o| {
                let ob = CenteredBox::new(o.center.x, o.center.y, o.size.0, o.size.1);
                b.intersection(&ob).is_none()
            })
        };
        let mut fallback = None;
        for attempt in 0..2000 {
            let Some(c) = self.sampler.sample(region, rng) else {
                break;
            };
            if !fits(c) {
                continue;
            }
            fallback.get_or_insert(c);
            let margin = if attempt < 1500 { 40.0 } else { 0.0 };
            if clear(c, margin) {
                return c;
            }
        }
        fallback.unwrap_or(PanoPoint::new(self.width as f64 / 2.0, self.height as f64 / 2.0))
    }

    /// Advances every object by `velocity * dt`, reflecting at the borders.
    pub fn step_motion(&self, dt: f64) -> Result<SceneMap> {
        if !(dt >= 0.0) {
            return Err(Error::Precondition(format!("dt must be >= 0, got {dt}")));
        }
        let mut next = self.clone();
        if dt == 0.0 {
            return Ok(next);
        }
        let (xmax, ymax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        for o in &mut next.objects {
            let (x, vx) = reflect(o.center.x + o.velocity.0 * dt, o.velocity.0, xmax);
            let (y, vy) = reflect(o.center.y + o.velocity.1 * dt, o.velocity.1, ymax);
            o.center = PanoPoint::new(x, y);
            o.velocity = (vx, vy);
        }
        Ok(next)
    }

    pub fn region_at(&self, p: PanoPoint) -> Result<RegionId> {
        region_in(&self.labels, p)
    }

    pub fn region(&self, id: RegionId) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn sampler(&self) -> &RegionSampler {
        &self.sampler
    }

    pub fn sampler_arc(&self) -> Arc<RegionSampler> {
        Arc::clone(&self.sampler)
    }

    pub fn total_area(&self) -> u64 {
        (self.width * self.height) as u64
    }

    pub fn pano_to_galvo(&self, p: PanoPoint) -> GalvoPoint {
        GalvoPoint::new(
            (p.x - self.width as f64 / 2.0) * self.pano_to_deg.0,
            (p.y - self.height as f64 / 2.0) * self.pano_to_deg.1,
        )
    }

    pub fn galvo_to_pano(&self, g: GalvoPoint) -> PanoPoint {
        PanoPoint::new(
            g.h / self.pano_to_deg.0 + self.width as f64 / 2.0,
            g.v / self.pano_to_deg.1 + self.height as f64 / 2.0,
        )
    }

    /// Angular extent covered by the panorama.
    pub fn angular_bounds(&self) -> AngularBounds {
        let hw = self.width as f64 / 2.0 * self.pano_to_deg.0;
        let hh = self.height as f64 / 2.0 * self.pano_to_deg.1;
        AngularBounds {
            h_min: -hw,
            h_max: hw,
            v_min: -hh,
            v_max: hh,
        }
    }

    /// Object footprint in degrees.
    pub fn object_box_deg(&self, o: &GtObject) -> CenteredBox {
        let c = self.pano_to_galvo(o.center);
        CenteredBox::new(
            c.h,
            c.v,
            o.size.0 * self.pano_to_deg.0,
            o.size.1 * self.pano_to_deg.1,
        )
    }

    pub fn pano_detectable_count(&self) -> usize {
        self.objects.iter().filter(|o| o.pano_detectable).count()
    }
}

pub(crate) fn region_in(grid: &LabelGrid, p: PanoPoint) -> Result<RegionId> {
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x < grid.width() as f64 && p.y < grid.height() as f64) {
        return Err(Error::Domain(format!(
            "pixel ({}, {}) outside {}x{} panorama",
            p.x,
            p.y,
            grid.width(),
            grid.height()
        )));
    }
    Ok(grid.get(p.x as usize, p.y as usize))
}

/// Folds a coordinate into `[0, max]` by mirror reflection and returns the
/// velocity sign after the last bounce.
fn reflect(x: f64, v: f64, max: f64) -> (f64, f64) {
    if max <= 0.0 {
        return (0.0, v);
    }
    let period = 2.0 * max;
    let m = x.rem_euclid(period);
    if m <= max {
        (m, v)
    } else {
        (period - m, -v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_halves() -> SceneConfig {
        let mut cfg = SceneConfig::single_region("left", 0.5);
        cfg.regions = vec![
            RegionSpec {
                label: "left".into(),
                rect: [0, 0, 720, 1200],
            },
            RegionSpec {
                label: "right".into(),
                rect: [720, 0, 1440, 1200],
            },
        ];
        cfg
    }

    #[test]
    fn single_region_covers_frame() {
        let scene = SceneMap::build(&SceneConfig::single_region("all", 1.0), 0).unwrap();
        assert_eq!(scene.regions.len(), 1);
        assert_eq!(scene.regions[0].area_px, 1440 * 1200);
        assert!(scene.objects.is_empty());
        let p = PanoPoint::new(517.3, 911.0);
        assert_eq!(scene.region_at(p).unwrap(), scene.regions[0].id);
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = SceneConfig::default();
        let a = SceneMap::build(&cfg, 11).unwrap();
        let b = SceneMap::build(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = SceneMap::build(&cfg, 12).unwrap();
        assert_ne!(a.objects, c.objects);
    }

    #[test]
    fn default_scene_has_three_pano_detectable() {
        let cfg = SceneConfig::default();
        let scene = SceneMap::build(&cfg, 7).unwrap();
        assert_eq!(scene.objects.len(), 9);
        let counted = scene
            .objects
            .iter()
            .filter(|o| o.size.0.max(o.size.1) >= cfg.pano_detect_threshold)
            .count();
        assert_eq!(counted, 3);
        assert_eq!(scene.pano_detectable_count(), 3);
    }

    #[test]
    fn default_scene_partitions_panorama() {
        let scene = SceneMap::build(&SceneConfig::default(), 3).unwrap();
        let total: u64 = scene.regions.iter().map(|r| r.area_px).sum();
        assert_eq!(total, scene.total_area());
        assert!(scene.regions.iter().all(|r| r.area_px > 0));
    }

    #[test]
    fn overlapping_regions_rejected() {
        let mut cfg = two_halves();
        cfg.regions[1].rect = [700, 0, 1440, 1200];
        let err = SceneMap::build(&cfg, 0).unwrap_err();
        assert!(err.to_string().contains("partition error"), "{err}");
    }

    #[test]
    fn zero_area_region_rejected() {
        let mut cfg = two_halves();
        cfg.regions[1].rect = [720, 0, 720, 1200];
        assert!(matches!(SceneMap::build(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn region_at_halves() {
        let scene = SceneMap::build(&two_halves(), 0).unwrap();
        assert_eq!(scene.regions.len(), 2);
        assert_eq!(scene.region_at(PanoPoint::new(0.0, 0.0)).unwrap(), RegionId(0));
        assert_eq!(scene.region_at(PanoPoint::new(1439.0, 0.0)).unwrap(), RegionId(1));
        assert!(matches!(
            scene.region_at(PanoPoint::new(1440.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    fn with_object(center: (f64, f64), velocity: (f64, f64)) -> SceneMap {
        let mut cfg = SceneConfig::single_region("all", 1.0);
        cfg.placed.push(ObjectSpec {
            class: None,
            center: [center.0, center.1],
            size: [8.0, 6.0],
            velocity: [velocity.0, velocity.1],
            occlusion: 0.0,
        });
        SceneMap::build(&cfg, 0).unwrap()
    }

    #[test]
    fn motion_zero_dt_is_identity() {
        let scene = with_object((100.0, 100.0), (3.0, -2.0));
        assert_eq!(scene.step_motion(0.0).unwrap(), scene);
    }

    #[test]
    fn motion_advances_linearly() {
        let scene = with_object((10.0, 10.0), (5.0, 0.0));
        let moved = scene.step_motion(2.0).unwrap();
        assert_eq!(moved.objects[0].center, PanoPoint::new(20.0, 10.0));
        assert_eq!(moved.labels, scene.labels);
    }

    #[test]
    fn motion_reflects_at_border() {
        let scene = with_object((1439.0, 600.0), (5.0, 0.0));
        let moved = scene.step_motion(1.0).unwrap();
        let o = &moved.objects[0];
        assert!(o.center.x >= 0.0 && o.center.x < 1440.0);
        assert_eq!(o.center.x, 1434.0);
        assert!(o.velocity.0 < 0.0);
        assert!(scene.step_motion(-1.0).is_err());
    }

    #[test]
    fn galvo_mapping_spans_range() {
        let scene = SceneMap::build(&SceneConfig::single_region("all", 1.0), 0).unwrap();
        let left = scene.pano_to_galvo(PanoPoint::new(0.0, 600.0));
        let right = scene.pano_to_galvo(PanoPoint::new(1440.0, 600.0));
        assert!((left.h + 20.0).abs() < 1e-12);
        assert!((right.h - 20.0).abs() < 1e-12);
        let back = scene.galvo_to_pano(GalvoPoint::new(3.3, -7.1));
        let again = scene.pano_to_galvo(back);
        assert!((again.h - 3.3).abs() < 1e-12 && (again.v + 7.1).abs() < 1e-12);
    }

    #[test]
    fn dump_has_header_and_rows() {
        let mut cfg = two_halves();
        cfg.width = 4;
        cfg.height = 2;
        cfg.regions[0].rect = [0, 0, 2, 2];
        cfg.regions[1].rect = [2, 0, 4, 2];
        let scene = SceneMap::build(&cfg, 0).unwrap();
        let mut buf = Vec::new();
        scene.labels.write_dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "4 2\n0 0 1 1\n0 0 1 1\n");
    }

    #[test]
    fn placed_objects_follow_priors() {
        let scene = SceneMap::build(&SceneConfig::default(), 5).unwrap();
        let road = scene.regions.iter().find(|r| r.label == "road").unwrap().id;
        let parking = scene.regions.iter().find(|r| r.label == "parking").unwrap().id;
        let inside = scene
            .objects
            .iter()
            .filter(|o| {
                let r = scene.region_at(o.center).unwrap();
                r == road || r == parking
            })
            .count();
        assert!(inside >= 8, "only {inside} of 9 objects in high-prior regions");
    }
}
