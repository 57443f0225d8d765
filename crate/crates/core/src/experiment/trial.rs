//! One search trial: a method, a budget and a seed against one scene.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detector::{likelihood, Detection, Detector, LIKELIHOOD_FLOOR};
use crate::error::{Error, Result};
use crate::experiment::metrics::average_precision_11;
use crate::galvo::{capture_view, plan_scan, GalvoConfig, GalvoState, OpticsConfig};
use crate::geom::{AngularBounds, CenteredBox, FovSize, GalvoPoint};
use crate::particle::{
    build_proposal, initial_sample, normalize_weights, prune_redundant, sample_next, update_weights, Particle,
};
use crate::ppm::{build_ppm, AllocParams, PanoDetection, Ppm, SegNoiseConfig};
use crate::refinement::{nms_merge, NmsParams, SearchWindow};
use crate::rng::{self, SimRng, Stream};
use crate::scene::{ObjectId, SceneMap};

/// Search strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Probability map, particle search with tracking and variance voting.
    PpmPs,
    /// Probability map and particle search with a fixed sampling radius and
    /// no voting.
    PpmOnly,
    /// Fresh uniform random gaze points every stage.
    Mpf,
    /// Fresh region-probability gaze points every stage.
    Rpm,
    /// Raster scan.
    Uniform,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PpmPs,
        Method::PpmOnly,
        Method::Mpf,
        Method::Rpm,
        Method::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PpmPs => "ppm_ps",
            Method::PpmOnly => "ppm_only",
            Method::Mpf => "mpf",
            Method::Rpm => "rpm",
            Method::Uniform => "uniform",
        }
    }

    fn particle_filter(self) -> bool {
        matches!(self, Method::PpmPs | Method::PpmOnly)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Search engine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Stages per trial; the budget is spent once per stage.
    pub iterations: usize,
    /// Weight multiplier of a particle whose view had no detection.
    pub epsilon: f64,
    /// Sampling std of particles without a detection, degrees.
    pub sigma_init: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub iou_keep: f64,
    pub sigma_t: f64,
    pub var_floor: f64,
    /// Disc radius per unit of panoramic uncertainty, pixels.
    pub r: f64,
    /// Per-axis FOV fraction above which two views count as redundant.
    pub overlap_frac: f64,
    /// Gaze points spent on each tracked window per stage.
    pub track_particles: usize,
    /// Upper share of a stage budget that tracking may use.
    pub track_share: f64,
    /// Stages without a matching window before a track is dropped.
    pub max_misses: usize,
    /// Found radius as a fraction of the object's angular extent, per axis.
    pub match_frac: f64,
    /// Redraws allowed for an explorer that would repeat an empty view.
    pub revisit_tries: usize,
    /// Stages an empty view keeps repelling explorers; 0 keeps it forever.
    pub visit_memory: usize,
    /// Object motion per stage, in units of the object velocity.
    pub dt: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 6,
            epsilon: LIKELIHOOD_FLOOR,
            sigma_init: 1.0,
            sigma_min: 0.05,
            sigma_max: 3.0,
            iou_keep: 0.5,
            sigma_t: crate::refinement::SIGMA_T,
            var_floor: 1e-6,
            r: 50.0,
            overlap_frac: 0.5,
            track_particles: 3,
            track_share: 0.5,
            max_misses: 2,
            match_frac: 0.5,
            revisit_tries: 8,
            visit_memory: 3,
            dt: 1.0,
        }
    }
}

impl EngineConfig {
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.iterations == 0 {
            out.push("engine.iterations must be >= 1".to_string());
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            out.push(format!("engine.epsilon must be in (0, 1], got {}", self.epsilon));
        }
        if !(self.sigma_t > 0.0) {
            out.push(format!(
                "engine.sigma_t: σ_t must be > 0 (overlap probability divisor), got {}",
                self.sigma_t
            ));
        }
        for (name, v) in [
            ("sigma_init", self.sigma_init),
            ("sigma_min", self.sigma_min),
            ("sigma_max", self.sigma_max),
            ("var_floor", self.var_floor),
            ("r", self.r),
            ("match_frac", self.match_frac),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("engine.{name} must be a finite value > 0, got {v}"));
            }
        }
        if self.sigma_min > self.sigma_max {
            out.push(format!(
                "engine.sigma_min ({}) exceeds engine.sigma_max ({})",
                self.sigma_min, self.sigma_max
            ));
        }
        for (name, v) in [
            ("iou_keep", self.iou_keep),
            ("overlap_frac", self.overlap_frac),
            ("track_share", self.track_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("engine.{name} must be in [0, 1], got {v}"));
            }
        }
        if !(self.dt >= 0.0) {
            out.push(format!("engine.dt must be >= 0, got {}", self.dt));
        }
        out
    }

    fn nms(&self, voting: bool) -> NmsParams {
        NmsParams {
            iou_keep: self.iou_keep,
            sigma_t: self.sigma_t,
            voting,
            var_floor: self.var_floor,
        }
    }
}

/// Everything a trial reads besides its method, budget and seed.
pub struct TrialSetup<'a> {
    pub scene: &'a SceneMap,
    pub segmentation: &'a SegNoiseConfig,
    pub detector: &'a dyn Detector,
    pub optics: &'a OpticsConfig,
    pub galvo: &'a GalvoConfig,
    pub engine: &'a EngineConfig,
}

/// Which trial to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub method: Method,
    /// Gaze points per stage.
    pub budget: u64,
    pub seed: u64,
    /// Replace the probability map by a uniform prior and ignore panoramic
    /// detections.
    pub without_ppm: bool,
    /// Force variance voting on or off regardless of the method.
    pub voting: Option<bool>,
}

impl TrialSpec {
    pub fn new(method: Method, budget: u64, seed: u64) -> Self {
        Self {
            method,
            budget,
            seed,
            without_ppm: false,
            voting: None,
        }
    }

    fn voting(&self) -> bool {
        self.voting.unwrap_or(self.method == Method::PpmPs)
    }

    fn uses_ppm(&self) -> bool {
        self.method.particle_filter() && !self.without_ppm
    }
}

/// Per-object outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FoundObject {
    /// Stage of the first matching window; 0 for a panoramic detection.
    pub stage: usize,
    /// Absolute error of the final refined center per axis, view pixels:
    /// how far the object would sit from the image center if the mirror were
    /// steered to the estimate. `NaN` when no track matches the object.
    pub error_px: (f64, f64),
    /// Mean per-axis variance when the object was first seen by the search
    /// camera, degrees². `None` when only the panorama saw it.
    pub pre_var: Option<f64>,
    /// Mean per-axis variance of the final track, degrees².
    pub post_var: f64,
    pub moving: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub method: Method,
    pub seed: u64,
    pub budget: u64,
    pub found: BTreeMap<ObjectId, FoundObject>,
    pub n_objects: usize,
    pub recall: f64,
    /// Set when the scene has no objects and recall is reported as 1.
    pub vacuous: bool,
    pub ap: f64,
    pub moves: u64,
    pub views: u64,
    pub elapsed_sim_ms: f64,
    pub wall_time_ms: f64,
}

/// Row-level records of a traced trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// `(seq, theta_h, theta_v, elapsed_ms, n_visible)`.
    pub scans: Vec<(u64, f64, f64, f64, usize)>,
    /// `(stage, particle, detection)`.
    pub detections: Vec<(usize, usize, Detection)>,
    /// `(stage, window index, window)`.
    pub windows: Vec<(usize, usize, SearchWindow)>,
    pub particles: Vec<Particle>,
    pub events: Vec<String>,
}

#[derive(Debug, Clone)]
struct Track {
    center: GalvoPoint,
    variance: (f64, f64),
    radius: (f64, f64),
    extent: (f64, f64),
    confidence: f64,
    last_update: usize,
    misses: usize,
    active: bool,
    /// Object the last update was matched to; bookkeeping for metrics only.
    object: Option<ObjectId>,
}

impl Track {
    fn bbox(&self) -> CenteredBox {
        CenteredBox::new(self.center.h, self.center.v, self.extent.0, self.extent.1)
    }
}

/// Where fresh particles come from.
enum Prior {
    Map(Box<Ppm>),
    Uniform,
}

struct Engine<'a> {
    setup: &'a TrialSetup<'a>,
    spec: TrialSpec,
    scene: SceneMap,
    bounds: AngularBounds,
    fov: FovSize,
    galvo: GalvoState,
    tracks: Vec<Track>,
    first_seen: BTreeMap<ObjectId, (usize, Option<f64>)>,
    visited: VisitedPoses,
    trace: Option<Trace>,
}

/// Runs one trial.
pub fn run_trial(setup: &TrialSetup<'_>, spec: TrialSpec) -> Result<TrialResult> {
    Engine::new(setup, spec, false).run().map(|(r, _)| r)
}

/// Runs one trial and keeps every scan, detection, window and particle.
pub fn run_trial_traced(setup: &TrialSetup<'_>, spec: TrialSpec) -> Result<(TrialResult, Trace)> {
    Engine::new(setup, spec, true)
        .run()
        .map(|(r, t)| (r, t.unwrap_or_default()))
}

impl<'a> Engine<'a> {
    fn new(setup: &'a TrialSetup<'a>, spec: TrialSpec, traced: bool) -> Self {
        let bounds = setup.scene.angular_bounds().intersect(&setup.galvo.bounds());
        let fov = setup.optics.fov();
        Self {
            setup,
            spec,
            scene: setup.scene.clone(),
            bounds,
            fov,
            galvo: GalvoState::new(setup.galvo),
            tracks: Vec::new(),
            first_seen: BTreeMap::new(),
            visited: VisitedPoses::new(fov, setup.engine.overlap_frac, setup.engine.visit_memory),
            trace: traced.then(Trace::default),
        }
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            t.events.push(line());
        }
    }

    fn run(mut self) -> Result<(TrialResult, Option<Trace>)> {
        let start = Instant::now();
        let eng = self.setup.engine;
        let spec = self.spec;
        let n = spec.budget as usize;
        self.log(|| {
            format!(
                "trial method={} budget={} seed={}",
                spec.method, spec.budget, spec.seed
            )
        });

        let prior = self.build_prior()?;
        if let Prior::Map(ppm) = &prior {
            if spec.uses_ppm() {
                let dets = ppm.detections.clone();
                self.seed_pano_tracks(&dets);
            }
        }

        let mut pool: Vec<Particle> = Vec::new();
        let raster = if spec.method == Method::Uniform {
            raster_points(self.bounds, n * eng.iterations)
        } else {
            Vec::new()
        };

        for stage in 0..eng.iterations {
            if n == 0 {
                break;
            }
            if stage > 0 {
                self.scene = self.scene.step_motion(eng.dt)?;
            }
            self.visited.set_stage(stage);
            let mut sampling = rng::stage_stream(spec.seed, Stream::Sampling, stage);
            let mut tracking = rng::stage_stream(spec.seed, Stream::Tracking, stage);

            let particles = match spec.method {
                Method::Uniform => raster[stage * n..(stage + 1) * n]
                    .iter()
                    .map(|&g| Particle::new(g, 1.0 / n as f64, stage as u32, eng.sigma_init))
                    .collect(),
                Method::Mpf | Method::Rpm => self.fresh(&prior, n, stage, &mut sampling),
                Method::PpmPs | Method::PpmOnly if stage == 0 => {
                    self.spread_initial(&prior, n, stage, &mut sampling)
                }
                Method::PpmPs | Method::PpmOnly => {
                    let mut ps = self.track_particles(n, stage, &mut tracking);
                    let rest = n - ps.len();
                    ps.extend(self.explorers(&prior, &pool, rest, stage, &mut sampling)?);
                    ps
                }
            };

            let (mut particles, detections) = self.scan(particles, stage)?;
            let likelihoods: Vec<f64> = detections.iter().map(|d| likelihood(d, eng.epsilon)).collect();
            update_weights(&mut particles, &likelihoods)?;
            let flat: Vec<Detection> = detections.iter().flatten().cloned().collect();
            for (p, d) in particles.iter_mut().zip(&detections) {
                if let Some(best) = d.iter().max_by(|a, b| a.confidence.total_cmp(&b.confidence)) {
                    p.sigma = best
                        .var_h
                        .max(best.var_v)
                        .sqrt()
                        .clamp(eng.sigma_min, eng.sigma_max);
                }
            }
            let windows = nms_merge(&flat, &eng.nms(spec.voting()));
            self.log(|| {
                format!(
                    "stage {stage}: {} views, {} detections, {} windows",
                    particles.len(),
                    flat.len(),
                    windows.len()
                )
            });
            self.absorb_windows(&windows, stage);

            pool = particles
                .iter()
                .zip(&detections)
                .filter(|(_, d)| d.is_empty())
                .map(|(p, _)| *p)
                .collect();
            if let Some(t) = self.trace.as_mut() {
                t.particles.extend_from_slice(&particles);
                for (i, w) in windows.iter().enumerate() {
                    t.windows.push((stage, i, w.clone()));
                }
            }
        }

        let elapsed = self.galvo.elapsed_ms;
        let result = self.finish(start)?;
        debug_assert_eq!(result.elapsed_sim_ms, elapsed);
        Ok((result, self.trace))
    }

    fn build_prior(&self) -> Result<Prior> {
        let s = self.setup;
        let params = AllocParams {
            r: s.engine.r,
            f_sub: 1.0,
        };
        let target = self.scene.target_class.clone();
        let n = self.spec.budget.max(1);
        match self.spec.method {
            Method::Mpf | Method::Uniform => Ok(Prior::Uniform),
            Method::PpmPs | Method::PpmOnly if self.spec.without_ppm => Ok(Prior::Uniform),
            Method::PpmPs | Method::PpmOnly => {
                let ppm = build_ppm(&self.scene, s.segmentation, &target, n, params, self.spec.seed)?;
                Ok(Prior::Map(Box::new(ppm)))
            }
            Method::Rpm => {
                let mut ppm = build_ppm(&self.scene, s.segmentation, &target, n, params, self.spec.seed)?;
                ppm.detections.clear();
                ppm.allocate(n, params)?;
                Ok(Prior::Map(Box::new(ppm)))
            }
        }
    }

    fn seed_pano_tracks(&mut self, dets: &[PanoDetection]) {
        let eng = self.setup.engine;
        let dpp = self.scene.pano_to_deg;
        for d in dets {
            let center = self.scene.pano_to_galvo(d.center);
            let rad = |k: f64| (eng.r * d.sigma_o * k).clamp(eng.sigma_min, eng.sigma_max);
            let radius = (rad(dpp.0), rad(dpp.1));
            let track = Track {
                center,
                variance: (radius.0.powi(2), radius.1.powi(2)),
                radius,
                extent: (d.size.0 * dpp.0, d.size.1 * dpp.1),
                confidence: d.confidence,
                last_update: 0,
                misses: 0,
                active: true,
                object: self.match_object(center),
            };
            if let Some(id) = track.object {
                self.first_seen.entry(id).or_insert((0, None));
            }
            self.log(|| {
                format!(
                    "pano detection object{} at ({:.4}, {:.4}) conf {:.3}",
                    d.object_id, center.h, center.v, d.confidence
                )
            });
            self.tracks.push(track);
        }
    }

    /// Fresh draw of `n` particles from the prior.
    fn fresh(&self, prior: &Prior, n: usize, stage: usize, rng: &mut SimRng) -> Vec<Particle> {
        let sigma = self.setup.engine.sigma_init;
        match prior {
            Prior::Uniform => (0..n)
                .map(|_| Particle::new(self.uniform_point(rng), 1.0 / n as f64, stage as u32, sigma))
                .collect(),
            Prior::Map(ppm) => {
                let mut ps = initial_sample(ppm, &self.scene, sigma, rng);
                for p in &mut ps {
                    p.stage = stage as u32;
                }
                ps
            }
        }
    }

    fn uniform_point(&self, rng: &mut SimRng) -> GalvoPoint {
        let b = self.bounds;
        GalvoPoint::new(
            b.h_min + rng.random::<f64>() * (b.h_max - b.h_min),
            b.v_min + rng.random::<f64>() * (b.v_max - b.v_min),
        )
    }

    fn track_particles(&mut self, n: usize, stage: usize, rng: &mut SimRng) -> Vec<Particle> {
        let eng = self.setup.engine;
        let fixed = !self.spec.voting();
        let cap = (n as f64 * eng.track_share).floor() as usize;
        let mut out = Vec::new();
        for t in self.tracks.iter_mut().filter(|t| t.active) {
            t.misses += 1;
            let r = if fixed {
                (eng.sigma_init, eng.sigma_init)
            } else {
                (
                    t.radius.0.clamp(eng.sigma_min, eng.sigma_max),
                    t.radius.1.clamp(eng.sigma_min, eng.sigma_max),
                )
            };
            for _ in 0..eng.track_particles {
                if out.len() >= cap {
                    return out;
                }
                let dh: f64 = rng.sample(StandardNormal);
                let dv: f64 = rng.sample(StandardNormal);
                let g = self
                    .bounds
                    .clamp(GalvoPoint::new(t.center.h + r.0 * dh, t.center.v + r.1 * dv))
                    .0;
                out.push(Particle::new(g, 1.0, stage as u32, r.0.max(r.1)));
            }
        }
        let w = if out.is_empty() {
            0.0
        } else {
            1.0 / out.len() as f64
        };
        for p in &mut out {
            p.weight = w;
        }
        out
    }

    /// Explorers drawn from the mixture over the previous stage's empty views.
    fn explorers(
        &mut self,
        prior: &Prior,
        pool: &[Particle],
        count: usize,
        stage: usize,
        rng: &mut SimRng,
    ) -> Result<Vec<Particle>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let eng = self.setup.engine;
        let mut kept = prune_redundant(pool, self.fov, eng.overlap_frac);
        for p in &mut kept {
            let density = match prior {
                Prior::Map(ppm) => ppm.density(self.scene.galvo_to_pano(p.position())),
                Prior::Uniform => 1.0,
            };
            p.weight *= density;
        }
        if kept.is_empty() || normalize_weights(&mut kept).is_err() {
            self.log(|| format!("stage {stage}: empty explorer pool, redrawing from prior"));
            return Ok(self.fresh_counted(prior, count, stage, rng));
        }
        let q = build_proposal(&kept, self.bounds)?;
        // Mixture draws are thinned by the prior density, so explorers follow
        // mixture x prior rather than spilling into low-probability ground.
        let max_density = match prior {
            Prior::Map(ppm) => ppm
                .regions
                .iter()
                .filter(|r| r.area_px > 0)
                .map(|r| ppm.region_probs.get(&r.id).copied().unwrap_or(0.0) / r.area_px as f64)
                .fold(0.0, f64::max),
            Prior::Uniform => 0.0,
        };
        let acceptance = |g: GalvoPoint, rng: &mut SimRng| match prior {
            Prior::Map(ppm) if max_density > 0.0 => {
                rng.random::<f64>() * max_density < ppm.density(self.scene.galvo_to_pano(g))
            }
            _ => true,
        };
        let mut taken = VisitedPoses::new(self.fov, eng.overlap_frac, 0);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut cand = sample_next(&q, 1, stage as u32, rng)[0];
            for _ in 0..eng.revisit_tries {
                let g = cand.position();
                if !self.visited.covers(g) && !taken.covers(g) && acceptance(g, rng) {
                    break;
                }
                cand = sample_next(&q, 1, stage as u32, rng)[0];
            }
            cand.weight = 1.0 / count as f64;
            taken.insert(cand.position());
            out.push(cand);
        }
        Ok(out)
    }

    /// Stage-0 draw from the prior in which a particle whose view repeats an
    /// earlier one is swapped for a spare draw from the same prior.
    fn spread_initial(&self, prior: &Prior, n: usize, stage: usize, rng: &mut SimRng) -> Vec<Particle> {
        let eng = self.setup.engine;
        let first = self.fresh_counted(prior, n, stage, rng);
        let mut spares = self
            .fresh_counted(prior, n * eng.revisit_tries, stage, rng)
            .into_iter();
        let mut taken = VisitedPoses::new(self.fov, eng.overlap_frac, 0);
        let mut out = Vec::with_capacity(first.len());
        for mut p in first {
            for _ in 0..eng.revisit_tries {
                if !taken.covers(p.position()) {
                    break;
                }
                match spares.next() {
                    Some(s) => p = s,
                    None => break,
                }
            }
            p.weight = 1.0 / n as f64;
            taken.insert(p.position());
            out.push(p);
        }
        out
    }

    fn fresh_counted(&self, prior: &Prior, count: usize, stage: usize, rng: &mut SimRng) -> Vec<Particle> {
        match prior {
            Prior::Uniform => self.fresh(prior, count, stage, rng),
            Prior::Map(ppm) => {
                let mut ppm = ppm.as_ref().clone();
                let params = AllocParams {
                    r: self.setup.engine.r,
                    f_sub: 1.0,
                };
                if ppm.allocate(count as u64, params).is_err() {
                    return self.fresh(&Prior::Uniform, count, stage, rng);
                }
                self.fresh(&Prior::Map(Box::new(ppm)), count, stage, rng)
            }
        }
    }

    /// Visits every particle in scan order. Returns the particles in visiting
    /// order with their detections.
    fn scan(
        &mut self,
        particles: Vec<Particle>,
        stage: usize,
    ) -> Result<(Vec<Particle>, Vec<Vec<Detection>>)> {
        let s = self.setup;
        let points: Vec<GalvoPoint> = particles.iter().map(|p| p.position()).collect();
        let plan = plan_scan(&self.galvo, &points);
        let mut det_rng = rng::stage_stream(self.spec.seed, Stream::Detector, stage);
        let mut ordered = Vec::with_capacity(particles.len());
        let mut all = Vec::with_capacity(particles.len());
        for (k, &i) in plan.order.iter().enumerate() {
            let p = particles[i];
            self.galvo.move_to(p.position());
            self.galvo.dwell();
            let view = capture_view(&self.scene, self.galvo.position, s.optics);
            let mut dets = s.detector.detect(&view, &mut det_rng);
            for d in &mut dets {
                d.source_particle = k;
                d.center = self.bounds.clamp(d.center).0;
            }
            if dets.is_empty() {
                self.visited.insert(self.galvo.position);
            }
            if let Some(t) = self.trace.as_mut() {
                let g = self.galvo.position;
                t.scans.push((
                    self.galvo.views - 1,
                    g.h,
                    g.v,
                    self.galvo.elapsed_ms,
                    view.visible.len(),
                ));
                for d in &dets {
                    t.detections.push((stage, k, d.clone()));
                }
            }
            ordered.push(p);
            all.push(dets);
        }
        Ok((ordered, all))
    }

    fn absorb_windows(&mut self, windows: &[SearchWindow], stage: usize) {
        let eng = self.setup.engine;
        let fixed = !self.spec.voting();
        let mut updated = vec![false; self.tracks.len()];
        for w in windows {
            let object = self.match_object(w.center);
            if let Some(id) = object {
                let kept = w.kept();
                self.first_seen
                    .entry(id)
                    .and_modify(|e| {
                        if e.1.is_none() {
                            e.1 = Some(kept.mean_variance());
                        }
                    })
                    .or_insert((stage, Some(kept.mean_variance())));
            }
            let wbox = CenteredBox::new(w.center.h, w.center.v, w.extent.0, w.extent.1);
            let best = self
                .tracks
                .iter()
                .enumerate()
                .filter(|(i, _)| !updated.get(*i).copied().unwrap_or(false))
                .map(|(i, t)| (i, t.bbox().iou(&wbox)))
                .filter(|(_, o)| *o > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let radius = if fixed {
                (eng.sigma_init, eng.sigma_init)
            } else {
                w.radius
            };
            let track = Track {
                center: w.center,
                variance: w.variance,
                radius,
                extent: w.extent,
                confidence: w.confidence,
                last_update: stage,
                misses: 0,
                active: true,
                object,
            };
            match best {
                Some((i, _)) => {
                    let object = track.object.or(self.tracks[i].object);
                    self.tracks[i] = Track { object, ..track };
                    updated[i] = true;
                }
                None => {
                    self.tracks.push(track);
                    updated.push(true);
                }
            }
        }
        for t in &mut self.tracks {
            if t.active && t.misses > eng.max_misses {
                t.active = false;
            }
        }
    }

    /// Object whose current footprint contains `center` within the match
    /// tolerance; the closest one when several do.
    fn match_object(&self, center: GalvoPoint) -> Option<ObjectId> {
        let f = self.setup.engine.match_frac;
        self.scene
            .objects
            .iter()
            .filter_map(|o| {
                let b = self.scene.object_box_deg(o);
                let (dh, dv) = ((center.h - b.cx).abs(), (center.v - b.cy).abs());
                (dh <= f * b.w && dv <= f * b.h).then(|| (o.id, dh.hypot(dv)))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(id, _)| id)
    }

    fn finish(&self, start: Instant) -> Result<TrialResult> {
        let alpha = self.setup.optics.alpha;
        let n_objects = self.scene.objects.len();
        let mut found = BTreeMap::new();
        for (id, (stage, pre_var)) in &self.first_seen {
            let o = self
                .scene
                .objects
                .iter()
                .find(|o| o.id == *id)
                .ok_or_else(|| Error::Trial(format!("object{id} vanished")))?;
            let b = self.scene.object_box_deg(o);
            let track = self
                .tracks
                .iter()
                .filter(|t| t.object == Some(*id))
                .max_by(|a, b| {
                    a.last_update
                        .cmp(&b.last_update)
                        .then(a.confidence.total_cmp(&b.confidence))
                });
            let (error_px, post_var) = match track {
                Some(t) => (
                    (
                        (t.center.h - b.cx).abs() / alpha,
                        (t.center.v - b.cy).abs() / alpha,
                    ),
                    0.5 * (t.variance.0 + t.variance.1),
                ),
                None => ((f64::NAN, f64::NAN), f64::NAN),
            };
            found.insert(
                *id,
                FoundObject {
                    stage: *stage,
                    error_px,
                    pre_var: *pre_var,
                    post_var,
                    moving: o.is_moving(),
                },
            );
        }
        let vacuous = n_objects == 0;
        let recall = if vacuous {
            1.0
        } else {
            found.len() as f64 / n_objects as f64
        };
        let preds: Vec<(f64, CenteredBox)> = self.tracks.iter().map(|t| (t.confidence, t.bbox())).collect();
        let gts: Vec<CenteredBox> = self
            .scene
            .objects
            .iter()
            .map(|o| self.scene.object_box_deg(o))
            .collect();
        let ap = average_precision_11(&preds, &gts, 0.5);
        Ok(TrialResult {
            method: self.spec.method,
            seed: self.spec.seed,
            budget: self.spec.budget,
            found,
            n_objects,
            recall,
            vacuous,
            ap,
            moves: self.galvo.moves,
            views: self.galvo.views,
            elapsed_sim_ms: self.galvo.elapsed_ms,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// `count` raster points over `bounds`, row by row with alternating
/// direction.
pub fn raster_points(bounds: AngularBounds, count: usize) -> Vec<GalvoPoint> {
    if count == 0 {
        return Vec::new();
    }
    let (w, h) = (bounds.h_max - bounds.h_min, bounds.v_max - bounds.v_min);
    let cols = ((count as f64 * w / h).sqrt().ceil() as usize).max(1);
    let rows = count.div_ceil(cols);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let v = bounds.v_min + (r as f64 + 0.5) * h / rows as f64;
        for c in 0..cols {
            let c = if r % 2 == 0 { c } else { cols - 1 - c };
            out.push(GalvoPoint::new(
                bounds.h_min + (c as f64 + 0.5) * w / cols as f64,
                v,
            ));
        }
    }
    // Spread the surplus evenly instead of cutting the last row short.
    let step = out.len() as f64 / count as f64;
    (0..count).map(|i| out[(i as f64 * step) as usize]).collect()
}

/// Mirror poses already looked at without a detection, bucketed by FOV.
struct VisitedPoses {
    cell: (f64, f64),
    reach: (f64, f64),
    /// Stages a pose stays relevant; 0 means forever.
    memory: usize,
    now: usize,
    buckets: HashMap<(i64, i64), Vec<(GalvoPoint, usize)>>,
}

impl VisitedPoses {
    fn new(fov: FovSize, overlap_frac: f64, memory: usize) -> Self {
        Self {
            cell: (fov.w, fov.h),
            reach: (overlap_frac * fov.w, overlap_frac * fov.h),
            memory,
            now: 0,
            buckets: HashMap::new(),
        }
    }

    fn set_stage(&mut self, stage: usize) {
        self.now = stage;
    }

    fn key(&self, g: GalvoPoint) -> (i64, i64) {
        (
            (g.h / self.cell.0).floor() as i64,
            (g.v / self.cell.1).floor() as i64,
        )
    }

    fn insert(&mut self, g: GalvoPoint) {
        let k = self.key(g);
        let now = self.now;
        self.buckets.entry(k).or_default().push((g, now));
    }

    fn covers(&self, g: GalvoPoint) -> bool {
        let (kx, ky) = self.key(g);
        let fresh = |s: usize| self.memory == 0 || s + self.memory > self.now;
        (kx - 1..=kx + 1).any(|x| {
            (ky - 1..=ky + 1).any(|y| {
                self.buckets.get(&(x, y)).is_some_and(|ps| {
                    ps.iter().any(|(p, s)| {
                        fresh(*s) && (p.h - g.h).abs() < self.reach.0 && (p.v - g.v).abs() < self.reach.1
                    })
                })
            })
        })
    }
}
