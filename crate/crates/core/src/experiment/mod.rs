//! Experiment harness: trial matrices, aggregation and result tables.
//!
//! Jobs are keyed by (scene, seed, method, budget). They may run on any
//! number of threads; results are collected back in key order, so every
//! table is identical regardless of `jobs`.

pub mod metrics;
pub mod trial;

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::detector::{DetectorConfig, SyntheticDetector};
use crate::error::{Error, Result};
use crate::scene::{RegionSpec, SceneConfig, SceneMap};

use metrics::mean_std;
pub use trial::{
    run_trial, run_trial_traced, EngineConfig, FoundObject, Method, Trace, TrialResult, TrialSetup, TrialSpec,
};

/// Seed of scene variant `k`.
pub fn scene_seed(base: u64, k: u64) -> u64 {
    base.wrapping_add(k.wrapping_mul(0x1000_0001))
}

/// Seed of trial `s` on scene variant `k`.
pub fn trial_seed(base: u64, k: u64, s: u64) -> u64 {
    base.wrapping_mul(0x5851_F42D_4C95_7F2D)
        .wrapping_add(k.wrapping_mul(1_000_003))
        .wrapping_add(s)
}

/// Runs `f` over `items` on a pool of `jobs` threads, keeping input order.
/// A panicking job becomes an error.
pub fn run_jobs<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let guarded = |item: &T| -> Result<R> {
        match panic::catch_unwind(AssertUnwindSafe(|| f(item))) {
            Ok(r) => r,
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".to_string());
                Err(Error::Trial(msg))
            }
        }
    };
    if jobs <= 1 {
        return items.iter().map(guarded).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Trial(e.to_string()))?;
    pool.install(|| items.par_iter().map(guarded).collect())
}

/// Builds the `k`-th scene variant of a config.
pub fn build_scene(cfg: &ScenarioConfig, scene_cfg: &SceneConfig, k: u64) -> Result<SceneMap> {
    SceneMap::build(scene_cfg, scene_seed(cfg.seed, k))
}

fn trial_on(
    cfg: &ScenarioConfig,
    scene: &SceneMap,
    detector: &DetectorConfig,
    spec: TrialSpec,
) -> Result<TrialResult> {
    let det = SyntheticDetector::new(detector.clone());
    let setup = TrialSetup {
        scene,
        segmentation: &cfg.segmentation,
        detector: &det,
        optics: &cfg.optics,
        galvo: &cfg.galvo,
        engine: &cfg.engine,
    };
    run_trial(&setup, spec)
}

/// Runs the single trial the `trial` subcommand reports.
pub fn single_trial(cfg: &ScenarioConfig, method: Method, budget: u64) -> Result<(TrialResult, Trace)> {
    let scene = build_scene(cfg, &cfg.scene, 0)?;
    let det = SyntheticDetector::new(cfg.detector.clone());
    let setup = TrialSetup {
        scene: &scene,
        segmentation: &cfg.segmentation,
        detector: &det,
        optics: &cfg.optics,
        galvo: &cfg.galvo,
        engine: &cfg.engine,
    };
    run_trial_traced(&setup, TrialSpec::new(method, budget, trial_seed(cfg.seed, 0, 0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub method: Method,
    pub budget: u64,
    pub trials: usize,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub ap_mean: f64,
    pub views_mean: f64,
    pub elapsed_sim_ms_mean: f64,
    pub wall_time_ms: f64,
}

/// Mean recall per (method, budget) over every scene variant and seed.
pub fn recall_curve(cfg: &ScenarioConfig) -> Result<Vec<CurveRow>> {
    let ex = &cfg.experiment;
    let scenes: Vec<SceneMap> = (0..ex.scenes)
        .map(|k| build_scene(cfg, &cfg.scene, k))
        .collect::<Result<_>>()?;
    let mut keys = Vec::new();
    for &method in &ex.methods {
        for &budget in &ex.budgets {
            for k in 0..ex.scenes {
                for s in 0..ex.seeds {
                    keys.push((method, budget, k, s));
                }
            }
        }
    }
    let results = run_jobs(&keys, ex.jobs, |&(method, budget, k, s)| {
        let spec = TrialSpec::new(method, budget, trial_seed(cfg.seed, k, s));
        trial_on(cfg, &scenes[k as usize], &cfg.detector, spec)
    })?;
    let per_cell = (ex.scenes * ex.seeds) as usize;
    Ok(results
        .chunks(per_cell)
        .zip(keys.chunks(per_cell))
        .map(|(rs, ks)| {
            let (method, budget, _, _) = ks[0];
            curve_row(method, budget, rs)
        })
        .collect())
}

fn curve_row(method: Method, budget: u64, rs: &[TrialResult]) -> CurveRow {
    let recalls: Vec<f64> = rs.iter().map(|r| r.recall).collect();
    let (recall_mean, recall_std) = mean_std(&recalls);
    let mean = |f: &dyn Fn(&TrialResult) -> f64| rs.iter().map(f).sum::<f64>() / rs.len() as f64;
    CurveRow {
        method,
        budget,
        trials: rs.len(),
        recall_mean,
        recall_std,
        ap_mean: mean(&|r| r.ap),
        views_mean: mean(&|r| r.views as f64),
        elapsed_sim_ms_mean: mean(&|r| r.elapsed_sim_ms),
        wall_time_ms: rs.iter().map(|r| r.wall_time_ms).sum(),
    }
}

pub fn write_curve_csv<W: Write>(out: W, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "budget",
        "trials",
        "recall_mean",
        "recall_std",
        "ap_mean",
        "views_mean",
        "elapsed_sim_ms_mean",
    ])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.budget.to_string(),
            r.trials.to_string(),
            fmt(r.recall_mean),
            fmt(r.recall_std),
            fmt(r.ap_mean),
            fmt(r.views_mean),
            fmt(r.elapsed_sim_ms_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scene whose high-prior band covers `proportion` of the panorama height.
pub fn proportion_scene(base: &SceneConfig, proportion: f64, high: f64, low: f64) -> SceneConfig {
    let mut cfg = base.clone();
    let band = ((proportion * cfg.height as f64).round() as u32).clamp(1, cfg.height);
    let y0 = (cfg.height - band) / 2;
    cfg.background = "field".into();
    cfg.regions = if band == cfg.height {
        vec![RegionSpec {
            label: "hot".into(),
            rect: [0, 0, cfg.width, cfg.height],
        }]
    } else {
        vec![RegionSpec {
            label: "hot".into(),
            rect: [0, y0, cfg.width, y0 + band],
        }]
    };
    let class = cfg.target_class.clone();
    cfg.priors = [("hot", high), ("field", low)]
        .into_iter()
        .map(|(l, p)| (l.to_string(), [(class.clone(), p)].into_iter().collect()))
        .collect();
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub proportion: f64,
    pub method: Method,
    pub budget: u64,
    pub trials: usize,
    pub recall_mean: f64,
    pub recall_std: f64,
}

/// Mean recall per (proportion, method) at the sweep budget.
pub fn proportion_sweep(cfg: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    let ex = &cfg.experiment;
    let mut scenes = Vec::new();
    for &p in &ex.proportions {
        let sc = proportion_scene(&cfg.scene, p, ex.sweep_high_prior, ex.sweep_low_prior);
        let variants: Vec<SceneMap> = (0..ex.scenes)
            .map(|k| build_scene(cfg, &sc, k))
            .collect::<Result<_>>()?;
        scenes.push(variants);
    }
    let mut keys = Vec::new();
    for pi in 0..ex.proportions.len() {
        for &method in &ex.sweep_methods {
            for k in 0..ex.scenes {
                for s in 0..ex.seeds {
                    keys.push((pi, method, k, s));
                }
            }
        }
    }
    let results = run_jobs(&keys, ex.jobs, |&(pi, method, k, s)| {
        let spec = TrialSpec::new(method, ex.sweep_budget, trial_seed(cfg.seed, k, s));
        trial_on(cfg, &scenes[pi][k as usize], &cfg.detector, spec)
    })?;
    let per_cell = (ex.scenes * ex.seeds) as usize;
    Ok(results
        .chunks(per_cell)
        .zip(keys.chunks(per_cell))
        .map(|(rs, ks)| {
            let (pi, method, _, _) = ks[0];
            let (recall_mean, recall_std) = mean_std(&rs.iter().map(|r| r.recall).collect::<Vec<_>>());
            SweepRow {
                proportion: ex.proportions[pi],
                method,
                budget: ex.sweep_budget,
                trials: rs.len(),
                recall_mean,
                recall_std,
            }
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "proportion",
        "method",
        "budget",
        "trials",
        "recall_mean",
        "recall_std",
    ])?;
    for r in rows {
        w.write_record([
            fmt(r.proportion),
            r.method.to_string(),
            r.budget.to_string(),
            r.trials.to_string(),
            fmt(r.recall_mean),
            fmt(r.recall_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub preset: String,
    pub ppm: bool,
    pub budget: u64,
    pub trials: usize,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub ap_mean: f64,
    /// Views per simulated second.
    pub sim_fps: f64,
    /// Views per wall-clock second; not written to CSV.
    pub wall_fps: f64,
}

/// Full pipeline with and without the probability map, per detector preset.
pub fn ablation(cfg: &ScenarioConfig) -> Result<Vec<AblationRow>> {
    let ex = &cfg.experiment;
    let scenes: Vec<SceneMap> = (0..ex.scenes)
        .map(|k| build_scene(cfg, &cfg.scene, k))
        .collect::<Result<_>>()?;
    let detectors: Vec<DetectorConfig> = ex
        .presets
        .iter()
        .map(|p| {
            DetectorConfig::preset(p).ok_or_else(|| Error::Config(format!("unknown detector preset `{p}`")))
        })
        .collect::<Result<_>>()?;
    let mut keys = Vec::new();
    for di in 0..detectors.len() {
        for ppm in [false, true] {
            for k in 0..ex.scenes {
                for s in 0..ex.seeds {
                    keys.push((di, ppm, k, s));
                }
            }
        }
    }
    let results = run_jobs(&keys, ex.jobs, |&(di, ppm, k, s)| {
        let mut spec = TrialSpec::new(Method::PpmPs, ex.ablation_budget, trial_seed(cfg.seed, k, s));
        spec.without_ppm = !ppm;
        trial_on(cfg, &scenes[k as usize], &detectors[di], spec)
    })?;
    let per_cell = (ex.scenes * ex.seeds) as usize;
    Ok(results
        .chunks(per_cell)
        .zip(keys.chunks(per_cell))
        .map(|(rs, ks)| {
            let (di, ppm, _, _) = ks[0];
            let (recall_mean, recall_std) = mean_std(&rs.iter().map(|r| r.recall).collect::<Vec<_>>());
            let views: u64 = rs.iter().map(|r| r.views).sum();
            let sim_ms: f64 = rs.iter().map(|r| r.elapsed_sim_ms).sum();
            let wall_ms: f64 = rs.iter().map(|r| r.wall_time_ms).sum();
            AblationRow {
                preset: ex.presets[di].clone(),
                ppm,
                budget: ex.ablation_budget,
                trials: rs.len(),
                recall_mean,
                recall_std,
                ap_mean: rs.iter().map(|r| r.ap).sum::<f64>() / rs.len() as f64,
                sim_fps: if sim_ms > 0.0 {
                    views as f64 / (sim_ms / 1e3)
                } else {
                    0.0
                },
                wall_fps: if wall_ms > 0.0 {
                    views as f64 / (wall_ms / 1e3)
                } else {
                    0.0
                },
            }
        })
        .collect())
}

pub fn write_ablation_csv<W: Write>(out: W, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "preset",
        "ppm",
        "budget",
        "trials",
        "recall_mean",
        "recall_std",
        "ap_mean",
        "sim_fps",
    ])?;
    for r in rows {
        w.write_record([
            r.preset.clone(),
            if r.ppm { "with" } else { "without" }.to_string(),
            r.budget.to_string(),
            r.trials.to_string(),
            fmt(r.recall_mean),
            fmt(r.recall_std),
            fmt(r.ap_mean),
            fmt(r.sim_fps),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub voting: bool,
    pub object: u32,
    pub moving: bool,
    /// Trials in which the object was found.
    pub found: usize,
    pub dx_mean: f64,
    pub dy_mean: f64,
    pub pre_var_mean: f64,
    pub post_var_mean: f64,
}

/// Final center deviation per object with voting on and off.
pub fn deviation_study(cfg: &ScenarioConfig) -> Result<Vec<DeviationRow>> {
    let ex = &cfg.experiment;
    let scene = build_scene(cfg, &cfg.scene, 0)?;
    if !scene.objects.iter().any(|o| o.is_moving()) {
        return Err(Error::Precondition(
            "deviation study needs at least one moving object".into(),
        ));
    }
    let mut keys = Vec::new();
    for voting in [false, true] {
        for s in 0..ex.seeds {
            keys.push((voting, s));
        }
    }
    let results = run_jobs(&keys, ex.jobs, |&(voting, s)| {
        let mut spec = TrialSpec::new(Method::PpmPs, ex.deviation_budget, trial_seed(cfg.seed, 0, s));
        spec.voting = Some(voting);
        trial_on(cfg, &scene, &cfg.detector, spec)
    })?;
    let mut rows = Vec::new();
    for (vi, voting) in [false, true].into_iter().enumerate() {
        let rs = &results[vi * ex.seeds as usize..(vi + 1) * ex.seeds as usize];
        for o in &scene.objects {
            let hits: Vec<&FoundObject> = rs.iter().filter_map(|r| r.found.get(&o.id)).collect();
            let avg = |f: &dyn Fn(&FoundObject) -> Option<f64>| {
                let xs: Vec<f64> = hits
                    .iter()
                    .filter_map(|h| f(h))
                    .filter(|x| x.is_finite())
                    .collect();
                mean_std(&xs).0
            };
            rows.push(DeviationRow {
                voting,
                object: o.id.0,
                moving: o.is_moving(),
                found: hits.len(),
                dx_mean: avg(&|h| Some(h.error_px.0)),
                dy_mean: avg(&|h| Some(h.error_px.1)),
                pre_var_mean: avg(&|h| h.pre_var),
                post_var_mean: avg(&|h| Some(h.post_var)),
            });
        }
    }
    Ok(rows)
}

pub fn write_deviation_csv<W: Write>(out: W, rows: &[DeviationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "voting",
        "object",
        "moving",
        "found",
        "dx_mean_px",
        "dy_mean_px",
        "pre_var_mean",
        "post_var_mean",
    ])?;
    for r in rows {
        w.write_record([
            if r.voting { "on" } else { "off" }.to_string(),
            r.object.to_string(),
            r.moving.to_string(),
            r.found.to_string(),
            fmt(r.dx_mean),
            fmt(r.dy_mean),
            fmt(r.pre_var_mean),
            fmt(r.post_var_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-precision float formatting for tables; `NaN` prints empty.
fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_jobs_keeps_order_and_catches_panics() {
        let items: Vec<u64> = (0..50).collect();
        let one = run_jobs(&items, 1, |x| Ok(x * 2)).unwrap();
        let four = run_jobs(&items, 4, |x| Ok(x * 2)).unwrap();
        assert_eq!(one, four);
        let err = run_jobs(&items, 2, |x| if *x == 7 { panic!("boom") } else { Ok(*x) });
        assert!(matches!(err, Err(Error::Trial(m)) if m.contains("boom")));
    }

    #[test]
    fn proportion_scene_band() {
        let cfg = proportion_scene(&SceneConfig::default(), 0.25, 0.9, 0.004);
        assert_eq!(cfg.regions[0].rect, [0, 450, 1440, 750]);
        assert!(cfg.issues().is_empty());
        let full = proportion_scene(&SceneConfig::default(), 1.0, 0.9, 0.004);
        let scene = SceneMap::build(&full, 0).unwrap();
        assert_eq!(scene.regions.len(), 1);
    }

    #[test]
    fn empty_proportions_give_empty_table() {
        let mut cfg = ScenarioConfig::default();
        cfg.experiment.proportions.clear();
        assert!(proportion_sweep(&cfg).unwrap().is_empty());
    }

    #[test]
    fn single_cell_curve() {
        let mut cfg = ScenarioConfig::default();
        cfg.experiment.methods = vec![Method::Mpf];
        cfg.experiment.budgets = vec![20];
        cfg.experiment.seeds = 1;
        cfg.experiment.scenes = 1;
        let rows = recall_curve(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].trials, 1);
    }
}
