//! Runs every search method once on the same scene and budget.

use ppmsearch::detector::SyntheticDetector;
use ppmsearch::experiment::build_scene;
use ppmsearch::{Method, Result, ScenarioConfig, TrialResult, TrialSetup, TrialSpec};

pub fn run_example() -> Result<Vec<TrialResult>> {
    let cfg = ScenarioConfig::default();
    let scene = build_scene(&cfg, &cfg.scene, 0)?;
    let detector = SyntheticDetector::new(cfg.detector.clone());
    let setup = TrialSetup {
        scene: &scene,
        segmentation: &cfg.segmentation,
        detector: &detector,
        optics: &cfg.optics,
        galvo: &cfg.galvo,
        engine: &cfg.engine,
    };
    let mut out = Vec::new();
    for method in Method::ALL {
        let r = ppmsearch::run_trial(&setup, TrialSpec::new(method, 300, 11))?;
        println!(
            "{:<9} recall {:.3}  ap {:.3}  views {:>5}  sim {:>8.2} ms",
            method.name(),
            r.recall,
            r.ap,
            r.views,
            r.elapsed_sim_ms
        );
        out.push(r);
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
