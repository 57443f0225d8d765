//! Plugs a hand-written detector into the search engine. This one reports
//! every object at least half in view at its true center with fixed confidence.

use rand::RngCore;

use ppmsearch::detector::{Detection, Detector};
use ppmsearch::experiment::build_scene;
use ppmsearch::galvo::View;
use ppmsearch::{Method, Result, ScenarioConfig, TrialResult, TrialSetup, TrialSpec};

pub struct Oracle;

impl Detector for Oracle {
    fn detect(&self, view: &View, _rng: &mut dyn RngCore) -> Vec<Detection> {
        view.visible
            .iter()
            .filter(|v| v.visible_fraction > 0.5)
            .map(|v| Detection {
                center: view.pixel_to_galvo(v.full_center),
                extent: (v.full_size.0 * view.alpha, v.full_size.1 * view.alpha),
                confidence: 0.9,
                var_h: 1e-4,
                var_v: 1e-4,
                class: v.class.clone(),
                source_particle: 0,
                truth: Some(v.object_id),
            })
            .collect()
    }
}

pub fn run_example() -> Result<TrialResult> {
    let cfg = ScenarioConfig::default();
    let scene = build_scene(&cfg, &cfg.scene, 0)?;
    let setup = TrialSetup {
        scene: &scene,
        segmentation: &cfg.segmentation,
        detector: &Oracle,
        optics: &cfg.optics,
        galvo: &cfg.galvo,
        engine: &cfg.engine,
    };
    let r = ppmsearch::run_trial(&setup, TrialSpec::new(Method::PpmPs, 300, 5))?;
    println!("oracle detector: recall {:.3}, ap {:.3}", r.recall, r.ap);
    Ok(r)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
