//! One particle-filter step by hand: draw from the map, weight by a fake
//! likelihood, build the Gaussian mixture and resample.

use ppmsearch::galvo::OpticsConfig;
use ppmsearch::geom::GalvoPoint;
use ppmsearch::particle::{
    build_proposal, initial_sample, normalize_weights, prune_redundant, sample_next, update_weights, Particle,
};
use ppmsearch::ppm::{build_ppm, AllocParams, SegNoiseConfig};
use ppmsearch::rng::{stream, Stream};
use ppmsearch::scene::{SceneConfig, SceneMap};
use ppmsearch::Result;

pub fn run_example() -> Result<Vec<Particle>> {
    let scene = SceneMap::build(&SceneConfig::default(), 1)?;
    let ppm = build_ppm(
        &scene,
        &SegNoiseConfig::default(),
        "car",
        200,
        AllocParams::default(),
        1,
    )?;
    let mut rng = stream(1, Stream::Sampling);

    let mut particles = initial_sample(&ppm, &scene, 0.5, &mut rng);
    let fov = OpticsConfig::default().fov();
    let before = particles.len();
    particles = prune_redundant(&particles, fov, 0.5);
    println!("stage 0: {before} particles, {} after pruning", particles.len());

    // Pretend the detector liked the upper half of the road.
    let hot = GalvoPoint::new(0.0, -1.0);
    let lik: Vec<f64> = particles
        .iter()
        .map(|p| (-p.position().dist(&hot).powi(2) / 8.0).exp().max(1e-3))
        .collect();
    update_weights(&mut particles, &lik)?;
    normalize_weights(&mut particles)?;

    let q = build_proposal(&particles, scene.angular_bounds())?;
    let next = sample_next(&q, 200, 1, &mut rng);
    let mean_v = next.iter().map(|p| p.theta_v).sum::<f64>() / next.len() as f64;
    println!("stage 1: {} particles, mean tilt {mean_v:.2} deg", next.len());
    Ok(next)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
