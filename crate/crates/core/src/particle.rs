//! Particle set maintenance: PPM-guided initial draw, Gaussian-mixture
//! proposal, likelihood weighting, normalization and redundancy pruning.

use std::f64::consts::TAU;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geom::{AngularBounds, FovSize, GalvoPoint, PanoPoint};
use crate::ppm::Ppm;
use crate::scene::{self, SceneMap};

/// A candidate gaze point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub theta_h: f64,
    pub theta_v: f64,
    pub weight: f64,
    pub stage: u32,
    /// Sampling std around this particle, degrees.
    pub sigma: f64,
}

impl Particle {
    pub fn new(at: GalvoPoint, weight: f64, stage: u32, sigma: f64) -> Self {
        Self {
            theta_h: at.h,
            theta_v: at.v,
            weight,
            stage,
            sigma,
        }
    }

    pub fn position(&self) -> GalvoPoint {
        GalvoPoint::new(self.theta_h, self.theta_v)
    }
}

/// One isotropic Gaussian of the proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub mean: GalvoPoint,
    pub std: f64,
    pub mix_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalMixture {
    pub components: Vec<Component>,
    /// Draws are clamped into these limits.
    pub bounds: AngularBounds,
}

impl ProposalMixture {
    pub fn new(components: Vec<Component>, bounds: AngularBounds) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::DegenerateParticles);
        }
        let total: f64 = components.iter().map(|c| c.mix_weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        if let Some(c) = components.iter().find(|c| !(c.std > 0.0)) {
            return Err(Error::Domain(format!("component std must be > 0, got {}", c.std)));
        }
        Ok(Self { components, bounds })
    }
}

/// Uniform draw inside a disc of radius `r` around `c`.
fn in_disc<R: Rng + ?Sized>(c: PanoPoint, r: f64, rng: &mut R) -> PanoPoint {
    let rho = r * rng.random::<f64>().sqrt();
    let phi = rng.random::<f64>() * TAU;
    PanoPoint::new(c.x + rho * phi.cos(), c.y + rho * phi.sin())
}

/// Draws the stage-0 particle set from a PPM: region remainders uniformly
/// over their pixels, sub-region counts uniformly over their discs.
pub fn initial_sample<R: Rng + ?Sized>(
    ppm: &Ppm,
    scene: &SceneMap,
    sigma0: f64,
    rng: &mut R,
) -> Vec<Particle> {
    let n = ppm.allocated();
    let w = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(n as usize);
    for r in &ppm.regions {
        let count = ppm.remainder_counts.get(&r.id).copied().unwrap_or(0);
        for _ in 0..count {
            if let Some(p) = ppm.sampler.sample(r.id, rng) {
                out.push(Particle::new(scene.pano_to_galvo(p), w, 0, sigma0));
            }
        }
    }
    for sub in &ppm.sub_regions {
        for _ in 0..sub.count {
            let mut p = sub.center;
            for _ in 0..64 {
                let cand = in_disc(sub.center, sub.radius_px, rng);
                if scene::region_in(&ppm.labels, cand).ok() == Some(sub.region) {
                    p = cand;
                    break;
                }
            }
            out.push(Particle::new(scene.pano_to_galvo(p), w, 0, sigma0));
        }
    }
    out
}

/// One component per particle: mean at its position, std its sigma, mix
/// weight its normalized weight.
pub fn build_proposal(particles: &[Particle], bounds: AngularBounds) -> Result<ProposalMixture> {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateParticles);
    }
    let components = particles
        .iter()
        .map(|p| Component {
            mean: p.position(),
            std: p.sigma,
            mix_weight: p.weight / total,
        })
        .collect();
    ProposalMixture::new(components, bounds)
}

/// Draws `count` particles of the next stage. New particles share weight
/// `1 / count` and inherit the std of their component.
pub fn sample_next<R: Rng + ?Sized>(
    q: &ProposalMixture,
    count: usize,
    stage: u32,
    rng: &mut R,
) -> Vec<Particle> {
    if count == 0 {
        return Vec::new();
    }
    let index = WeightedIndex::new(q.components.iter().map(|c| c.mix_weight))
        .expect("mixture weights validated at construction");
    let w = 1.0 / count as f64;
    (0..count)
        .map(|_| {
            let c = &q.components[index.sample(rng)];
            let dh: f64 = rng.sample(StandardNormal);
            let dv: f64 = rng.sample(StandardNormal);
            let raw = GalvoPoint::new(c.mean.h + c.std * dh, c.mean.v + c.std * dv);
            let (at, _) = q.bounds.clamp(raw);
            Particle::new(at, w, stage, c.std)
        })
        .collect()
}

/// Multiplies each weight by its measurement likelihood.
pub fn update_weights(particles: &mut [Particle], likelihoods: &[f64]) -> Result<()> {
    if particles.len() != likelihoods.len() {
        return Err(Error::Domain(format!(
            "{} particles but {} likelihoods",
            particles.len(),
            likelihoods.len()
        )));
    }
    for (p, l) in particles.iter_mut().zip(likelihoods) {
        p.weight *= l;
    }
    Ok(())
}

pub fn normalize_weights(particles: &mut [Particle]) -> Result<()> {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateParticles);
    }
    for p in particles.iter_mut() {
        p.weight /= total;
    }
    Ok(())
}

/// Greedy redundancy removal: by descending weight, a particle is dropped
/// when its view overlaps a retained one by more than `overlap_frac` of the
/// field of view on both axes.
pub fn prune_redundant(particles: &[Particle], fov: FovSize, overlap_frac: f64) -> Vec<Particle> {
    let mut order: Vec<usize> = (0..particles.len()).collect();
    order.sort_by(|&a, &b| {
        particles[b]
            .weight
            .total_cmp(&particles[a].weight)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<Particle> = Vec::new();
    for i in order {
        let p = particles[i];
        let redundant = kept.iter().any(|k| {
            (p.theta_h - k.theta_h).abs() < overlap_frac * fov.w
                && (p.theta_v - k.theta_v).abs() < overlap_frac * fov.h
        });
        if !redundant {
            kept.push(p);
        }
    }
    kept
}

/// Per-iteration particle dump: `stage,theta_h,theta_v,weight,sigma`.
pub fn write_particles_csv<W: Write>(out: W, particles: &[Particle]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "theta_h", "theta_v", "weight", "sigma"])?;
    for p in particles {
        w.write_record([
            p.stage.to_string(),
            p.theta_h.to_string(),
            p.theta_v.to_string(),
            p.weight.to_string(),
            p.sigma.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppm::{build_ppm, AllocParams, SegNoiseConfig};
    use crate::rng::SimRng;
    use crate::scene::{ObjectSpec, RegionSpec, SceneConfig};
    use rand::SeedableRng;

    fn p(h: f64, v: f64, w: f64) -> Particle {
        Particle::new(GalvoPoint::new(h, v), w, 0, 1.0)
    }

    #[test]
    fn full_frame_initial_sample() {
        let scene = SceneMap::build(&SceneConfig::single_region("all", 0.3), 0).unwrap();
        let ppm = build_ppm(
            &scene,
            &SegNoiseConfig::default(),
            "car",
            100,
            AllocParams::default(),
            0,
        )
        .unwrap();
        let mut rng = SimRng::seed_from_u64(5);
        let ps = initial_sample(&ppm, &scene, 1.0, &mut rng);
        assert_eq!(ps.len(), 100);
        let bounds = AngularBounds::symmetric(20.0);
        for q in &ps {
            assert_eq!(q.weight, 0.01);
            assert!(bounds.contains(q.position()));
        }
    }

    #[test]
    fn zero_probability_region_gets_no_particles() {
        let mut cfg = SceneConfig::single_region("hot", 0.5);
        cfg.regions = vec![
            RegionSpec {
                label: "hot".into(),
                rect: [0, 0, 720, 1200],
            },
            RegionSpec {
                label: "cold".into(),
                rect: [720, 0, 1440, 1200],
            },
        ];
        let scene = SceneMap::build(&cfg, 0).unwrap();
        let ppm = build_ppm(
            &scene,
            &SegNoiseConfig::default(),
            "car",
            300,
            AllocParams::default(),
            0,
        )
        .unwrap();
        let mut rng = SimRng::seed_from_u64(6);
        for q in initial_sample(&ppm, &scene, 1.0, &mut rng) {
            let px = scene.galvo_to_pano(q.position());
            assert!(px.x < 720.0);
        }
    }

    #[test]
    fn disc_particles_stay_near_detection() {
        let mut cfg = SceneConfig::single_region("lot", 1.0);
        cfg.regions = vec![RegionSpec {
            label: "lot".into(),
            rect: [550, 450, 650, 550],
        }];
        cfg.background = "field".into();
        cfg.priors
            .insert("field".into(), [("car".to_string(), 1e-4)].into_iter().collect());
        cfg.placed.push(ObjectSpec {
            class: None,
            center: [600.0, 500.0],
            size: [80.0, 40.0],
            velocity: [0.0, 0.0],
            occlusion: 0.0,
        });
        let scene = SceneMap::build(&cfg, 0).unwrap();
        let noise = SegNoiseConfig {
            size_half_px: 80.0 / 0.9 - 80.0,
            ..SegNoiseConfig::noiseless()
        };
        let ppm = build_ppm(&scene, &noise, "car", 400, AllocParams::default(), 0).unwrap();
        let sub = &ppm.sub_regions[0];
        assert!((sub.radius_px - 5.0).abs() < 1e-9, "{}", sub.radius_px);
        assert!(sub.count > 0);
        let mut rng = SimRng::seed_from_u64(7);
        let ps = initial_sample(&ppm, &scene, 1.0, &mut rng);
        let remainder = ppm.remainder_counts.values().sum::<u64>() as usize;
        for q in &ps[remainder..] {
            let px = scene.galvo_to_pano(q.position());
            let d = (px.x - 600.0).hypot(px.y - 500.0);
            assert!(d <= 5.0 + 1e-9, "{d}");
        }
    }

    #[test]
    fn proposal_passes_weights_through() {
        let b = AngularBounds::symmetric(20.0);
        let one = build_proposal(&[p(1.0, 2.0, 1.0)], b).unwrap();
        assert_eq!(one.components.len(), 1);
        assert_eq!(one.components[0].mean, GalvoPoint::new(1.0, 2.0));
        let two = build_proposal(&[p(0.0, 0.0, 0.25), p(5.0, 5.0, 0.75)], b).unwrap();
        assert_eq!(two.components[0].mix_weight, 0.25);
        assert_eq!(two.components[1].mix_weight, 0.75);
        assert!(matches!(
            build_proposal(&[p(0.0, 0.0, 0.0)], b),
            Err(Error::DegenerateParticles)
        ));
    }

    #[test]
    fn mixture_component_frequencies() {
        let b = AngularBounds::symmetric(20.0);
        let q = build_proposal(&[p(-10.0, 0.0, 0.3), p(10.0, 0.0, 0.7)], b).unwrap();
        let mut rng = SimRng::seed_from_u64(8);
        let draws = sample_next(&q, 100_000, 1, &mut rng);
        let left = draws.iter().filter(|d| d.theta_h < 0.0).count() as f64 / 1e5;
        assert!((left - 0.3).abs() < 0.01, "{left}");
    }

    #[test]
    fn delta_mixture_and_clamp() {
        let b = AngularBounds::symmetric(20.0);
        let mut tight = p(3.0, -1.0, 1.0);
        tight.sigma = 1e-300;
        let q = build_proposal(&[tight], b).unwrap();
        let mut rng = SimRng::seed_from_u64(9);
        for d in sample_next(&q, 50, 4, &mut rng) {
            assert_eq!(d.position(), GalvoPoint::new(3.0, -1.0));
            assert_eq!(d.stage, 4);
        }
        let edge = build_proposal(&[p(20.0, 0.0, 1.0)], b).unwrap();
        for d in sample_next(&edge, 200, 1, &mut rng) {
            assert!(d.theta_h <= 20.0);
        }
    }

    #[test]
    fn seeded_sampling_repeats() {
        let b = AngularBounds::symmetric(20.0);
        let q = build_proposal(&[p(0.0, 0.0, 0.5), p(2.0, 2.0, 0.5)], b).unwrap();
        let a = sample_next(&q, 64, 1, &mut SimRng::seed_from_u64(10));
        let c = sample_next(&q, 64, 1, &mut SimRng::seed_from_u64(10));
        assert_eq!(a, c);
    }

    #[test]
    fn weight_update_cases() {
        let mut ps = vec![p(0.0, 0.0, 0.5), p(1.0, 0.0, 0.5), p(2.0, 0.0, 0.5)];
        update_weights(&mut ps, &[0.8, 0.0, 1.0]).unwrap();
        assert!((ps[0].weight - 0.4).abs() < 1e-15);
        assert_eq!(ps[1].weight, 0.0);
        assert_eq!(ps[2].weight, 0.5);
        assert!(update_weights(&mut ps, &[1.0]).is_err());
    }

    #[test]
    fn normalization_cases() {
        let mut ps = vec![p(0.0, 0.0, 2.0), p(1.0, 0.0, 2.0), p(2.0, 0.0, 4.0)];
        normalize_weights(&mut ps).unwrap();
        let w: Vec<f64> = ps.iter().map(|q| q.weight).collect();
        assert_eq!(w, vec![0.25, 0.25, 0.5]);
        let mut zs = vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 3.0)];
        normalize_weights(&mut zs).unwrap();
        assert_eq!((zs[0].weight, zs[1].weight), (0.0, 1.0));
        let mut dead = vec![p(0.0, 0.0, 0.0)];
        assert!(matches!(
            normalize_weights(&mut dead),
            Err(Error::DegenerateParticles)
        ));
    }

    #[test]
    fn pruning_cases() {
        let fov = FovSize { w: 0.528, h: 0.448 };
        let kept = prune_redundant(&[p(1.0, 1.0, 0.4), p(1.0, 1.0, 0.6)], fov, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].weight, 0.6);
        let apart = prune_redundant(&[p(0.0, 0.0, 0.5), p(1.0, 0.0, 0.5), p(0.0, 1.0, 0.5)], fov, 0.5);
        assert_eq!(apart.len(), 3);
        let cluster: Vec<Particle> = (0..100).map(|i| p(2.0, 3.0, i as f64)).collect();
        assert_eq!(prune_redundant(&cluster, fov, 0.5).len(), 1);
    }
}
