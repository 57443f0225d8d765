//! Every example under `examples/` runs and produces sane output.

#[path = "../examples/custom_detector.rs"]
mod custom_detector;
#[path = "../examples/deviation_study.rs"]
mod deviation_study;
#[path = "../examples/galvo_scan.rs"]
mod galvo_scan;
#[path = "../examples/particle_proposal.rs"]
mod particle_proposal;
#[path = "../examples/probability_map.rs"]
mod probability_map;
#[path = "../examples/recall_curve.rs"]
mod recall_curve;
#[path = "../examples/search_trial.rs"]
mod search_trial;
#[path = "../examples/variance_voting.rs"]
mod variance_voting;

use ppmsearch::Method;

#[test]
fn probability_map_allocates_everything() {
    let ppm = probability_map::run_example().unwrap();
    assert_eq!(ppm.allocated(), 500);
    let total: f64 = ppm.region_probs.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(ppm.sub_regions.len(), 3);
}

#[test]
fn particle_proposal_follows_likelihood() {
    let next = particle_proposal::run_example().unwrap();
    assert_eq!(next.len(), 200);
    assert!(next
        .iter()
        .all(|p| p.stage == 1 && p.theta_h.abs() <= 20.0 && p.theta_v.abs() <= 20.0));
}

#[test]
fn galvo_scan_timing_is_closed_form() {
    let state = galvo_scan::run_example().unwrap();
    assert_eq!((state.moves, state.views), (4, 4));
    assert_eq!(state.elapsed_ms, state.expected_elapsed_ms());
}

#[test]
fn voting_pulls_toward_sharp_members() {
    let (kept, voted) = variance_voting::run_example();
    assert_eq!(kept.center.h, 1.010);
    assert!(voted.center.h < kept.center.h && voted.center.h > 1.0);
    assert!(voted.radius.0 < kept.radius.0);
}

#[test]
fn search_trial_runs_all_methods() {
    let results = search_trial::run_example().unwrap();
    assert_eq!(results.len(), Method::ALL.len());
    for r in &results {
        assert!((0.0..=1.0).contains(&r.recall));
        assert_eq!(r.views, 1800);
    }
}

#[test]
fn recall_curve_has_one_row_per_cell() {
    let rows = recall_curve::run_example().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.trials == 6));
}

#[test]
fn deviation_rows_cover_both_settings() {
    let rows = deviation_study::run_example().unwrap();
    assert!(rows.iter().any(|r| r.voting) && rows.iter().any(|r| !r.voting));
    assert!(rows.iter().any(|r| r.moving));
}

#[test]
fn custom_detector_plugs_in() {
    let r = custom_detector::run_example().unwrap();
    assert!(r.recall > 0.9, "{}", r.recall);
}
