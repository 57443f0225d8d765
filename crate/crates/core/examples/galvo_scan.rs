//! Orders four gaze points, steps the mirror through them and maps
//! a pixel of each view back to mirror angles.

use ppmsearch::galvo::{capture_view, image_to_galvo, plan_scan, GalvoConfig, GalvoState, OpticsConfig};
use ppmsearch::geom::GalvoPoint;
use ppmsearch::scene::{SceneConfig, SceneMap};
use ppmsearch::Result;

pub fn run_example() -> Result<GalvoState> {
    let scene = SceneMap::build(&SceneConfig::default(), 3)?;
    let optics = OpticsConfig::default();
    let galvo = GalvoConfig::default();
    let mut state = GalvoState::new(&galvo);

    // Two poses on objects, two on empty ground.
    let points = [
        scene.pano_to_galvo(scene.objects[0].center),
        GalvoPoint::new(-12.0, 8.0),
        scene.pano_to_galvo(scene.objects[4].center),
        GalvoPoint::new(11.0, -9.0),
    ];
    let plan = plan_scan(&state, &points);
    println!("order {:?}, predicted {:.2} ms", plan.order, plan.total_time_ms);

    for &i in &plan.order {
        state.move_to(points[i]);
        state.dwell();
        let view = capture_view(&scene, state.position, &optics);
        let (corner, _) = image_to_galvo(
            state.position,
            (0.0, 0.0),
            optics.alpha,
            view.size.0,
            view.size.1,
            &galvo.bounds(),
        );
        println!(
            "at ({:6.2}, {:5.2}): {} objects in view, top-left pixel at ({:.3}, {:.3})",
            state.position.h,
            state.position.v,
            view.visible.len(),
            corner.h,
            corner.v
        );
    }
    println!(
        "elapsed {:.2} ms over {} moves, {} views",
        state.elapsed_ms, state.moves, state.views
    );
    Ok(state)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
