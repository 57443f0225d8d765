//! Three overlapping reports of one car: plain NMS keeps the most confident
//! box, voting pulls the center toward the sharper reports.

use ppmsearch::detector::Detection;
use ppmsearch::geom::GalvoPoint;
use ppmsearch::refinement::{nms_merge, NmsParams, SearchWindow};

fn det(h: f64, v: f64, confidence: f64, var: f64) -> Detection {
    Detection {
        center: GalvoPoint::new(h, v),
        extent: (0.06, 0.04),
        confidence,
        var_h: var,
        var_v: var,
        class: "car".into(),
        source_particle: 0,
        truth: None,
    }
}

pub fn run_example() -> (SearchWindow, SearchWindow) {
    let dets = [
        det(1.010, 0.500, 0.90, 4e-4),
        det(1.000, 0.498, 0.70, 1e-4),
        det(1.002, 0.501, 0.60, 1e-4),
    ];
    let plain = NmsParams {
        voting: false,
        ..NmsParams::default()
    };
    let kept = nms_merge(&dets, &plain).remove(0);
    let voted = nms_merge(&dets, &NmsParams::default()).remove(0);
    for (name, w) in [("nms", &kept), ("vote", &voted)] {
        println!(
            "{name:>4}: center ({:.4}, {:.4}) radius ({:.4}, {:.4}) members {}",
            w.center.h,
            w.center.v,
            w.radius.0,
            w.radius.1,
            w.members.len()
        );
    }
    (kept, voted)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
