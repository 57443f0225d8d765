//! Dual-axis galvano-mirror model: image-to-mirror coordinate transform,
//! simulated search-camera capture, scan ordering and step-response timing.

use serde::{Deserialize, Serialize};

use crate::geom::{AngularBounds, CenteredBox, FovSize, GalvoPoint};
use crate::scene::{ObjectId, SceneMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GalvoConfig {
    /// Half range of each mirror axis, degrees.
    pub range_deg: f64,
    pub step_response_ms: f64,
    /// Time the detector spends on one view.
    pub dwell_ms: f64,
}

impl Default for GalvoConfig {
    fn default() -> Self {
        Self {
            range_deg: 20.0,
            step_response_ms: 0.25,
            dwell_ms: 2.0,
        }
    }
}

impl GalvoConfig {
    pub fn bounds(&self) -> AngularBounds {
        AngularBounds::symmetric(self.range_deg)
    }
}

/// Search camera geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsConfig {
    /// Processed search image size in pixels; also the `W, H` of the
    /// image-to-mirror transform.
    pub view_width: u32,
    pub view_height: u32,
    /// Degrees of mirror deflection per search-image pixel.
    pub alpha: f64,
    /// Raw sensor size, kept for reference and alternative transforms.
    pub sensor_width: u32,
    pub sensor_height: u32,
    /// Apparent-size scale from panoramic to search pixels. When absent the
    /// scale consistent with `alpha` is used.
    pub magnification: Option<f64>,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            view_width: 264,
            view_height: 224,
            alpha: 0.002,
            sensor_width: 640,
            sensor_height: 480,
            magnification: None,
        }
    }
}

impl OpticsConfig {
    pub fn fov(&self) -> FovSize {
        FovSize {
            w: self.view_width as f64 * self.alpha,
            h: self.view_height as f64 * self.alpha,
        }
    }

    pub fn magnification_for(&self, scene: &SceneMap) -> f64 {
        self.magnification.unwrap_or(scene.pano_to_deg.0 / self.alpha)
    }

    pub fn view_size(&self) -> (f64, f64) {
        (self.view_width as f64, self.view_height as f64)
    }
}

/// Maps a pixel of the view captured at `theta` to mirror angles.
///
/// Returns the refined angles and whether they had to be clamped to `bounds`.
pub fn image_to_galvo(
    theta: GalvoPoint,
    t: (f64, f64),
    alpha: f64,
    w: f64,
    h: f64,
    bounds: &AngularBounds,
) -> (GalvoPoint, bool) {
    let raw = GalvoPoint::new(
        theta.h + alpha * (t.0 - w / 2.0),
        theta.v + alpha * (t.1 - h / 2.0),
    );
    bounds.clamp(raw)
}

/// Mirror state owned by one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GalvoState {
    pub position: GalvoPoint,
    pub elapsed_ms: f64,
    pub step_response_ms: f64,
    pub dwell_ms: f64,
    pub moves: u64,
    pub views: u64,
    bounds: AngularBounds,
}

impl GalvoState {
    pub fn new(config: &GalvoConfig) -> Self {
        Self {
            position: GalvoPoint::new(0.0, 0.0),
            elapsed_ms: 0.0,
            step_response_ms: config.step_response_ms,
            dwell_ms: config.dwell_ms,
            moves: 0,
            views: 0,
            bounds: config.bounds(),
        }
    }

    /// Steers the mirror; every commanded move costs one step response.
    pub fn move_to(&mut self, target: GalvoPoint) {
        self.position = self.bounds.clamp(target).0;
        self.moves += 1;
        self.elapsed_ms += self.step_response_ms;
    }

    /// Spends one detector dwell at the current pose.
    pub fn dwell(&mut self) {
        self.views += 1;
        self.elapsed_ms += self.dwell_ms;
    }

    /// Closed-form elapsed time from the move and view counters.
    pub fn expected_elapsed_ms(&self) -> f64 {
        self.moves as f64 * self.step_response_ms + self.views as f64 * self.dwell_ms
    }
}

/// An object (or part of one) inside a captured view.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleObject {
    pub object_id: ObjectId,
    pub class: String,
    /// Center of the visible part, view pixels.
    pub position: (f64, f64),
    /// Size of the visible part, view pixels.
    pub apparent_size: (f64, f64),
    /// Center of the whole object, view pixels; may lie outside the view.
    pub full_center: (f64, f64),
    /// Size of the whole object, view pixels.
    pub full_size: (f64, f64),
    pub occlusion: f64,
    /// Fraction of the object footprint inside the view.
    pub visible_fraction: f64,
}

/// What the search camera sees at one mirror pose.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub center: GalvoPoint,
    /// Image size, pixels.
    pub size: (f64, f64),
    /// Degrees per view pixel.
    pub alpha: f64,
    pub visible: Vec<VisibleObject>,
}

impl View {
    /// Mirror angles of a view pixel (unclamped).
    pub fn pixel_to_galvo(&self, t: (f64, f64)) -> GalvoPoint {
        GalvoPoint::new(
            self.center.h + self.alpha * (t.0 - self.size.0 / 2.0),
            self.center.v + self.alpha * (t.1 - self.size.1 / 2.0),
        )
    }
}

/// Simulates the search camera looking at `center`.
pub fn capture_view(scene: &SceneMap, center: GalvoPoint, optics: &OpticsConfig) -> View {
    let (vw, vh) = optics.view_size();
    let alpha = optics.alpha;
    let fov = optics.fov();
    let window = CenteredBox::new(center.h, center.v, fov.w, fov.h);
    let mag = optics.magnification_for(scene);
    let to_px = |h: f64, v: f64| {
        (
            (h - center.h) / alpha + vw / 2.0,
            (v - center.v) / alpha + vh / 2.0,
        )
    };

    let mut visible = Vec::new();
    for o in &scene.objects {
        let footprint = scene.object_box_deg(o);
        let Some(part) = footprint.intersection(&window) else {
            continue;
        };
        let position = to_px(part.cx, part.cy);
        if !(position.0 >= 0.0 && position.0 < vw && position.1 >= 0.0 && position.1 < vh) {
            continue;
        }
        let full_center = to_px(footprint.cx, footprint.cy);
        visible.push(VisibleObject {
            object_id: o.id,
            class: o.class.clone(),
            position,
            apparent_size: (
                part.w / scene.pano_to_deg.0 * mag,
                part.h / scene.pano_to_deg.1 * mag,
            ),
            full_center,
            full_size: (o.size.0 * mag, o.size.1 * mag),
            occlusion: o.occlusion,
            visible_fraction: part.area() / footprint.area(),
        });
    }
    View {
        center,
        size: (vw, vh),
        alpha,
        visible,
    }
}

/// Visiting order and timing for one batch of gaze points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    pub order: Vec<usize>,
    pub moves: u64,
    pub total_time_ms: f64,
}

/// Nearest-neighbor tour from the current mirror pose.
pub fn plan_scan(state: &GalvoState, points: &[GalvoPoint]) -> ScanPlan {
    let n = points.len();
    let mut order = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut here = state.position;
    for _ in 0..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (i, p) in points.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = (p.h - here.h).powi(2) + (p.v - here.v).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        used[best] = true;
        order.push(best);
        here = points[best];
    }
    let moves = n as u64;
    ScanPlan {
        order,
        moves,
        total_time_ms: moves as f64 * state.step_response_ms + n as f64 * state.dwell_ms,
    }
}
