use serde::Serialize;

use super::RenderError;
use crate::hand_model::HandMesh;
use crate::view::{dot, ViewAxis};

/// Axis-aligned orthographic camera fitted to a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthoCamera {
    pub axis: ViewAxis,
    pub center: [f64; 3],
    /// Pixels per model unit.
    pub scale: f64,
    pub width: u32,
    pub height: u32,
}

/// Continuous pixel position (x right, y down) plus depth along the view direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

impl OrthoCamera {
    /// Fits the box `[lo, hi]` into a `width x height` view, leaving `margin`
    /// pixels on the tighter axis. Scaling is isotropic.
    pub fn fit(
        axis: ViewAxis,
        lo: [f64; 3],
        hi: [f64; 3],
        width: u32,
        height: u32,
        margin: f64,
    ) -> Result<Self, RenderError> {
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
        let extent = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let span = |dir: [f64; 3]| (0..3).map(|k| extent[k] * dir[k].abs()).sum::<f64>();
        let (span_x, span_y) = (span(axis.right()), span(axis.up()));
        let avail_w = width as f64 - 2.0 * margin;
        let avail_h = height as f64 - 2.0 * margin;
        if avail_w <= 0.0 || avail_h <= 0.0 {
            return Err(RenderError::DegenerateCamera(format!(
                "margin {margin} leaves no room in a {width}x{height} view"
            )));
        }
        let scale = match (span_x > 0.0, span_y > 0.0) {
            (true, true) => (avail_w / span_x).min(avail_h / span_y),
            (true, false) => avail_w / span_x,
            (false, true) => avail_h / span_y,
            (false, false) => {
                return Err(RenderError::DegenerateCamera(format!(
                    "geometry has zero extent in the {} view plane",
                    axis.name()
                )))
            }
        };
        if !scale.is_finite() {
            return Err(RenderError::DegenerateCamera("non-finite scale".into()));
        }
        Ok(Self { axis, center, scale, width, height })
    }

    pub fn fit_mesh(axis: ViewAxis, mesh: &HandMesh, width: u32, height: u32, margin: f64) -> Result<Self, RenderError> {
        let (lo, hi) = mesh.bounds();
        Self::fit(axis, lo, hi, width, height, margin)
    }
}

/// Projects a point into view-local pixel coordinates.
pub fn project(p: [f64; 3], cam: &OrthoCamera) -> Projection {
    let d = [p[0] - cam.center[0], p[1] - cam.center[1], p[2] - cam.center[2]];
    Projection {
        x: cam.width as f64 / 2.0 + dot(d, cam.axis.right()) * cam.scale,
        y: cam.height as f64 / 2.0 - dot(d, cam.axis.up()) * cam.scale,
        depth: dot(d, cam.axis.direction()),
    }
}
