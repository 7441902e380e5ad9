//! Canonical orthographic view directions.
//!
//! Hand frame: +y points from wrist to fingertips, +z is the palmar surface
//! normal and +x points to the radial (thumb) side. Every view keeps +y as
//! screen-up; screen-right is `direction x up`, so left-to-right in a view
//! means increasing dot product with [`ViewAxis::right`].

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewAxis {
    Palmar,
    Dorsal,
    Radial,
    Ulnar,
}

impl ViewAxis {
    pub const ALL: [ViewAxis; 4] = [ViewAxis::Palmar, ViewAxis::Dorsal, ViewAxis::Radial, ViewAxis::Ulnar];

    /// Direction the camera looks along (from the camera into the scene).
    pub fn direction(self) -> [f64; 3] {
        match self {
            ViewAxis::Palmar => [0.0, 0.0, -1.0],
            ViewAxis::Dorsal => [0.0, 0.0, 1.0],
            ViewAxis::Radial => [-1.0, 0.0, 0.0],
            ViewAxis::Ulnar => [1.0, 0.0, 0.0],
        }
    }

    pub fn up(self) -> [f64; 3] {
        [0.0, 1.0, 0.0]
    }

    pub fn right(self) -> [f64; 3] {
        cross(self.direction(), self.up())
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewAxis::Palmar => "palmar",
            ViewAxis::Dorsal => "dorsal",
            ViewAxis::Radial => "radial",
            ViewAxis::Ulnar => "ulnar",
        }
    }
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
