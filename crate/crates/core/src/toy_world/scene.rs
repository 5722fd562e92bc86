use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{Frame, FRAME_SIZE};

/// Minor-to-major semi-axis ratio of a bar.
pub const BAR_ASPECT: f64 = 0.5;
/// Border margin (pixels) at which mobility saturates at 1.
pub const MOBILITY_SCALE_PX: f64 = 9.0;
const SUPERSAMPLE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Disc,
    /// A horizontal ellipse.
    Bar,
}

impl ObjectKind {
    pub fn aspect(self) -> f64 {
        match self {
            ObjectKind::Disc => 1.0,
            ObjectKind::Bar => BAR_ASPECT,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("{field} = {value} out of range")]
    Range { field: &'static str, value: f64 },
    #[error("object renders to less than one pixel")]
    Degenerate,
}

/// One object on a black background.
///
/// Coordinates and radius are fractions of the frame side. `radius` is the
/// horizontal semi-axis; bars are `BAR_ASPECT` times as tall. An incomplete
/// object keeps only the leftmost `completeness` of its width. `mobility` is
/// derived: the smallest gap between the object and the frame border,
/// scaled by [`MOBILITY_SCALE_PX`] and clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: ObjectKind,
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub completeness: f64,
    pub mobility: f64,
}

impl SceneSpec {
    pub fn new(
        kind: ObjectKind,
        cx: f64,
        cy: f64,
        radius: f64,
        completeness: f64,
    ) -> Result<Self, SceneError> {
        let check = |field, value: f64, lo: f64, hi: f64, lo_open: bool| {
            let ok = value.is_finite() && value <= hi && if lo_open { value > lo } else { value >= lo };
            if ok {
                Ok(())
            } else {
                Err(SceneError::Range { field, value })
            }
        };
        check("cx", cx, 0.0, 1.0, false)?;
        check("cy", cy, 0.0, 1.0, false)?;
        check("radius", radius, 0.0, 0.5, true)?;
        check("completeness", completeness, 0.0, 1.0, true)?;
        let mut s = Self {
            kind,
            cx,
            cy,
            radius,
            completeness,
            mobility: 0.0,
        };
        s.mobility = (s.margin_px() / MOBILITY_SCALE_PX).clamp(0.0, 1.0);
        Ok(s)
    }

    fn semi_axes_px(&self) -> (f64, f64) {
        let a = self.radius * FRAME_SIZE as f64;
        (a, a * self.kind.aspect())
    }

    /// Continuous extent `(left, right, top, bottom)` in pixel units.
    pub fn extent_px(&self) -> (f64, f64, f64, f64) {
        let s = FRAME_SIZE as f64;
        let (a, b) = self.semi_axes_px();
        let (cx, cy) = (self.cx * s, self.cy * s);
        let left = cx - a;
        (left, left + 2.0 * a * self.completeness, cy - b, cy + b)
    }

    /// Smallest distance from the object to the frame border in pixels;
    /// negative when the object crosses it.
    pub fn margin_px(&self) -> f64 {
        let s = FRAME_SIZE as f64;
        let (l, r, t, b) = self.extent_px();
        l.min(s - r).min(t).min(s - b)
    }

    /// Analytic area of the full (uncut) object in square pixels.
    pub fn full_area_px(&self) -> f64 {
        let (a, b) = self.semi_axes_px();
        std::f64::consts::PI * a * b
    }

    /// Shading at a point in pixel units, or `None` outside the object.
    fn shade(&self, x: f64, y: f64) -> Option<f64> {
        let s = FRAME_SIZE as f64;
        let (a, b) = self.semi_axes_px();
        let (cx, cy) = (self.cx * s, self.cy * s);
        let rho2 = ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2);
        let cut = cx - a + 2.0 * a * self.completeness;
        (rho2 <= 1.0 && x <= cut).then(|| 0.65 + 0.35 * (1.0 - rho2))
    }
}

/// Per-pixel (shaded intensity, covered fraction), supersampled.
fn supersample(scene: &SceneSpec) -> (Vec<f64>, Vec<f64>) {
    let n = SUPERSAMPLE;
    let mut value = vec![0.0; FRAME_SIZE * FRAME_SIZE];
    let mut cover = vec![0.0; FRAME_SIZE * FRAME_SIZE];
    let norm = 1.0 / (n * n) as f64;
    for i in 0..FRAME_SIZE * FRAME_SIZE {
        let (x0, y0) = ((i % FRAME_SIZE) as f64, (i / FRAME_SIZE) as f64);
        for sy in 0..n {
            for sx in 0..n {
                let x = x0 + (sx as f64 + 0.5) / n as f64;
                let y = y0 + (sy as f64 + 0.5) / n as f64;
                if let Some(v) = scene.shade(x, y) {
                    value[i] += v * norm;
                    cover[i] += norm;
                }
            }
        }
    }
    (value, cover)
}

/// Fraction of each pixel covered by the object.
pub fn coverage(scene: &SceneSpec) -> Vec<f64> {
    supersample(scene).1
}

/// Anti-aliased rendering: a radially shaded object (1.0 at the centre,
/// 0.65 at the rim) on a zero background.
pub fn render(scene: &SceneSpec) -> Result<Frame, SceneError> {
    let (value, cover) = supersample(scene);
    if cover.iter().sum::<f64>() < 1.0 {
        return Err(SceneError::Degenerate);
    }
    Ok(Frame::from_pixels(value))
}
