use serde::{Deserialize, Serialize};

use super::frame::{Frame, FRAME_SIZE};
use super::scene::{ObjectKind, SceneSpec, MOBILITY_SCALE_PX};

const THRESHOLD: f64 = 0.5;
/// Second-moment axis ratio above which an object reads as a bar.
const BAR_ELONGATION: f64 = 1.5;
/// Average of the renderer's radial shading over a full object.
const MEAN_SHADE: f64 = 0.825;

/// What the video model sees in a frame: the largest bright component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perception {
    pub kind: ObjectKind,
    /// Mask centroid, normalized to `[0, 1]`.
    pub cx: f64,
    pub cy: f64,
    /// Equivalent horizontal semi-axis from the object's intensity mass,
    /// normalized.
    pub radius: f64,
    /// Left–right mirror overlap of the mask; 1 for a symmetric object.
    pub completeness: f64,
    /// Empty pixel rows/columns between the mask and the nearest border.
    pub margin_px: usize,
    pub border_contact: bool,
    pub area_px: usize,
    /// Square root of the ratio of principal second moments (≥ 1).
    pub elongation: f64,
    /// Inclusive pixel bounds `(x0, x1, y0, y1)`.
    pub bbox: (usize, usize, usize, usize),
    pub mask: Vec<bool>,
}

impl Perception {
    /// The estimate as a scene description.
    pub fn to_scene(&self) -> SceneSpec {
        SceneSpec {
            kind: self.kind,
            cx: self.cx,
            cy: self.cy,
            radius: self.radius,
            completeness: self.completeness,
            mobility: (self.margin_px as f64 / MOBILITY_SCALE_PX).clamp(0.0, 1.0),
        }
    }

    pub fn area_fraction(&self) -> f64 {
        self.area_px as f64 / (FRAME_SIZE * FRAME_SIZE) as f64
    }
}

fn largest_component(on: &[bool]) -> Vec<usize> {
    let s = FRAME_SIZE;
    let mut seen = vec![false; on.len()];
    let mut best: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = (i % s, i / s);
            let mut visit = |j: usize| {
                if on[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < s {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - s);
            }
            if y + 1 < s {
                visit(i + s);
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Mask centroid `(x, y)` in pixel-centre units and the principal-axis
/// elongation.
pub(crate) fn mask_moments(mask: &[bool]) -> Option<((f64, f64), f64)> {
    let s = FRAME_SIZE;
    let pts: Vec<(f64, f64)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| ((i % s) as f64 + 0.5, (i / s) as f64 + 0.5))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxx += (x - mx).powi(2) / n;
        syy += (y - my).powi(2) / n;
        sxy += (x - mx) * (y - my) / n;
    }
    // Each pixel is a unit square, not a point.
    sxx += 1.0 / 12.0;
    syy += 1.0 / 12.0;
    let tr = sxx + syy;
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    Some(((mx, my), (l1 / l2.max(1e-12)).sqrt()))
}

/// Intersection-over-union of the mask with its mirror image about the
/// vertical centre line of its bounding box.
fn mirror_iou(mask: &[bool], x0: usize, x1: usize) -> f64 {
    let s = FRAME_SIZE;
    let (mut inter, mut union) = (0usize, 0usize);
    for y in 0..s {
        for x in x0..=x1 {
            let a = mask[y * s + x];
            let b = mask[y * s + (x0 + x1 - x)];
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Thresholds at 0.5 and describes the largest 4-connected component;
/// `None` when nothing is above threshold.
pub fn perceive(frame: &Frame) -> Option<Perception> {
    let s = FRAME_SIZE;
    let on: Vec<bool> = frame.pixels().iter().map(|&v| v > THRESHOLD).collect();
    let comp = largest_component(&on);
    if comp.is_empty() {
        return None;
    }
    let mut mask = vec![false; s * s];
    let (mut x0, mut x1, mut y0, mut y1) = (s, 0, s, 0);
    for &i in &comp {
        mask[i] = true;
        let (x, y) = (i % s, i / s);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let ((mx, my), elongation) = mask_moments(&mask).expect("nonempty mask");
    let kind = if elongation > BAR_ELONGATION {
        ObjectKind::Bar
    } else {
        ObjectKind::Disc
    };
    let area = comp.len();
    // Intensity mass over the mask and its one-pixel rim counts the
    // anti-aliased edge that thresholding drops.
    let px = frame.pixels();
    let mut mass = 0.0;
    for y in y0.saturating_sub(1)..(y1 + 2).min(s) {
        for x in x0.saturating_sub(1)..(x1 + 2).min(s) {
            let near = (y.saturating_sub(1)..(y + 2).min(s))
                .any(|yy| (x.saturating_sub(1)..(x + 2).min(s)).any(|xx| mask[yy * s + xx]));
            if near {
                mass += px[y * s + x];
            }
        }
    }
    let semi = (mass / MEAN_SHADE / (std::f64::consts::PI * kind.aspect())).sqrt();
    let margin = x0.min(s - 1 - x1).min(y0).min(s - 1 - y1);
    Some(Perception {
        kind,
        cx: mx / s as f64,
        cy: my / s as f64,
        radius: semi / s as f64,
        completeness: mirror_iou(&mask, x0, x1),
        margin_px: margin,
        border_contact: margin == 0,
        area_px: area,
        elongation,
        bbox: (x0, x1, y0, y1),
        mask,
    })
}
