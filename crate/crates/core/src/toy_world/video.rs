use serde::{Deserialize, Serialize};

use super::frame::{Frame, Video, FRAME_SIZE};
use super::perceive::{perceive, Perception};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Prefers horizontal motion.
    A,
    /// Prefers vertical motion, with a different speed constant.
    B,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            other => Err(format!("unknown variant {other:?} (expected A or B)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::B => "B",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionClass {
    Empty,
    Static,
    Distorted,
    Moving,
}

/// Constants of the toy image-to-video model. Both variants share the
/// failure conditions (`static_margin_px`, `complete_threshold`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    /// Objects closer than this to the border (or touching it) stay put.
    pub static_margin_px: f64,
    /// Objects whose completeness estimate falls below this move with shear.
    pub complete_threshold: f64,
    /// Speed per pixel of margin beyond `static_margin_px`, px/frame.
    pub speed_a: f64,
    pub speed_b: f64,
    /// Relative standard deviation of the speed.
    pub speed_noise: f64,
    /// Standard deviation of the heading, radians.
    pub heading_noise: f64,
    /// Amplitude of the jitter of static objects, px.
    pub tremor_px: f64,
    /// Horizontal shear added per frame for distorted motion.
    pub shear_per_frame: f64,
    /// Dilation (px) of the object mask when lifting it off the background.
    pub layer_dilation: usize,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            static_margin_px: 3.0,
            complete_threshold: 0.8,
            speed_a: 0.20,
            speed_b: 0.16,
            speed_noise: 0.1,
            heading_noise: 0.15,
            tremor_px: 0.03,
            shear_per_frame: 0.08,
            layer_dilation: 2,
        }
    }
}

pub fn classify_motion(p: Option<&Perception>, d: &Dynamics) -> MotionClass {
    match p {
        None => MotionClass::Empty,
        Some(p) if p.border_contact || (p.margin_px as f64) < d.static_margin_px => {
            MotionClass::Static
        }
        Some(p) if p.completeness < d.complete_threshold => MotionClass::Distorted,
        Some(_) => MotionClass::Moving,
    }
}

fn dilate(mask: &[bool], r: usize) -> Vec<bool> {
    let s = FRAME_SIZE as isize;
    let r = r as isize;
    let mut out = vec![false; mask.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let (x, y) = ((i as isize) % s, (i as isize) / s);
        'scan: for dy in -r..=r {
            for dx in -r..=r {
                let (xx, yy) = (x + dx, y + dy);
                if xx >= 0 && yy >= 0 && xx < s && yy < s && mask[(yy * s + xx) as usize] {
                    *o = true;
                    break 'scan;
                }
            }
        }
    }
    out
}

impl Dynamics {
    /// Animates `frame` for `steps` frames (the first is the input pose).
    pub fn animate(&self, frame: &Frame, steps: usize, variant: Variant, rng: &mut Rng) -> Video {
        assert!(steps >= 2, "a video needs at least two frames");
        let p = perceive(frame);
        let class = classify_motion(p.as_ref(), self);
        let Some(p) = p else {
            return Video::new(vec![frame.clone(); steps]);
        };
        let s = FRAME_SIZE as f64;
        // Index coordinates: pixel i has its centre at i.
        let (cx, cy) = (p.cx * s - 0.5, p.cy * s - 0.5);
        let centre = (s - 1.0) / 2.0;

        let offsets: Vec<(f64, f64)> = match class {
            MotionClass::Empty => unreachable!(),
            MotionClass::Static => {
                let sx = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                let sy = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                let a = 2.0 * self.tremor_px;
                (0..steps)
                    .map(|k| if k % 2 == 1 { (a * sx, a * sy) } else { (0.0, 0.0) })
                    .collect()
            }
            MotionClass::Moving | MotionClass::Distorted => {
                let k_speed = match variant {
                    Variant::A => self.speed_a,
                    Variant::B => self.speed_b,
                };
                let margin = p.margin_px as f64 - self.static_margin_px;
                let speed = (k_speed * margin * (1.0 + self.speed_noise * rng.normal())).max(0.0);
                let toward = |pos: f64, rng: &mut Rng| {
                    if (centre - pos).abs() < 0.5 {
                        if rng.bernoulli(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        (centre - pos).signum()
                    }
                };
                let base = match variant {
                    Variant::A => {
                        if toward(cx, rng) > 0.0 {
                            0.0
                        } else {
                            std::f64::consts::PI
                        }
                    }
                    Variant::B => toward(cy, rng) * std::f64::consts::FRAC_PI_2,
                };
                let heading = base + self.heading_noise * rng.normal();
                let (ux, uy) = (heading.cos(), heading.sin());
                (0..steps)
                    .map(|k| (k as f64 * speed * ux, k as f64 * speed * uy))
                    .collect()
            }
        };
        let shear = class == MotionClass::Distorted;

        let support = dilate(&p.mask, self.layer_dilation);
        let px = frame.pixels();
        let layer = Frame::from_pixels(
            px.iter()
                .zip(&support)
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect(),
        );
        let background: Vec<f64> = px
            .iter()
            .zip(&support)
            .map(|(&v, &m)| if m { 0.0 } else { v })
            .collect();

        let frames = offsets
            .iter()
            .enumerate()
            .map(|(k, &(dx, dy))| {
                let sh = if shear { self.shear_per_frame * k as f64 } else { 0.0 };
                Frame::from_fn(|x, y| {
                    let (xf, yf) = (x as f64, y as f64);
                    let sy = yf - dy;
                    let sx = xf - dx - sh * (sy - cy);
                    background[y * FRAME_SIZE + x] + layer.sample(sx, sy)
                })
            })
            .collect();
        Video::new(frames)
    }
}

/// Toy image-to-video model with default constants.
pub fn image_to_video(frame: &Frame, steps: usize, variant: Variant, rng: &mut Rng) -> Video {
    Dynamics::default().animate(frame, steps, variant, rng)
}
