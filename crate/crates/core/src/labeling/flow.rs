use serde::{Deserialize, Serialize};

use crate::toy_world::{Video, FRAME_SIZE};

/// Dense flow between two frames, px per frame step. `valid` marks pixels
/// whose local structure tensor was well conditioned; elsewhere the flow is
/// zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FlowField {
    /// Mean magnitude over all pixels, and over all pixels after removing
    /// the spatial-mean flow vector.
    pub fn magnitude_and_residual(&self) -> (f64, f64) {
        let n = self.u.len() as f64;
        let mu = self.u.iter().sum::<f64>() / n;
        let mv = self.v.iter().sum::<f64>() / n;
        let (mut mag, mut res) = (0.0, 0.0);
        for (u, v) in self.u.iter().zip(&self.v) {
            mag += u.hypot(*v);
            res += (u - mu).hypot(v - mv);
        }
        (mag / n, res / n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Side of the square least-squares window.
    pub window: usize,
    /// Smallest eigenvalue of the windowed structure tensor below which the
    /// flow is set to zero.
    pub min_eigen: f64,
    /// Binomial pre-smoothing before differentiation.
    pub presmooth: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            window: 5,
            min_eigen: 0.02,
            presmooth: true,
        }
    }
}

fn clamp_at(img: &[f64], w: usize, h: usize, x: isize, y: isize) -> f64 {
    let xi = x.clamp(0, w as isize - 1) as usize;
    let yi = y.clamp(0, h as isize - 1) as usize;
    img[yi * w + xi]
}

fn smooth(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let mut tmp = vec![0.0; img.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..3)
                .map(|k| K[k] * clamp_at(img, w, h, x as isize + k as isize - 1, y as isize))
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..3)
                .map(|k| K[k] * clamp_at(&tmp, w, h, x as isize, y as isize + k as isize - 1))
                .sum();
        }
    }
    out
}

/// Sum over a `win × win` box centred on each pixel, truncated at the
/// border.
fn box_sum(img: &[f64], w: usize, h: usize, win: usize) -> Vec<f64> {
    let r = (win / 2) as isize;
    let mut out = vec![0.0; img.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    s += img[yy as usize * w + xx as usize];
                }
            }
            out[y as usize * w + x as usize] = s;
        }
    }
    out
}

/// Single-level Lucas–Kanade flow from `a` to `b` (`w × h`, row-major).
pub fn flow_between(
    a: &[f64],
    b: &[f64],
    w: usize,
    h: usize,
    cfg: &FlowConfig,
) -> Result<FlowField, String> {
    if a.len() != w * h || b.len() != w * h {
        return Err(format!(
            "frame sizes {} and {} do not match {w}x{h}",
            a.len(),
            b.len()
        ));
    }
    let (a, b) = if cfg.presmooth {
        (smooth(a, w, h), smooth(b, w, h))
    } else {
        (a.to_vec(), b.to_vec())
    };
    let mean: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
    let n = w * h;
    let (mut ixx, mut iyy, mut ixy, mut ixt, mut iyt) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (clamp_at(&mean, w, h, xi + 1, yi) - clamp_at(&mean, w, h, xi - 1, yi));
            let gy = 0.5 * (clamp_at(&mean, w, h, xi, yi + 1) - clamp_at(&mean, w, h, xi, yi - 1));
            let gt = b[i] - a[i];
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
            ixt[i] = gx * gt;
            iyt[i] = gy * gt;
        }
    }
    let [sxx, syy, sxy, sxt, syt] =
        [ixx, iyy, ixy, ixt, iyt].map(|m| box_sum(&m, w, h, cfg.window));
    let mut field = FlowField {
        width: w,
        height: h,
        u: vec![0.0; n],
        v: vec![0.0; n],
        valid: vec![false; n],
    };
    for i in 0..n {
        let tr = sxx[i] + syy[i];
        let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
        let lmin = 0.5 * (tr - ((sxx[i] - syy[i]).powi(2) + 4.0 * sxy[i] * sxy[i]).sqrt());
        if lmin < cfg.min_eigen || det <= 0.0 {
            continue;
        }
        field.u[i] = -(syy[i] * sxt[i] - sxy[i] * syt[i]) / det;
        field.v[i] = -(sxx[i] * syt[i] - sxy[i] * sxt[i]) / det;
        field.valid[i] = true;
    }
    Ok(field)
}

/// One flow field per consecutive frame pair.
pub fn optical_flow(video: &Video, cfg: &FlowConfig) -> Vec<FlowField> {
    video
        .frames()
        .windows(2)
        .map(|p| {
            flow_between(p[0].pixels(), p[1].pixels(), FRAME_SIZE, FRAME_SIZE, cfg)
                .expect("frames share one size")
        })
        .collect()
}
