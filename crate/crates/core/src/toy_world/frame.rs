use unic_tensor::Tensor;

/// Side length of every frame in pixels.
pub const FRAME_SIZE: usize = 32;

/// A `FRAME_SIZE × FRAME_SIZE` grayscale image, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pixels: Vec<f64>,
}

impl Default for Frame {
    fn default() -> Self {
        Self::blank()
    }
}

impl Frame {
    pub fn blank() -> Self {
        Self {
            pixels: vec![0.0; FRAME_SIZE * FRAME_SIZE],
        }
    }

    /// Clamps into `[0, 1]`; non-finite values become 0.
    pub fn from_pixels(pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), FRAME_SIZE * FRAME_SIZE, "frame size");
        Self {
            pixels: pixels
                .into_iter()
                .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 })
                .collect(),
        }
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut px = Vec::with_capacity(FRAME_SIZE * FRAME_SIZE);
        for y in 0..FRAME_SIZE {
            for x in 0..FRAME_SIZE {
                px.push(f(x, y));
            }
        }
        Self::from_pixels(px)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * FRAME_SIZE + x]
    }

    /// Bilinear sample at continuous pixel-centre coordinates; zero outside.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let at = |xi: f64, yi: f64| {
            if xi < 0.0 || yi < 0.0 || xi >= FRAME_SIZE as f64 || yi >= FRAME_SIZE as f64 {
                0.0
            } else {
                self.get(xi as usize, yi as usize)
            }
        };
        (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1.0, y0))
            + fy * ((1.0 - fx) * at(x0, y0 + 1.0) + fx * at(x0 + 1.0, y0 + 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Intensity-weighted centroid in pixel units, or `None` for a black
    /// frame.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for (i, &v) in self.pixels.iter().enumerate() {
            m += v;
            sx += v * (i % FRAME_SIZE) as f64;
            sy += v * (i / FRAME_SIZE) as f64;
        }
        (m > 1e-12).then(|| (sx / m, sy / m))
    }

    /// `[1, 1, S, S]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, 1, FRAME_SIZE, FRAME_SIZE], self.pixels.clone())
            .expect("frame values are finite")
    }

    /// Reads any tensor holding exactly `S × S` values.
    pub fn from_tensor(t: &Tensor) -> Self {
        Self::from_pixels(t.data().to_vec())
    }
}

/// A sequence of at least two frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    frames: Vec<Frame>,
}

impl Video {
    pub fn new(frames: Vec<Frame>) -> Self {
        assert!(frames.len() >= 2, "a video needs at least two frames");
        Self { frames }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Mean distance between intensity centroids of consecutive frames, in
    /// pixels; 0 when any frame is black.
    pub fn mean_displacement(&self) -> f64 {
        let c: Option<Vec<(f64, f64)>> = self.frames.iter().map(Frame::centroid).collect();
        let Some(c) = c else { return 0.0 };
        c.windows(2)
            .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
            .sum::<f64>()
            / (c.len() - 1) as f64
    }

    /// `[L, 1, S, S]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let parts: Vec<Tensor> = self.frames.iter().map(Frame::to_tensor).collect();
        Tensor::stack_outer(&parts).expect("frames share a shape")
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self::new((0..t.shape()[0]).map(|i| Frame::from_tensor(&t.index_outer(i))).collect())
    }
}
