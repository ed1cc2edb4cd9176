//! Minimal in-memory rasters. Pixel `(u, v)` covers `[u, u+1) x [v, v+1)` and
//! is sampled at its center `(u + 0.5, v + 0.5)`.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::geometry::Point2;

pub const MAX_CHANNELS: usize = 4;

/// Interleaved color raster with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    Bilinear,
    Nearest,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!((1..=MAX_CHANNELS).contains(&channels));
        Self {
            width,
            height,
            channels,
            data: alloc::vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
    }

    /// Samples at a continuous position; `None` outside the image extent.
    /// Half-pixel borders clamp to the edge pixels.
    pub fn sample(&self, p: Point2, mode: Sampling) -> Option<[f64; MAX_CHANNELS]> {
        if !p.is_finite() || !self.contains(p) || self.width == 0 || self.height == 0 {
            return None;
        }
        let mut out = [0.0; MAX_CHANNELS];
        match mode {
            Sampling::Nearest => {
                let x = (p.x.floor() as usize).min(self.width - 1);
                let y = (p.y.floor() as usize).min(self.height - 1);
                for (c, o) in out.iter_mut().take(self.channels).enumerate() {
                    *o = self.get(x, y, c) as f64;
                }
            }
            Sampling::Bilinear => {
                let fx = (p.x - 0.5).clamp(0.0, (self.width - 1) as f64);
                let fy = (p.y - 0.5).clamp(0.0, (self.height - 1) as f64);
                let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
                let (sx, sy) = (fx - x0 as f64, fy - y0 as f64);
                for (c, o) in out.iter_mut().take(self.channels).enumerate() {
                    let g = |x, y| self.get(x, y, c) as f64;
                    let top = g(x0, y0) * (1.0 - sx) + g(x1, y0) * sx;
                    let bot = g(x0, y1) * (1.0 - sx) + g(x1, y1) * sx;
                    *o = top * (1.0 - sy) + bot * sy;
                }
            }
        }
        Some(out)
    }

    /// `0.299 R + 0.587 G + 0.114 B` in double precision; single-channel
    /// images pass through and alpha is ignored.
    pub fn to_gray(&self) -> GrayImage {
        let mut data = Vec::with_capacity(self.width * self.height);
        for i in 0..self.width * self.height {
            let px = &self.data[i * self.channels..(i + 1) * self.channels];
            data.push(if self.channels >= 3 {
                0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
            } else {
                px[0] as f64
            });
        }
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: alloc::vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: alloc::vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: alloc::vec![true; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    /// 3x3 erosion; pixels on the raster border are always cleared.
    pub fn eroded(&self) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        if self.width < 3 || self.height < 3 {
            return out;
        }
        for y in 1..self.height - 1 {
            for x in 1..self.width - 1 {
                let all = (y - 1..=y + 1).all(|yy| (x - 1..=x + 1).all(|xx| self.get(xx, yy)));
                out.set(x, y, all);
            }
        }
        out
    }
}
