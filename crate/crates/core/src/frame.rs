use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{IMAGE_H, IMAGE_W};
use crate::scalar::Scalar;

/// A normalized radiometric image at model resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ThermalFrame<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
    /// Seconds since clip start.
    pub timestamp: f64,
}

impl<T: Scalar> ThermalFrame<T> {
    pub fn new(values: Vec<T>, timestamp: f64) -> Result<Self> {
        if values.len() != IMAGE_H * IMAGE_W {
            return Err(Error::shape(format!(
                "thermal frame needs {} values, got {}",
                IMAGE_H * IMAGE_W,
                values.len()
            )));
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || *v < T::zero() || *v > T::one())
        {
            return Err(Error::param("thermal intensities must lie in [0, 1]"));
        }
        Ok(ThermalFrame {
            height: IMAGE_H,
            width: IMAGE_W,
            values,
            timestamp,
        })
    }

    pub fn filled(v: T, timestamp: f64) -> Self {
        ThermalFrame {
            height: IMAGE_H,
            width: IMAGE_W,
            values: vec![v; IMAGE_H * IMAGE_W],
            timestamp,
        }
    }

    pub fn at(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    /// Average over `factor×factor` blocks.
    pub fn avg_pool(&self, factor: usize) -> Vec<T> {
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = vec![T::zero(); h * w];
        let inv = T::lit(1.0 / (factor * factor) as f64);
        for r in 0..self.height {
            let orow = (r / factor) * w;
            let src = &self.values[r * self.width..(r + 1) * self.width];
            for (c, chunk) in src.chunks_exact(factor).enumerate() {
                let s: T = chunk.iter().copied().sum();
                out[orow + c] += s;
            }
        }
        for v in out.iter_mut() {
            *v *= inv;
        }
        out
    }

    /// Horizontal mirror.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            out.values[r * self.width..(r + 1) * self.width].reverse();
        }
        out
    }

    /// Bilinear crop of the window with top-left `(x0, y0)` and scale `s`
    /// (window size `s·W × s·H`), resampled back to full resolution.
    pub fn crop_resized(&self, x0: f64, y0: f64, s: f64) -> Self {
        let mut out = self.clone();
        let (h, w) = (self.height, self.width);
        for r in 0..h {
            let sy = (y0 + s * (r as f64 + 0.5) - 0.5).clamp(0.0, (h - 1) as f64);
            let ya = sy.floor() as usize;
            let yb = (ya + 1).min(h - 1);
            let fy = T::lit(sy - ya as f64);
            for c in 0..w {
                let sx = (x0 + s * (c as f64 + 0.5) - 0.5).clamp(0.0, (w - 1) as f64);
                let xa = sx.floor() as usize;
                let xb = (xa + 1).min(w - 1);
                let fx = T::lit(sx - xa as f64);
                let top = self.at(ya, xa) + fx * (self.at(ya, xb) - self.at(ya, xa));
                let bot = self.at(yb, xa) + fx * (self.at(yb, xb) - self.at(yb, xa));
                out.values[r * w + c] = top + fy * (bot - top);
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> ThermalFrame<U> {
        ThermalFrame {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            timestamp: self.timestamp,
        }
    }
}
