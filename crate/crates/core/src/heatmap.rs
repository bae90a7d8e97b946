//! Heatmap grids: Gaussian point encodings, argmax decoding and categorical sampling.
//!
//! Grid cell `(row, col)` on a grid of size `h×w` covers the image pixels
//! `[s·col, s·(col+1)) × [s·row, s·(row+1))` with `s = 288 / h`; decoded
//! coordinates are cell centers.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Point, IMAGE_H, IMAGE_W};
use crate::scalar::Scalar;

/// Output grid height.
pub const GRID_H: usize = 72;
/// Output grid width.
pub const GRID_W: usize = 96;
/// Image pixels per output cell along each axis.
pub const GRID_STRIDE: usize = IMAGE_H / GRID_H;
/// Cells in one output channel.
pub const GRID_CELLS: usize = GRID_H * GRID_W;
/// Default Gaussian width for point encodings, in image pixels.
pub const DEFAULT_SIGMA: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct HeatmapGrid<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
    pub normalized: bool,
}

/// Result of decoding one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decoded<T> {
    pub point: Point<T>,
    pub cell: (usize, usize),
    /// Set when the channel is constant, so no cell stands out.
    pub degenerate: bool,
}

fn grid_scale(height: usize, width: usize) -> Result<usize> {
    if height == 0 || width == 0 || IMAGE_H % height != 0 || IMAGE_W % width != 0 {
        return Err(Error::shape(format!("grid {height}x{width} does not tile the image")));
    }
    let s = IMAGE_H / height;
    if IMAGE_W / width != s {
        return Err(Error::shape(format!("grid {height}x{width} changes the aspect ratio")));
    }
    Ok(s)
}

/// Center of grid cell `(row, col)` in image pixels.
pub fn cell_center<T: Scalar>(height: usize, row: usize, col: usize) -> Point<T> {
    let s = (IMAGE_H / height) as f64;
    Point::new(T::lit(s * (col as f64 + 0.5)), T::lit(s * (row as f64 + 0.5)))
}

/// Grid cell containing an image point, clamped to the grid.
pub fn point_to_cell<T: Scalar>(p: Point<T>, height: usize, width: usize) -> (usize, usize) {
    let s = (IMAGE_H / height) as f64;
    let col = (p.x.as_f64() / s).floor().clamp(0.0, (width - 1) as f64) as usize;
    let row = (p.y.as_f64() / s).floor().clamp(0.0, (height - 1) as f64) as usize;
    (row, col)
}

/// Flat index of an image point on the 72×96 output grid.
pub fn output_cell_index<T: Scalar>(p: Point<T>) -> usize {
    let (r, c) = point_to_cell(p, GRID_H, GRID_W);
    r * GRID_W + c
}

/// Unnormalized 1D Gaussian profile sampled at the cell centers of an axis,
/// optionally box-averaged over `pool` consecutive cells.
pub(crate) fn gaussian_profile<T: Scalar>(
    center: f64,
    sigma: f64,
    cells: usize,
    cell_size: f64,
    pool: usize,
) -> Vec<T> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let fine = cell_size / pool as f64;
    (0..cells)
        .map(|c| {
            let mut acc = 0.0;
            for k in 0..pool {
                let x = fine * ((c * pool + k) as f64 + 0.5);
                let d = x - center;
                acc += (-d * d * inv).exp();
            }
            T::lit(acc / pool as f64)
        })
        .collect()
}

impl<T: Scalar> HeatmapGrid<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        HeatmapGrid {
            channels,
            height,
            width,
            values: vec![T::zero(); channels * height * width],
            normalized: false,
        }
    }

    pub fn uniform(channels: usize, height: usize, width: usize) -> Self {
        let v = T::one() / T::lit((height * width) as f64);
        HeatmapGrid {
            channels,
            height,
            width,
            values: vec![v; channels * height * width],
            normalized: true,
        }
    }

    pub fn from_values(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<T>,
        normalized: bool,
    ) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} values for a {channels}x{height}x{width} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::param("heatmap values must be finite and non-negative"));
        }
        Ok(HeatmapGrid {
            channels,
            height,
            width,
            values,
            normalized,
        })
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn channel_sum(&self, c: usize) -> T {
        self.channel(c).iter().copied().sum()
    }

    /// Rescale every channel to sum to one; fails on an all-zero channel.
    pub fn normalize(&mut self) -> Result<()> {
        for c in 0..self.channels {
            let s: f64 = self.channel(c).iter().map(|v| v.as_f64()).sum();
            if s <= 0.0 {
                return Err(Error::Degenerate(format!("channel {c} has zero mass")));
            }
            let inv = T::lit(1.0 / s);
            for v in self.channel_mut(c) {
                *v *= inv;
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// Bilinear resize (cell-center aligned, edge clamped), renormalized when
    /// the source was normalized.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        let mut out = HeatmapGrid::zeros(self.channels, height, width);
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        for c in 0..self.channels {
            let src = self.channel(c);
            let dst = out.channel_mut(c);
            for r in 0..height {
                let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
                let y0 = fy.floor() as usize;
                let y1 = (y0 + 1).min(self.height - 1);
                let wy = fy - y0 as f64;
                for col in 0..width {
                    let fx = ((col as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                    let x0 = fx.floor() as usize;
                    let x1 = (x0 + 1).min(self.width - 1);
                    let wx = fx - x0 as f64;
                    let at = |y: usize, x: usize| src[y * self.width + x].as_f64();
                    let v = (1.0 - wy) * ((1.0 - wx) * at(y0, x0) + wx * at(y0, x1))
                        + wy * ((1.0 - wx) * at(y1, x0) + wx * at(y1, x1));
                    dst[r * width + col] = T::lit(v);
                }
            }
        }
        if self.normalized {
            out.normalize()?;
        }
        Ok(out)
    }

    /// Write as a magic tag, a JSON header and little-endian `f32` values.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({
            "channels": self.channels,
            "h": self.height,
            "w": self.width,
            "normalized": self.normalized,
        })
        .to_string();
        let mut buf = Vec::with_capacity(8 + header.len() + 4 * self.values.len());
        buf.extend_from_slice(b"HMAP");
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(header.as_bytes());
        for v in &self.values {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(Error::io(path))?;
        f.write_all(&buf).map_err(Error::io(path))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(Error::io(path))?;
        if buf.len() < 8 || &buf[..4] != b"HMAP" {
            return Err(Error::data(format!("{} is not a heatmap file", path.display())));
        }
        let hlen = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let header: serde_json::Value =
            serde_json::from_slice(buf.get(8..8 + hlen).ok_or_else(|| Error::data("truncated header"))?)
                .map_err(Error::json(path))?;
        let get = |k: &str| {
            header[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::data(format!("heatmap header lacks {k}")))
        };
        let (channels, height, width) = (get("channels")?, get("h")?, get("w")?);
        let normalized = header["normalized"].as_bool().unwrap_or(false);
        let body = &buf[8 + hlen..];
        if body.len() != 4 * channels * height * width {
            return Err(Error::data("heatmap payload length does not match header"));
        }
        let values = body
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        HeatmapGrid::from_values(channels, height, width, values, normalized)
    }
}

/// One normalized Gaussian bump per point on a grid of size `out_size`.
///
/// `sigma` is in image pixels. Points outside the frame are clamped onto it.
pub fn render_heatmap<T: Scalar>(
    points: &[Point<T>],
    sigma: T,
    out_size: (usize, usize),
) -> Result<HeatmapGrid<T>> {
    let mut grid = render_points(points, sigma, out_size, 1)?;
    grid.normalize()?;
    Ok(grid)
}

/// Peak-one Gaussian encodings, box-averaged from image resolution down to
/// `out_size` when `pool > 1`.
///
/// With `pool = s` this equals rendering at `s×` the resolution and
/// averaging each `s×s` block, because the Gaussian is separable.
pub fn render_points<T: Scalar>(
    points: &[Point<T>],
    sigma: T,
    out_size: (usize, usize),
    pool: usize,
) -> Result<HeatmapGrid<T>> {
    let sigma = sigma.as_f64();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let (h, w) = out_size;
    let s = grid_scale(h, w)? as f64;
    let mut grid = HeatmapGrid::zeros(points.len(), h, w);
    for (c, p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::param(format!("point {c} is not finite")));
        }
        let p = p.clamp_to_image();
        let gx: Vec<T> = gaussian_profile(p.x.as_f64(), sigma, w, s, pool);
        let gy: Vec<T> = gaussian_profile(p.y.as_f64(), sigma, h, s, pool);
        let dst = grid.channel_mut(c);
        for (r, &vy) in gy.iter().enumerate() {
            for (col, &vx) in gx.iter().enumerate() {
                dst[r * w + col] = vy * vx;
            }
        }
    }
    Ok(grid)
}

/// Per-channel argmax, returned as cell-center image coordinates.
///
/// Ties go to the smallest row-major index. A constant channel decodes to the
/// image center with `degenerate` set.
pub fn decode_argmax<T: Scalar>(h: &HeatmapGrid<T>) -> Result<Vec<Decoded<T>>> {
    if h.channels == 0 {
        return Err(Error::param("heatmap has no channels"));
    }
    grid_scale(h.height, h.width)?;
    (0..h.channels)
        .map(|c| {
            let ch = h.channel(c);
            let mut best = 0usize;
            let mut lo = ch[0];
            for (i, &v) in ch.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::param("heatmap contains non-finite values"));
                }
                if v > ch[best] {
                    best = i;
                }
                if v < lo {
                    lo = v;
                }
            }
            if ch[best] == lo {
                let (row, col) = (h.height / 2, h.width / 2);
                return Ok(Decoded {
                    point: Point::new(T::lit(IMAGE_W as f64 / 2.0), T::lit(IMAGE_H as f64 / 2.0)),
                    cell: (row, col),
                    degenerate: true,
                });
            }
            let (row, col) = (best / h.width, best % h.width);
            Ok(Decoded {
                point: cell_center(h.height, row, col),
                cell: (row, col),
                degenerate: false,
            })
        })
        .collect()
}

/// Draw a flat cell index from a categorical distribution.
///
/// Accumulates in `f64` and inverts the CDF with one uniform draw. Unnormalized
/// input is scaled by its total; an all-zero input is an error.
pub fn sample_index<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> Result<usize> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut total = 0.0f64;
    for &p in probs {
        let p = p.as_f64();
        if !p.is_finite() || p < 0.0 {
            return Err(Error::param("probabilities must be finite and non-negative"));
        }
        total += p;
        cdf.push(total);
    }
    if total <= 0.0 {
        return Err(Error::Degenerate("distribution has zero mass".into()));
    }
    let u = rng.gen::<f64>() * total;
    let idx = cdf.partition_point(|&c| c <= u);
    // Never land on a zero-probability tail cell.
    let idx = idx.min(probs.len() - 1);
    Ok((0..=idx).rev().find(|&i| probs[i] > T::zero()).unwrap_or(idx))
}

/// Sample one cell of `channel` and return its center.
pub fn sample_cell<T: Scalar, R: Rng + ?Sized>(
    h: &HeatmapGrid<T>,
    channel: usize,
    rng: &mut R,
) -> Result<(Point<T>, usize)> {
    let ch = h.channel(channel);
    if !h.normalized {
        log::warn!("sampling from an unnormalized heatmap; normalizing on the fly");
    } else {
        let s: f64 = ch.iter().map(|v| v.as_f64()).sum();
        if (s - 1.0).abs() > 1e-4 {
            log::warn!("heatmap channel sums to {s}, normalizing on the fly");
        }
    }
    let idx = sample_index(ch, rng)?;
    Ok((cell_center(h.height, idx / h.width, idx % h.width), idx))
}

/// Seeded single draw from channel 0.
pub fn sample_from_heatmap<T: Scalar>(h: &HeatmapGrid<T>, seed: u64) -> Result<Point<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_cell(h, 0, &mut rng).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_center_point_roundtrips_on_both_grids() {
        for &(h, w) in &[(72usize, 96usize), (288, 384)] {
            let p: Point<f64> = cell_center(h, 10, 20);
            let grid = render_heatmap(&[p], 2.0, (h, w)).unwrap();
            let d = decode_argmax(&grid).unwrap();
            assert_eq!(d[0].point, p);
            assert_eq!(d[0].cell, (10, 20));
            assert!(!d[0].degenerate);
        }
    }

    #[test]
    fn identical_points_give_identical_channels() {
        let p = Point::new(33.3f64, 71.9);
        let g = render_heatmap(&[p, p], 8.0, (72, 96)).unwrap();
        assert_eq!(g.channel(0), g.channel(1));
    }

    #[test]
    fn render_normalizes_and_centers_mass() {
        let p = Point::new(100.3f64, 57.8);
        let g = render_heatmap(&[p], 2.0, (288, 384)).unwrap();
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for r in 0..288 {
            for c in 0..384 {
                let v = g.values[r * 384 + c];
                s += v;
                sx += v * (c as f64 + 0.5);
                sy += v * (r as f64 + 0.5);
            }
        }
        assert!((s - 1.0).abs() < 1e-5);
        assert!((sx / s - 100.3).abs() < 0.5);
        assert!((sy / s - 57.8).abs() < 0.5);
    }

    #[test]
    fn outside_points_render_clamped() {
        let g = render_heatmap(&[Point::new(-50.0f64, 500.0)], 8.0, (72, 96)).unwrap();
        let d = decode_argmax(&g).unwrap();
        assert_eq!(d[0].cell, (71, 0));
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        assert!(matches!(
            render_heatmap(&[Point::new(1.0f64, 1.0)], 0.0, (72, 96)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn one_hot_decodes_to_cell_center() {
        let mut g = HeatmapGrid::<f32>::zeros(1, 72, 96);
        g.values[5 * 96 + 7] = 1.0;
        let d = decode_argmax(&g).unwrap();
        assert_eq!(d[0].point, Point::new(30.0, 22.0));
    }

    #[test]
    fn uniform_is_degenerate_center() {
        let g = HeatmapGrid::<f64>::uniform(1, 72, 96);
        let d = decode_argmax(&g).unwrap();
        assert!(d[0].degenerate);
        assert_eq!(d[0].point, Point::new(192.0, 144.0));
        let z = HeatmapGrid::<f64>::zeros(1, 72, 96);
        assert!(decode_argmax(&z).unwrap()[0].degenerate);
    }

    #[test]
    fn ties_break_to_first_row_major() {
        let mut g = HeatmapGrid::<f64>::zeros(1, 72, 96);
        g.values[3 * 96 + 50] = 0.5;
        g.values[3 * 96 + 10] = 0.5;
        g.values[60 * 96 + 2] = 0.5;
        assert_eq!(decode_argmax(&g).unwrap()[0].cell, (3, 10));
    }

    #[test]
    fn one_hot_sampling_is_constant_and_seeded() {
        let mut g = HeatmapGrid::<f64>::zeros(1, 72, 96);
        g.values[1234] = 1.0;
        g.normalized = true;
        for seed in 0..50 {
            let p = sample_from_heatmap(&g, seed).unwrap();
            assert_eq!(output_cell_index(p), 1234);
        }
        let mut u = HeatmapGrid::<f64>::uniform(1, 72, 96);
        u.values[7] *= 3.0;
        assert_eq!(sample_from_heatmap(&u, 9).unwrap(), sample_from_heatmap(&u, 9).unwrap());
        assert!(sample_from_heatmap(&HeatmapGrid::<f64>::zeros(1, 72, 96), 1).is_err());
    }

    #[test]
    fn pooled_render_equals_block_average_of_full_render() {
        let pts = [Point::new(101.7f64, 40.2), Point::new(3.0, 280.0)];
        let full = render_points(&pts, 8.0, (288, 384), 1).unwrap();
        let pooled = render_points(&pts, 8.0, (72, 96), 4).unwrap();
        for c in 0..2 {
            for r in 0..72 {
                for col in 0..96 {
                    let mut acc = 0.0;
                    for dy in 0..4 {
                        for dx in 0..4 {
                            acc += full.channel(c)[(4 * r + dy) * 384 + 4 * col + dx];
                        }
                    }
                    let got = pooled.channel(c)[r * 96 + col];
                    assert!((acc / 16.0 - got).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bilinear_upsample_stays_normalized() {
        let g = render_heatmap(&[Point::new(200.0f64, 100.0)], 8.0, (72, 96)).unwrap();
        let up = g.resize_bilinear(288, 384).unwrap();
        assert!((up.channel_sum(0) - 1.0).abs() < 1e-9);
        let d = decode_argmax(&up).unwrap()[0].point;
        assert!(d.distance(Point::new(200.0, 100.0)) <= 4.0);
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.bin");
        let g = render_heatmap(&[Point::new(10.0f32, 20.0)], 8.0, (72, 96)).unwrap();
        g.write_binary(&path).unwrap();
        let back = HeatmapGrid::<f32>::read_binary(&path).unwrap();
        assert_eq!(back, g);
    }
}
