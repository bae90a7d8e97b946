use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::heatmap::{cell_center, HeatmapGrid};
use crate::models::GoalModel;
use crate::pose::{Point, Pose};
use crate::scalar::Scalar;

/// Pixels holding a thermal mark, and the background level the mark sits on.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkRegion {
    pub mask: Vec<bool>,
    pub ambient: f64,
}

impl MarkRegion {
    /// Pixels strictly between the ambient level and `body_temp`, with a small margin.
    pub fn from_frame<T: Scalar>(frame: &ThermalFrame<T>, ambient: f64, body_temp: f64) -> Self {
        const MARGIN: f64 = 1e-3;
        let mask = frame
            .values
            .iter()
            .map(|v| {
                let v = v.as_f64();
                v > ambient + MARGIN && v < body_temp - MARGIN
            })
            .collect();
        MarkRegion { mask, ambient }
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean pixel center of the region.
    pub fn centroid(&self, width: usize) -> Result<Point<f64>> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            sx += (i % width) as f64 + 0.5;
            sy += (i / width) as f64 + 0.5;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Degenerate("mark region is empty".into()));
        }
        Ok(Point::new(sx / n as f64, sy / n as f64))
    }
}

/// Rescale the mark's excess over ambient by `scale`, clamped to `[0, 1]`.
/// Scale 0 leaves exactly the ambient level, as a mark-free render would.
pub fn scale_marks<T: Scalar>(frame: &ThermalFrame<T>, region: &MarkRegion, scale: f64) -> Result<ThermalFrame<T>> {
    if region.mask.len() != frame.values.len() {
        return Err(Error::shape("mark mask size differs from the frame"));
    }
    let mut out = frame.clone();
    for (v, &m) in out.values.iter_mut().zip(&region.mask) {
        if m {
            *v = T::lit((region.ambient + scale * (v.as_f64() - region.ambient)).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// `Σ_cells P(cell) · |center(cell) − target|` over channel 0.
pub fn expected_distance<T: Scalar>(h: &HeatmapGrid<T>, target: Point<f64>) -> f64 {
    let ch = h.channel(0);
    let mut total = 0.0;
    let mut mass = 0.0;
    for row in 0..h.height {
        for col in 0..h.width {
            let p = ch[row * h.width + col].as_f64();
            let c: Point<f64> = cell_center(h.height, row, col);
            total += p * c.distance(target);
            mass += p;
        }
    }
    total / mass
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scale: f64,
    pub expected_distance: f64,
}

/// Expected goal-to-mark distance as the mark intensity is rescaled.
pub fn intensity_sweep<T: Scalar>(
    goal: &GoalModel<T>,
    frame: &ThermalFrame<T>,
    current: &Pose<T>,
    region: &MarkRegion,
    scales: &[f64],
) -> Result<Vec<SweepPoint>> {
    if scales.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
        return Err(Error::param("scales must be finite and non-negative"));
    }
    let target = region.centroid(frame.width)?;
    scales
        .iter()
        .map(|&scale| {
            let scaled = scale_marks(frame, region, scale)?;
            let g = goal.forward(&scaled, current)?;
            Ok(SweepPoint {
                scale,
                expected_distance: expected_distance(&g, target),
            })
        })
        .collect()
}

/// Writes `scale,expected_distance` rows.
pub fn sweep_to_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(|e| Error::data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::param("spearman needs two equal-length series of at least 2 values"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant series has no rank correlation".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
