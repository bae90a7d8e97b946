//! Categorical and binary cross-entropy, on probabilities and on raw scores.

use log::warn;

use crate::error::{Error, Result};
use crate::heatmap::{point_to_cell, HeatmapGrid};
use crate::pose::Point;
use crate::scalar::Scalar;

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// `−ln p` with `p` floored at [`PROB_FLOOR`].
pub fn clamped_neg_log<T: Scalar>(p: T) -> T {
    let v = p.as_f64();
    if v < PROB_FLOOR {
        warn!("probability {v:e} clamped to {PROB_FLOOR:e}");
    }
    T::lit(-v.max(PROB_FLOOR).ln())
}

/// Softmax over a slice, in place.
pub fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    x.iter_mut().for_each(|v| *v *= inv);
}

/// `−log p[target]` for a distribution over classes.
pub fn ce_loss_class<T: Scalar>(pred: &[T], target: usize) -> Result<T> {
    let p = pred
        .get(target)
        .ok_or_else(|| Error::param(format!("target class {target} out of range {}", pred.len())))?;
    Ok(clamped_neg_log(*p))
}

/// Sum over channels of `−log p_c[cell(target_c)]`, each target snapped to its grid cell.
pub fn ce_loss_grid<T: Scalar>(pred: &HeatmapGrid<T>, targets: &[Point<T>]) -> Result<T> {
    if targets.len() != pred.channels {
        return Err(Error::shape(format!(
            "{} targets for {} channels",
            targets.len(),
            pred.channels
        )));
    }
    let mut total = T::zero();
    for (c, t) in targets.iter().enumerate() {
        if !t.in_image() {
            return Err(Error::param(format!("target {c} lies outside the frame")));
        }
        let (row, col) = point_to_cell(*t, pred.height, pred.width);
        total += clamped_neg_log(pred.channel(c)[row * pred.width + col]);
    }
    Ok(total)
}

/// Cross-entropy of `softmax(scores)` against `target`, and its gradient `softmax − onehot`.
pub fn softmax_ce_with_grad<T: Scalar>(scores: &[T], target: usize) -> (T, Vec<T>) {
    let mut p = scores.to_vec();
    softmax_in_place(&mut p);
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + scores.iter().map(|&s| (s - m).exp()).sum::<T>().ln();
    let loss = lse - scores[target];
    p[target] -= T::one();
    (loss, p)
}

/// Binary cross-entropy of `sigmoid(score)` against `label`, and its gradient in the score.
pub fn bce_with_grad<T: Scalar>(score: T, label: bool) -> (T, T) {
    let y = if label { T::one() } else { T::zero() };
    // log(1 + e^s) computed without overflow.
    let softplus = score.max(T::zero()) + (-score.abs()).exp().ln_1p();
    let loss = softplus - y * score;
    (loss, sigmoid(score) - y)
}

pub fn sigmoid<T: Scalar>(s: T) -> T {
    T::one() / (T::one() + (-s).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::{GRID_CELLS, GRID_H, GRID_W};

    #[test]
    fn uniform_losses() {
        let u = HeatmapGrid::<f64>::uniform(1, GRID_H, GRID_W);
        let l = ce_loss_grid(&u, &[Point::new(100.0, 50.0)]).unwrap();
        assert!((l - (GRID_CELLS as f64).ln()).abs() < 1e-9);
        let k = 200;
        let l = ce_loss_class(&vec![1.0 / k as f64; k], 17).unwrap();
        assert!((l - (k as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn bce_gradient_matches_difference() {
        for &(s, y) in &[(0.3f64, true), (-2.0, false), (5.0, true)] {
            let (_, g) = bce_with_grad(s, y);
            let h = 1e-6;
            let fd = (bce_with_grad(s + h, y).0 - bce_with_grad(s - h, y).0) / (2.0 * h);
            assert!((g - fd).abs() < 1e-6);
        }
    }
}
