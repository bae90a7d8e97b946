//! Network inputs: pooled thermal frame and Gaussian joint maps, plus train-time augmentation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SamplePair;
use crate::error::Result;
use crate::frame::ThermalFrame;
use crate::heatmap::{render_points, DEFAULT_SIGMA, GRID_H, GRID_STRIDE, GRID_W};
use crate::nn::Tensor;
use crate::pose::{Point, Pose, IMAGE_H, IMAGE_W};
use crate::scalar::Scalar;
use crate::skeleton::limb_joints;
use crate::vocab::PoseTypeVocabulary;

/// The thermal frame averaged down to the output grid.
pub fn encode_frame<T: Scalar>(frame: &ThermalFrame<T>) -> Tensor<T> {
    Tensor::from_vec(1, GRID_H, GRID_W, frame.avg_pool(GRID_STRIDE))
}

fn encode_points<T: Scalar>(points: &[Point<T>], valid: &[bool]) -> Result<Tensor<T>> {
    let grid = render_points(points, T::lit(DEFAULT_SIGMA), (GRID_H, GRID_W), GRID_STRIDE)?;
    let mut t = Tensor::from_vec(points.len(), GRID_H, GRID_W, grid.values);
    for (c, &v) in valid.iter().enumerate() {
        if !v {
            t.channel_mut(c).iter_mut().for_each(|x| *x = T::zero());
        }
    }
    Ok(t)
}

/// One channel per joint; invalid joints give empty channels.
pub fn encode_pose<T: Scalar>(pose: &Pose<T>) -> Result<Tensor<T>> {
    encode_points(&pose.joints, &pose.valid)
}

/// The 14 non-torso joints, in limb order.
pub fn encode_limbs<T: Scalar>(pose: &Pose<T>) -> Result<Tensor<T>> {
    let pts: Vec<Point<T>> = limb_joints().map(|j| pose.joints[j]).collect();
    let valid: Vec<bool> = limb_joints().map(|j| pose.valid[j]).collect();
    encode_points(&pts, &valid)
}

pub fn encode_point<T: Scalar>(p: Point<T>) -> Result<Tensor<T>> {
    encode_points(&[p], &[true])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flip: bool,
    pub crop: bool,
    /// Smallest crop side as a fraction of the frame.
    pub crop_min_scale: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip: true,
            crop: true,
            crop_min_scale: 0.85,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            flip: false,
            crop: false,
            crop_min_scale: 1.0,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Augment {
        let flip = self.flip && rng.gen_bool(0.5);
        let crop = if self.crop && self.crop_min_scale < 1.0 {
            let s = rng.gen_range(self.crop_min_scale..=1.0);
            let x0 = rng.gen_range(0.0..=IMAGE_W as f64 * (1.0 - s));
            let y0 = rng.gen_range(0.0..=IMAGE_H as f64 * (1.0 - s));
            Some((x0, y0, s))
        } else {
            None
        };
        Augment { flip, crop }
    }
}

/// One concrete augmentation: optional mirror, then an optional crop `(x0, y0, scale)`
/// that is resampled back to full size.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Augment {
    pub flip: bool,
    pub crop: Option<(f64, f64, f64)>,
}

impl Augment {
    pub fn identity() -> Self {
        Augment::default()
    }

    pub fn frame<T: Scalar>(&self, f: &ThermalFrame<T>) -> ThermalFrame<T> {
        let mut out = if self.flip { f.flipped() } else { f.clone() };
        if let Some((x0, y0, s)) = self.crop {
            out = out.crop_resized(x0, y0, s);
        }
        out
    }

    pub fn point<T: Scalar>(&self, p: Point<T>) -> Point<T> {
        let mut p = p;
        if self.flip {
            p = Point::new(T::lit(IMAGE_W as f64) - p.x, p.y).clamp_to_image();
        }
        if let Some((x0, y0, s)) = self.crop {
            let inv = T::lit(1.0 / s);
            p = Point::new((p.x - T::lit(x0)) * inv, (p.y - T::lit(y0)) * inv);
        }
        p
    }

    /// Mirrored poses also swap left/right labels.
    pub fn pose<T: Scalar>(&self, pose: &Pose<T>) -> Pose<T> {
        let mut out = if self.flip {
            pose.flipped(T::lit(IMAGE_W as f64)).clamped()
        } else {
            pose.clone()
        };
        if let Some((x0, y0, s)) = self.crop {
            let inv = T::lit(1.0 / s);
            for p in out.joints.iter_mut() {
                *p = Point::new((p.x - T::lit(x0)) * inv, (p.y - T::lit(y0)) * inv);
            }
        }
        out
    }
}

/// A pair after augmentation, ready to encode.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    pub image: ThermalFrame<T>,
    pub current: Pose<T>,
    pub past: Pose<T>,
    pub past_type: Option<usize>,
}

impl<T: Scalar> Prepared<T> {
    pub fn past_torso(&self) -> Point<T> {
        self.past.torso()
    }
}

/// Apply `aug` to a pair. Returns `None` when a past joint leaves the frame.
/// The pose type is re-derived from the transformed past pose when a vocabulary is given.
pub fn prepare<T: Scalar>(
    pair: &SamplePair<T>,
    aug: &Augment,
    vocab: Option<&PoseTypeVocabulary<T>>,
) -> Result<Option<Prepared<T>>> {
    let past = aug.pose(&pair.past_pose);
    if (0..past.joints.len()).any(|j| past.valid[j] && !past.joints[j].in_image()) {
        return Ok(None);
    }
    let current = aug.pose(&pair.current_pose).clamped();
    let image = if *aug == Augment::identity() {
        (*pair.image).clone()
    } else {
        aug.frame(&pair.image)
    };
    let past_type = match vocab {
        Some(v) if *aug != Augment::identity() => Some(v.assign(&past)?),
        _ => pair.past_type,
    };
    Ok(Some(Prepared {
        image,
        current,
        past,
        past_type,
    }))
}
