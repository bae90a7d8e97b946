//! 2D poses, pose composition and the per-joint error metrics.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::skeleton::{flipped_joint, JOINTS, LIMB_JOINTS, TORSO};

/// Model input height in pixels.
pub const IMAGE_H: usize = 288;
/// Model input width in pixels.
pub const IMAGE_W: usize = 384;

/// A 2D point in continuous pixel coordinates: pixel `i` spans `[i, i+1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Point { x, y }
    }

    pub fn origin() -> Self {
        Point::new(T::zero(), T::zero())
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Point<U> {
        Point::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }

    /// Clamp into the image rectangle `[0, W) × [0, H)`.
    pub fn clamp_to_image(self) -> Self {
        let eps = T::lit(1e-3);
        let xmax = T::lit(IMAGE_W as f64) - eps;
        let ymax = T::lit(IMAGE_H as f64) - eps;
        Point::new(
            self.x.max(T::zero()).min(xmax),
            self.y.max(T::zero()).min(ymax),
        )
    }

    pub fn in_image(self) -> bool {
        self.x >= T::zero()
            && self.y >= T::zero()
            && self.x < T::lit(IMAGE_W as f64)
            && self.y < T::lit(IMAGE_H as f64)
    }
}

impl<T: Scalar> From<[T; 2]> for Point<T> {
    fn from(v: [T; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl<T: Scalar> From<Point<T>> for [T; 2] {
    fn from(p: Point<T>) -> Self {
        [p.x, p.y]
    }
}

impl<T: Scalar> Add for Point<T> {
    type Output = Point<T>;
    fn add(self, o: Self) -> Self {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Point<T> {
    type Output = Point<T>;
    fn sub(self, o: Self) -> Self {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// A 15-joint pose with per-joint validity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Pose<T> {
    pub joints: [Point<T>; JOINTS],
    pub valid: [bool; JOINTS],
}

impl<T: Scalar> Pose<T> {
    /// Build a pose from image-space joints; valid joints are clamped into the frame.
    pub fn new(joints: [Point<T>; JOINTS], valid: [bool; JOINTS]) -> Result<Self> {
        let mut pose = Pose::unclamped(joints, valid)?;
        for j in 0..JOINTS {
            if pose.valid[j] {
                pose.joints[j] = pose.joints[j].clamp_to_image();
            }
        }
        Ok(pose)
    }

    /// Build a pose without clamping (torso-relative offsets, vocabulary centers).
    pub fn unclamped(joints: [Point<T>; JOINTS], valid: [bool; JOINTS]) -> Result<Self> {
        if let Some(j) = joints.iter().position(|p| !p.is_finite()) {
            return Err(Error::param(format!("joint {j} is not finite")));
        }
        Ok(Pose { joints, valid })
    }

    /// All joints valid.
    pub fn from_joints(joints: [Point<T>; JOINTS]) -> Result<Self> {
        Pose::new(joints, [true; JOINTS])
    }

    pub fn torso(&self) -> Point<T> {
        self.joints[TORSO]
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Same translation applied to every joint, no clamping.
    pub fn translated(&self, d: Point<T>) -> Self {
        let mut out = self.clone();
        for p in out.joints.iter_mut() {
            *p = *p + d;
        }
        out
    }

    /// Clamp valid joints into the image.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        for j in 0..JOINTS {
            if out.valid[j] {
                out.joints[j] = out.joints[j].clamp_to_image();
            }
        }
        out
    }

    /// Horizontal mirror about `x = width`: coordinates become `width - x` and
    /// left/right joints swap labels.
    pub fn flipped(&self, width: T) -> Self {
        let mut out = self.clone();
        for j in 0..JOINTS {
            let src = flipped_joint(j);
            out.joints[j] = Point::new(width - self.joints[src].x, self.joints[src].y);
            out.valid[j] = self.valid[src];
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Pose<U> {
        Pose {
            joints: self.joints.map(|p| p.cast()),
            valid: self.valid,
        }
    }

    /// The 14 non-torso joints in skeleton order.
    pub fn limbs(&self) -> [Point<T>; LIMB_JOINTS] {
        split_pose(self).0
    }
}

/// Insert the torso coordinate into the 14 remaining joints.
pub fn compose_pose<T: Scalar>(limbs: &[Point<T>], torso: Point<T>) -> Result<Pose<T>> {
    if limbs.len() != LIMB_JOINTS {
        return Err(Error::param(format!(
            "expected {LIMB_JOINTS} non-torso joints, got {}",
            limbs.len()
        )));
    }
    let mut joints = [Point::origin(); JOINTS];
    let mut it = limbs.iter();
    for (j, slot) in joints.iter_mut().enumerate() {
        *slot = if j == TORSO {
            torso
        } else {
            *it.next().expect("length checked")
        };
    }
    Pose::unclamped(joints, [true; JOINTS])
}

/// Inverse of [`compose_pose`].
pub fn split_pose<T: Scalar>(pose: &Pose<T>) -> ([Point<T>; LIMB_JOINTS], Point<T>) {
    let mut limbs = [Point::origin(); LIMB_JOINTS];
    for (slot, j) in limbs.iter_mut().zip(crate::skeleton::limb_joints()) {
        *slot = pose.joints[j];
    }
    (limbs, pose.torso())
}

/// Mean per-joint Euclidean distance over joints valid in both poses.
pub fn mpjpe<T: Scalar>(pred: &Pose<T>, gt: &Pose<T>) -> Result<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for j in 0..JOINTS {
        if gt.valid[j] && pred.valid[j] {
            sum += pred.joints[j].distance(gt.joints[j]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("no valid joints to compare".into()));
    }
    Ok(sum / T::lit(n as f64))
}

/// Mean MPJPE of the `k` predictions closest to the ground truth.
pub fn topk_mpjpe<T: Scalar>(preds: &[Pose<T>], gt: &Pose<T>, k: usize) -> Result<T> {
    let errors = preds
        .iter()
        .map(|p| mpjpe(p, gt))
        .collect::<Result<Vec<_>>>()?;
    topk_mean(&errors, k)
}

/// Mean of the `k` smallest values.
pub fn topk_mean<T: Scalar>(values: &[T], k: usize) -> Result<T> {
    if k == 0 {
        return Err(Error::param("k must be positive"));
    }
    if values.len() < k {
        return Err(Error::param(format!(
            "need at least {k} predictions, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    Ok(sorted[..k].iter().copied().sum::<T>() / T::lit(k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng) -> Pose<f64> {
        let joints = std::array::from_fn(|_| {
            Point::new(rng.gen_range(0.0..384.0), rng.gen_range(0.0..288.0))
        });
        Pose::from_joints(joints).unwrap()
    }

    #[test]
    fn identical_poses_have_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng);
        assert_eq!(mpjpe(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn uniform_three_four_displacement_is_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_pose(&mut rng);
        let q = Pose::unclamped(p.translated(Point::new(3.0, 4.0)).joints, p.valid).unwrap();
        assert_eq!(mpjpe(&q, &p).unwrap(), 5.0);
    }

    #[test]
    fn mpjpe_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let mut acc = 0.0;
            for j in 0..JOINTS {
                let dx = a.joints[j].x - b.joints[j].x;
                let dy = a.joints[j].y - b.joints[j].y;
                acc += (dx * dx + dy * dy).sqrt();
            }
            let want = acc / JOINTS as f64;
            let got = mpjpe(&a, &b).unwrap();
            assert!((got - want).abs() <= 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn invalid_joints_are_excluded_and_empty_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_pose(&mut rng);
        let mut b = a.translated(Point::new(3.0, 4.0));
        b.valid[0] = false;
        b.joints[0] = Point::new(1000.0, 1000.0);
        assert_eq!(mpjpe(&b, &a).unwrap(), 5.0);
        b.valid = [false; JOINTS];
        assert!(matches!(mpjpe(&b, &a), Err(Error::Degenerate(_))));
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_mean(&[7.0, 2.0, 9.0], 2).unwrap(), 4.5);
        assert_eq!(topk_mean(&[7.0, 2.0, 9.0], 3).unwrap(), 6.0);
        assert!(topk_mean(&[1.0f64], 0).is_err());
        assert!(topk_mean(&[1.0f64], 2).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_pose(&mut rng);
        let preds = vec![gt.clone(); 5];
        for k in 1..=5 {
            assert_eq!(topk_mpjpe(&preds, &gt, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn compose_split_examples() {
        let zero = [Point::<f64>::origin(); LIMB_JOINTS];
        let p = compose_pose(&zero, Point::origin()).unwrap();
        assert!(p.joints.iter().all(|&q| q == Point::origin()));
        assert!(compose_pose(&zero[..13], Point::origin()).is_err());
    }

    #[test]
    fn flip_is_involutive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_pose(&mut rng);
        let back = p.flipped(384.0).flipped(384.0);
        for j in 0..JOINTS {
            assert!((back.joints[j].x - p.joints[j].x).abs() < 1e-12);
            assert_eq!(back.joints[j].y, p.joints[j].y);
        }
    }

    #[test]
    fn pose_json_shape() {
        let p = Pose::<f32>::from_joints([Point::new(1.0, 2.0); JOINTS]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["joints"].as_array().unwrap().len(), 15);
        assert_eq!(v["joints"][0], serde_json::json!([1.0, 2.0]));
        assert_eq!(v["valid"].as_array().unwrap().len(), 15);
        let back: Pose<f32> = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn compose_split_roundtrip(coords in proptest::collection::vec((0.0f64..384.0, 0.0f64..288.0), JOINTS)) {
            let joints: [Point<f64>; JOINTS] = std::array::from_fn(|j| Point::new(coords[j].0, coords[j].1));
            let pose = Pose::from_joints(joints).unwrap();
            let (limbs, torso) = split_pose(&pose);
            let back = compose_pose(&limbs, torso).unwrap();
            prop_assert_eq!(back, pose);
        }

        #[test]
        fn mpjpe_translation_invariant(seed in 0u64..1000, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let d = Point::new(dx, dy);
            let base = mpjpe(&a, &b).unwrap();
            let moved = mpjpe(&a.translated(d), &b.translated(d)).unwrap();
            prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0));
            prop_assert!(base >= 0.0);
        }

        #[test]
        fn topk_monotone_in_k(values in proptest::collection::vec(0.0f64..100.0, 1..40)) {
            let mut prev = f64::NEG_INFINITY;
            for k in 1..=values.len() {
                let m = topk_mean(&values, k).unwrap();
                prop_assert!(m >= prev - 1e-12);
                prev = m;
            }
        }
    }
}
