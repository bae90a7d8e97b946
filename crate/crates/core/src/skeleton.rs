//! The 15-joint body skeleton: the leading joints of the 25-joint body convention.

/// Joints per pose.
pub const JOINTS: usize = 15;
/// Joints predicted by the refinement stage (all but the torso).
pub const LIMB_JOINTS: usize = JOINTS - 1;
/// Mid-hip, the root every pose is anchored on.
pub const TORSO: usize = 8;

pub const JOINT_NAMES: [&str; JOINTS] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "mid_hip",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
];

/// Left/right joint pairs exchanged by a horizontal flip.
pub const FLIP_PAIRS: [(usize, usize); 6] = [(2, 5), (3, 6), (4, 7), (9, 12), (10, 13), (11, 14)];

/// Segments drawn when rendering a body silhouette or an overlay.
pub const BONES: [(usize, usize); 14] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 4),
    (1, 5),
    (5, 6),
    (6, 7),
    (1, 8),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
];

/// Static description of the skeleton, for callers that want it as a value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    pub joint_count: usize,
    pub torso_index: usize,
    pub joint_names: Vec<&'static str>,
    pub flip_pairs: Vec<(usize, usize)>,
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton {
            joint_count: JOINTS,
            torso_index: TORSO,
            joint_names: JOINT_NAMES.to_vec(),
            flip_pairs: FLIP_PAIRS.to_vec(),
        }
    }
}

/// Joint index after a horizontal flip.
pub fn flipped_joint(j: usize) -> usize {
    for &(l, r) in &FLIP_PAIRS {
        if j == l {
            return r;
        }
        if j == r {
            return l;
        }
    }
    j
}

/// Skeleton indices of the joints other than the torso, in order.
pub fn limb_joints() -> impl Iterator<Item = usize> {
    (0..JOINTS).filter(|&j| j != TORSO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn flip_pairs_are_disjoint_and_involutive() {
        let mut seen = HashSet::new();
        for &(l, r) in &FLIP_PAIRS {
            assert!(l != r);
            assert!(seen.insert(l) && seen.insert(r));
            assert_ne!(l, TORSO);
            assert_ne!(r, TORSO);
        }
        for j in 0..JOINTS {
            assert_eq!(flipped_joint(flipped_joint(j)), j);
        }
        let s = Skeleton::default();
        assert_eq!(s.joint_count, 15);
        assert!(s.torso_index < s.joint_count);
        assert_eq!(limb_joints().count(), LIMB_JOINTS);
    }
}
