use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Point, Pose};
use crate::skeleton::JOINTS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Walk,
    Sit,
    Lie,
    Touch,
    Stand,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Walk, Action::Sit, Action::Lie, Action::Touch, Action::Stand];

    pub fn name(self) -> &'static str {
        match self {
            Action::Walk => "walk",
            Action::Sit => "sit",
            Action::Lie => "lie",
            Action::Touch => "touch",
            Action::Stand => "stand",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::param(format!("unknown action {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    Left,
    Right,
}

impl Facing {
    pub fn sign(self) -> f64 {
        match self {
            Facing::Left => -1.0,
            Facing::Right => 1.0,
        }
    }

    pub fn toward(dx: f64, previous: Facing) -> Facing {
        if dx > 0.5 {
            Facing::Right
        } else if dx < -0.5 {
            Facing::Left
        } else {
            previous
        }
    }
}

type Offsets = [(f64, f64); JOINTS];

// Joint offsets from the ground anchor for a right-facing figure at scale 1, y pointing down.
// Order: nose, neck, r_shoulder, r_elbow, r_wrist, l_shoulder, l_elbow, l_wrist,
//        mid_hip, r_hip, r_knee, r_ankle, l_hip, l_knee, l_ankle.
const STAND: Offsets = [
    (3.0, -76.0),
    (0.0, -66.0),
    (-7.0, -64.0),
    (-9.0, -50.0),
    (-9.0, -38.0),
    (7.0, -64.0),
    (9.0, -50.0),
    (9.0, -38.0),
    (0.0, -36.0),
    (-5.0, -36.0),
    (-4.0, -18.0),
    (-4.0, 0.0),
    (5.0, -36.0),
    (4.0, -18.0),
    (4.0, 0.0),
];

const WALK: Offsets = [
    (5.0, -75.0),
    (2.0, -65.0),
    (-4.0, -63.0),
    (3.0, -51.0),
    (9.0, -41.0),
    (6.0, -63.0),
    (-2.0, -51.0),
    (-9.0, -41.0),
    (0.0, -36.0),
    (-4.0, -36.0),
    (-8.0, -18.0),
    (-13.0, 0.0),
    (4.0, -36.0),
    (8.0, -19.0),
    (12.0, 0.0),
];

const SIT: Offsets = [
    (1.0, -62.0),
    (-3.0, -52.0),
    (-7.0, -50.0),
    (2.0, -38.0),
    (12.0, -31.0),
    (1.0, -50.0),
    (7.0, -38.0),
    (15.0, -30.0),
    (0.0, -22.0),
    (-3.0, -21.0),
    (17.0, -21.0),
    (18.0, 0.0),
    (3.0, -23.0),
    (19.0, -23.0),
    (21.0, 0.0),
];

const LIE: Offsets = [
    (38.0, -33.0),
    (26.0, -30.0),
    (23.0, -27.0),
    (11.0, -25.0),
    (0.0, -25.0),
    (23.0, -33.0),
    (11.0, -35.0),
    (1.0, -35.0),
    (-5.0, -29.0),
    (-5.0, -26.0),
    (-25.0, -26.0),
    (-45.0, -26.0),
    (-5.0, -32.0),
    (-25.0, -32.0),
    (-45.0, -32.0),
];

const TOUCH: Offsets = [
    (4.0, -76.0),
    (1.0, -66.0),
    (3.0, -64.0),
    (14.0, -56.0),
    (25.0, -48.0),
    (-5.0, -64.0),
    (-7.0, -50.0),
    (-7.0, -38.0),
    (0.0, -36.0),
    (-4.0, -36.0),
    (-3.0, -18.0),
    (-3.0, 0.0),
    (4.0, -36.0),
    (4.0, -18.0),
    (4.0, 0.0),
];

/// Horizontal reach of the touching wrist in the right-facing template.
pub const TOUCH_REACH: f64 = 25.0;
/// Joint that makes contact during a touch.
pub const TOUCH_JOINT: usize = 4;

fn offsets(action: Action, phase: usize) -> Offsets {
    match action {
        Action::Stand => STAND,
        Action::Sit => SIT,
        Action::Lie => LIE,
        Action::Touch => TOUCH,
        Action::Walk if phase % 2 == 0 => WALK,
        Action::Walk => {
            // The other gait phase swaps which leg and arm lead.
            let mut o = WALK;
            for (a, b) in [(2, 5), (3, 6), (4, 7), (9, 12), (10, 13), (11, 14)] {
                let (pa, pb) = (o[a], o[b]);
                o[a] = (pb.0, pa.1);
                o[b] = (pa.0, pb.1);
            }
            o
        }
    }
}

/// Canonical figure at unit scale, first gait phase.
pub fn pose_template(action: Action, facing: Facing, anchor: Point<f64>) -> Result<Pose<f64>> {
    pose_template_with(action, facing, anchor, 1.0, 0)
}

/// Stick figure for `action` with its ground point at `anchor`, mirrored about the
/// anchor when facing left (labels are kept, only x is reflected).
pub fn pose_template_with(
    action: Action,
    facing: Facing,
    anchor: Point<f64>,
    scale: f64,
    phase: usize,
) -> Result<Pose<f64>> {
    if !(scale > 0.0) {
        return Err(Error::param("template scale must be positive"));
    }
    let o = offsets(action, phase);
    let s = facing.sign();
    let joints = std::array::from_fn(|j| Point::new(anchor.x + s * scale * o[j].0, anchor.y + scale * o[j].1));
    Pose::unclamped(joints, [true; JOINTS])
}
