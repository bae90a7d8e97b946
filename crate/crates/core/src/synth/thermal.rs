use serde::{Deserialize, Serialize};

use super::scene::{Affordance, Furniture, Rect, SceneSpec};
use super::template::{Action, TOUCH_JOINT};
use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::pose::{Point, Pose, IMAGE_H, IMAGE_W};
use crate::scalar::Scalar;
use crate::skeleton::BONES;

pub const DEFAULT_TAU: f64 = 20.0;
pub const DEFAULT_BODY_TEMP: f64 = 0.9;
pub const DEFAULT_DEPOSIT: f64 = 0.6;
/// Half of the 6 px silhouette width.
pub const LIMB_RADIUS: f64 = 3.0;
const HEAD_RADIUS: f64 = 5.0;

/// Residual heat left on surfaces, one value per image pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalState {
    pub mark_buffer: Vec<f64>,
    pub body_temp: f64,
    pub tau: f64,
    pub deposit: f64,
}

impl ThermalState {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::param("tau must be positive"));
        }
        Ok(ThermalState {
            mark_buffer: vec![0.0; IMAGE_H * IMAGE_W],
            body_temp: DEFAULT_BODY_TEMP,
            tau,
            deposit: DEFAULT_DEPOSIT,
        })
    }

    /// Decay then deposit, in place.
    pub fn step(&mut self, contact: &[bool], dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::param("dt must be positive"));
        }
        if contact.len() != self.mark_buffer.len() {
            return Err(Error::shape("contact mask size differs from the mark buffer"));
        }
        let decay = (-dt / self.tau).exp();
        for (m, &c) in self.mark_buffer.iter_mut().zip(contact) {
            *m *= decay;
            if c {
                *m = m.max(self.deposit);
            }
        }
        Ok(())
    }
}

/// Pure form of [`ThermalState::step`].
pub fn step_thermal(state: &ThermalState, contact_mask: &[bool], dt: f64) -> Result<ThermalState> {
    let mut next = state.clone();
    next.step(contact_mask, dt)?;
    Ok(next)
}

fn segment_distance(p: Point<f64>, a: Point<f64>, b: Point<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(Point::new(a.x + t * ab.x, a.y + t * ab.y))
}

/// Set every pixel whose center lies within `radius` of segment `a`–`b` (and inside `clip`, if given).
pub fn raster_segment(mask: &mut [bool], a: Point<f64>, b: Point<f64>, radius: f64, clip: Option<&Rect>) {
    let lo_x = (a.x.min(b.x) - radius).floor().max(0.0) as usize;
    let hi_x = ((a.x.max(b.x) + radius).ceil().max(0.0) as usize).min(IMAGE_W);
    let lo_y = (a.y.min(b.y) - radius).floor().max(0.0) as usize;
    let hi_y = ((a.y.max(b.y) + radius).ceil().max(0.0) as usize).min(IMAGE_H);
    for row in lo_y..hi_y {
        for col in lo_x..hi_x {
            let p = Point::new(col as f64 + 0.5, row as f64 + 0.5);
            if clip.is_some_and(|r| !r.contains(p)) {
                continue;
            }
            if segment_distance(p, a, b) <= radius {
                mask[row * IMAGE_W + col] = true;
            }
        }
    }
}

/// Pixels covered by the actor's stick-figure body.
pub fn silhouette_mask(pose: &Pose<f64>) -> Vec<bool> {
    let mut mask = vec![false; IMAGE_H * IMAGE_W];
    for &(a, b) in &BONES {
        if pose.valid[a] && pose.valid[b] {
            raster_segment(&mut mask, pose.joints[a], pose.joints[b], LIMB_RADIUS, None);
        }
    }
    if pose.valid[0] {
        raster_segment(&mut mask, pose.joints[0], pose.joints[0], HEAD_RADIUS, None);
    }
    mask
}

/// Pixels that receive heat this frame: the body parts that rest on the furniture being used.
pub fn contact_mask(pose: &Pose<f64>, action: Action, furniture: Option<&Furniture>) -> Vec<bool> {
    let mut mask = vec![false; IMAGE_H * IMAGE_W];
    let Some(f) = furniture else {
        return mask;
    };
    let rect = Some(&f.rect);
    let j = &pose.joints;
    match (action, f.affordance) {
        (Action::Sit, Affordance::Sit) => {
            for (a, b) in [(8, 9), (8, 12), (9, 10), (12, 13)] {
                raster_segment(&mut mask, j[a], j[b], LIMB_RADIUS, rect);
            }
        }
        (Action::Lie, Affordance::Lie) => {
            for &(a, b) in &BONES {
                raster_segment(&mut mask, j[a], j[b], LIMB_RADIUS, rect);
            }
        }
        (Action::Touch, Affordance::Touch) => {
            raster_segment(&mut mask, j[TOUCH_JOINT], j[TOUCH_JOINT], LIMB_RADIUS, rect);
        }
        _ => {}
    }
    mask
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Draw the mark buffer; `false` gives the mark-free control rendering.
    pub marks: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { marks: true }
    }
}

/// Ambient background, marks on top, then the actor at body temperature.
/// Furniture has no thermal signature of its own and renders at ambient.
pub fn render_frame<T: Scalar>(
    scene: &SceneSpec,
    pose: &Pose<f64>,
    state: &ThermalState,
    options: RenderOptions,
    timestamp: f64,
) -> ThermalFrame<T> {
    let body = silhouette_mask(pose);
    let values = (0..IMAGE_H * IMAGE_W)
        .map(|i| {
            let v = if body[i] {
                state.body_temp
            } else if options.marks {
                scene.ambient + state.mark_buffer[i]
            } else {
                scene.ambient
            };
            T::lit(v.clamp(0.0, 1.0))
        })
        .collect();
    ThermalFrame {
        height: IMAGE_H,
        width: IMAGE_W,
        values,
        timestamp,
    }
}
