use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{random_floor_point, Affordance, SceneSpec, FLOOR_BOTTOM, FLOOR_TOP};
use super::template::{pose_template_with, Action, Facing, TOUCH_REACH};
use super::thermal::{contact_mask, render_frame, RenderOptions, ThermalState, DEFAULT_TAU};
use crate::dataset::{Annotation, ClipMeta, ClipRecord, Source};
use crate::error::{Error, Result};
use crate::pose::{Point, Pose, IMAGE_W};
use crate::scalar::Scalar;

pub const SYNTH_FPS: f64 = 15.0;
const GAIT_PERIOD: usize = 6;
const MIN_DURATION_S: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Stay where the previous step ended.
    Here,
    Waypoint(Point<f64>),
    /// The interaction spot of a furniture piece.
    Furniture(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub action: Action,
    pub target: Target,
    pub facing: Facing,
    pub duration_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionScript {
    pub start: Point<f64>,
    pub scale: f64,
    /// Walking speed in pixels per second.
    pub speed: f64,
    pub fps: f64,
    pub steps: Vec<ScriptStep>,
}

impl ActionScript {
    pub fn total_frames(&self) -> usize {
        self.steps.iter().map(|s| s.duration_frames).sum()
    }
}

/// Where the actor's ground point goes to use furniture `i` while facing `facing`.
pub fn interaction_anchor(scene: &SceneSpec, i: usize, facing: Facing, scale: f64) -> Point<f64> {
    let f = &scene.furniture[i];
    match f.affordance {
        Affordance::Touch => {
            let x = match facing {
                Facing::Right => f.rect.x0 - TOUCH_REACH * scale + 6.0,
                Facing::Left => f.rect.x1 + TOUCH_REACH * scale - 6.0,
            };
            Point::new(x, f.rect.y1)
        }
        _ => f.base(),
    }
}

fn interaction_facing(scene: &SceneSpec, i: usize, scale: f64, rng: &mut impl Rng) -> Facing {
    let preferred = if rng.gen_bool(0.5) { Facing::Left } else { Facing::Right };
    if scene.furniture[i].affordance != Affordance::Touch {
        return preferred;
    }
    let fits = |f: Facing| {
        let x = interaction_anchor(scene, i, f, scale).x;
        (30.0..IMAGE_W as f64 - 30.0).contains(&x)
    };
    if fits(preferred) {
        preferred
    } else if preferred == Facing::Left {
        Facing::Right
    } else {
        Facing::Left
    }
}

fn action_for(a: Affordance) -> Action {
    match a {
        Affordance::Sit => Action::Sit,
        Affordance::Lie => Action::Lie,
        Affordance::Touch => Action::Touch,
        Affordance::None => Action::Stand,
    }
}

fn walk_frames(from: Point<f64>, to: Point<f64>, speed: f64, fps: f64) -> usize {
    ((from.distance(to) / speed * fps).ceil() as usize).max(1)
}

fn waypoint_away(from: Point<f64>, rng: &mut impl Rng) -> Point<f64> {
    loop {
        let p = random_floor_point(rng);
        if p.distance(from) >= 80.0 {
            return p;
        }
    }
}

/// Alternate walking and interacting; every interaction has a walk before and after it.
pub fn script_episode(scene: &SceneSpec, seed: u64, duration_s: f64) -> Result<ActionScript> {
    if !(duration_s >= MIN_DURATION_S) {
        return Err(Error::param(format!("episodes need at least {MIN_DURATION_S} s")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fps = SYNTH_FPS;
    let total = (duration_s * fps).round() as usize;
    let scale = rng.gen_range(0.9..1.15);
    let speed = rng.gen_range(40.0..60.0);
    let start = random_floor_point(&mut rng);
    let interactive = scene.interactive();

    let mut steps = vec![ScriptStep {
        action: Action::Stand,
        target: Target::Here,
        facing: if rng.gen_bool(0.5) { Facing::Left } else { Facing::Right },
        duration_frames: rng.gen_range(3..12),
    }];
    let mut used = steps[0].duration_frames;
    let mut pos = start;
    let mut facing = steps[0].facing;
    while used < total {
        let remaining = total - used;
        let mut planned = false;
        if !interactive.is_empty() && rng.gen_bool(0.85) {
            let i = interactive[rng.gen_range(0..interactive.len())];
            let face = interaction_facing(scene, i, scale, &mut rng);
            let anchor = interaction_anchor(scene, i, face, scale);
            let walk = walk_frames(pos, anchor, speed, fps);
            let dwell = rng.gen_range(25..60);
            if walk + dwell + 15 <= remaining {
                steps.push(ScriptStep {
                    action: Action::Walk,
                    target: Target::Furniture(i),
                    facing: Facing::toward(anchor.x - pos.x, facing),
                    duration_frames: walk,
                });
                steps.push(ScriptStep {
                    action: action_for(scene.furniture[i].affordance),
                    target: Target::Furniture(i),
                    facing: face,
                    duration_frames: dwell,
                });
                used += walk + dwell;
                pos = anchor;
                facing = face;
                planned = true;
            }
        }
        let away = waypoint_away(pos, &mut rng);
        let walk = walk_frames(pos, away, speed, fps);
        facing = Facing::toward(away.x - pos.x, facing);
        steps.push(ScriptStep {
            action: Action::Walk,
            target: Target::Waypoint(away),
            facing,
            duration_frames: walk,
        });
        used += walk;
        pos = away;
        if !planned && used < total && rng.gen_bool(0.3) {
            let d = rng.gen_range(3..15);
            steps.push(ScriptStep {
                action: Action::Stand,
                target: Target::Here,
                facing,
                duration_frames: d,
            });
            used += d;
        }
    }
    // Trim the tail so the script covers exactly `total` frames.
    let mut excess = used - total;
    while excess > 0 {
        let last = steps.last_mut().unwrap();
        if last.duration_frames > excess {
            last.duration_frames -= excess;
            excess = 0;
        } else {
            excess -= last.duration_frames;
            steps.pop();
        }
    }
    debug_assert!(start.y >= FLOOR_TOP && start.y < FLOOR_BOTTOM);
    Ok(ActionScript {
        start,
        scale,
        speed,
        fps,
        steps,
    })
}

/// Per-frame actor state produced by playing a script.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameState {
    pub action: Action,
    pub furniture: Option<usize>,
    pub pose: Pose<f64>,
}

/// Play a script into one actor state per frame.
pub fn play_script(scene: &SceneSpec, script: &ActionScript) -> Result<Vec<FrameState>> {
    let mut out = Vec::with_capacity(script.total_frames());
    let mut pos = script.start;
    for step in &script.steps {
        if step.duration_frames == 0 {
            return Err(Error::param("script step with zero duration"));
        }
        let furniture = match step.target {
            Target::Furniture(i) if i >= scene.furniture.len() => {
                return Err(Error::param(format!("script targets missing furniture {i}")))
            }
            Target::Furniture(i) => Some(i),
            _ => None,
        };
        let to = match step.target {
            Target::Here => pos,
            Target::Waypoint(p) => p,
            Target::Furniture(i) => interaction_anchor(scene, i, step.facing, script.scale),
        };
        let from = pos;
        for k in 1..=step.duration_frames {
            let frame = out.len();
            let (anchor, phase) = if step.action == Action::Walk {
                let t = k as f64 / step.duration_frames as f64;
                (
                    Point::new(from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t),
                    frame / GAIT_PERIOD,
                )
            } else {
                (to, 0)
            };
            let raw = pose_template_with(step.action, step.facing, anchor, script.scale, phase)?;
            out.push(FrameState {
                action: step.action,
                furniture: if step.action == Action::Walk { None } else { furniture },
                pose: Pose::new(raw.joints, raw.valid)?,
            });
        }
        pos = to;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration_s: f64,
    pub tau: f64,
    pub render: RenderOptions,
    /// Seed the room with marks from visits before the clip starts.
    pub stale_marks: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration_s: 12.0,
            tau: DEFAULT_TAU,
            render: RenderOptions::default(),
            stale_marks: true,
        }
    }
}

/// Simulate with default rendering; see [`simulate_clip_with`].
pub fn simulate_clip<T: Scalar>(scene: &SceneSpec, seed: u64, duration_s: f64, tau: f64) -> Result<ClipRecord<T>> {
    simulate_clip_with(
        scene,
        seed,
        &SimConfig {
            duration_s,
            tau,
            ..SimConfig::default()
        },
    )
}

fn stale_marks(scene: &SceneSpec, state: &mut ThermalState, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for i in scene.interactive() {
        if !rng.gen_bool(0.5) {
            continue;
        }
        let scale = rng.gen_range(0.9..1.15);
        let facing = interaction_facing(scene, i, scale, &mut rng);
        let age = rng.gen_range(5.0..40.0);
        let f = &scene.furniture[i];
        let action = action_for(f.affordance);
        let pose = pose_template_with(action, facing, interaction_anchor(scene, i, facing, scale), scale, 0)?;
        let mask = contact_mask(&pose, action, Some(f));
        let v = state.deposit * (-age / state.tau).exp();
        for (m, c) in state.mark_buffer.iter_mut().zip(mask) {
            if c {
                *m = m.max(v);
            }
        }
    }
    Ok(())
}

/// Script, play and render one 15 fps clip. Deterministic in `(scene, seed, config)`.
pub fn simulate_clip_with<T: Scalar>(scene: &SceneSpec, seed: u64, config: &SimConfig) -> Result<ClipRecord<T>> {
    let script = script_episode(scene, seed, config.duration_s)?;
    let states = play_script(scene, &script)?;
    let mut thermal = ThermalState::new(config.tau)?;
    if config.stale_marks {
        stale_marks(scene, &mut thermal, seed)?;
    }
    let dt = 1.0 / script.fps;
    let mut frames = Vec::with_capacity(states.len());
    let mut poses = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let contact = contact_mask(&s.pose, s.action, s.furniture.map(|f| &scene.furniture[f]));
        thermal.step(&contact, dt)?;
        frames.push(Arc::new(render_frame::<T>(scene, &s.pose, &thermal, config.render, i as f64 * dt)));
        poses.push(s.pose.cast());
    }

    let mut annotations = Vec::new();
    let mut frame = 0;
    for step in &script.steps {
        let object = match step.target {
            Target::Furniture(i) if step.action != Action::Walk => scene.furniture[i].kind.name(),
            _ => "floor",
        };
        annotations.push(Annotation {
            action: step.action.name().to_string(),
            object: object.to_string(),
            start_frame: frame,
            end_frame: frame + step.duration_frames,
        });
        frame += step.duration_frames;
    }
    let meta = ClipMeta {
        fps: script.fps,
        actor: "stick".into(),
        room: format!("room{:06}", scene.seed),
        intensity_range: [0.0, 65535.0],
        annotations: annotations.clone(),
        source: Source::Synthetic,
        scene: Some(serde_json::to_value(scene).map_err(|e| Error::data(e.to_string()))?),
        script: Some(serde_json::to_value(&script).map_err(|e| Error::data(e.to_string()))?),
    };
    let clip = ClipRecord {
        clip_id: format!("syn{:06}-{seed}", scene.seed),
        fps: script.fps,
        frames,
        poses,
        annotations,
        source: Source::Synthetic,
        meta,
    };
    clip.validate()?;
    Ok(clip)
}
