//! Procedural rooms, scripted stick-figure actors and contact heat marks, emitted as clips.

mod batch;
mod episode;
mod scene;
mod template;
mod thermal;

pub use batch::{clip_seeds, corpus_clip, corpus_pairs, PairSampling};
pub use episode::{
    interaction_anchor, play_script, script_episode, simulate_clip, simulate_clip_with, ActionScript, FrameState,
    ScriptStep, SimConfig, Target, SYNTH_FPS,
};
pub use scene::{
    generate_scene, random_floor_point, Affordance, Furniture, FurnitureKind, Rect, SceneSpec, FLOOR_BOTTOM,
    FLOOR_TOP,
};
pub use template::{pose_template, pose_template_with, Action, Facing, TOUCH_JOINT, TOUCH_REACH};
pub use thermal::{
    contact_mask, raster_segment, render_frame, silhouette_mask, step_thermal, RenderOptions, ThermalState,
    DEFAULT_BODY_TEMP, DEFAULT_DEPOSIT, DEFAULT_TAU, LIMB_RADIUS,
};
