//! Clip ingestion, supervised pair construction, splits, and the two-camera scale fit.

mod clip;
mod pairs;

pub use clip::{
    clip_dir, dequantize, frame_path, list_clips, load_clip, quantize, read_frame_png, write_clip,
    write_frame_png, Annotation, ClipMeta, ClipRecord, Source,
};
pub use pairs::{
    make_filtered_pairs, make_pairs, mean_displacement, motion_filter, pairs_by_clip, project_to_image,
    split_by_clip, triangulate_scales, Extrinsics, Intrinsics, Pose3D, SamplePair, SplitManifest,
    MOTION_THRESHOLD, PAST_OFFSET,
};
