use crate::dataset::{make_filtered_pairs, ClipRecord, SamplePair};
use crate::error::Result;
use crate::scalar::Scalar;

use super::episode::{simulate_clip_with, SimConfig};
use super::scene::generate_scene;

/// Scene and episode seeds of clip `index` in a generated corpus.
pub fn clip_seeds(base_seed: u64, index: usize) -> (u64, u64) {
    let scene = base_seed.wrapping_mul(1_000_003).wrapping_add(index as u64);
    (scene, scene ^ 0x5eed_0000_0000)
}

/// Simulate clip `index` of the corpus rooted at `base_seed`.
pub fn corpus_clip<T: Scalar>(base_seed: u64, index: usize, config: &SimConfig) -> Result<ClipRecord<T>> {
    let (scene_seed, episode_seed) = clip_seeds(base_seed, index);
    simulate_clip_with(&generate_scene(scene_seed), episode_seed, config)
}

/// Pairs sampling for in-memory corpora.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSampling {
    pub offset: usize,
    pub stride: usize,
    pub motion_threshold: f64,
}

/// Simulate each clip in `indices` and keep only its supervised pairs, so frames
/// that no pair references are dropped as soon as the clip is done.
pub fn corpus_pairs<T: Scalar>(
    base_seed: u64,
    indices: impl IntoIterator<Item = usize>,
    config: &SimConfig,
    sampling: PairSampling,
) -> Result<Vec<Vec<SamplePair<T>>>> {
    indices
        .into_iter()
        .map(|i| {
            let clip = corpus_clip::<T>(base_seed, i, config)?;
            Ok(make_filtered_pairs(&clip, sampling.offset, sampling.stride, sampling.motion_threshold))
        })
        .collect()
}
