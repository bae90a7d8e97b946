#![allow(dead_code)]

use pastpose::dataset::SamplePair;
use pastpose::models::{ClassifierConfig, GoalModel, HourglassConfig, Module, PoseModel, TypeArch, TypeModel};
use pastpose::pipeline::PastPoseModels;
use pastpose::pose::{Point, Pose, IMAGE_H, IMAGE_W};
use pastpose::skeleton::JOINTS;
use pastpose::synth::{corpus_pairs, PairSampling, SimConfig};
use pastpose::vocab::{build_vocabulary, PoseTypeVocabulary};
use pastpose::Scalar;
use rand::Rng;

pub const SAMPLING: PairSampling = PairSampling {
    offset: 45,
    stride: 15,
    motion_threshold: 45.0,
};

/// Pairs from `n` synthetic clips of the default corpus.
pub fn synthetic_pairs<T: Scalar>(seed: u64, n: usize) -> Vec<SamplePair<T>> {
    corpus_pairs(seed, 0..n, &SimConfig::default(), SAMPLING)
        .unwrap()
        .into_iter()
        .flatten()
        .collect()
}

/// A loosely human-shaped pose around a random in-frame torso.
pub fn random_pose<T: Scalar>(rng: &mut impl Rng) -> Pose<T> {
    let tx = rng.gen_range(80.0..IMAGE_W as f64 - 80.0);
    let ty = rng.gen_range(80.0..IMAGE_H as f64 - 80.0);
    let joints = std::array::from_fn(|j| {
        if j == pastpose::skeleton::TORSO {
            Point::new(T::lit(tx), T::lit(ty))
        } else {
            Point::new(
                T::lit(tx + rng.gen_range(-60.0..60.0)),
                T::lit(ty + rng.gen_range(-70.0..70.0)),
            )
        }
    });
    Pose::new(joints, [true; JOINTS]).unwrap()
}

pub fn random_vocab<T: Scalar>(k: usize, seed: u64) -> PoseTypeVocabulary<T> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<Pose<T>> = (0..k * 4).map(|_| random_pose(&mut rng)).collect();
    build_vocabulary(&poses, k, seed).unwrap()
}

/// Untrained desk-size stages with a random vocabulary.
pub fn untrained_models<T: Scalar>(k: usize, seed: u64) -> PastPoseModels<T> {
    let goal = GoalModel::build(&HourglassConfig::desk(), seed).unwrap();
    let arch = TypeArch {
        classifier: ClassifierConfig::desk(),
        k,
    };
    let ty = TypeModel::build(&arch, seed + 1).unwrap();
    let pose = PoseModel::build(&HourglassConfig::desk(), seed + 2).unwrap();
    PastPoseModels::new(goal, ty, pose, random_vocab(k, seed)).unwrap()
}
