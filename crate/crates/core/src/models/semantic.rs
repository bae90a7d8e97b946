use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encode::{encode_frame, encode_pose};
use super::loss::{bce_with_grad, sigmoid};
use super::nets::{ClassifierConfig, Mlp, ResidualTrunk};
use super::stages::{pooling_weights, ModuleKind};
use super::Module;
use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::heatmap::{GRID_H, GRID_W};
use crate::nn::{Grads, Params, Tape, Tensor, Var};
use crate::pose::{Pose, IMAGE_H, IMAGE_W};
use crate::scalar::Scalar;
use crate::skeleton::JOINTS;
use crate::vocab::{pose_to_vector, POSE_DIM};

/// Torso-relative offsets are divided by this before entering the head.
const OFFSET_SCALE: f64 = 100.0;

/// Plausibility logit of a pose drawn over a frame.
pub struct SemanticModel<T> {
    arch: ClassifierConfig,
    seed: u64,
    params: Params<T>,
    trunk: ResidualTrunk,
    head: Mlp,
}

fn coordinate_features<T: Scalar>(pose: &Pose<T>) -> Result<Vec<T>> {
    let v = pose_to_vector(pose)?;
    let inv = T::lit(1.0 / OFFSET_SCALE);
    let mut out: Vec<T> = v.iter().map(|&x| x * inv).collect();
    let r = pose.torso();
    out.push(r.x / T::lit(IMAGE_W as f64));
    out.push(r.y / T::lit(IMAGE_H as f64));
    Ok(out)
}

impl<T: Scalar> SemanticModel<T> {
    pub const IN_CHANNELS: usize = 1 + JOINTS;

    fn logit<'a>(&'a self, tape: &mut Tape<'a, T>, frame: &ThermalFrame<T>, pose: &Pose<T>) -> Result<Var> {
        let x = tape.input(Tensor::concat(&[&encode_frame(frame), &encode_pose(pose)?]));
        let f = self.trunk.forward(tape, x);
        let g = tape.global_avg(f.low);
        let pts = pose.joints;
        let at_mid = tape.weighted_pool(f.mid, pooling_weights(&pts, GRID_H / 4, GRID_W / 4)?);
        let at_low = tape.weighted_pool(f.low, pooling_weights(&pts, GRID_H / 8, GRID_W / 8)?);
        let coords = tape.input(Tensor::vector(coordinate_features(pose)?));
        let feats = tape.concat(&[g, at_mid, at_low, coords]);
        Ok(self.head.forward(tape, feats))
    }

    /// Probability that `pose` is a plausible past pose for `frame`.
    pub fn prob(&self, frame: &ThermalFrame<T>, pose: &Pose<T>) -> Result<T> {
        let mut tape = Tape::new(&self.params);
        let s = self.logit(&mut tape, frame, pose)?;
        Ok(sigmoid(tape.value(s).data[0]))
    }

    pub fn loss(&self, frame: &ThermalFrame<T>, pose: &Pose<T>, label: bool, grads: Option<&mut Grads<T>>) -> Result<T> {
        let mut tape = Tape::new(&self.params);
        let s = self.logit(&mut tape, frame, pose)?;
        let (loss, g) = bce_with_grad(tape.value(s).data[0], label);
        if let Some(grads) = grads {
            tape.backward(s, Tensor::vector(vec![g]), grads);
        }
        Ok(loss)
    }
}

impl<T: Scalar> Module<T> for SemanticModel<T> {
    const KIND: ModuleKind = ModuleKind::Semantic;
    type Arch = ClassifierConfig;

    fn build(arch: &ClassifierConfig, seed: u64) -> Result<Self> {
        arch.validate()
            .map_err(|e| Error::Config(format!("semantic classifier: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let trunk = ResidualTrunk::new(&mut params, "semantic", arch, Self::IN_CHANNELS, &mut rng)?;
        let head = Mlp::new(&mut params, "semantic.head", 3 * trunk.width + POSE_DIM + 2, arch.hidden, 1, &mut rng);
        Ok(SemanticModel {
            arch: *arch,
            seed,
            params,
            trunk,
            head,
        })
    }
    fn arch(&self) -> &ClassifierConfig {
        &self.arch
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn params(&self) -> &Params<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }
}
