//! GoalNet, TypeNet, PoseNet and the direct past-joint heatmap baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{encode_frame, encode_limbs, encode_point, encode_pose};
use super::loss::{softmax_ce_with_grad, softmax_in_place};
use super::nets::{ClassifierConfig, Hourglass, HourglassConfig, Mlp, ResidualTrunk};
use super::Module;
use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::heatmap::{output_cell_index, render_heatmap, HeatmapGrid, GRID_H, GRID_W};
use crate::nn::{Grads, ParamId, Params, Tape, Tensor, Var};
use crate::pose::{Point, Pose};
use crate::scalar::Scalar;
use crate::skeleton::{limb_joints, JOINTS, LIMB_JOINTS};

/// Which trainable component a checkpoint or config refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModuleKind {
    Goal,
    Type,
    Pose,
    Semantic,
    HeatmapBaseline,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 5] = [
        ModuleKind::Goal,
        ModuleKind::Type,
        ModuleKind::Pose,
        ModuleKind::Semantic,
        ModuleKind::HeatmapBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModuleKind::Goal => "goal",
            ModuleKind::Type => "type",
            ModuleKind::Pose => "pose",
            ModuleKind::Semantic => "semantic",
            ModuleKind::HeatmapBaseline => "heatmap-baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModuleKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown module {s:?}")))
    }
}

/// Frame and current-pose encodings shared by every stage for one observation.
#[derive(Clone, Debug)]
pub struct Encoded<T> {
    pub frame: Tensor<T>,
    pub pose: Tensor<T>,
}

impl<T: Scalar> Encoded<T> {
    pub fn new(frame: &ThermalFrame<T>, pose: &Pose<T>) -> Result<Self> {
        Ok(Encoded {
            frame: encode_frame(frame),
            pose: encode_pose(pose)?,
        })
    }
}

/// Per-channel softmax over grid cells.
pub fn spatial_softmax<T: Scalar>(scores: &Tensor<T>) -> HeatmapGrid<T> {
    let mut values = scores.data.clone();
    for ch in values.chunks_exact_mut(scores.plane()) {
        softmax_in_place(ch);
    }
    HeatmapGrid {
        channels: scores.c,
        height: scores.h,
        width: scores.w,
        values,
        normalized: true,
    }
}

/// Summed per-channel cross-entropy against target cells and the score gradient.
pub fn grid_ce_with_grad<T: Scalar>(scores: &Tensor<T>, cells: &[usize]) -> (T, Tensor<T>) {
    assert_eq!(cells.len(), scores.c, "one target cell per channel");
    let mut grad = Tensor::zeros(scores.c, scores.h, scores.w);
    let mut loss = T::zero();
    for (c, &cell) in cells.iter().enumerate() {
        let (l, g) = softmax_ce_with_grad(scores.channel(c), cell);
        loss += l;
        grad.channel_mut(c).copy_from_slice(&g);
    }
    (loss, grad)
}

fn stack<T: Scalar>(parts: &[&Tensor<T>]) -> Tensor<T> {
    Tensor::concat(parts)
}

/// `P(r)`: distribution of the past torso position over the output grid.
pub struct GoalModel<T> {
    arch: HourglassConfig,
    seed: u64,
    params: Params<T>,
    net: Hourglass,
}

impl<T: Scalar> GoalModel<T> {
    pub const IN_CHANNELS: usize = 1 + JOINTS;

    fn scores<'a>(&'a self, tape: &mut Tape<'a, T>, enc: &Encoded<T>) -> Var {
        let x = tape.input(stack(&[&enc.frame, &enc.pose]));
        self.net.forward(tape, x)
    }

    pub fn forward(&self, frame: &ThermalFrame<T>, pose: &Pose<T>) -> Result<HeatmapGrid<T>> {
        Ok(self.forward_encoded(&Encoded::new(frame, pose)?))
    }

    pub fn forward_encoded(&self, enc: &Encoded<T>) -> HeatmapGrid<T> {
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc);
        spatial_softmax(tape.value(s))
    }

    /// Cross-entropy at the target torso cell; accumulates gradients when `grads` is given.
    pub fn loss(&self, enc: &Encoded<T>, target: Point<T>, grads: Option<&mut Grads<T>>) -> T {
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc);
        let (loss, g) = grid_ce_with_grad(tape.value(s), &[output_cell_index(target)]);
        if let Some(grads) = grads {
            tape.backward(s, g, grads);
        }
        loss
    }
}

impl<T: Scalar> Module<T> for GoalModel<T> {
    const KIND: ModuleKind = ModuleKind::Goal;
    type Arch = HourglassConfig;

    fn build(arch: &HourglassConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let net = Hourglass::new(&mut params, "goal", arch, Self::IN_CHANNELS, 1, &mut rng)?;
        Ok(GoalModel {
            arch: *arch,
            seed,
            params,
            net,
        })
    }
    fn arch(&self) -> &HourglassConfig {
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeArch {
    pub classifier: ClassifierConfig,
    /// Number of pose types.
    pub k: usize,
}

/// Normalized Gaussian pooling weights on a coarse grid, for reading features at a point.
pub(crate) fn pooling_weights<T: Scalar>(points: &[Point<T>], h: usize, w: usize) -> Result<Vec<T>> {
    let sigma = T::lit(16.0);
    let grid = render_heatmap(points, sigma, (h, w))?;
    let mut acc = vec![T::zero(); h * w];
    for c in 0..grid.channels {
        for (a, &v) in acc.iter_mut().zip(grid.channel(c)) {
            *a += v;
        }
    }
    let inv = T::one() / T::lit(grid.channels as f64);
    acc.iter_mut().for_each(|v| *v *= inv);
    Ok(acc)
}

/// `P(z | r)`: pose-type distribution at a proposed torso position.
pub struct TypeModel<T> {
    arch: TypeArch,
    seed: u64,
    params: Params<T>,
    trunk: ResidualTrunk,
    head: Mlp,
}

impl<T: Scalar> TypeModel<T> {
    pub const IN_CHANNELS: usize = 1 + JOINTS + 1;

    pub fn k(&self) -> usize {
        self.arch.k
    }

    fn scores<'a>(&'a self, tape: &mut Tape<'a, T>, enc: &Encoded<T>, r: Point<T>) -> Result<Var> {
        let hr = encode_point(r)?;
        let x = tape.input(stack(&[&enc.frame, &enc.pose, &hr]));
        let f = self.trunk.forward(tape, x);
        let g = tape.global_avg(f.low);
        let at_mid = tape.weighted_pool(f.mid, pooling_weights(&[r], GRID_H / 4, GRID_W / 4)?);
        let at_low = tape.weighted_pool(f.low, pooling_weights(&[r], GRID_H / 8, GRID_W / 8)?);
        let feats = tape.concat(&[g, at_mid, at_low]);
        Ok(self.head.forward(tape, feats))
    }

    pub fn forward(&self, frame: &ThermalFrame<T>, pose: &Pose<T>, r: Point<T>) -> Result<Vec<T>> {
        self.forward_encoded(&Encoded::new(frame, pose)?, r)
    }

    pub fn forward_encoded(&self, enc: &Encoded<T>, r: Point<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc, r)?;
        let mut p = tape.value(s).data.clone();
        softmax_in_place(&mut p);
        Ok(p)
    }

    pub fn loss(&self, enc: &Encoded<T>, r: Point<T>, z: usize, grads: Option<&mut Grads<T>>) -> Result<T> {
        if z >= self.arch.k {
            return Err(Error::param(format!("type {z} out of range {}", self.arch.k)));
        }
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc, r)?;
        let (loss, g) = softmax_ce_with_grad(&tape.value(s).data, z);
        if let Some(grads) = grads {
            tape.backward(s, Tensor::vector(g), grads);
        }
        Ok(loss)
    }
}

impl<T: Scalar> Module<T> for TypeModel<T> {
    const KIND: ModuleKind = ModuleKind::Type;
    type Arch = TypeArch;

    fn build(arch: &TypeArch, seed: u64) -> Result<Self> {
        if arch.k == 0 {
            return Err(Error::Config("type model needs k ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let trunk = ResidualTrunk::new(&mut params, "type", &arch.classifier, Self::IN_CHANNELS, &mut rng)?;
        let head = Mlp::new(&mut params, "type.head", 3 * trunk.width, arch.classifier.hidden, arch.k, &mut rng);
        Ok(TypeModel {
            arch: *arch,
            seed,
            params,
            trunk,
            head,
        })
    }
    fn arch(&self) -> &TypeArch {
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

/// Initial weight of the painted center pose in PoseNet's output scores.
pub const IDENTITY_GAIN: f64 = 8.0;

/// `P(q_j | r, z)` for the 14 non-torso joints, refining the painted type center.
pub struct PoseModel<T> {
    arch: HourglassConfig,
    seed: u64,
    params: Params<T>,
    net: Hourglass,
    identity: ParamId,
}

impl<T: Scalar> PoseModel<T> {
    pub const IN_CHANNELS: usize = 1 + JOINTS + 1 + JOINTS;

    fn scores<'a>(&'a self, tape: &mut Tape<'a, T>, enc: &Encoded<T>, r: Point<T>, center: &Pose<T>) -> Result<Var> {
        let hr = encode_point(r)?;
        let hc = encode_pose(center)?;
        let limbs = encode_limbs(center)?;
        let x = tape.input(stack(&[&enc.frame, &enc.pose, &hr, &hc]));
        let s = self.net.forward(tape, x);
        let c = tape.input(limbs);
        let bias = tape.channel_scale(c, self.identity);
        Ok(tape.add(s, bias))
    }

    /// `center` is the type's center pose placed at `r`.
    pub fn forward(&self, frame: &ThermalFrame<T>, pose: &Pose<T>, r: Point<T>, center: &Pose<T>) -> Result<HeatmapGrid<T>> {
        self.forward_encoded(&Encoded::new(frame, pose)?, r, center)
    }

    pub fn forward_encoded(&self, enc: &Encoded<T>, r: Point<T>, center: &Pose<T>) -> Result<HeatmapGrid<T>> {
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc, r, center)?;
        Ok(spatial_softmax(tape.value(s)))
    }

    /// Summed per-joint cross-entropy against the 14 non-torso joints of `target`.
    pub fn loss(
        &self,
        enc: &Encoded<T>,
        r: Point<T>,
        center: &Pose<T>,
        target: &Pose<T>,
        grads: Option<&mut Grads<T>>,
    ) -> Result<T> {
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc, r, center)?;
        let cells: Vec<usize> = limb_joints().map(|j| output_cell_index(target.joints[j])).collect();
        let (loss, g) = grid_ce_with_grad(tape.value(s), &cells);
        if let Some(grads) = grads {
            tape.backward(s, g, grads);
        }
        Ok(loss)
    }
}

impl<T: Scalar> Module<T> for PoseModel<T> {
    const KIND: ModuleKind = ModuleKind::Pose;
    type Arch = HourglassConfig;

    fn build(arch: &HourglassConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let net = Hourglass::new(&mut params, "pose", arch, Self::IN_CHANNELS, LIMB_JOINTS, &mut rng)?;
        let identity = params.add_const("pose.identity", &[LIMB_JOINTS], IDENTITY_GAIN);
        Ok(PoseModel {
            arch: *arch,
            seed,
            params,
            net,
            identity,
        })
    }
    fn arch(&self) -> &HourglassConfig {
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

/// Direct per-joint past-position maps for all 15 joints, without type conditioning.
pub struct HeatmapBaselineModel<T> {
    arch: HourglassConfig,
    seed: u64,
    params: Params<T>,
    net: Hourglass,
}

impl<T: Scalar> HeatmapBaselineModel<T> {
    pub const IN_CHANNELS: usize = 1 + JOINTS;

    fn scores<'a>(&'a self, tape: &mut Tape<'a, T>, enc: &Encoded<T>) -> Var {
        let x = tape.input(stack(&[&enc.frame, &enc.pose]));
        self.net.forward(tape, x)
    }

    pub fn forward(&self, frame: &ThermalFrame<T>, pose: &Pose<T>) -> Result<HeatmapGrid<T>> {
        Ok(self.forward_encoded(&Encoded::new(frame, pose)?))
    }

    pub fn forward_encoded(&self, enc: &Encoded<T>) -> HeatmapGrid<T> {
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc);
        spatial_softmax(tape.value(s))
    }

    pub fn loss(&self, enc: &Encoded<T>, target: &Pose<T>, grads: Option<&mut Grads<T>>) -> T {
        let mut tape = Tape::new(&self.params);
        let s = self.scores(&mut tape, enc);
        let cells: Vec<usize> = target.joints.iter().map(|&p| output_cell_index(p)).collect();
        let (loss, g) = grid_ce_with_grad(tape.value(s), &cells);
        if let Some(grads) = grads {
            tape.backward(s, g, grads);
        }
        loss
    }
}

impl<T: Scalar> Module<T> for HeatmapBaselineModel<T> {
    const KIND: ModuleKind = ModuleKind::HeatmapBaseline;
    type Arch = HourglassConfig;

    fn build(arch: &HourglassConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let net = Hourglass::new(&mut params, "baseline", arch, Self::IN_CHANNELS, JOINTS, &mut rng)?;
        Ok(HeatmapBaselineModel {
            arch: *arch,
            seed,
            params,
            net,
        })
    }
    fn arch(&self) -> &HourglassConfig {
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
