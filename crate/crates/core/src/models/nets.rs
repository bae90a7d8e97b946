//! Network bodies shared by the three stages, the baseline and the plausibility scorer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Linear, Params, Tape, Var};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourglassConfig {
    /// Stacked encoder-decoder blocks.
    pub blocks: usize,
    /// Channels at the two coarsest levels; finer levels use half and a quarter.
    pub width: usize,
}

impl HourglassConfig {
    pub fn desk() -> Self {
        HourglassConfig { blocks: 1, width: 32 }
    }

    pub fn full() -> Self {
        HourglassConfig { blocks: 3, width: 128 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.width < 4 || self.width % 4 != 0 {
            return Err(Error::Config(format!(
                "hourglass needs blocks ≥ 1 and a width divisible by 4, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for HourglassConfig {
    fn default() -> Self {
        HourglassConfig::desk()
    }
}

struct HourglassBlock {
    down0: Conv2d,
    down1: Conv2d,
    down2: Conv2d,
    bottleneck: [Conv2d; 3],
    up2: Conv2d,
    proj1: Conv2d,
    up1: Conv2d,
    proj0: Conv2d,
    up0: Conv2d,
}

/// Encoder-decoder over the 72×96 grid, down to 9×12 and back with skip connections.
pub struct Hourglass {
    stem: Conv2d,
    blocks: Vec<HourglassBlock>,
    head: Conv2d,
}

impl Hourglass {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        cfg: &HourglassConfig,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let (c0, c1, c2) = (cfg.width / 4, cfg.width / 2, cfg.width);
        let stem = Conv2d::new(params, &format!("{name}.stem"), cin, c0, 1, 1, 1, rng);
        let blocks = (0..cfg.blocks)
            .map(|b| {
                let n = |s: &str| format!("{name}.b{b}.{s}");
                HourglassBlock {
                    down0: Conv2d::new(params, &n("down0"), c0, c0, 3, 1, 1, rng),
                    down1: Conv2d::new(params, &n("down1"), c0, c1, 3, 1, 1, rng),
                    down2: Conv2d::new(params, &n("down2"), c1, c2, 3, 1, 1, rng),
                    bottleneck: [1, 2, 4].map(|d| Conv2d::new(params, &n(&format!("mid{d}")), c2, c2, 3, 1, d, rng)),
                    up2: Conv2d::new(params, &n("up2"), c2, c2, 3, 1, 1, rng),
                    proj1: Conv2d::new(params, &n("proj1"), c2, c1, 1, 1, 1, rng),
                    up1: Conv2d::new(params, &n("up1"), c1, c1, 3, 1, 1, rng),
                    proj0: Conv2d::new(params, &n("proj0"), c1, c0, 1, 1, 1, rng),
                    up0: Conv2d::new(params, &n("up0"), c0, c0, 3, 1, 1, rng),
                }
            })
            .collect();
        let head = Conv2d::new(params, &format!("{name}.head"), c0, cout, 1, 1, 1, rng);
        // Start close to a uniform output distribution.
        params.get_mut(head.weight).iter_mut().for_each(|w| *w *= T::lit(0.1));
        Ok(Hourglass { stem, blocks, head })
    }

    /// Raw per-cell scores, `cout × 72 × 96`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let s = tape.conv(x, &self.stem);
        let mut h = tape.relu(s);
        for b in &self.blocks {
            let y = Self::block(tape, b, h);
            h = tape.add(h, y);
        }
        tape.conv(h, &self.head)
    }

    fn block<T: Scalar>(tape: &mut Tape<'_, T>, b: &HourglassBlock, x: Var) -> Var {
        let conv_relu = |tape: &mut Tape<'_, T>, x: Var, c: &Conv2d| {
            let y = tape.conv(x, c);
            tape.relu(y)
        };
        let x0 = conv_relu(tape, x, &b.down0);
        let p = tape.avg_pool2(x0);
        let x1 = conv_relu(tape, p, &b.down1);
        let p = tape.avg_pool2(x1);
        let x2 = conv_relu(tape, p, &b.down2);
        let mut m = tape.avg_pool2(x2);
        for c in &b.bottleneck {
            m = conv_relu(tape, m, c);
        }
        let u = tape.upsample2(m);
        let s = tape.add(u, x2);
        let y2 = conv_relu(tape, s, &b.up2);
        let p = tape.conv(y2, &b.proj1);
        let u = tape.upsample2(p);
        let s = tape.add(u, x1);
        let y1 = conv_relu(tape, s, &b.up1);
        let p = tape.conv(y1, &b.proj0);
        let u = tape.upsample2(p);
        let s = tape.add(u, x0);
        conv_relu(tape, s, &b.up0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Channels of the last two stages; the first stage uses half.
    pub width: usize,
    /// Residual blocks per stage.
    pub depth: usize,
    pub hidden: usize,
}

impl ClassifierConfig {
    pub fn desk() -> Self {
        ClassifierConfig {
            width: 32,
            depth: 1,
            hidden: 64,
        }
    }

    pub fn full() -> Self {
        ClassifierConfig {
            width: 128,
            depth: 2,
            hidden: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width < 2 || self.width % 2 != 0 || self.hidden == 0 {
            return Err(Error::Config(format!("invalid classifier config {self:?}")));
        }
        Ok(())
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::desk()
    }
}

struct ResBlock {
    a: Conv2d,
    b: Conv2d,
    shortcut: Option<Conv2d>,
}

impl ResBlock {
    fn new<T: Scalar>(params: &mut Params<T>, name: &str, cin: usize, cout: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        ResBlock {
            a: Conv2d::new(params, &format!("{name}.a"), cin, cout, 3, 1, dilation, rng),
            b: Conv2d::new(params, &format!("{name}.b"), cout, cout, 3, 1, dilation, rng),
            shortcut: (cin != cout).then(|| Conv2d::new(params, &format!("{name}.proj"), cin, cout, 1, 1, 1, rng)),
        }
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = tape.conv(x, &self.a);
        let h = tape.relu(h);
        let h = tape.conv(h, &self.b);
        let s = match &self.shortcut {
            Some(c) => tape.conv(x, c),
            None => x,
        };
        let y = tape.add(h, s);
        tape.relu(y)
    }
}

/// Residual feature extractor: 72×96 stem, then stages at 36×48, 18×24, 9×12 and a dilated 9×12.
pub struct ResidualTrunk {
    stem: Conv2d,
    stages: Vec<Vec<ResBlock>>,
    pub width: usize,
}

/// Trunk outputs used by heads.
pub struct TrunkFeatures {
    /// `width × 18 × 24`.
    pub mid: Var,
    /// `width × 9 × 12`.
    pub low: Var,
}

impl ResidualTrunk {
    pub fn new<T: Scalar>(params: &mut Params<T>, name: &str, cfg: &ClassifierConfig, cin: usize, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (c1, c2) = (cfg.width / 2, cfg.width);
        let stem = Conv2d::new(params, &format!("{name}.stem"), cin, c1, 1, 1, 1, rng);
        let plan = [(c1, c1, 1), (c1, c2, 1), (c2, c2, 1), (c2, c2, 2)];
        let stages = plan
            .iter()
            .enumerate()
            .map(|(s, &(cin, cout, dil))| {
                (0..cfg.depth)
                    .map(|d| {
                        let ci = if d == 0 { cin } else { cout };
                        ResBlock::new(params, &format!("{name}.s{s}.{d}"), ci, cout, dil, rng)
                    })
                    .collect()
            })
            .collect();
        Ok(ResidualTrunk {
            stem,
            stages,
            width: cfg.width,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> TrunkFeatures {
        let s = tape.conv(x, &self.stem);
        let mut h = tape.relu(s);
        let mut mid = h;
        for (i, stage) in self.stages.iter().enumerate() {
            if i < 3 {
                h = tape.avg_pool2(h);
            }
            for b in stage {
                h = b.forward(tape, h);
            }
            if i == 1 {
                mid = h;
            }
        }
        TrunkFeatures { mid, low: h }
    }
}

/// Two-layer perceptron head.
pub struct Mlp {
    hidden: Linear,
    out: Linear,
}

impl Mlp {
    pub fn new<T: Scalar>(params: &mut Params<T>, name: &str, fan_in: usize, hidden: usize, out: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            hidden: Linear::new(params, &format!("{name}.fc1"), fan_in, hidden, 1.0, rng),
            out: Linear::new(params, &format!("{name}.fc2"), hidden, out, 0.1, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = tape.linear(x, &self.hidden);
        let h = tape.relu(h);
        tape.linear(h, &self.out)
    }
}
