use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::SamplePair;
use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::models::{train_loop, ClassifierConfig, Module, SemanticModel, TrainConfig, TrainReport};
use crate::pose::{Point, Pose};
use crate::scalar::Scalar;

/// Shift magnitude range for displaced negatives, in pixels.
pub const SHIFT_RANGE: (f64, f64) = (40.0, 120.0);
/// Per-joint noise for perturbed negatives, in pixels.
pub const PERTURB_SIGMA: f64 = 15.0;
pub const DECISION_THRESHOLD: f64 = 0.5;

const SHIFT_TRIES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeKind {
    Replace,
    Shift,
    Perturb,
}

#[derive(Clone, Debug)]
pub struct SemanticExample<T> {
    pub image: Arc<ThermalFrame<T>>,
    pub pose: Pose<T>,
    pub label: bool,
    pub negative: Option<NegativeKind>,
    /// Index of the pair the example came from.
    pub source: usize,
}

fn all_in_image<T: Scalar>(p: &Pose<T>) -> bool {
    p.joints.iter().all(|j| j.in_image())
}

fn shifted<T: Scalar>(pose: &Pose<T>, rng: &mut ChaCha8Rng) -> Option<Pose<T>> {
    for _ in 0..SHIFT_TRIES {
        let d = rng.gen_range(SHIFT_RANGE.0..=SHIFT_RANGE.1);
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let cand = pose.translated(Point::new(T::lit(d * a.cos()), T::lit(d * a.sin())));
        if all_in_image(&cand) {
            return Some(cand);
        }
    }
    None
}

fn perturbed<T: Scalar>(pose: &Pose<T>, rng: &mut ChaCha8Rng) -> Pose<T> {
    let noise = Normal::new(0.0, PERTURB_SIGMA).expect("positive sigma");
    let mut out = pose.clone();
    for p in out.joints.iter_mut() {
        *p = Point::new(p.x + T::lit(noise.sample(rng)), p.y + T::lit(noise.sample(rng))).clamp_to_image();
    }
    out
}

fn replaced<T: Scalar>(pairs: &[SamplePair<T>], i: usize, rng: &mut ChaCha8Rng) -> Option<Pose<T>> {
    let pose = &pairs[i].past_pose;
    for _ in 0..SHIFT_TRIES {
        let j = rng.gen_range(0..pairs.len());
        let other = &pairs[j].past_pose;
        let cand = other.translated(pose.torso() - other.torso());
        if cand != *pose && all_in_image(&cand) {
            return Some(cand);
        }
    }
    None
}

/// One positive (the true past pose over the current frame) and one negative per pair.
///
/// The negative kind is drawn uniformly; when a replace or shift cannot produce an
/// in-frame pose different from the positive, the negative falls back to a perturbation.
pub fn make_semantic_dataset<T: Scalar>(pairs: &[SamplePair<T>], seed: u64) -> Result<Vec<SemanticExample<T>>> {
    if pairs.is_empty() {
        return Err(Error::data("no pairs to build plausibility examples from"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [NegativeKind::Replace, NegativeKind::Shift, NegativeKind::Perturb];
    let mut out = Vec::with_capacity(2 * pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        out.push(SemanticExample {
            image: p.image.clone(),
            pose: p.past_pose.clone(),
            label: true,
            negative: None,
            source: i,
        });
        let kind = *kinds.choose(&mut rng).expect("non-empty");
        let attempt = match kind {
            NegativeKind::Replace => replaced(pairs, i, &mut rng),
            NegativeKind::Shift => shifted(&p.past_pose, &mut rng),
            NegativeKind::Perturb => None,
        };
        let (kind, mut pose) = match attempt {
            Some(pose) => (kind, pose),
            None => (NegativeKind::Perturb, perturbed(&p.past_pose, &mut rng)),
        };
        while pose == p.past_pose {
            pose = perturbed(&p.past_pose, &mut rng);
        }
        out.push(SemanticExample {
            image: p.image.clone(),
            pose,
            label: false,
            negative: Some(kind),
            source: i,
        });
    }
    Ok(out)
}

/// Trained plausibility scorer with its measured accuracies.
pub struct SemanticClassifier<T> {
    pub model: SemanticModel<T>,
    pub threshold: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: Option<f64>,
    pub report: TrainReport,
}

impl<T: Scalar> SemanticClassifier<T> {
    pub fn from_model(model: SemanticModel<T>) -> Self {
        SemanticClassifier {
            model,
            threshold: DECISION_THRESHOLD,
            train_accuracy: f64::NAN,
            heldout_accuracy: None,
            report: TrainReport::default(),
        }
    }

    pub fn prob(&self, frame: &ThermalFrame<T>, pose: &Pose<T>) -> Result<f64> {
        Ok(self.model.prob(frame, pose)?.as_f64())
    }

    pub fn accepts(&self, frame: &ThermalFrame<T>, pose: &Pose<T>) -> Result<bool> {
        Ok(self.prob(frame, pose)? >= self.threshold)
    }

    /// Fraction of examples classified correctly.
    pub fn accuracy(&self, examples: &[SemanticExample<T>]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::data("no examples to score"));
        }
        let mut correct = 0usize;
        for e in examples {
            if self.accepts(&e.image, &e.pose)? == e.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }
}

/// Binary cross-entropy training of the plausibility scorer.
///
/// Augmentation applies to frame and pose together; examples whose pose leaves
/// the frame are redrawn.
pub fn train_semantic<T: Scalar>(
    train: &[SemanticExample<T>],
    heldout: Option<&[SemanticExample<T>]>,
    arch: &ClassifierConfig,
    init_seed: u64,
    cfg: &TrainConfig,
) -> Result<SemanticClassifier<T>> {
    let mut model = SemanticModel::build(arch, init_seed)?;
    let report = train_loop(
        &mut model,
        train.len(),
        cfg,
        |m, i, aug, grads| {
            let e = &train[i];
            let pose = aug.pose(&e.pose);
            if !all_in_image(&pose) {
                return Ok(None);
            }
            let image = aug.frame(&e.image);
            m.loss(&image, &pose, e.label, Some(grads)).map(Some)
        },
        |_, _, _| Ok(()),
    )?;
    let mut clf = SemanticClassifier::from_model(model);
    clf.report = report;
    clf.train_accuracy = clf.accuracy(train)?;
    if let Some(h) = heldout {
        clf.heldout_accuracy = Some(clf.accuracy(h)?);
    }
    Ok(clf)
}

/// Percentage of all hypotheses scored at or above the decision threshold.
pub fn semantic_score<T: Scalar>(
    classifier: &SemanticClassifier<T>,
    hypotheses: &[(&ThermalFrame<T>, &[Pose<T>])],
) -> Result<f64> {
    let mut total = 0usize;
    let mut accepted = 0usize;
    for (image, poses) in hypotheses {
        for p in poses.iter() {
            total += 1;
            if classifier.accepts(image, p)? {
                accepted += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::data("no hypotheses to score"));
    }
    Ok(100.0 * accepted as f64 / total as f64)
}
