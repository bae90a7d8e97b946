mod common;

use common::{random_vocab, synthetic_pairs};
use pastpose::heatmap::{GRID_H, GRID_W};
use pastpose::models::{
    load_checkpoint, save_checkpoint, ClassifierConfig, GoalModel, HeatmapBaselineModel, HourglassConfig, Module,
    ModuleKind, PoseModel, SemanticModel, TrainConfig, TypeArch, TypeModel,
};
use pastpose::pose::Point;

#[test]
fn stage_outputs_are_distributions() {
    let pairs = synthetic_pairs::<f32>(41, 1);
    let p = &pairs[0];
    let goal = GoalModel::<f32>::build(&HourglassConfig::desk(), 1).unwrap();
    let g = goal.forward(&p.image, &p.current_pose).unwrap();
    assert_eq!((g.channels, g.height, g.width), (1, GRID_H, GRID_W));
    assert!((g.channel_sum(0) - 1.0).abs() < 1e-4);

    let vocab = random_vocab::<f32>(7, 2);
    let ty = TypeModel::<f32>::build(&TypeArch { classifier: ClassifierConfig::desk(), k: 7 }, 2).unwrap();
    let probs = ty.forward(&p.image, &p.current_pose, Point::new(100.0, 150.0)).unwrap();
    assert_eq!(probs.len(), 7);
    assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);

    let pose = PoseModel::<f32>::build(&HourglassConfig::desk(), 3).unwrap();
    let r = Point::new(200.0, 180.0);
    let maps = pose.forward(&p.image, &p.current_pose, r, &vocab.center_pose(0, r).unwrap()).unwrap();
    assert_eq!(maps.channels, 14);
    for c in 0..14 {
        assert!((maps.channel_sum(c) - 1.0).abs() < 1e-4);
    }

    let direct = HeatmapBaselineModel::<f32>::build(&HourglassConfig::desk(), 4).unwrap();
    assert_eq!(direct.forward(&p.image, &p.current_pose).unwrap().channels, 15);

    let sem = SemanticModel::<f32>::build(&ClassifierConfig::desk(), 5).unwrap();
    let s = sem.prob(&p.image, &p.past_pose).unwrap();
    assert!((0.0..=1.0).contains(&s));
}

#[test]
fn checkpoints_restore_identical_outputs() {
    let pairs = synthetic_pairs::<f32>(42, 1);
    let p = &pairs[0];
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("ck").join("goal");
    let goal = GoalModel::<f32>::build(&HourglassConfig::desk(), 11).unwrap();
    let cfg = TrainConfig::desk(ModuleKind::Goal);
    let meta = save_checkpoint(&goal, &base, Some(&cfg), None, Some("d".into()), Some(1.5)).unwrap();
    let (back, meta2) = load_checkpoint::<f32, GoalModel<f32>>(&base).unwrap();
    assert_eq!(meta, meta2);
    assert_eq!(meta2.config, Some(cfg));
    assert_eq!(
        goal.forward(&p.image, &p.current_pose).unwrap(),
        back.forward(&p.image, &p.current_pose).unwrap()
    );
    let wrong = load_checkpoint::<f32, PoseModel<f32>>(&base);
    assert!(wrong.is_err());
}

#[test]
fn builds_are_deterministic_per_seed() {
    let a = PoseModel::<f64>::build(&HourglassConfig::desk(), 9).unwrap();
    let b = PoseModel::<f64>::build(&HourglassConfig::desk(), 9).unwrap();
    let c = PoseModel::<f64>::build(&HourglassConfig::desk(), 10).unwrap();
    assert_eq!(a.params().to_bytes(), b.params().to_bytes());
    assert_ne!(a.params().to_bytes(), c.params().to_bytes());
}

#[test]
fn training_configs_validate() {
    for kind in ModuleKind::ALL {
        TrainConfig::desk(kind).validate().unwrap();
        TrainConfig::full(kind).validate().unwrap();
        assert_eq!(ModuleKind::parse(kind.name()).unwrap(), kind);
    }
    let bad = TrainConfig { batch_size: 0, ..TrainConfig::desk(ModuleKind::Goal) };
    assert!(bad.validate().is_err());
    assert!(ModuleKind::parse("nonsense").is_err());
}
