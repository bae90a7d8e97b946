mod common;

use common::{random_pose, synthetic_pairs, untrained_models};
use pastpose::heatmap::{HeatmapGrid, GRID_CELLS, GRID_H, GRID_W};
use pastpose::pipeline::{
    infer_past, knn_baseline_build, nll_ground_truth, rank_candidates, score_candidate, top_k_classes,
    zero_parameters, InferenceConfig, KnnPool, OraclePredictor, PastPredictor,
};
use pastpose::pose::Pose;
use pastpose::skeleton::{JOINTS, TORSO};
use pastpose::vocab::build_vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn inference_returns_m_hypotheses_with_types_in_top_k() {
    let models = untrained_models::<f32>(12, 3);
    let pairs = synthetic_pairs::<f32>(11, 1);
    let pair = &pairs[0];
    let mut support = std::collections::HashMap::new();
    for seed in 0..100u64 {
        let cfg = InferenceConfig { seed, ..InferenceConfig::default() };
        let res = infer_past(&models, &pair.image, &pair.current_pose, &cfg).unwrap();
        assert_eq!(res.hypotheses.len(), 30);
        for h in &res.hypotheses {
            let key = (h.r.x.to_bits(), h.r.y.to_bits());
            let top = support.entry(key).or_insert_with(|| {
                let probs = models.type_model.forward(&pair.image, &pair.current_pose, h.r).unwrap();
                top_k_classes(&probs, 5)
            });
            assert!(top.contains(&h.z), "type {} outside top-5 at seed {seed}", h.z);
            assert_eq!(h.pose.joints[TORSO], h.r);
        }
    }
}

#[test]
fn inference_is_deterministic_per_seed() {
    let models = untrained_models::<f32>(6, 5);
    let pairs = synthetic_pairs::<f32>(12, 1);
    let p = &pairs[0];
    let cfg = InferenceConfig { seed: 42, ..InferenceConfig::default() };
    let a = infer_past(&models, &p.image, &p.current_pose, &cfg).unwrap().to_json().unwrap();
    let b = infer_past(&models, &p.image, &p.current_pose, &cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    let other = InferenceConfig { seed: 43, ..cfg };
    let c = infer_past(&models, &p.image, &p.current_pose, &other).unwrap().to_json().unwrap();
    assert_ne!(a, c);
}

#[test]
fn top_k_breaks_ties_toward_lower_index() {
    assert_eq!(top_k_classes(&[0.2f64, 0.3, 0.2, 0.3], 3), vec![1, 3, 0]);
    assert_eq!(top_k_classes(&[0.5f64, 0.5], 5), vec![0, 1]);
}

#[test]
fn zeroed_models_give_the_uniform_nll() {
    let k = 200;
    let mut models = untrained_models::<f64>(k, 9);
    zero_parameters(&mut models.goal);
    zero_parameters(&mut models.type_model);
    zero_parameters(&mut models.pose);
    let mut pairs = synthetic_pairs::<f64>(13, 1);
    let expected = 15.0 * (GRID_CELLS as f64).ln() + (k as f64).ln();
    assert!((expected - 137.91).abs() < 0.01);
    for p in pairs.iter_mut().take(3) {
        p.past_type = Some(models.vocab.assign(&p.past_pose).unwrap());
        let nll = nll_ground_truth(&models, p).unwrap();
        assert!((nll - expected).abs() < 1e-6, "{nll} vs {expected}");
    }
}

#[test]
fn nll_requires_a_pose_type() {
    let models = untrained_models::<f32>(4, 1);
    let pairs = synthetic_pairs::<f32>(14, 1);
    assert!(nll_ground_truth(&models, &pairs[0]).is_err());
}

/// Sorted `(distance², index)` over the whole pool.
fn linear_scan(pool: &KnnPool<f64>, q: &Pose<f64>) -> Vec<(f64, usize)> {
    let qt = q.torso();
    let mut d: Vec<(f64, usize)> = pool
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let et = e.current.torso();
            let mut s = 0.0;
            for j in (0..JOINTS).filter(|&j| j != TORSO) {
                let dx = (q.joints[j].x - qt.x) - (e.current.joints[j].x - et.x);
                let dy = (q.joints[j].y - qt.y) - (e.current.joints[j].y - et.y);
                s += dx * dx + dy * dy;
            }
            (s, i)
        })
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    d
}

#[test]
fn knn_matches_linear_scan() {
    let pairs = synthetic_pairs::<f64>(21, 6);
    let pool = knn_baseline_build(&pairs, 1).unwrap();
    assert!(pool.len() >= 30, "pool has {} entries", pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..1000 {
        let q = if i % 2 == 0 {
            random_pose(&mut rng)
        } else {
            let base = &pool.entries[rng.gen_range(0..pool.len())].current;
            base.translated(pastpose::pose::Point::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)))
        };
        // Near-equal distances may round differently, so compare the distance profile.
        let oracle = linear_scan(&pool, &q);
        let dist: std::collections::HashMap<usize, f64> = oracle.iter().map(|&(d, i)| (i, d)).collect();
        let got = pool.nearest(&q, 30).unwrap();
        for (rank, i) in got.iter().enumerate() {
            let (a, b) = (dist[i], oracle[rank].0);
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "query {i}: rank {rank} {a} vs {b}");
        }
    }
}

#[test]
fn knn_query_reanchors_on_the_query_torso() {
    let pairs = synthetic_pairs::<f64>(22, 3);
    let pool = knn_baseline_build(&pairs, 1).unwrap();
    let e = &pool.entries[0];
    let shift = pastpose::pose::Point::new(8.0, -4.0);
    let q = e.current.translated(shift);
    let out = pool.query(&q, 1).unwrap();
    assert_eq!(pool.nearest(&q, 1).unwrap(), vec![0]);
    for j in 0..JOINTS {
        assert!((out[0].joints[j].x - (e.past.joints[j].x + shift.x)).abs() < 1e-9);
        assert!((out[0].joints[j].y - (e.past.joints[j].y + shift.y)).abs() < 1e-9);
    }
}

#[test]
fn knn_stride_keeps_every_nth_pair_per_clip() {
    let pairs = synthetic_pairs::<f64>(23, 4);
    let full = knn_baseline_build(&pairs, 1).unwrap();
    let thin = knn_baseline_build(&pairs, 3).unwrap();
    let by_clip = pastpose::dataset::pairs_by_clip(&pairs);
    let expected: usize = by_clip.values().map(|v| v.len().div_ceil(3)).sum();
    assert_eq!(full.len(), pairs.len());
    assert_eq!(thin.len(), expected);
    assert!(knn_baseline_build(&pairs, 0).is_err());
}

#[test]
fn knn_pool_roundtrips_through_disk() {
    let pairs = synthetic_pairs::<f64>(24, 2);
    let pool = knn_baseline_build(&pairs, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    pool.save(&dir.path().join("pool")).unwrap();
    assert_eq!(KnnPool::<f64>::load(&dir.path().join("pool")).unwrap(), pool);
}

fn random_maps(rng: &mut impl Rng) -> HeatmapGrid<f64> {
    let values = (0..JOINTS * GRID_CELLS).map(|_| rng.gen_range(0.0..1.0f64).powi(4)).collect();
    let mut h = HeatmapGrid::from_values(JOINTS, GRID_H, GRID_W, values, false).unwrap();
    h.normalize().unwrap();
    h
}

#[test]
fn candidate_scores_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let maps = random_maps(&mut rng);
    let candidates: Vec<Pose<f64>> = (0..60).map(|_| random_pose(&mut rng)).collect();
    let brute: Vec<f64> = candidates
        .iter()
        .map(|c| {
            (0..JOINTS)
                .map(|j| {
                    let col = ((c.joints[j].x / 4.0).floor() as usize).min(GRID_W - 1);
                    let row = ((c.joints[j].y / 4.0).floor() as usize).min(GRID_H - 1);
                    maps.values[j * GRID_CELLS + row * GRID_W + col].max(1e-12).ln()
                })
                .sum()
        })
        .collect();
    for (c, b) in candidates.iter().zip(&brute) {
        assert!((score_candidate(&maps, c) - b).abs() < 1e-9);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| brute[b].partial_cmp(&brute[a]).unwrap().then(a.cmp(&b)));
    let ranked: Vec<usize> = rank_candidates(&maps, &candidates, 30).unwrap().into_iter().map(|x| x.0).collect();
    assert_eq!(ranked, order[..30]);
    assert!(rank_candidates(&maps, &candidates[..10], 30).is_err());
}

#[test]
fn oracle_predictor_repeats_the_ground_truth() {
    let pairs = synthetic_pairs::<f32>(25, 1);
    let pred = OraclePredictor.predict(&pairs[0], &InferenceConfig::default()).unwrap();
    assert_eq!(pred.poses.len(), 30);
    assert!(pred.poses.iter().all(|p| *p == pairs[0].past_pose));
}

#[test]
fn models_reject_a_vocabulary_of_the_wrong_size() {
    let m = untrained_models::<f32>(4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let poses: Vec<Pose<f32>> = (0..20).map(|_| random_pose(&mut rng)).collect();
    let v5 = build_vocabulary(&poses, 5, 0).unwrap();
    assert!(pastpose::pipeline::PastPoseModels::new(m.goal, m.type_model, m.pose, v5).is_err());
}
