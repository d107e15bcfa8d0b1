use std::collections::HashSet;

use promptprobe::curriculum::{
    self, score_difficulty, split_equal_thirds, split_thresholds, stage_boundaries, step_budget, Chunks,
    CurriculumSchedule, DifficultyScores, HeuristicSpec,
};
use promptprobe::heads::{train, HeadConfig, HeadVariant, JointHeadModel, TrainingSet};
use promptprobe::synth::{generate, SynthSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores(values: &[f64]) -> DifficultyScores {
    DifficultyScores {
        ids: (0..values.len() as u64).collect(),
        per_sample: values.to_vec(),
        epochs_used: 1,
    }
}

fn sizes(c: &Chunks) -> (usize, usize, usize) {
    (c.easy.len(), c.medium.len(), c.hard.len())
}

#[test]
fn equal_thirds_examples() {
    let distinct: Vec<f64> = (0..9).map(|i| i as f64 / 10.0).collect();
    assert_eq!(sizes(&split_equal_thirds(&scores(&distinct)).unwrap().0), (3, 3, 3));
    let ten: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let (c, _) = split_equal_thirds(&scores(&ten)).unwrap();
    assert_eq!(sizes(&c), (4, 3, 3));
    assert_eq!(c.easy, vec![9, 8, 7, 6]);
    let (c, _) = split_equal_thirds(&scores(&[0.5; 6])).unwrap();
    assert_eq!((c.easy, c.medium, c.hard), (vec![0, 1], vec![2, 3], vec![4, 5]));
    assert!(split_equal_thirds(&scores(&[0.1, 0.2])).is_err());
}

#[test]
fn threshold_examples() {
    let (c, spec) = split_thresholds(&scores(&[0.9, 0.5, 0.1]), Some(0.8), Some(0.2)).unwrap();
    assert_eq!((c.easy, c.medium, c.hard), (vec![0], vec![1], vec![2]));
    assert_eq!(spec, HeuristicSpec::Thresholds { tau_easy: 0.8, tau_hard: 0.2 });
    let (c, _) = split_thresholds(&scores(&[0.9, 0.95]), Some(0.5), Some(0.1)).unwrap();
    assert_eq!(sizes(&c), (2, 0, 0));
    assert!(split_thresholds(&scores(&[0.9]), Some(0.2), Some(0.2)).is_err());
    assert!(split_thresholds(&scores(&[0.1, 0.2]), Some(0.5), Some(0.0)).is_err());
}

/// Percentile by linear interpolation between closest ranks.
fn oracle_percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor();
    s[lo as usize] + (h - lo) * (s[(lo as usize + 1).min(s.len() - 1)] - s[lo as usize])
}

#[test]
fn default_thresholds_on_uniform_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (c, spec) = split_thresholds(&scores(&v), None, None).unwrap();
    let HeuristicSpec::Thresholds { tau_easy, tau_hard } = spec else { panic!() };
    assert!((tau_easy - oracle_percentile(&v, 0.4)).abs() < 1e-15);
    assert!((tau_hard - oracle_percentile(&v, 0.1)).abs() < 1e-15);
    assert!((599..=601).contains(&c.easy.len()), "{}", c.easy.len());
    assert!((99..=101).contains(&c.hard.len()), "{}", c.hard.len());
}

#[test]
fn stage_boundaries_at_thirds() {
    assert_eq!(stage_boundaries(90).unwrap(), [30, 60]);
    assert_eq!(stage_boundaries(10).unwrap(), [3, 6]);
    assert!(stage_boundaries(2).is_err());
}

fn check_partition(c: &Chunks, n: usize) -> bool {
    let all: Vec<u64> = c.easy.iter().chain(&c.medium).chain(&c.hard).copied().collect();
    let set: HashSet<u64> = all.iter().copied().collect();
    all.len() == n && set == (0..n as u64).collect()
}

proptest! {
    #[test]
    fn chunks_partition_ids(v in prop::collection::vec(-1.0f64..1.0, 3..200), te in 0.0f64..1.0, th in -1.0f64..0.0) {
        let s = scores(&v);
        let (c, _) = split_equal_thirds(&s).unwrap();
        prop_assert!(check_partition(&c, v.len()));
        let (a, b, d) = sizes(&c);
        prop_assert!(a.max(b).max(d) - a.min(b).min(d) <= 1);
        let min_easy = c.easy.iter().map(|&i| v[i as usize]).fold(f64::INFINITY, f64::min);
        let max_med = c.medium.iter().map(|&i| v[i as usize]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_easy >= max_med);
        if let Ok((c, _)) = split_thresholds(&s, Some(te), Some(th)) {
            prop_assert!(check_partition(&c, v.len()));
            prop_assert!(c.easy.iter().all(|&i| v[i as usize] >= te));
            prop_assert!(c.hard.iter().all(|&i| v[i as usize] < th));
        }
    }

    #[test]
    fn scoring_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..30, epochs in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hist: Vec<Vec<f64>> = (0..epochs).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ids: Vec<u64> = (0..n as u64).collect();
        let base = score_difficulty(&hist, &ids).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(n / 3);
        let ph: Vec<Vec<f64>> = hist.iter().map(|e| perm.iter().map(|&p| e[p]).collect()).collect();
        let pids: Vec<u64> = perm.iter().map(|&p| ids[p]).collect();
        let permuted = score_difficulty(&ph, &pids).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            prop_assert_eq!(permuted.per_sample[k], base.per_sample[p]);
            prop_assert_eq!(permuted.ids[k], base.ids[p]);
        }
    }
}

fn setup(n: usize, seed: u64) -> (HeadConfig, TrainingSet) {
    let data = generate(&SynthSpec::noiseless(n, 8, 4, 12, seed)).unwrap();
    let set = TrainingSet::new(&data.features, &data.targets, &data.labels).unwrap();
    let mut cfg = HeadConfig::new(HeadVariant::EmbedIntoClass, 8, 4, 12);
    cfg.learning_rate = 0.02;
    cfg.batch_size = 16;
    cfg.seed = seed;
    (cfg, set)
}

#[test]
fn all_easy_schedule_replays_vanilla_training() {
    let (cfg, set) = setup(100, 1);
    let mut vanilla = JointHeadModel::new(cfg.clone()).unwrap();
    let vh = train::train_on(&mut vanilla, &set).unwrap();
    let chunks = Chunks {
        easy: set.ids.iter().rev().copied().collect(),
        medium: vec![],
        hard: vec![],
    };
    let schedule = CurriculumSchedule::new(chunks, HeuristicSpec::EqualThirds, step_budget(&cfg, set.len())).unwrap();
    let (model, history) = curriculum::curriculum_train(&cfg, &set, &schedule).unwrap();
    assert_eq!(model.params, vanilla.params);
    assert_eq!(history, vh);
}

#[test]
fn stages_draw_from_growing_pools_and_stage_three_sees_everything() {
    let (mut cfg, set) = setup(90, 2);
    cfg.epochs = 6;
    let v: Vec<f64> = (0..90).map(|i| (i as f64 * 0.37).sin()).collect();
    let s = DifficultyScores {
        ids: set.ids.clone(),
        per_sample: v,
        epochs_used: 1,
    };
    let (chunks, spec) = split_equal_thirds(&s).unwrap();
    let budget = step_budget(&cfg, set.len());
    let schedule = CurriculumSchedule::new(chunks.clone(), spec, budget).unwrap();
    let easy: HashSet<usize> = chunks.easy.iter().map(|&i| i as usize).collect();
    let mut early = easy.clone();
    early.extend(chunks.medium.iter().map(|&i| i as usize));
    let mut seen3 = HashSet::new();
    let mut steps = [0usize; 3];
    curriculum::curriculum_train_with(&cfg, &set, &schedule, |stage, batch| {
        steps[stage] += 1;
        match stage {
            0 => assert!(batch.iter().all(|r| easy.contains(r))),
            1 => assert!(batch.iter().all(|r| early.contains(r))),
            _ => seen3.extend(batch.iter().copied()),
        }
    })
    .unwrap();
    assert_eq!(steps, [12, 12, 12]);
    assert_eq!(seen3.len(), 90);
}

#[test]
fn budget_mismatch_and_bad_schedules_are_rejected() {
    let (cfg, set) = setup(30, 3);
    let ids = set.ids.clone();
    let chunks = Chunks {
        easy: ids[..10].to_vec(),
        medium: ids[10..20].to_vec(),
        hard: ids[20..].to_vec(),
    };
    let budget = step_budget(&cfg, set.len());
    let wrong = CurriculumSchedule::new(chunks.clone(), HeuristicSpec::EqualThirds, budget + 1).unwrap();
    assert!(curriculum::curriculum_train(&cfg, &set, &wrong).is_err());
    let mut missing = chunks.clone();
    missing.hard.pop();
    let s = CurriculumSchedule::new(missing, HeuristicSpec::EqualThirds, budget).unwrap();
    assert!(curriculum::curriculum_train(&cfg, &set, &s).is_err());
    let empty_easy = Chunks {
        easy: vec![],
        medium: ids.clone(),
        hard: vec![],
    };
    let s = CurriculumSchedule::new(empty_easy, HeuristicSpec::EqualThirds, budget).unwrap();
    assert!(curriculum::curriculum_train(&cfg, &set, &s).is_err());
}

#[test]
fn schedule_json_round_trip() {
    let (chunks, spec) = split_thresholds(&scores(&[0.9, 0.5, 0.1, 0.7]), Some(0.6), Some(0.2)).unwrap();
    let s = CurriculumSchedule::new(chunks, spec, 30).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert!(text.contains("\"kind\":\"thresholds\""), "{text}");
    assert_eq!(serde_json::from_str::<CurriculumSchedule>(&text).unwrap(), s);
}
