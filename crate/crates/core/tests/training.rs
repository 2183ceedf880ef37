mod common;

use approx::assert_abs_diff_eq;
use common::*;
use kbrl::corpus::{BaseDifficulties, DifficultyRecord, SyntheticCorpus};
use kbrl::graph::{build_graph, SimilarityGraph};
use kbrl::retrieval::{
    build_text_index, modify_ranking, phi_for_gap, RetrievedEntry, RetrievedSet, Retriever,
    TextIndex,
};
use kbrl::rl::{compute_advantages, reward_exact_match, PolicyAdapter, SimParams, SimPolicy};
use kbrl::rng::{substream, STREAM_EVAL};
use kbrl::trainer::{
    evaluate, parse_metrics_csv, run_training, run_with_policy, split_samples, write_metrics,
    EvalConfig, Mode, RunRecord, TrainerConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    synth: SyntheticCorpus,
    index: TextIndex,
    graph: SimilarityGraph,
}

fn fixture(seed: u64) -> Fixture {
    let synth = small_synth(seed);
    let index = build_text_index(&synth.corpus, 256).unwrap();
    let graph = build_graph(&synth.corpus, 10).unwrap();
    Fixture { synth, index, graph }
}

fn small_config(mode: Mode, iterations: usize) -> TrainerConfig {
    TrainerConfig {
        mode,
        iterations,
        batch_size: 4,
        w: 8,
        eval_every: 5,
        snapshot_every: 5,
        seed: 3,
        ..TrainerConfig::default()
    }
}

fn train(f: &Fixture, cfg: &TrainerConfig) -> kbrl::trainer::MetricsLog {
    run_training(cfg, &f.synth.corpus, &f.index, &f.graph, &f.synth.difficulties).unwrap()
}

#[test]
fn one_correct_of_four() {
    let (adv, ignored) = compute_advantages(&[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(!ignored);
    // mean 1/4, population std sqrt(3)/4
    let s = 3f64.sqrt() / 4.0;
    let expected = [0.75 / s, -0.25 / s, -0.25 / s, -0.25 / s];
    for (a, e) in adv.iter().zip(expected) {
        assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(adv[0], 1.7320508, epsilon = 1e-6);
    assert_abs_diff_eq!(adv.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    assert_eq!(compute_advantages(&[1.0; 4]).unwrap(), (vec![0.0; 4], true));
    assert!(compute_advantages(&[1.0]).is_err());
}

fn gt_only(sample: &kbrl::corpus::VqaSample, extra: usize) -> RetrievedSet {
    let entry = |id: &str| RetrievedEntry {
        article_id: id.into(),
        passage_index: 0,
        score: 0.5,
        v_score: 0.5,
        t_score: 0.0,
        injected: false,
    };
    let mut entries = vec![entry(&sample.gt_article_id)];
    entries.extend((0..extra).map(|i| entry(&format!("other{i}"))));
    RetrievedSet { entries, lambda: 0.985 }
}

#[test]
fn success_probability_closed_form() {
    let s = sample("s", "gt", "q", &[1.0]);
    let policy = SimPolicy::new(SimParams::default(), vec![0.5]).unwrap();
    assert_abs_diff_eq!(policy.success_prob(&s, &gt_only(&s, 0), 0.5), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(policy.success_prob(&s, &gt_only(&s, 0), 0.7), 0.3, epsilon = 1e-12);
    // Missing ground truth at d = 0.5: σ(−2).
    let miss = RetrievedSet { entries: vec![], lambda: 0.985 };
    assert_abs_diff_eq!(policy.success_prob(&s, &miss, 0.5), 0.11920292, epsilon = 1e-8);
    // Two distractors at d = 0.5: σ(−0.3).
    let p = 1.0 / (1.0 + 0.3f64.exp());
    assert_abs_diff_eq!(policy.success_prob(&s, &gt_only(&s, 2), 0.5), p, epsilon = 1e-12);
}

#[test]
fn rollout_frequency_matches_probability() {
    let s = sample("s", "gt", "q", &[1.0]);
    let policy = SimPolicy::new(SimParams::default(), vec![0.7]).unwrap();
    let set = gt_only(&s, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20_000;
    let hits: f64 = (0..n)
        .map(|_| reward_exact_match(&policy.answer(0, &s, &set, &mut rng), &s.answer))
        .sum();
    assert_abs_diff_eq!(hits / n as f64, 0.3, epsilon = 0.02);
}

#[test]
fn informative_groups_raise_competence() {
    let mut s = sample("s", "gt", "q", &[1.0]);
    s.topic_id = Some("t".into());
    let mut policy = SimPolicy::new(SimParams::default(), vec![0.5]).unwrap();
    let g = kbrl::rl::RolloutGroup::from_rewards(0, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    policy.update(&[(&s, &g)]);
    // mean |adv| = (1.732 + 3 * 0.577) / 4 = sqrt(3)/2
    let signal = 3f64.sqrt() / 2.0;
    assert_abs_diff_eq!(policy.state.competence, 0.05 * signal, epsilon = 1e-12);
    assert_abs_diff_eq!(policy.state.topic_competence["t"], 0.1 * signal, epsilon = 1e-12);
}

#[test]
fn split_is_a_partition() {
    let (train, eval) = split_samples(50, 0.2, 9);
    assert_eq!(eval.len(), 10);
    let mut all: Vec<usize> = train.iter().chain(&eval).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
    assert_eq!(split_samples(50, 0.2, 9), (train, eval));
    assert_eq!(split_samples(3, 0.0, 1).1.len(), 0);
}

#[test]
fn evaluate_replays_by_hand() {
    let f = fixture(5);
    let corpus = &f.synth.corpus;
    let r = Retriever::new(corpus, &f.index, 0.985).unwrap();
    let rankings = r.rank_samples().unwrap();
    let policy = SimPolicy::new(SimParams::default(), f.synth.difficulties.aligned(corpus).unwrap()).unwrap();
    let indices: Vec<usize> = (0..corpus.samples().len()).step_by(3).collect();
    let cfg = EvalConfig { max_gap: 6, lambda: 0.985, seed: 4, round: 12 };
    let got = evaluate(&policy, corpus, &rankings, &indices, &cfg).unwrap();

    let mut correct = 0;
    for &i in &indices {
        let s = &corpus.samples()[i];
        let top5: Vec<RetrievedEntry> = rankings[i][..5].to_vec();
        let set = RetrievedSet { entries: top5, lambda: 0.985 };
        let mut rng = substream(4, &[STREAM_EVAL, 12, i as u64]);
        if policy.answer(i, s, &set, &mut rng) == s.answer {
            correct += 1;
        }
    }
    assert_eq!(got, correct as f64 / indices.len() as f64);
    assert!(evaluate(&policy, corpus, &rankings, &[], &cfg).is_err());
}

#[test]
fn metrics_rederive_from_group_log() {
    let f = fixture(6);
    let log = train(&f, &small_config(Mode::Full, 12));
    assert_eq!(log.records.len(), 12);
    let mut cumulative = 0;
    for rec in &log.records {
        let groups: Vec<_> = log.groups.iter().filter(|g| g.iteration == rec.iteration).collect();
        assert_eq!(groups.len(), 4);
        let ignored = groups
            .iter()
            .filter(|g| g.rewards.iter().all(|&r| r == g.rewards[0]))
            .count();
        assert!(groups.iter().all(|g| g.ignored == g.rewards.iter().all(|&r| r == g.rewards[0])));
        cumulative += ignored;
        assert_eq!(rec.zero_adv_fraction, ignored as f64 / 4.0);
        assert_eq!(rec.cumulative_ignored, cumulative);
        let mut batch: Vec<usize> = groups.iter().map(|g| g.sample_index).collect();
        batch.sort_unstable();
        batch.dedup();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|i| !log.summary.eval_samples.contains(i)));
    }
    assert_eq!(log.summary.total_ignored, cumulative);
}

#[test]
fn written_files_round_trip() {
    let f = fixture(7);
    let log = train(&f, &small_config(Mode::Full, 10));
    let dir = tempfile::tempdir().unwrap();
    write_metrics(&log, dir.path()).unwrap();
    let rows = parse_metrics_csv(&std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    let rec = RunRecord::from_json(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(rec.config, log.config);
    assert_eq!(rec.corpus_hash, f.synth.corpus.content_hash());
    assert_eq!(rec.iterations_completed, 10);
    let snaps = std::fs::read_dir(dir.path().join("difficulty_snapshots")).unwrap().count();
    assert_eq!(snaps, 2);
    let groups = std::fs::read_to_string(dir.path().join("groups.csv")).unwrap();
    assert_eq!(groups.lines().count(), 1 + 40);
}

#[test]
fn zero_iterations_give_an_empty_log() {
    let f = fixture(8);
    let log = train(&f, &small_config(Mode::Full, 0));
    assert!(log.records.is_empty() && log.groups.is_empty());
    assert_eq!(log.summary.final_g, 1);
    assert_eq!(parse_metrics_csv(&log.metrics_csv()).unwrap().len(), 0);
}

#[test]
fn vanilla_stays_at_the_hardest_level() {
    let f = fixture(9);
    let mut cfg = small_config(Mode::Vanilla, 30);
    cfg.tau = 0.01;
    let log = train(&f, &cfg);
    assert!(log.records.iter().all(|r| r.g == 6 && !r.upgraded));
    assert!(log.summary.upgrade_iterations.is_empty());
    assert!(log.summary.final_estimates.iter().all(|&h| h == 0.0));
}

#[test]
fn data_curriculum_levels_never_decrease() {
    let f = fixture(10);
    let mut cfg = small_config(Mode::DataOnly, 60);
    cfg.tau = 0.05;
    cfg.w = 2;
    let log = train(&f, &cfg);
    assert!(log.records.windows(2).all(|w| w[1].g >= w[0].g && w[1].g - w[0].g <= 1));
    assert_eq!(log.summary.final_g, 6);
    let ups: Vec<usize> = log.records.iter().filter(|r| r.upgraded).map(|r| r.iteration).collect();
    assert_eq!(ups, log.summary.upgrade_iterations);
    assert_eq!(ups.len(), 5);
}

#[test]
fn same_seed_same_run() {
    let f = fixture(11);
    for mode in Mode::ALL {
        let cfg = small_config(mode, 15);
        let (a, b) = (train(&f, &cfg), train(&f, &cfg));
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert_eq!(a.groups, b.groups);
        assert_eq!(a.summary.final_state, b.summary.final_state);
    }
    let mut other = small_config(Mode::Full, 15);
    other.seed = 4;
    assert_ne!(train(&f, &other).groups, train(&f, &small_config(Mode::Full, 15)).groups);
}

#[test]
fn hopeless_samples_never_move_the_policy() {
    let f = fixture(12);
    let ones = BaseDifficulties::new(f.synth.corpus.samples().iter().map(|s| DifficultyRecord {
        sample_id: s.id.clone(),
        base_difficulty: 1.0,
    }))
    .unwrap();
    let cfg = small_config(Mode::Full, 20);
    let policy = SimPolicy::new(cfg.sim_params(), ones.aligned(&f.synth.corpus).unwrap()).unwrap();
    let (log, policy) =
        run_with_policy(&cfg, &f.synth.corpus, &f.index, &f.graph, policy).unwrap();
    assert_eq!(log.summary.total_ignored, 20 * 4);
    assert!(log.records.iter().all(|r| r.zero_adv_fraction == 1.0));
    assert_eq!(policy.state.competence, 0.0);
    assert!(policy.state.topic_competence.is_empty());
}

#[test]
fn hardest_level_matches_natural_top_k() {
    let f = fixture(13);
    let r = Retriever::new(&f.synth.corpus, &f.index, 0.985).unwrap();
    for s in f.synth.corpus.samples().iter().take(10) {
        let ranked = r.rank_all(s).unwrap();
        let set = modify_ranking(&ranked, &s.gt_article_id, phi_for_gap(6, 6).unwrap(), 0.985).unwrap();
        assert_eq!(set.entries, r.retrieve(s, 5).unwrap().entries);
    }
}
