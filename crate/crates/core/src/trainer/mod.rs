//! The curriculum training loop.
//!
//! Each iteration: draw a batch (Gaussian over estimated reward or uniform),
//! build each sample's retrieval under the current gap level, roll out the
//! policy, update it from the informative groups, feed the sliding window and
//! maybe promote the gap level, then refresh the difficulty estimates.

mod config;
mod metrics;
mod report;

use std::time::Instant;

use crate::corpus::{BaseDifficulties, Corpus};
use crate::curriculum::{
    sample_batch_from, sample_uniform_from, DifficultyStore, GapState, RewardHistory,
    SamplerConfig, SlidingWindow,
};
use crate::error::{Error, Result};
use crate::graph::{propagate_with, ObservationVector, SimilarityGraph};
use crate::retrieval::{modify_ranking, phi_for_gap, RetrievedEntry, Retriever, TextIndex};
use crate::rl::{reward_exact_match, rollout_group, PolicyAdapter, RolloutGroup, SimPolicy};
use crate::rng::{substream, STREAM_EVAL, STREAM_ROLLOUT, STREAM_SAMPLING, STREAM_SPLIT};

pub use config::{Mode, ObservationSource, TrainerConfig, WindowGranularity};
pub use metrics::{
    parse_metrics_csv, write_metrics, DifficultySnapshot, GroupLog, IterationRecord, MetricsLog,
    MetricsRow, RunRecord, RunSummary,
};
pub use report::{compare_runs, Comparison, RunStats};

/// Splits sample indices into (training pool, held-out evaluation set).
pub fn split_samples(n: usize, eval_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_eval = ((n as f64) * eval_fraction).round() as usize;
    let n_eval = n_eval.min(n.saturating_sub(1));
    let mut rng = substream(seed, &[STREAM_SPLIT]);
    let mut eval: Vec<usize> = rand::seq::index::sample(&mut rng, n, n_eval).into_vec();
    eval.sort_unstable();
    let mut is_eval = vec![false; n];
    eval.iter().for_each(|&i| is_eval[i] = true);
    let train = (0..n).filter(|&i| !is_eval[i]).collect();
    (train, eval)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub max_gap: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Distinguishes evaluation rounds; usually the iteration number.
    pub round: u64,
}

/// Held-out accuracy under the hardest retrieval setting, one rollout per
/// sample. The random stream depends only on `(seed, round, sample)`, so
/// runs with the same seed evaluate against the same draws.
pub fn evaluate<P: PolicyAdapter + ?Sized>(
    policy: &P,
    corpus: &Corpus,
    rankings: &[Vec<RetrievedEntry>],
    indices: &[usize],
    cfg: &EvalConfig,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::invalid("eval set", "no held-out samples"));
    }
    let hardest = phi_for_gap(cfg.max_gap, cfg.max_gap)?;
    let mut correct = 0.0;
    for &i in indices {
        let sample = &corpus.samples()[i];
        let retrieved = modify_ranking(&rankings[i], &sample.gt_article_id, hardest, cfg.lambda)?;
        let mut rng = substream(cfg.seed, &[STREAM_EVAL, cfg.round, i as u64]);
        let answer = policy.answer(i, sample, &retrieved, &mut rng);
        correct += reward_exact_match(&answer, &sample.answer);
    }
    Ok(correct / indices.len() as f64)
}

/// Runs the full loop with the simulated policy.
pub fn run_training(
    config: &TrainerConfig,
    corpus: &Corpus,
    index: &TextIndex,
    graph: &SimilarityGraph,
    difficulties: &BaseDifficulties,
) -> Result<MetricsLog> {
    config.validate()?;
    let policy = SimPolicy::new(config.sim_params(), difficulties.aligned(corpus)?)?;
    let (log, policy) = run_with_policy(config, corpus, index, graph, policy)?;
    let mut log = log;
    log.summary.final_state = Some(policy.state);
    Ok(log)
}

/// Runs the loop with any policy adapter, returning the trained policy.
pub fn run_with_policy<P: PolicyAdapter>(
    config: &TrainerConfig,
    corpus: &Corpus,
    index: &TextIndex,
    graph: &SimilarityGraph,
    mut policy: P,
) -> Result<(MetricsLog, P)> {
    let started = Instant::now();
    config.validate()?;
    index.verify(corpus)?;
    graph.verify(corpus)?;
    let kernel = graph.clone().row_normalize();
    let retriever = Retriever::new(corpus, index, config.lambda)?;
    let n = corpus.samples().len();
    if n == 0 {
        return Err(Error::invalid("corpus", "no samples to train on"));
    }
    if corpus.articles().len() < config.max_gap - 1 {
        return Err(Error::invalid(
            "G",
            format!("the hardest level needs {} articles", config.max_gap - 1),
        ));
    }
    let (pool, eval_set) = split_samples(n, config.eval_fraction, config.seed);
    if config.batch_size > pool.len() {
        return Err(Error::invalid(
            "batch_size",
            format!("{} exceeds the {} training samples", config.batch_size, pool.len()),
        ));
    }
    let rankings = retriever.rank_samples()?;

    let mode = config.mode;
    let sampler = SamplerConfig {
        sigma: config.sigma,
        batch_size: config.batch_size,
    };
    let mut gap = GapState::new(
        if mode.data_curriculum() { config.initial_gap } else { config.max_gap },
        config.max_gap,
        config.tau,
    )?;
    let mut window = SlidingWindow::new(config.w)?;
    let mut store = DifficultyStore::new(n);
    let mut history = RewardHistory::new(n);
    let prop_cfg = config.propagation();

    let mut records = Vec::with_capacity(config.iterations);
    let mut groups_log = Vec::new();
    let mut snapshots = Vec::new();
    let mut cumulative_ignored = 0;
    let mut upgrade_iterations = Vec::new();
    let mut last_eval = None;

    for iteration in 1..=config.iterations {
        let it = iteration as u64;
        let mut rng = substream(config.seed, &[STREAM_SAMPLING, it]);
        let batch = if mode.sampling_curriculum() {
            sample_batch_from(&store, &sampler, &pool, &mut rng)?
        } else {
            sample_uniform_from(&pool, config.batch_size, &mut rng)?
        };

        let g = gap.g;
        let modification = phi_for_gap(g, config.max_gap)?;
        let groups: Vec<RolloutGroup> = batch
            .iter()
            .map(|&i| {
                let sample = &corpus.samples()[i];
                let retrieved =
                    modify_ranking(&rankings[i], &sample.gt_article_id, modification, config.lambda)?;
                let mut rng = substream(config.seed, &[STREAM_ROLLOUT, it, i as u64]);
                rollout_group(&policy, i, sample, &retrieved, config.n_rollouts, &mut rng)
            })
            .collect::<Result<_>>()?;

        let ignored = groups.iter().filter(|g| g.ignored).count();
        cumulative_ignored += ignored;
        let pairs: Vec<_> = groups
            .iter()
            .map(|g| (&corpus.samples()[g.sample_index], g))
            .collect();
        policy.learn(&pairs);

        match config.window_granularity {
            WindowGranularity::Batch => {
                let total: f64 = groups.iter().map(|g| g.rewards.iter().sum::<f64>()).sum();
                window.push(total / (groups.len() * config.n_rollouts) as f64)?;
            }
            WindowGranularity::Rollout => {
                for r in groups.iter().flat_map(|g| &g.rewards) {
                    window.push(*r)?;
                }
            }
        }
        let window_mean = window.mean();
        let upgraded = mode.data_curriculum() && gap.maybe_upgrade(&mut window, config.require_full_window);
        if upgraded {
            upgrade_iterations.push(iteration);
        }

        for grp in &groups {
            history.record(grp.sample_index, grp.mean_reward());
        }
        if mode.propagation() && iteration % config.propagation_interval == 0 {
            let obs = match config.observations {
                ObservationSource::Batch => ObservationVector::from_entries(
                    n,
                    batch.iter().filter_map(|&i| history.mean(i).map(|m| (i, m))),
                )?,
                ObservationSource::History => ObservationVector::from_entries(n, history.observed())?,
            };
            let estimates = propagate_with(&kernel, &obs, &prop_cfg, config.readout)?;
            store.update(&estimates, config.difficulty_update)?;
        } else if mode.sampling_curriculum() && !mode.propagation() {
            for &i in &batch {
                if let Some(m) = history.mean(i) {
                    store.set(i, m)?;
                }
            }
        }

        let eval_accuracy = if config.eval_every > 0
            && !eval_set.is_empty()
            && (iteration % config.eval_every == 0 || iteration == config.iterations)
        {
            let acc = evaluate(
                &policy,
                corpus,
                &rankings,
                &eval_set,
                &EvalConfig {
                    max_gap: config.max_gap,
                    lambda: config.lambda,
                    seed: config.seed,
                    round: it,
                },
            )?;
            last_eval = Some(acc);
            Some(acc)
        } else {
            None
        };

        if config.snapshot_every > 0 && iteration % config.snapshot_every == 0 {
            snapshots.push(DifficultySnapshot {
                iteration,
                estimates: store.estimates().to_vec(),
                update_counts: store.update_counts().to_vec(),
            });
        }

        for grp in &groups {
            groups_log.push(GroupLog {
                iteration,
                sample_index: grp.sample_index,
                rewards: grp.rewards.clone(),
                ignored: grp.ignored,
            });
        }
        records.push(IterationRecord {
            iteration,
            g,
            window_mean,
            zero_adv_fraction: ignored as f64 / groups.len() as f64,
            cumulative_ignored,
            batch,
            eval_accuracy,
            upgraded,
        });
    }

    let summary = RunSummary {
        final_g: gap.g,
        upgrade_iterations,
        total_ignored: cumulative_ignored,
        final_eval_accuracy: last_eval,
        final_state: None,
        final_estimates: store.estimates().to_vec(),
        observed_means: (0..n).map(|i| history.mean(i)).collect(),
        eval_samples: eval_set,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let log = MetricsLog {
        config: config.clone(),
        corpus_hash: corpus.content_hash(),
        index_hash: index.content_hash(),
        graph_hash: graph.content_hash(),
        sample_ids: corpus.samples().iter().map(|s| s.id.clone()).collect(),
        records,
        groups: groups_log,
        snapshots,
        summary,
    };
    Ok((log, policy))
}
