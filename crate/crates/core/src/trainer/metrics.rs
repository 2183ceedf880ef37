use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainerConfig;
use crate::error::{Error, Result};
use crate::rl::PolicyState;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RUN_FILE: &str = "run.json";
pub const GROUPS_FILE: &str = "groups.csv";
pub const SNAPSHOT_DIR: &str = "difficulty_snapshots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub g: usize,
    pub window_mean: Option<f64>,
    pub zero_adv_fraction: f64,
    pub cumulative_ignored: usize,
    /// Sample indices drawn this iteration, in corpus order.
    pub batch: Vec<usize>,
    pub eval_accuracy: Option<f64>,
    pub upgraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLog {
    pub iteration: usize,
    pub sample_index: usize,
    pub rewards: Vec<f64>,
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultySnapshot {
    pub iteration: usize,
    pub estimates: Vec<f64>,
    pub update_counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_g: usize,
    pub upgrade_iterations: Vec<usize>,
    pub total_ignored: usize,
    pub final_eval_accuracy: Option<f64>,
    pub final_state: Option<PolicyState>,
    #[serde(skip)]
    pub final_estimates: Vec<f64>,
    /// Running mean reward per sample; `None` for samples never drawn.
    #[serde(skip)]
    pub observed_means: Vec<Option<f64>>,
    #[serde(skip)]
    pub eval_samples: Vec<usize>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub config: TrainerConfig,
    pub corpus_hash: String,
    pub index_hash: String,
    pub graph_hash: String,
    pub sample_ids: Vec<String>,
    pub records: Vec<IterationRecord>,
    pub groups: Vec<GroupLog>,
    pub snapshots: Vec<DifficultySnapshot>,
    pub summary: RunSummary,
}

impl MetricsLog {
    /// Mean zero-advantage fraction over the first `n` iterations.
    pub fn mean_zero_adv(&self, n: usize) -> f64 {
        let rows = &self.records[..n.min(self.records.len())];
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|r| r.zero_adv_fraction).sum::<f64>() / rows.len() as f64
    }

    pub fn cumulative_ignored_at(&self, iteration: usize) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.iteration == iteration)
            .map(|r| r.cumulative_ignored)
    }

    pub fn metrics_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.records.is_empty() {
            w.write_record(MetricsRow::HEADER).expect("in-memory write");
        }
        for r in &self.records {
            w.serialize(MetricsRow::from(r)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn groups_csv(&self) -> String {
        let mut out = String::from("iteration,sample_id,rewards,ignored\n");
        for g in &self.groups {
            let rewards: Vec<String> = g.rewards.iter().map(|r| r.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                g.iteration,
                self.sample_ids[g.sample_index],
                rewards.join(" "),
                g.ignored
            ));
        }
        out
    }

    pub fn run_record(&self) -> RunRecord {
        RunRecord {
            config: self.config.clone(),
            corpus_hash: self.corpus_hash.clone(),
            index_hash: self.index_hash.clone(),
            graph_hash: self.graph_hash.clone(),
            iterations_completed: self.records.len(),
            mean_zero_adv_fraction: self.mean_zero_adv(self.records.len()),
            summary: self.summary.clone(),
        }
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub g: usize,
    pub window_mean: Option<f64>,
    pub zero_adv_fraction: f64,
    pub cumulative_ignored: usize,
    pub upgraded: bool,
    pub eval_accuracy: Option<f64>,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 7] = [
        "iteration",
        "g",
        "window_mean",
        "zero_adv_fraction",
        "cumulative_ignored",
        "upgraded",
        "eval_accuracy",
    ];
}

impl From<&IterationRecord> for MetricsRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            g: r.g,
            window_mean: r.window_mean,
            zero_adv_fraction: r.zero_adv_fraction,
            cumulative_ignored: r.cumulative_ignored,
            upgraded: r.upgraded,
            eval_accuracy: r.eval_accuracy,
        }
    }
}

/// Parses `metrics.csv`. The header must match exactly.
pub fn parse_metrics_csv(input: &str) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(input.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse("metrics.csv", 1, e))?;
    if header.iter().ne(MetricsRow::HEADER) {
        return Err(Error::parse(
            "metrics.csv",
            1,
            format!("expected header {}", MetricsRow::HEADER.join(",")),
        ));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: MetricsRow = row.map_err(|e| Error::parse("metrics.csv", i + 2, e))?;
        if !(0.0..=1.0).contains(&row.zero_adv_fraction) {
            return Err(Error::parse("metrics.csv", i + 2, "zero_adv_fraction outside [0, 1]"));
        }
        if let Some(prev) = rows.last() {
            if row.iteration <= prev.iteration || row.cumulative_ignored < prev.cumulative_ignored {
                return Err(Error::parse(
                    "metrics.csv",
                    i + 2,
                    "iterations must increase and cumulative_ignored must not decrease",
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainerConfig,
    pub corpus_hash: String,
    pub index_hash: String,
    pub graph_hash: String,
    pub iterations_completed: usize,
    pub mean_zero_adv_fraction: f64,
    pub summary: RunSummary,
}

impl RunRecord {
    pub fn from_json(input: &str) -> Result<Self> {
        let record: Self =
            serde_json::from_str(input).map_err(|e| Error::parse("run.json", e.line(), e))?;
        record.config.validate()?;
        Ok(record)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serializes")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `run.json`, `groups.csv` and one CSV per difficulty
/// snapshot into `out_dir`, creating it if needed.
pub fn write_metrics(log: &MetricsLog, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join(METRICS_FILE), &log.metrics_csv())?;
    write_file(&out_dir.join(RUN_FILE), &log.run_record().to_json())?;
    write_file(&out_dir.join(GROUPS_FILE), &log.groups_csv())?;
    let snap_dir = out_dir.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    for snap in &log.snapshots {
        let mut out = String::from("sample_id,H,update_count\n");
        for ((id, h), c) in log.sample_ids.iter().zip(&snap.estimates).zip(&snap.update_counts) {
            out.push_str(&format!("{id},{h},{c}\n"));
        }
        write_file(&snap_dir.join(format!("iter_{:06}.csv", snap.iteration)), &out)?;
    }
    Ok(())
}
