//! Side-by-side comparison of several runs' `metrics.csv`.

use serde::{Deserialize, Serialize};

use super::MetricsRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub name: String,
    pub iterations: usize,
    pub mean_zero_adv_fraction: f64,
    pub final_cumulative_ignored: usize,
    pub final_g: usize,
    pub final_eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Rows compared; the length of the shortest run.
    pub aligned_iterations: usize,
    /// Set when the runs have different lengths.
    pub mismatch: Option<String>,
    pub runs: Vec<RunStats>,
    #[serde(skip)]
    pub table: String,
}

/// Table cell, serialized the same way `metrics.csv` writes it.
#[derive(Serialize)]
#[serde(untagged)]
enum Cell {
    Count(usize),
    Value(f64),
    Maybe(Option<f64>),
}

/// Builds the aligned table of g, zero_adv_fraction and eval_accuracy.
/// With more than one run every column is suffixed with `_<run name>`.
/// Per-run statistics cover each run's full log.
pub fn compare_runs(runs: &[(String, Vec<MetricsRow>)]) -> Result<Comparison> {
    if runs.is_empty() {
        return Err(Error::invalid("runs", "nothing to compare"));
    }
    let mut names: Vec<&str> = runs.iter().map(|(n, _)| n.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("runs", "run names must be distinct"));
    }
    let lengths: Vec<usize> = runs.iter().map(|(_, rows)| rows.len()).collect();
    let aligned = *lengths.iter().min().expect("non-empty");
    let mismatch = (lengths.iter().any(|&l| l != aligned)).then(|| {
        let parts: Vec<String> = runs
            .iter()
            .map(|(n, rows)| format!("{n}={}", rows.len()))
            .collect();
        format!("iteration counts differ ({}); aligned on {aligned}", parts.join(", "))
    });

    let suffix = |base: &str, name: &str| {
        if runs.len() == 1 {
            base.to_string()
        } else {
            format!("{base}_{name}")
        }
    };
    let mut header = vec!["iteration".to_string()];
    for (name, _) in runs {
        for col in ["g", "zero_adv_fraction", "eval_accuracy"] {
            header.push(suffix(col, name));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for i in 0..aligned {
        let mut line = vec![Cell::Count(runs[0].1[i].iteration)];
        for (_, rows) in runs {
            let r = &rows[i];
            line.push(Cell::Count(r.g));
            line.push(Cell::Value(r.zero_adv_fraction));
            line.push(Cell::Maybe(r.eval_accuracy));
        }
        w.serialize(line).expect("in-memory write");
    }
    let table = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8");

    let stats = runs
        .iter()
        .map(|(name, rows)| RunStats {
            name: name.clone(),
            iterations: rows.len(),
            mean_zero_adv_fraction: if rows.is_empty() {
                0.0
            } else {
                rows.iter().map(|r| r.zero_adv_fraction).sum::<f64>() / rows.len() as f64
            },
            final_cumulative_ignored: rows.last().map_or(0, |r| r.cumulative_ignored),
            final_g: rows.last().map_or(0, |r| r.g),
            final_eval_accuracy: rows.iter().rev().find_map(|r| r.eval_accuracy),
        })
        .collect();
    Ok(Comparison {
        aligned_iterations: aligned,
        mismatch,
        runs: stats,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize, z: f64) -> Vec<MetricsRow> {
        (1..=n)
            .map(|i| MetricsRow {
                iteration: i,
                g: 6,
                window_mean: None,
                zero_adv_fraction: z,
                cumulative_ignored: i,
                upgraded: false,
                eval_accuracy: (i == n).then_some(0.3),
            })
            .collect()
    }

    #[test]
    fn two_runs_suffix_and_align() {
        let c = compare_runs(&[("a".into(), rows(3, 0.5)), ("b".into(), rows(2, 0.25))]).unwrap();
        assert_eq!(c.aligned_iterations, 2);
        assert!(c.mismatch.is_some());
        let mut lines = c.table.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,g_a,zero_adv_fraction_a,eval_accuracy_a,g_b,zero_adv_fraction_b,eval_accuracy_b"
        );
        assert_eq!(lines.count(), 2);
        assert_eq!(c.runs[1].mean_zero_adv_fraction, 0.25);
        assert_eq!(c.runs[0].final_eval_accuracy, Some(0.3));
    }

    #[test]
    fn rejects_empty_and_duplicate_names() {
        assert!(compare_runs(&[]).is_err());
        assert!(compare_runs(&[("a".into(), rows(1, 0.0)), ("a".into(), rows(1, 0.0))]).is_err());
    }
}
