use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EpisodeReport, EvalError};
use crate::codec::Task;

/// `"99.3 ± 0.2"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.1} ± {std:.1}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub orthography: String,
    pub task: Task,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Per-pair mean and sample standard deviation over episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
}

fn pair_keys(report: &EpisodeReport) -> Vec<(String, Task)> {
    report
        .scores
        .iter()
        .map(|s| (s.orthography.clone(), s.task))
        .collect()
}

pub fn aggregate(reports: &[EpisodeReport]) -> Result<AggregateReport, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFewReports(reports.len()));
    }
    let mut keys = pair_keys(&reports[0]);
    keys.sort();
    for (i, r) in reports.iter().enumerate().skip(1) {
        let mut other = pair_keys(r);
        other.sort();
        if other != keys {
            return Err(EvalError::PairMismatch(format!(
                "episode {i} scores {} pairs, episode 0 scores {}",
                other.len(),
                keys.len()
            )));
        }
    }
    let mut values: BTreeMap<(String, Task), Vec<f64>> = BTreeMap::new();
    for r in reports {
        for s in &r.scores {
            values
                .entry((s.orthography.clone(), s.task))
                .or_default()
                .push(s.percent);
        }
    }
    let rows = values
        .into_iter()
        .map(|((orthography, task), v)| {
            let n = v.len();
            let mean = v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            AggregateRow {
                orthography,
                task,
                mean,
                std: var.sqrt(),
                n,
            }
        })
        .collect();
    Ok(AggregateReport { rows })
}

impl AggregateReport {
    /// One episode viewed as an aggregate: std 0, n 1.
    pub fn from_single(report: &EpisodeReport) -> Self {
        let mut rows: Vec<AggregateRow> = report
            .scores
            .iter()
            .map(|s| AggregateRow {
                orthography: s.orthography.clone(),
                task: s.task,
                mean: s.percent,
                std: 0.0,
                n: 1,
            })
            .collect();
        rows.sort_by(|a, b| (&a.orthography, a.task).cmp(&(&b.orthography, b.task)));
        Self { rows }
    }

    pub fn row(&self, orthography: &str, task: Task) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.orthography == orthography && r.task == task)
    }

    pub fn orthographies(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rows.iter().map(|r| r.orthography.clone()).collect();
        out.dedup();
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("orthography,task,mean,std,n\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.4},{:.4},{}", r.orthography, r.task, r.mean, r.std, r.n);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Write score against read score, one row per orthography.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("orthography,write,read\n");
        for o in self.orthographies() {
            let get = |t| self.row(&o, t).map_or(f64::NAN, |r| r.mean);
            let _ = writeln!(out, "{o},{:.4},{:.4}", get(Task::Write), get(Task::Read));
        }
        out
    }

    /// Plain-text table with one line per orthography and a
    /// `mean ± std` cell per task.
    pub fn to_table(&self) -> String {
        let cell = |o: &str, t| {
            self.row(o, t)
                .map_or_else(|| "-".to_string(), |r| format_mean_std(r.mean, r.std))
        };
        let mut out = format!("{:<12} {:>14} {:>14}\n", "Orthography", "Write", "Read");
        for o in self.orthographies() {
            let _ = writeln!(
                out,
                "{:<12} {:>14} {:>14}",
                o,
                cell(&o, Task::Write),
                cell(&o, Task::Read)
            );
        }
        out
    }
}
