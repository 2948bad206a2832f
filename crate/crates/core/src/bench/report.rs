use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentSpec;
use crate::error::{Error, Result};
use crate::graph::write_with;

pub const REPORT_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "condition,model,seed,acc,macro_f1,wall_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Config(format!("unknown report format {s:?} (json, csv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: String,
    pub model: String,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub wall_s: f64,
    /// Abort reason of a failed run.
    pub error: Option<String>,
}

/// Mean and sample standard deviation over the successful runs of one
/// (condition, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub condition: String,
    pub model: String,
    pub runs: usize,
    pub accuracy_mean: Option<f64>,
    /// `None` with fewer than two successful runs.
    pub accuracy_std: Option<f64>,
    pub macro_f1_mean: Option<f64>,
    pub macro_f1_std: Option<f64>,
    /// First abort reason when any run of the cell failed.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub config_hash: String,
    pub spec: ExperimentSpec,
    pub conditions: Vec<String>,
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<Summary>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (Some(mean), std)
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn fmt4(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.4}"))
}

impl Report {
    pub fn new(
        version: u32,
        config_hash: String,
        spec: ExperimentSpec,
        conditions: Vec<String>,
        runs: Vec<RunRecord>,
    ) -> Self {
        let mut summaries = Vec::new();
        for condition in &conditions {
            for ablation in &spec.ablations {
                let model = ablation.name();
                let cell: Vec<&RunRecord> = runs
                    .iter()
                    .filter(|r| &r.condition == condition && r.model == model)
                    .collect();
                let ok: Vec<&RunRecord> = cell.iter().copied().filter(|r| r.error.is_none()).collect();
                let acc: Vec<f64> = ok.iter().filter_map(|r| r.accuracy).collect();
                let f1: Vec<f64> = ok.iter().filter_map(|r| r.macro_f1).collect();
                let (accuracy_mean, accuracy_std) = mean_std(&acc);
                let (macro_f1_mean, macro_f1_std) = mean_std(&f1);
                summaries.push(Summary {
                    condition: condition.clone(),
                    model: model.to_string(),
                    runs: ok.len(),
                    accuracy_mean,
                    accuracy_std,
                    macro_f1_mean,
                    macro_f1_std,
                    failed: cell.iter().find_map(|r| r.error.clone()),
                });
            }
        }
        Report {
            version,
            config_hash,
            spec,
            conditions,
            runs,
            summaries,
        }
    }

    pub fn summary(&self, condition: &str, model: &str) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.condition == condition && s.model == model)
    }

    /// Copy with every metric rounded to 4 decimal places, as emitted.
    pub fn rounded(&self) -> Report {
        let mut r = self.clone();
        let opt = |x: &mut Option<f64>| *x = x.map(round4);
        for run in &mut r.runs {
            opt(&mut run.accuracy);
            opt(&mut run.macro_f1);
            run.wall_s = round4(run.wall_s);
        }
        for s in &mut r.summaries {
            opt(&mut s.accuracy_mean);
            opt(&mut s.accuracy_std);
            opt(&mut s.macro_f1_mean);
            opt(&mut s.macro_f1_std);
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rounded())?)
    }

    pub fn from_json(text: &str) -> Result<Report> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per run under [`CSV_HEADER`]; failed runs leave the metric
    /// fields empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4}",
                r.condition,
                r.model,
                r.seed,
                fmt4(r.accuracy),
                fmt4(r.macro_f1),
                r.wall_s
            );
        }
        out
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<()> {
        let text = match format {
            ReportFormat::Json => self.to_json()?,
            ReportFormat::Csv => self.to_csv(),
        };
        write_with(path, |w| w.write_all(text.as_bytes()))
    }

    pub fn read(path: &Path) -> Result<Report> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Report::from_json(&text)
    }

    /// Markdown table of accuracy and macro-F1 (mean ± std, percent) with
    /// one row per model and one column pair per condition.
    pub fn table(&self) -> String {
        let pct = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s),
            (Some(m), None) => format!("{:.2}", 100.0 * m),
            _ => "failed".to_string(),
        };
        let mut out = String::from("| model |");
        for c in &self.conditions {
            let _ = write!(out, " {c} acc | {c} macro-F1 |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|---|".repeat(self.conditions.len()));
        out.push('\n');
        for ablation in &self.spec.ablations {
            let _ = write!(out, "| {} |", ablation.name());
            for c in &self.conditions {
                match self.summary(c, ablation.name()) {
                    Some(s) => {
                        let _ = write!(
                            out,
                            " {} | {} |",
                            pct(s.accuracy_mean, s.accuracy_std),
                            pct(s.macro_f1_mean, s.macro_f1_std)
                        );
                    }
                    None => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::experiment::Ablation;

    fn run(condition: &str, model: &str, seed: u64, acc: Option<f64>) -> RunRecord {
        RunRecord {
            condition: condition.into(),
            model: model.into(),
            seed,
            accuracy: acc,
            macro_f1: acc.map(|a| a / 2.0),
            wall_s: 0.0,
            error: acc.is_none().then(|| "diverged".to_string()),
        }
    }

    fn report() -> Report {
        let spec = ExperimentSpec {
            ablations: vec![Ablation::GRID[0], Ablation::GRID[3]],
            ..ExperimentSpec::default()
        };
        let runs = vec![
            run("original", "GraphSAGE", 0, Some(0.5)),
            run("original", "GraphSAGE", 1, Some(0.7)),
            run("original", "GraphSAGE", 2, Some(0.123456)),
            run("original", "FSM-IRL", 0, Some(0.8)),
            run("original", "FSM-IRL", 1, None),
        ];
        Report::new(REPORT_VERSION, "abc".into(), spec, vec!["original".into()], runs)
    }

    #[test]
    fn summaries_aggregate_successful_runs() {
        let r = report();
        let s = r.summary("original", "GraphSAGE").unwrap();
        let m = (0.5 + 0.7 + 0.123456) / 3.0;
        assert!((s.accuracy_mean.unwrap() - m).abs() < 1e-15);
        let var = [0.5, 0.7, 0.123456].iter().map(|v: &f64| (v - m).powi(2)).sum::<f64>() / 2.0;
        assert!((s.accuracy_std.unwrap() - var.sqrt()).abs() < 1e-15);
        assert!(s.failed.is_none());
        let f = r.summary("original", "FSM-IRL").unwrap();
        assert_eq!(f.runs, 1);
        assert_eq!(f.accuracy_std, None);
        assert_eq!(f.failed.as_deref(), Some("diverged"));
    }

    #[test]
    fn json_round_trip_is_the_rounded_report() {
        let r = report();
        let back = Report::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r.rounded());
        assert_eq!(back.runs[2].accuracy, Some(0.1235));
    }

    #[test]
    fn csv_layout() {
        let csv = report().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "condition,model,seed,acc,macro_f1,wall_s");
        assert_eq!(lines[3], "original,GraphSAGE,2,0.1235,0.0617,0.0000");
        assert_eq!(lines[5], "original,FSM-IRL,1,,,0.0000");
    }

    #[test]
    fn table_mentions_every_model() {
        let t = report().table();
        assert!(t.contains("| GraphSAGE | 44.12 ±"));
        assert!(t.contains("| FSM-IRL | 80.00 |"));
    }
}
