use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Report, RunRecord, REPORT_VERSION};
use super::shift::{biased_split_with, BiasLevel, ShiftKind, ShiftSpec, SplitSizes};
use super::synth::generate_synthetic_geo;
use crate::error::{Error, Result};
use crate::graph::{Graph, KnownLabels, Role, SplitAssignment};
use crate::metrics::Metrics;
use crate::rng;
use crate::train::{self, config_hash, TrainConfig};

/// One setting of the two method switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation {
    pub ca: bool,
    pub hsic: bool,
}

impl Ablation {
    /// Baseline, sampling only, reweighting only, both.
    pub const GRID: [Ablation; 4] = [
        Ablation { ca: false, hsic: false },
        Ablation { ca: true, hsic: false },
        Ablation { ca: false, hsic: true },
        Ablation { ca: true, hsic: true },
    ];

    pub fn name(self) -> &'static str {
        train::model_name(self.ca, self.hsic)
    }

    pub fn from_name(name: &str) -> Option<Ablation> {
        Ablation::GRID.into_iter().find(|a| a.name() == name)
    }

    pub fn apply(self, config: &TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            use_ca_sampling: self.ca,
            use_hsic_weights: self.hsic,
            seed,
            ..config.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub shift: ShiftSpec,
    pub ablations: Vec<Ablation>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Split sizes for non-synthetic data.
    pub split: SplitSizes,
    /// Record wall-clock seconds per run. Off by default so that reports
    /// are bitwise reproducible.
    pub timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            shift: ShiftSpec::none(0),
            ablations: Ablation::GRID.to_vec(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            split: SplitSizes::default(),
            timing: false,
        }
    }
}

impl ExperimentSpec {
    /// Digest over everything that determines the report.
    pub fn config_hash(&self) -> String {
        config_hash(self)
    }
}

/// Names of the report conditions a shift produces, in report order.
pub fn condition_names(shift: &ShiftSpec) -> Vec<String> {
    match &shift.kind {
        ShiftKind::None => vec!["original".into()],
        ShiftKind::FeatureBias { level: BiasLevel::None } => vec!["original".into()],
        ShiftKind::FeatureBias { level } => vec!["original".into(), format!("bias-{level}")],
        ShiftKind::Structural { edge_fraction } => vec![
            "original".into(),
            format!("de-{}", (edge_fraction * 100.0).round() as u32),
            "bias".into(),
        ],
        ShiftKind::Synthetic(_) => vec!["original".into(), "shifted".into()],
    }
}

/// One training run and the graphs its model is evaluated on. The model
/// only ever sees `train_graph`.
struct Task {
    train_graph: Graph,
    split: SplitAssignment,
    /// `(condition index, evaluation graph)`; `None` evaluates on
    /// `train_graph`.
    evals: Vec<(usize, Option<Graph>)>,
}

fn prepare(base: Option<&Graph>, spec: &ExperimentSpec, data_seed: u64) -> Result<Vec<Task>> {
    let base_graph = || {
        base.ok_or_else(|| Error::Config("this shift needs a base graph".into()))
    };
    let uniform_split = |g: &Graph| biased_split_with(g, BiasLevel::None, spec.split, data_seed);
    Ok(match &spec.shift.kind {
        ShiftKind::None | ShiftKind::FeatureBias { level: BiasLevel::None } => {
            let g = base_graph()?;
            vec![Task {
                train_graph: g.clone(),
                split: uniform_split(g)?,
                evals: vec![(0, None)],
            }]
        }
        ShiftKind::FeatureBias { level } => {
            let g = base_graph()?;
            vec![
                Task {
                    train_graph: g.clone(),
                    split: uniform_split(g)?,
                    evals: vec![(0, None)],
                },
                Task {
                    train_graph: g.clone(),
                    split: biased_split_with(g, *level, spec.split, data_seed)?,
                    evals: vec![(1, None)],
                },
            ]
        }
        ShiftKind::Structural { edge_fraction } => {
            let g = base_graph()?;
            let split = uniform_split(g)?;
            let deleted = g.delete_edges(*edge_fraction, data_seed)?;
            vec![
                Task {
                    train_graph: g.clone(),
                    split: split.clone(),
                    evals: vec![(0, None), (2, Some(deleted.clone()))],
                },
                Task {
                    train_graph: deleted,
                    split,
                    evals: vec![(1, None)],
                },
            ]
        }
        ShiftKind::Synthetic(config) => {
            let id = generate_synthetic_geo(&config.in_distribution(), data_seed)?;
            let shifted = generate_synthetic_geo(config, data_seed)?;
            vec![
                Task {
                    train_graph: id.graph,
                    split: id.split,
                    evals: vec![(0, None)],
                },
                Task {
                    train_graph: shifted.graph,
                    split: shifted.split,
                    evals: vec![(1, shifted.test_variant)],
                },
            ]
        }
    })
}

struct Job<'a> {
    seed: u64,
    ablation: Ablation,
    task: &'a Task,
}

fn run_job(job: &Job<'_>, spec: &ExperimentSpec, conditions: &[String]) -> Vec<RunRecord> {
    let start = Instant::now();
    let config = job.ablation.apply(&spec.train, job.seed);
    let record = |condition: usize, outcome: std::result::Result<Metrics, String>, wall: f64| {
        let (accuracy, macro_f1, error) = match outcome {
            Ok(m) => (Some(m.accuracy), Some(m.macro_f1), None),
            Err(e) => (None, None, Some(e)),
        };
        RunRecord {
            condition: conditions[condition].clone(),
            model: job.ablation.name().to_string(),
            seed: job.seed,
            accuracy,
            macro_f1,
            wall_s: if spec.timing { wall } else { 0.0 },
            error,
        }
    };
    let model = match train::train(&job.task.train_graph, &job.task.split, &config) {
        Ok((model, _)) => model,
        Err(e) => {
            let wall = start.elapsed().as_secs_f64();
            let msg = e.to_string();
            return job
                .task
                .evals
                .iter()
                .map(|&(c, _)| record(c, Err(msg.clone()), wall))
                .collect();
        }
    };
    let test_nodes = job.task.split.nodes(Role::Test);
    job.task
        .evals
        .iter()
        .map(|(c, g)| {
            let g = g.as_ref().unwrap_or(&job.task.train_graph);
            let labels = KnownLabels::from_split(g, &job.task.split, Role::Test);
            let outcome = train::evaluate(&model, g, &test_nodes, &labels).map_err(|e| e.to_string());
            record(*c, outcome, start.elapsed().as_secs_f64())
        })
        .collect()
}

/// Trains and evaluates every ablation under every seed and condition of
/// `spec.shift`.
///
/// Each seed draws its own data (split, deleted edges or synthetic graph)
/// from `spec.shift.seed` and trains with that seed. Runs execute in
/// parallel and are reported in (condition, model, seed) order. A failing
/// run is recorded with its error instead of aborting the experiment.
pub fn run_experiment(base: Option<&Graph>, spec: &ExperimentSpec) -> Result<Report> {
    spec.shift.validate()?;
    spec.train.validate()?;
    if spec.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    if spec.ablations.is_empty() {
        return Err(Error::Config("at least one ablation is required".into()));
    }
    if spec.shift.needs_base_graph() && base.is_none() {
        return Err(Error::Config("this shift needs a base graph".into()));
    }
    let conditions = condition_names(&spec.shift);

    let prepared: Vec<(u64, Result<Vec<Task>>)> = spec
        .seeds
        .par_iter()
        .map(|&seed| (seed, prepare(base, spec, rng::derive_seed(spec.shift.seed, &[seed]))))
        .collect();

    let mut runs: Vec<RunRecord> = Vec::new();
    let mut jobs = Vec::new();
    for (seed, tasks) in &prepared {
        match tasks {
            Ok(tasks) => {
                for task in tasks {
                    for &ablation in &spec.ablations {
                        jobs.push(Job { seed: *seed, ablation, task });
                    }
                }
            }
            Err(e) => {
                for condition in &conditions {
                    for ablation in &spec.ablations {
                        runs.push(RunRecord {
                            condition: condition.clone(),
                            model: ablation.name().to_string(),
                            seed: *seed,
                            accuracy: None,
                            macro_f1: None,
                            wall_s: 0.0,
                            error: Some(format!("data preparation failed: {e}")),
                        });
                    }
                }
            }
        }
    }
    let results: Vec<Vec<RunRecord>> = jobs.par_iter().map(|j| run_job(j, spec, &conditions)).collect();
    runs.extend(results.into_iter().flatten());

    let model_rank = |name: &str| spec.ablations.iter().position(|a| a.name() == name);
    let cond_rank = |name: &str| conditions.iter().position(|c| c == name);
    let seed_rank = |s: u64| spec.seeds.iter().position(|&t| t == s);
    runs.sort_by_key(|r| (cond_rank(&r.condition), model_rank(&r.model), seed_rank(r.seed)));

    Ok(Report::new(
        REPORT_VERSION,
        spec.config_hash(),
        spec.clone(),
        conditions,
        runs,
    ))
}
