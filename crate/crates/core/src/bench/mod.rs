//! Distribution-shift benchmark: biased splits, edge deletion, a synthetic
//! geographic network generator, ablation runs and reports.

pub mod experiment;
pub mod report;
pub mod shift;
pub mod synth;

pub use experiment::{condition_names, run_experiment, Ablation, ExperimentSpec};
pub use report::{Report, ReportFormat, RunRecord, Summary, CSV_HEADER};
pub use shift::{biased_split, biased_split_with, mean_homogeneity, BiasLevel, ShiftKind, ShiftSpec, SplitSizes};
pub use synth::{confounder_column, generate_synthetic_geo, SyntheticGeo, SyntheticGeoConfig};
