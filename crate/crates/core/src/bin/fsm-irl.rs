use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fsm_irl::bench::{
    self, biased_split_with, generate_synthetic_geo, BiasLevel, ExperimentSpec, Report,
    ReportFormat, ShiftKind, ShiftSpec, SyntheticGeoConfig,
};
use fsm_irl::convert::convert_citation;
use fsm_irl::graph::{load_graph, write_edges};
use fsm_irl::sampler::ProfileSet;
use fsm_irl::train::{evaluate, train, TrainedModel};
use fsm_irl::{Error, Graph, KnownLabels, Result, Role, SplitAssignment};

#[derive(Parser)]
#[command(name = "fsm-irl", version, about = "Out-of-distribution node classification benchmark")]
struct Cli {
    /// Base seed; overrides the seeds in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GraphArgs {
    /// Nodes file (`id label f0 ...`, tab-separated).
    #[arg(long)]
    nodes: PathBuf,
    /// Edges file (`src dst`, tab-separated).
    #[arg(long)]
    edges: PathBuf,
}

impl GraphArgs {
    fn load(&self) -> Result<Graph> {
        load_graph(&self.nodes, &self.edges)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    None,
    Small,
    Medium,
    Big,
}

impl From<Level> for BiasLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::None => BiasLevel::None,
            Level::Small => BiasLevel::Small,
            Level::Medium => BiasLevel::Medium,
            Level::Big => BiasLevel::Big,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a `.content`/`.cites` citation export to nodes/edges files.
    Convert {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        cites: PathBuf,
    },
    /// Write a (possibly homogeneity-biased) train/validation/test split.
    Split {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, value_enum, default_value = "none")]
        level: Level,
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Apply a shift: delete edges, or write a biased split.
    Shift {
        #[command(flatten)]
        graph: GraphArgs,
        /// Fraction of undirected edges to delete.
        #[arg(long, conflicts_with = "level")]
        delete_edges: Option<f64>,
        #[arg(long, value_enum)]
        level: Option<Level>,
    },
    /// Generate a synthetic geographic network.
    Synth,
    /// Train a model and write `model.json` and `history.csv`.
    Train {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        split: PathBuf,
        /// Disable causal-attention sampling.
        #[arg(long)]
        no_ca: bool,
        /// Disable HSIC loss weights.
        #[arg(long)]
        no_hsic: bool,
        /// Write the training sampling profiles as JSON.
        #[arg(long)]
        export_profiles: Option<PathBuf>,
    },
    /// Evaluate a trained model on one split role.
    Eval {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        role: String,
    },
    /// Run the ablation grid and write `report.json` and `report.csv`.
    Bench {
        /// Base graph (not needed for synthetic shifts).
        #[arg(long, requires = "edges")]
        nodes: Option<PathBuf>,
        #[arg(long, requires = "nodes")]
        edges: Option<PathBuf>,
        /// Shift recipe: `none`, `bias:<level>`, `structural:<fraction>` or
        /// `synthetic`; overrides the config file.
        #[arg(long)]
        shift: Option<String>,
        /// Comma-separated run seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Record wall-clock time per run (reports are then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Print a summary table of report files, or convert one.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Write each report in this format to the output directory instead.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

fn load_spec(path: Option<&Path>) -> Result<ExperimentSpec> {
    let Some(path) = path else {
        return Ok(ExperimentSpec::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn parse_shift(s: &str, spec: &ExperimentSpec) -> Result<ShiftKind> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    Ok(match kind {
        "none" => ShiftKind::None,
        "bias" => ShiftKind::FeatureBias { level: arg.parse()? },
        "structural" => ShiftKind::Structural {
            edge_fraction: arg
                .parse()
                .map_err(|_| Error::Config(format!("bad edge fraction {arg:?}")))?,
        },
        "synthetic" => ShiftKind::Synthetic(synthetic_config(spec)),
        _ => return Err(Error::Config(format!("unknown shift {s:?}"))),
    })
}

fn synthetic_config(spec: &ExperimentSpec) -> SyntheticGeoConfig {
    match &spec.shift.kind {
        ShiftKind::Synthetic(c) => c.clone(),
        _ => SyntheticGeoConfig::default(),
    }
}

fn out_path(cli: &Cli, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::Config(format!("{}: {e}", cli.out.display())))?;
    Ok(cli.out.join(name))
}

fn run(cli: &Cli) -> Result<()> {
    let mut spec = load_spec(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        spec.train.seed = seed;
        spec.shift.seed = seed;
    }
    match &cli.command {
        Command::Convert { content, cites } => {
            let c = convert_citation(content, cites)?;
            c.graph.write_files(&out_path(cli, "nodes.tsv")?, &out_path(cli, "edges.tsv")?)?;
            let classes: String = c
                .class_names
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{i}\t{n}\n"))
                .collect();
            let path = out_path(cli, "classes.tsv")?;
            fs::write(&path, format!("label\tname\n{classes}")).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            println!(
                "{} nodes, {} edges, {} features, {} classes ({} citations skipped)",
                c.graph.num_nodes(),
                c.graph.num_edges(),
                c.graph.num_features(),
                c.graph.num_classes(),
                c.skipped_citations
            );
        }
        Command::Split { graph, level, per_class } => {
            let g = graph.load()?;
            let mut sizes = spec.split;
            if let Some(k) = per_class {
                sizes.per_class_train = *k;
            }
            let split = biased_split_with(&g, (*level).into(), sizes, spec.shift.seed)?;
            split.write(&out_path(cli, "split.tsv")?)?;
            print_split(&g, &split);
        }
        Command::Shift { graph, delete_edges, level } => {
            let g = graph.load()?;
            match (delete_edges, level) {
                (Some(f), _) => {
                    let shifted = g.delete_edges(*f, spec.shift.seed)?;
                    write_edges(&out_path(cli, "edges.tsv")?, &shifted.edge_list())?;
                    println!("{} of {} edges kept", shifted.num_edges(), g.num_edges());
                }
                (None, Some(level)) => {
                    let split = biased_split_with(&g, (*level).into(), spec.split, spec.shift.seed)?;
                    split.write(&out_path(cli, "split.tsv")?)?;
                    print_split(&g, &split);
                }
                (None, None) => return Err(Error::Config("give --delete-edges or --level".into())),
            }
        }
        Command::Synth => {
            let config = synthetic_config(&spec);
            let data = generate_synthetic_geo(&config, spec.shift.seed)?;
            data.graph.write_files(&out_path(cli, "nodes.tsv")?, &out_path(cli, "edges.tsv")?)?;
            data.split.write(&out_path(cli, "split.tsv")?)?;
            if let Some(variant) = &data.test_variant {
                write_edges(&out_path(cli, "test_edges.tsv")?, &variant.edge_list())?;
            }
            println!(
                "{} nodes, {} edges{}",
                data.graph.num_nodes(),
                data.graph.num_edges(),
                data.test_variant
                    .as_ref()
                    .map_or(String::new(), |v| format!(", re-wired variant with {} edges", v.num_edges()))
            );
        }
        Command::Train { graph, split, no_ca, no_hsic, export_profiles } => {
            let g = graph.load()?;
            let split = SplitAssignment::read(split)?;
            let mut config = spec.train.clone();
            config.use_ca_sampling &= !no_ca;
            config.use_hsic_weights &= !no_hsic;
            let (model, history) = train(&g, &split, &config)?;
            if let Some(path) = export_profiles {
                let labels = KnownLabels::from_split(&g, &split, Role::Train);
                let profiles = match &model.projection {
                    Some(p) => ProfileSet::causal_attention(&g, &labels, p)?,
                    None => ProfileSet::uniform(&g),
                };
                profiles.write_json(path)?;
            }
            model.save(&out_path(cli, "model.json")?)?;
            history.write_csv(&out_path(cli, "history.csv")?)?;
            if let Some(best) = history.best_epoch.and_then(|e| history.epochs.get(e)) {
                println!(
                    "{}: best epoch {} (val acc {})",
                    config.model_name(),
                    best.epoch,
                    best.val_accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
                );
            }
        }
        Command::Eval { graph, split, model, role } => {
            let g = graph.load()?;
            let split = SplitAssignment::read(split)?;
            let role: Role = role.parse()?;
            let model = TrainedModel::load(model)?;
            let nodes = split.nodes(role);
            let labels = KnownLabels::from_split(&g, &split, role);
            let metrics = evaluate(&model, &g, &nodes, &labels)?;
            let text = serde_json::to_string_pretty(&metrics)?;
            let path = out_path(cli, "metrics.json")?;
            fs::write(&path, &text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            println!("accuracy {:.4} macro-F1 {:.4}", metrics.accuracy, metrics.macro_f1);
        }
        Command::Bench { nodes, edges, shift, seeds, timing } => {
            if let Some(s) = shift {
                spec.shift = ShiftSpec {
                    kind: parse_shift(s, &spec)?,
                    seed: spec.shift.seed,
                };
            }
            if let Some(seeds) = seeds {
                spec.seeds = seeds.clone();
            }
            spec.timing |= *timing;
            let base = match (nodes, edges) {
                (Some(n), Some(e)) => Some(load_graph(n, e)?),
                _ => None,
            };
            let report = bench::run_experiment(base.as_ref(), &spec)?;
            report.write(&out_path(cli, "report.json")?, ReportFormat::Json)?;
            report.write(&out_path(cli, "report.csv")?, ReportFormat::Csv)?;
            print!("{}", report.table());
        }
        Command::Report { reports, format } => {
            for path in reports {
                let report = Report::read(path)?;
                match format {
                    None => {
                        println!("{} (config {})", path.display(), report.config_hash);
                        print!("{}", report.table());
                    }
                    Some(f) => {
                        let (fmt, ext) = match f {
                            Format::Json => (ReportFormat::Json, "json"),
                            Format::Csv => (ReportFormat::Csv, "csv"),
                        };
                        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
                        report.write(&out_path(cli, &format!("{stem}.{ext}"))?, fmt)?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn print_split(g: &Graph, split: &SplitAssignment) {
    for role in [Role::Train, Role::Validation, Role::Test] {
        let nodes = split.nodes(role);
        let mean = bench::mean_homogeneity(g, split, role)
            .map_or("n/a".to_string(), |h| format!("{h:.3}"));
        println!("{role}: {} nodes, mean homogeneity {mean}", nodes.len());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
