//! `dtx`: train decision trees, tune their hyperparameters by empirical
//! risk minimization over one or more datasets, and emit experiment
//! artifacts (loss-surface CSVs, exact pruning partitions, frontier tables,
//! SVG heatmaps).
//!
//! Every run is reproducible: identical flags, seed, and inputs produce
//! byte-identical artifacts, and each run writes a manifest recording the
//! resolved flags, input digests, and artifact paths. Machine-readable
//! summaries go to standard output as a single JSON object; human-readable
//! notes go to standard error.

mod gridspec;
mod heatmap;
mod manifest;

use clap::{Args, Parser, Subcommand};
use dtx_core::criteria::{CriterionParams, Preset};
use dtx_core::data::{load_csv, Dataset, InstanceCollection, Task};
use dtx_core::tree::{
    build_node_functions, mse_loss, top_down_learn, zero_one_loss, DecisionTree, StopRule,
};
use dtx_core::tune::{
    erm_bayes, erm_grid_split, erm_mccp_exact, erm_pessimistic, frontier_sweep, holdout_split,
    McppTuning, Protocol, SurfacePoint,
};
use gridspec::{fmt_real, parse_grid};
use manifest::ManifestBuilder;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        Self { message, code: 2 }
    }

    pub fn data(message: String) -> Self {
        Self { message, code: 1 }
    }
}

macro_rules! from_error {
    ($ty:ty) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::data(e.to_string())
            }
        }
    };
}
from_error!(dtx_core::data::DataError);
from_error!(dtx_core::tree::TreeError);
from_error!(dtx_core::prune::PruneError);
from_error!(dtx_core::bayes::BayesError);
from_error!(dtx_core::tune::TuneError);
from_error!(dtx_core::criteria::CriteriaError);

#[derive(Parser)]
#[command(
    name = "dtx",
    version,
    about = "Decision tree training and data-driven hyperparameter tuning"
)]
struct Cli {
    /// Worker threads for grid evaluation (default: all cores). Artifacts
    /// do not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a single tree and write it as JSON.
    Train(TrainArgs),
    /// Tune the Tsallis splitting parameters (alpha, beta) by grid ERM.
    TuneSplit(TuneSplitArgs),
    /// Tune the cost-complexity pruning parameter exactly from its
    /// breakpoint partition.
    TunePrune(TunePruneArgs),
    /// Tune the pessimistic pruning parameters (c1, c2) by grid ERM.
    TunePessimistic(TunePessimisticArgs),
    /// Tune the Bayesian prior parameters (sigma, phi) by Monte-Carlo ERM.
    TuneBayes(TuneBayesArgs),
    /// Tune the Tweedie power for regression trees by grid ERM.
    TuneRegression(TuneRegressionArgs),
    /// Sweep the accuracy/size trade-off coefficient and emit the frontier.
    Frontier(FrontierArgs),
    /// Render a two-axis loss surface CSV as an SVG heatmap.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV file(s), one problem instance each; last column is the
    /// label.
    #[arg(long = "data", num_args = 1..)]
    data: Vec<PathBuf>,

    /// Load every *.csv in this directory (sorted by name) as instances.
    #[arg(long = "data-dir", conflicts_with = "data")]
    data_dir: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Result<Vec<PathBuf>, CliError> {
        if let Some(dir) = &self.data_dir {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| CliError::data(format!("cannot read {}: {e}", dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::data(format!("no .csv files in {}", dir.display())));
            }
            Ok(paths)
        } else if self.data.is_empty() {
            Err(CliError::usage("no input data: pass --data or --data-dir".into()))
        } else {
            Ok(self.data.clone())
        }
    }

    fn load(&self, task: Task) -> Result<(Vec<PathBuf>, InstanceCollection), CliError> {
        let paths = self.paths()?;
        let instances = paths
            .iter()
            .map(|p| Ok(load_csv(p, task)?))
            .collect::<Result<Vec<Dataset>, CliError>>()?;
        Ok((paths, InstanceCollection::new(instances)?))
    }
}

#[derive(Args)]
struct CriterionArgs {
    /// Splitting criterion family.
    #[arg(long, value_parser = ["tsallis", "gamma", "gini", "entropy", "km96", "tweedie"])]
    criterion: String,

    /// Tsallis exponent (with --criterion tsallis).
    #[arg(long)]
    alpha: Option<f64>,

    /// Tsallis outer power (with --criterion tsallis).
    #[arg(long)]
    beta: Option<u32>,

    /// Gamma-product exponent (with --criterion gamma).
    #[arg(long)]
    gamma: Option<f64>,

    /// Tweedie power (with --criterion tweedie).
    #[arg(long)]
    p: Option<f64>,
}

impl CriterionArgs {
    fn resolve(&self) -> Result<CriterionParams, CliError> {
        let reject = |flag: &str| -> Result<(), CliError> {
            Err(CliError::usage(format!(
                "--{flag} does not apply to --criterion {}",
                self.criterion
            )))
        };
        let params = match self.criterion.as_str() {
            "tsallis" => {
                if self.gamma.is_some() {
                    reject("gamma")?;
                }
                if self.p.is_some() {
                    reject("p")?;
                }
                let alpha = self.alpha.ok_or_else(|| {
                    CliError::usage("--criterion tsallis requires --alpha".into())
                })?;
                let beta = self.beta.ok_or_else(|| {
                    CliError::usage("--criterion tsallis requires --beta".into())
                })?;
                CriterionParams::tsallis(alpha, beta)
            }
            "gamma" => {
                if self.alpha.is_some() || self.beta.is_some() {
                    reject("alpha/--beta")?;
                }
                if self.p.is_some() {
                    reject("p")?;
                }
                let gamma = self.gamma.ok_or_else(|| {
                    CliError::usage("--criterion gamma requires --gamma".into())
                })?;
                CriterionParams::gamma(gamma)
            }
            "tweedie" => {
                if self.alpha.is_some() || self.beta.is_some() || self.gamma.is_some() {
                    reject("alpha/--beta/--gamma")?;
                }
                let p = self
                    .p
                    .ok_or_else(|| CliError::usage("--criterion tweedie requires --p".into()))?;
                CriterionParams::tweedie(p)
            }
            preset => {
                if self.alpha.is_some()
                    || self.beta.is_some()
                    || self.gamma.is_some()
                    || self.p.is_some()
                {
                    reject("alpha/--beta/--gamma/--p")?;
                }
                let name = match preset {
                    "gini" => Preset::Gini,
                    "entropy" => Preset::Entropy,
                    "km96" => Preset::Km96,
                    other => return Err(CliError::usage(format!("unknown criterion {other}"))),
                };
                CriterionParams::preset(name)
            }
        };
        params.validate()?;
        Ok(params)
    }

    fn task(&self) -> Task {
        if self.criterion == "tweedie" { Task::Regression } else { Task::Classification }
    }
}

#[derive(Args)]
struct StopArgs {
    /// Grow until the tree has this many internal nodes.
    #[arg(long, conflicts_with = "max_depth")]
    size: Option<usize>,

    /// Grow until this depth is reached.
    #[arg(long = "max-depth")]
    max_depth: Option<usize>,
}

impl StopArgs {
    fn resolve_required(&self) -> Result<StopRule, CliError> {
        match (self.size, self.max_depth) {
            (Some(t), None) => Ok(StopRule::Size(t)),
            (None, Some(m)) => Ok(StopRule::MaxDepth(m)),
            _ => Err(CliError::usage("pass exactly one of --size or --max-depth".into())),
        }
    }

    /// Defaults to unbounded growth (split until nothing useful remains).
    fn resolve_or_full(&self) -> Result<StopRule, CliError> {
        match (self.size, self.max_depth) {
            (None, None) => Ok(StopRule::Size(usize::MAX)),
            _ => self.resolve_required(),
        }
    }
}

#[derive(Args)]
struct ProtocolArgs {
    /// k-fold cross validation.
    #[arg(long, conflicts_with = "holdout")]
    folds: Option<usize>,

    /// Per-instance held-out fraction in (0, 1).
    #[arg(long)]
    holdout: Option<f64>,
}

impl ProtocolArgs {
    /// Defaults to the 80/20 holdout protocol when neither flag is given.
    fn resolve(&self, seed: u64) -> Protocol {
        match (self.folds, self.holdout) {
            (Some(k), None) => Protocol::KFold { k, seed },
            (None, Some(fraction)) => Protocol::Holdout { fraction, seed },
            _ => Protocol::Holdout { fraction: 0.2, seed },
        }
    }

    fn describe(&self) -> String {
        match (self.folds, self.holdout) {
            (Some(k), None) => format!("{k}-fold"),
            (None, Some(f)) => format!("holdout {f}"),
            _ => "holdout 0.2".into(),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Input CSV file.
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    criterion: CriterionArgs,

    #[command(flatten)]
    stop: StopArgs,

    /// Seed recorded in the manifest (training itself is deterministic).
    #[arg(long, env = "DTX_SEED", default_value_t = 0)]
    seed: u64,

    /// Output model path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneSplitArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Alpha grid: LO:HI:STEP or a comma list.
    #[arg(long = "alpha-grid", default_value = "0.05:3.95:0.1")]
    alpha_grid: String,

    /// Betas 1..=B join the grid.
    #[arg(long = "beta-max", default_value_t = 8)]
    beta_max: u32,

    #[command(flatten)]
    stop: StopArgs,

    #[command(flatten)]
    protocol: ProtocolArgs,

    #[arg(long, env = "DTX_SEED", default_value_t = 0)]
    seed: u64,

    /// Artifact path prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TunePruneArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    criterion: CriterionArgs,

    #[command(flatten)]
    stop: StopArgs,

    /// Held-out fraction used to score pruned trees.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,

    #[arg(long, env = "DTX_SEED", default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TunePessimisticArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    criterion: CriterionArgs,

    #[command(flatten)]
    stop: StopArgs,

    #[arg(long = "c1-grid", default_value = "0:2:0.25")]
    c1_grid: String,

    #[arg(long = "c2-grid", default_value = "0:2:0.5")]
    c2_grid: String,

    #[arg(long, default_value_t = 0.2)]
    holdout: f64,

    #[arg(long, env = "DTX_SEED", default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneBayesArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long = "sigma-grid", default_value = "0.2:1.0:0.2")]
    sigma_grid: String,

    #[arg(long = "phi-grid", default_value = "0.5:2.0:0.5")]
    phi_grid: String,

    /// Size cap on sampled and searched trees (internal nodes).
    #[arg(long = "t-cap", default_value_t = 8)]
    t_cap: usize,

    /// Chain length per replicate.
    #[arg(long, default_value_t = 10_000)]
    omega: usize,

    /// Monte-Carlo replicates per instance.
    #[arg(long, default_value_t = 4)]
    replicates: usize,

    #[arg(long, env = "DTX_SEED", default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneRegressionArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Tweedie power grid.
    #[arg(long = "p-grid", default_value = "0:1:0.1")]
    p_grid: String,

    #[command(flatten)]
    stop: StopArgs,

    #[command(flatten)]
    protocol: ProtocolArgs,

    #[arg(long, env = "DTX_SEED", default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FrontierArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    criterion: CriterionArgs,

    /// Grow size before pruning.
    #[arg(long, default_value_t = 40)]
    size: usize,

    #[arg(long = "eta-grid", default_value = "0:0.05:0.005")]
    eta_grid: String,

    #[arg(long, default_value_t = 0.2)]
    holdout: f64,

    #[arg(long, env = "DTX_SEED", default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Surface CSV with two parameter axes and a mean_loss column.
    #[arg(long)]
    surface: PathBuf,

    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Ignore failures from double initialization; the pool size only
        // affects scheduling, never results.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dtx: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::TuneSplit(args) => cmd_tune_split(args),
        Command::TunePrune(args) => cmd_tune_prune(args),
        Command::TunePessimistic(args) => cmd_tune_pessimistic(args),
        Command::TuneBayes(args) => cmd_tune_bayes(args),
        Command::TuneRegression(args) => cmd_tune_regression(args),
        Command::Frontier(args) => cmd_frontier(args),
        Command::Heatmap(args) => cmd_heatmap(args),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let params = args.criterion.resolve()?;
    let stop = args.stop.resolve_required()?;
    let d = load_csv(&args.data, args.criterion.task())?;
    let f = build_node_functions(&d)?;
    let tree = top_down_learn(&d, &f, &params, stop)?;
    let train_loss = match d.task() {
        Task::Classification => zero_one_loss(&tree, &d)?,
        Task::Regression => mse_loss(&tree, &d)?,
    };
    write_file(&args.out, &tree.to_json())?;

    let mut m = ManifestBuilder::new("train", args.seed);
    m.flag("data", args.data.display().to_string())
        .flag("criterion", serde_json::to_value(&params).unwrap())
        .flag("stop", format!("{stop:?}"))
        .flag("out", args.out.display().to_string());
    m.input(&args.data)?;
    m.artifact(&args.out);
    m.write(args.out.with_extension("manifest.json"))?;

    println!(
        "{}",
        json!({
            "train_loss": train_loss,
            "leaves": tree.n_leaves(),
            "internal": tree.n_internal(),
            "depth": tree.depth(),
            "model": args.out.display().to_string(),
        })
    );
    Ok(())
}

/// Write a surface CSV: named parameter columns, mean loss, then one column
/// per instance.
fn write_surface<P, F: Fn(&P) -> Vec<String>>(
    path: &Path,
    axis_names: &[&str],
    surface: &[SurfacePoint<P>],
    axes: F,
) -> Result<(), CliError> {
    let n_instances = surface.first().map(|p| p.per_instance.len()).unwrap_or(0);
    let mut csv = String::new();
    csv.push_str(&axis_names.join(","));
    csv.push_str(",mean_loss");
    for i in 0..n_instances {
        csv.push_str(&format!(",loss_{i}"));
    }
    csv.push('\n');
    for point in surface {
        csv.push_str(&axes(&point.params).join(","));
        csv.push(',');
        csv.push_str(&fmt_real(point.mean_loss));
        for loss in &point.per_instance {
            csv.push(',');
            csv.push_str(&fmt_real(*loss));
        }
        csv.push('\n');
    }
    write_file(path, &csv)
}

fn manifest_inputs(m: &mut ManifestBuilder, paths: &[PathBuf]) -> Result<(), CliError> {
    for p in paths {
        m.input(p)?;
    }
    Ok(())
}

fn cmd_tune_split(args: TuneSplitArgs) -> Result<(), CliError> {
    let (paths, collection) = args.data.load(Task::Classification)?;
    let alphas = parse_grid(&args.alpha_grid)?;
    if args.beta_max < 1 {
        return Err(CliError::usage("--beta-max must be at least 1".into()));
    }
    let grid: Vec<CriterionParams> = alphas
        .iter()
        .flat_map(|&a| (1..=args.beta_max).map(move |b| CriterionParams::tsallis(a, b)))
        .collect();
    let stop = args.stop.resolve_required()?;
    let protocol = args.protocol.resolve(args.seed);
    let result = erm_grid_split(&collection, &grid, stop, protocol)?;

    let surface_path = prefixed(&args.out, ".surface.csv");
    write_surface(&surface_path, &["alpha", "beta"], &result.surface, |p| match *p {
        CriterionParams::Tsallis { alpha, beta, .. } => {
            vec![fmt_real(alpha), beta.to_string()]
        }
        _ => unreachable!(),
    })?;

    let best_path = prefixed(&args.out, ".best.json");
    let (alpha, beta) = match result.best {
        CriterionParams::Tsallis { alpha, beta, .. } => (alpha, beta),
        _ => unreachable!(),
    };
    write_file(&best_path, &serde_json::to_string(&json!({"alpha": alpha, "beta": beta})).unwrap())?;

    let mut m = ManifestBuilder::new("tune-split", args.seed);
    m.flag("alpha-grid", args.alpha_grid.clone())
        .flag("beta-max", args.beta_max)
        .flag("stop", format!("{stop:?}"))
        .flag("protocol", args.protocol.describe());
    manifest_inputs(&mut m, &paths)?;
    m.artifact(&surface_path).artifact(&best_path);
    m.write(prefixed(&args.out, ".manifest.json"))?;

    println!(
        "{}",
        json!({
            "best": {"alpha": alpha, "beta": beta},
            "mean_loss": result.best_mean_loss,
            "accuracy": 1.0 - result.best_mean_loss,
            "grid_points": result.surface.len(),
            "surface": surface_path.display().to_string(),
        })
    );
    Ok(())
}

fn grown_trees(
    train: &[Dataset],
    params: &CriterionParams,
    stop: StopRule,
) -> Result<Vec<DecisionTree>, CliError> {
    train
        .iter()
        .map(|d| {
            let f = build_node_functions(d)?;
            Ok(top_down_learn(d, &f, params, stop)?)
        })
        .collect()
}

fn write_pieces(path: &Path, tuning: &McppTuning) -> Result<(), CliError> {
    let mut csv = String::from("alpha_lo,alpha_hi,mean_loss,mean_leaves\n");
    for p in &tuning.pieces {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_real(p.lo),
            fmt_real(p.hi),
            fmt_real(p.mean_loss),
            fmt_real(p.mean_leaves)
        ));
    }
    write_file(path, &csv)
}

fn cmd_tune_prune(args: TunePruneArgs) -> Result<(), CliError> {
    let (paths, collection) = args.data.load(Task::Classification)?;
    let params = args.criterion.resolve()?;
    if params.is_regression() {
        return Err(CliError::usage("tune-prune needs a classification criterion".into()));
    }
    let stop = args.stop.resolve_or_full()?;
    let (train, eval) = holdout_split(&collection, args.holdout, args.seed)?;
    let trees = grown_trees(&train, &params, stop)?;
    let tuning = erm_mccp_exact(&trees, &eval)?;

    let pieces_path = prefixed(&args.out, ".pieces.csv");
    write_pieces(&pieces_path, &tuning)?;

    // The surface view: one row per piece at its representative parameter.
    let surface: Vec<SurfacePoint<f64>> = tuning
        .pieces
        .iter()
        .enumerate()
        .map(|(k, p)| SurfacePoint {
            params: if k + 1 < tuning.pieces.len() {
                (p.lo + p.hi) / 2.0
            } else {
                2.0 * p.lo + 1.0
            },
            mean_loss: p.mean_loss,
            per_instance: p.per_instance.clone(),
        })
        .collect();
    let surface_path = prefixed(&args.out, ".surface.csv");
    write_surface(&surface_path, &["alpha"], &surface, |a| vec![fmt_real(*a)])?;

    let best = &tuning.pieces[tuning.best_index];
    let best_path = prefixed(&args.out, ".best.json");
    write_file(
        &best_path,
        &serde_json::to_string(&json!({
            "alpha": tuning.best_alpha,
            "alpha_lo": best.lo,
            "alpha_hi": if best.hi.is_finite() { json!(best.hi) } else { json!("inf") },
        }))
        .unwrap(),
    )?;

    let mut m = ManifestBuilder::new("tune-prune", args.seed);
    m.flag("criterion", serde_json::to_value(&params).unwrap())
        .flag("stop", format!("{stop:?}"))
        .flag("holdout", args.holdout);
    manifest_inputs(&mut m, &paths)?;
    m.artifact(&pieces_path).artifact(&surface_path).artifact(&best_path);
    m.write(prefixed(&args.out, ".manifest.json"))?;

    println!(
        "{}",
        json!({
            "best_alpha": tuning.best_alpha,
            "alpha_lo": best.lo,
            "alpha_hi": best.hi,
            "mean_loss": best.mean_loss,
            "mean_leaves": best.mean_leaves,
            "pieces": tuning.pieces.len(),
            "pieces_csv": pieces_path.display().to_string(),
        })
    );
    Ok(())
}

fn cmd_tune_pessimistic(args: TunePessimisticArgs) -> Result<(), CliError> {
    let (paths, collection) = args.data.load(Task::Classification)?;
    let params = args.criterion.resolve()?;
    if params.is_regression() {
        return Err(CliError::usage("tune-pessimistic needs a classification criterion".into()));
    }
    let stop = args.stop.resolve_or_full()?;
    let c1s = parse_grid(&args.c1_grid)?;
    let c2s = parse_grid(&args.c2_grid)?;
    if let Some(v) = c1s.iter().chain(&c2s).find(|&&v| v < 0.0) {
        return Err(CliError::usage(format!("pessimistic grids must be nonnegative, got {v}")));
    }
    let grid: Vec<(f64, f64)> =
        c1s.iter().flat_map(|&c1| c2s.iter().map(move |&c2| (c1, c2))).collect();

    let (train, eval) = holdout_split(&collection, args.holdout, args.seed)?;
    let trees = grown_trees(&train, &params, stop)?;
    let n_attributes = collection.instances[0].n_attributes();
    let result = erm_pessimistic(&trees, &eval, &grid, n_attributes)?;

    let surface_path = prefixed(&args.out, ".surface.csv");
    write_surface(&surface_path, &["c1", "c2"], &result.surface, |&(c1, c2)| {
        vec![fmt_real(c1), fmt_real(c2)]
    })?;
    let best_path = prefixed(&args.out, ".best.json");
    write_file(
        &best_path,
        &serde_json::to_string(&json!({"c1": result.best.0, "c2": result.best.1})).unwrap(),
    )?;

    let mut m = ManifestBuilder::new("tune-pessimistic", args.seed);
    m.flag("criterion", serde_json::to_value(&params).unwrap())
        .flag("c1-grid", args.c1_grid.clone())
        .flag("c2-grid", args.c2_grid.clone())
        .flag("holdout", args.holdout);
    manifest_inputs(&mut m, &paths)?;
    m.artifact(&surface_path).artifact(&best_path);
    m.write(prefixed(&args.out, ".manifest.json"))?;

    println!(
        "{}",
        json!({
            "best": {"c1": result.best.0, "c2": result.best.1},
            "mean_loss": result.best_mean_loss,
            "grid_points": result.surface.len(),
        })
    );
    Ok(())
}

fn cmd_tune_bayes(args: TuneBayesArgs) -> Result<(), CliError> {
    let (paths, collection) = args.data.load(Task::Classification)?;
    let sigmas = parse_grid(&args.sigma_grid)?;
    let phis = parse_grid(&args.phi_grid)?;
    let grid: Vec<(f64, f64)> =
        sigmas.iter().flat_map(|&s| phis.iter().map(move |&p| (s, p))).collect();
    let c = collection.instances[0].n_classes();
    let result = erm_bayes(
        &collection,
        &grid,
        args.t_cap,
        &vec![1.0; c],
        args.omega,
        args.replicates,
        args.seed,
    )?;

    let surface_path = prefixed(&args.out, ".surface.csv");
    write_surface(&surface_path, &["sigma", "phi"], &result.surface, |&(s, p)| {
        vec![fmt_real(s), fmt_real(p)]
    })?;
    let best_path = prefixed(&args.out, ".best.json");
    write_file(
        &best_path,
        &serde_json::to_string(&json!({"sigma": result.best.0, "phi": result.best.1})).unwrap(),
    )?;

    let mut m = ManifestBuilder::new("tune-bayes", args.seed);
    m.flag("sigma-grid", args.sigma_grid.clone())
        .flag("phi-grid", args.phi_grid.clone())
        .flag("t-cap", args.t_cap)
        .flag("omega", args.omega)
        .flag("replicates", args.replicates);
    manifest_inputs(&mut m, &paths)?;
    m.artifact(&surface_path).artifact(&best_path);
    m.write(prefixed(&args.out, ".manifest.json"))?;

    println!(
        "{}",
        json!({
            "best": {"sigma": result.best.0, "phi": result.best.1},
            "mean_loss": result.best_mean_loss,
            "grid_points": result.surface.len(),
        })
    );
    Ok(())
}

fn cmd_tune_regression(args: TuneRegressionArgs) -> Result<(), CliError> {
    let (paths, collection) = args.data.load(Task::Regression)?;
    let powers = parse_grid(&args.p_grid)?;
    let grid: Vec<CriterionParams> =
        powers.iter().map(|&p| CriterionParams::tweedie(p)).collect();
    let stop = args.stop.resolve_required()?;
    let protocol = args.protocol.resolve(args.seed);
    let result = erm_grid_split(&collection, &grid, stop, protocol)?;

    let surface_path = prefixed(&args.out, ".surface.csv");
    write_surface(&surface_path, &["p"], &result.surface, |p| match *p {
        CriterionParams::Tweedie { power } => vec![fmt_real(power)],
        _ => unreachable!(),
    })?;
    let best_path = prefixed(&args.out, ".best.json");
    let best_p = match result.best {
        CriterionParams::Tweedie { power } => power,
        _ => unreachable!(),
    };
    write_file(&best_path, &serde_json::to_string(&json!({"p": best_p})).unwrap())?;

    let mut m = ManifestBuilder::new("tune-regression", args.seed);
    m.flag("p-grid", args.p_grid.clone())
        .flag("stop", format!("{stop:?}"))
        .flag("protocol", args.protocol.describe());
    manifest_inputs(&mut m, &paths)?;
    m.artifact(&surface_path).artifact(&best_path);
    m.write(prefixed(&args.out, ".manifest.json"))?;

    println!(
        "{}",
        json!({
            "best": {"p": best_p},
            "mean_loss": result.best_mean_loss,
            "grid_points": result.surface.len(),
        })
    );
    Ok(())
}

fn cmd_frontier(args: FrontierArgs) -> Result<(), CliError> {
    let (paths, collection) = args.data.load(Task::Classification)?;
    let params = args.criterion.resolve()?;
    if params.is_regression() {
        return Err(CliError::usage("frontier needs a classification criterion".into()));
    }
    let etas = parse_grid(&args.eta_grid)?;
    let (train, eval) = holdout_split(&collection, args.holdout, args.seed)?;
    let rows = frontier_sweep(&train, &eval, &params, args.size, &etas)?;

    let frontier_path = prefixed(&args.out, ".frontier.csv");
    let mut csv = String::from("eta,alpha_tilde,accuracy,leaves,eta_times_leaves\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_real(r.eta),
            fmt_real(r.alpha),
            fmt_real(r.accuracy),
            fmt_real(r.mean_leaves),
            fmt_real(r.eta * r.mean_leaves)
        ));
    }
    write_file(&frontier_path, &csv)?;

    let mut m = ManifestBuilder::new("frontier", args.seed);
    m.flag("criterion", serde_json::to_value(&params).unwrap())
        .flag("size", args.size)
        .flag("eta-grid", args.eta_grid.clone())
        .flag("holdout", args.holdout);
    manifest_inputs(&mut m, &paths)?;
    m.artifact(&frontier_path);
    m.write(prefixed(&args.out, ".manifest.json"))?;

    println!(
        "{}",
        json!({
            "rows": rows.len(),
            "max_accuracy": rows.iter().map(|r| r.accuracy).fold(f64::NEG_INFINITY, f64::max),
            "frontier": frontier_path.display().to_string(),
        })
    );
    Ok(())
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), CliError> {
    let surface = heatmap::parse_surface(&args.surface)?;
    let svg = heatmap::render_svg(&surface);
    write_file(&args.out, &svg)?;

    let mut m = ManifestBuilder::new("heatmap", 0);
    m.flag("surface", args.surface.display().to_string())
        .flag("out", args.out.display().to_string());
    m.input(&args.surface)?;
    m.artifact(&args.out);
    m.write(args.out.with_extension("manifest.json"))?;

    println!(
        "{}",
        json!({
            "cells": surface.xs.len() * surface.ys.len(),
            "svg": args.out.display().to_string(),
        })
    );
    Ok(())
}
