use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use lmdi_core::data::Task;
use lmdi_core::forest::ForestParams;
use lmdi_core::glm::GlmConfig;
use lmdi_core::synth::Dgp;
use lmdi_core::tree::MaxFeatures;
use lmdi_core::Method;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::BinaryClassification,
        }
    }
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Train a forest and save it as a model bundle.
    Fit(FitArgs),
    /// Score rows of a CSV with a saved bundle.
    Explain(ExplainArgs),
    /// Signal identification on synthetic responses.
    BenchSynthetic(SyntheticArgs),
    /// Group ranks on the block-correlated simulation.
    BenchCorrelation(CorrelationArgs),
    /// Remove-and-retrain feature selection.
    BenchSelect(SelectArgs),
    /// Overlap of top features across refits.
    Stability(StabilityArgs),
    /// Nearest opposite-prediction neighbours in raw and importance space.
    Counterfactual(CounterfactualArgs),
    /// k-means on importance rows with per-cluster OLS.
    Cluster(ClusterArgs),
    /// Run again from a `config.json` written by an earlier run.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RunArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Forest and GLM overrides; anything unset keeps the task default.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    /// `all`, `sqrt`, a count, or a fraction.
    #[arg(long)]
    pub max_features: Option<MaxFeatures>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub l1_ratios: Vec<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub n_lambdas: Option<usize>,
}

impl ModelArgs {
    pub fn forest(&self, task: Task) -> ForestParams {
        let mut p = ForestParams::for_task(task);
        if let Some(v) = self.n_trees {
            p.n_estimators = v;
        }
        if let Some(v) = self.min_samples_leaf {
            p.min_samples_leaf = v;
        }
        if let Some(v) = self.max_features {
            p.max_features = v;
        }
        if self.max_depth.is_some() {
            p.max_depth = self.max_depth;
        }
        p
    }

    pub fn glm(&self, seed: u64) -> GlmConfig {
        let mut g = GlmConfig {
            seed,
            ..GlmConfig::default()
        };
        if !self.l1_ratios.is_empty() {
            g.l1_ratios = self.l1_ratios.clone();
        }
        if let Some(v) = self.folds {
            g.n_folds = v;
        }
        if let Some(v) = self.n_lambdas {
            g.n_lambdas = v;
            g.logistic_n_lambdas = v;
        }
        g
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "lmdi-plus,local-mdi")]
    pub method: Vec<Method>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.67)]
    pub train_fraction: f64,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ExplainArgs {
    /// Bundle directory written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Rows to score; same columns as the training file.
    #[arg(long)]
    pub data: PathBuf,
    /// Training file the bundle was fitted on (defaults to `--data`).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, default_value_t = Method::LmdiPlus)]
    pub method: Method,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = Dgp::Linear)]
    pub dgp: Dgp,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 0.4)]
    pub pve: f64,
    #[arg(long, default_value_t = 0.0)]
    pub flip_pct: f64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Gaussian covariate count; ignored with `--data`.
    #[arg(long, default_value_t = 30)]
    pub p: usize,
    /// Real covariates to put the synthetic response on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[command(flatten)]
    pub bench: BenchArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct CorrelationArgs {
    #[arg(long, default_value_t = 0.99)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.1)]
    pub pve: f64,
    #[arg(long, default_value_t = 250)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 50)]
    pub block: usize,
    #[arg(long, default_value_t = 6)]
    pub n_signal: usize,
    #[command(flatten)]
    pub bench: BenchArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5")]
    pub keep_pct: Vec<f64>,
    #[command(flatten)]
    pub bench: BenchArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.1)]
    pub keep_pct: f64,
    /// Refits per replicate.
    #[arg(long, default_value_t = 5)]
    pub n_fits: usize,
    #[command(flatten)]
    pub bench: BenchArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct CounterfactualArgs {
    /// Classification CSV; the built-in simulation is used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub target: String,
    /// Noise sd of the simulated logit.
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    /// Report distances in training-sd units.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub bench: BenchArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Largest k tried; every k from 2 up is reported.
    #[arg(long, default_value_t = 4)]
    pub k_clusters: usize,
    #[command(flatten)]
    pub bench: BenchArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Debug, Default, Args)]
pub struct RerunArgs {
    /// A `config.json` from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Write somewhere other than the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn run_args_mut(&mut self) -> Option<&mut RunArgs> {
        match self {
            Command::Fit(a) => Some(&mut a.run),
            Command::Explain(a) => Some(&mut a.run),
            Command::BenchSynthetic(a) => Some(&mut a.run),
            Command::BenchCorrelation(a) => Some(&mut a.run),
            Command::BenchSelect(a) => Some(&mut a.run),
            Command::Stability(a) => Some(&mut a.run),
            Command::Counterfactual(a) => Some(&mut a.run),
            Command::Cluster(a) => Some(&mut a.run),
            Command::Rerun(_) => None,
        }
    }
}
