use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "wtpgmr", version, about = "Relevance-weighted task-parameterised GMM/GMR")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic demonstration set.
    GenData(GenDataArgs),
    /// Fit a TP-GMM and per-step frame statistics.
    Train(TrainArgs),
    /// Search the relevance exponent alpha and store it in the model.
    OptimizeAlpha(OptimizeAlphaArgs),
    /// Generate one trajectory for a set of task frames.
    Reproduce(ReproduceArgs),
    /// Leave-one-out cross-validation.
    CrossValidate(CrossValidateArgs),
    /// Sweep the start frame over a planar grid.
    GridEval(GridEvalArgs),
    /// Export the per-step frame weights.
    Weights(WeightsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::OptimizeAlpha(_) => "optimize-alpha",
            Command::Reproduce(_) => "reproduce",
            Command::CrossValidate(_) => "cross-validate",
            Command::GridEval(_) => "grid-eval",
            Command::Weights(_) => "weights",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Reaching,
    Pickplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Uniform,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Tpgmr,
    Wtpgmr,
    Both,
}

impl MethodArg {
    pub fn methods(self) -> Vec<wtpgmr::Method> {
        match self {
            MethodArg::Tpgmr => vec![wtpgmr::Method::Tpgmr],
            MethodArg::Wtpgmr => vec![wtpgmr::Method::Wtpgmr],
            MethodArg::Both => vec![wtpgmr::Method::Tpgmr, wtpgmr::Method::Wtpgmr],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossModeArg {
    Inverse,
    Literal,
}

impl From<LossModeArg> for wtpgmr::WeightMode {
    fn from(m: LossModeArg) -> Self {
        match m {
            LossModeArg::Inverse => wtpgmr::WeightMode::Inverse,
            LossModeArg::Literal => wtpgmr::WeightMode::Literal,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(value_enum)]
    pub kind: DataKind,
    /// Number of demonstrations.
    #[serde(rename = "M")]
    #[arg(long = "M", default_value_t = 4)]
    pub m: usize,
    /// Steps per demonstration.
    #[serde(rename = "T")]
    #[arg(long = "T", default_value_t = 200)]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the additive position noise.
    #[arg(long, default_value_t = 0.001)]
    pub noise: f64,
    /// Target placement for pick-and-place data.
    #[arg(long, value_enum, default_value_t = Layout::Clustered)]
    pub layout: Layout,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EmArgs {
    /// Relative EM convergence tolerance.
    #[arg(long = "em-tol", default_value_t = 1e-5)]
    pub em_tol: f64,
    #[arg(long = "em-max-iters", default_value_t = 200)]
    pub em_max_iters: usize,
    /// Covariance floor relative to each channel's scale.
    #[arg(long = "rel-eps", default_value_t = 1e-6)]
    pub rel_eps: f64,
}

impl EmArgs {
    pub fn config(&self) -> wtpgmr::EmConfig {
        wtpgmr::EmConfig {
            tol: self.em_tol,
            max_iters: self.em_max_iters,
            rel_eps: self.rel_eps,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    /// Alpha search interval as `lo,hi`.
    #[arg(long, value_parser = parse_bounds, default_value = "-8,8", allow_hyphen_values = true)]
    pub bounds: (f64, f64),
    /// Coarse scan points before golden-section refinement.
    #[arg(long, default_value_t = 33)]
    pub scan: usize,
    #[arg(long = "alpha-tol", default_value_t = 1e-3)]
    pub alpha_tol: f64,
    /// Smoothing window (odd); defaults to the odd integer nearest T/20.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long = "loss-mode", value_enum, default_value_t = LossModeArg::Inverse)]
    pub loss_mode: LossModeArg,
}

impl SearchArgs {
    pub fn config(&self) -> wtpgmr::AlphaSearchConfig {
        wtpgmr::AlphaSearchConfig {
            bounds: self.bounds,
            scan_points: self.scan,
            tol: self.alpha_tol,
            window: self.window,
            loss: wtpgmr::LossConfig {
                weight_mode: self.loss_mode.into(),
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// Mixture components.
    #[serde(rename = "K")]
    #[arg(long = "K", default_value_t = 3)]
    pub k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub em: EmArgs,
    /// Smoothing window stored with the model; defaults to the odd integer nearest T/20.
    #[arg(long)]
    pub window: Option<usize>,
    /// Points at each trajectory end used for the constraint boxes.
    #[arg(long = "box-points", default_value_t = 10)]
    pub box_points: usize,
    /// Box padding as a fraction of the longest side.
    #[arg(long = "box-margin", default_value_t = 0.05)]
    pub box_margin: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeAlphaArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    /// Updated model file.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Optional CSV of every `(alpha, loss)` evaluation.
    #[arg(long)]
    #[serde(skip)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproduceArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// JSON list of frames `[{"A": [[...]], "b": [...]}, ...]`.
    #[arg(long)]
    #[serde(skip)]
    pub frames: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Wtpgmr)]
    pub method: MethodArg,
    /// Overrides the model's alpha for wtpgmr.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CrossValidateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    #[serde(rename = "K")]
    #[arg(long = "K", default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    /// JSON summary; per-fold CSVs are written next to it.
    #[arg(long)]
    #[serde(skip)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GridEvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// Side length of the square grid centred on the origin.
    #[arg(long = "grid-extent", default_value_t = 10.0)]
    pub grid_extent: f64,
    /// Cells per side.
    #[arg(long, default_value_t = 21)]
    pub cells: usize,
    /// `demo-mean` or a fixed start rotation in radians.
    #[arg(long, default_value = "demo-mean", allow_hyphen_values = true)]
    pub orientation: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,
    /// JSON summary; per-cell CSVs are written next to it.
    #[arg(long)]
    #[serde(skip)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// Defaults to the model's optimised alpha.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Defaults to the model's window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Skip smoothing.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("need finite lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}
