use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use genlearn::neuralnet::Activation;

/// Batch runner for the genlearn models.
///
/// Exit codes: 0 success, 1 numeric failure or replay mismatch, 2 usage or
/// input error.
#[derive(Parser, Debug, Clone)]
#[command(name = "genlearn", version)]
pub struct Cli {
    /// Output directory (default `genlearn-out`). `GENLEARN_OUT` overrides it.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Write a synthetic dataset.
    GenData(GenDataArgs),
    /// Least-squares linear regression.
    FitLinreg(LinregArgs),
    /// Binary logistic regression by gradient ascent.
    FitLogreg(ClassifierArgs),
    /// Softmax regression by gradient ascent.
    FitMulticlass(ClassifierArgs),
    /// Frequency-table Markov model.
    FitMarkov(MarkovArgs),
    /// Softmax next-symbol model on a fixed context window.
    FitNeuralAr(NeuralArArgs),
    /// Gaussian mixture by EM.
    FitGmm(GmmArgs),
    /// Closed-form probabilistic PCA.
    FitPpca(PpcaArgs),
    /// Feed-forward network by mini-batch SGD.
    TrainMlp(MlpArgs),
    /// Gaussian VAE on the negative ELBO.
    TrainVae(VaeArgs),
    /// Denoising diffusion model.
    TrainDiffusion(DiffusionArgs),
    /// Minimax GAN.
    TrainGan(GanArgs),
    /// Denoising score matching network.
    TrainScore(ScoreArgs),
    /// Draw samples from a saved model.
    Sample(SampleArgs),
    /// Evaluate a saved model on a dataset and print the value.
    Evaluate(EvaluateArgs),
    /// Divergence between two pmfs.
    Divergence(DivergenceArgs),
    /// Re-run a recorded command and compare output checksums.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::FitLinreg(_) => "fit-linreg",
            Command::FitLogreg(_) => "fit-logreg",
            Command::FitMulticlass(_) => "fit-multiclass",
            Command::FitMarkov(_) => "fit-markov",
            Command::FitNeuralAr(_) => "fit-neural-ar",
            Command::FitGmm(_) => "fit-gmm",
            Command::FitPpca(_) => "fit-ppca",
            Command::TrainMlp(_) => "train-mlp",
            Command::TrainVae(_) => "train-vae",
            Command::TrainDiffusion(_) => "train-diffusion",
            Command::TrainGan(_) => "train-gan",
            Command::TrainScore(_) => "train-score",
            Command::Sample(_) => "sample",
            Command::Evaluate(_) => "evaluate",
            Command::Divergence(_) => "divergence",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    /// RNG seed; required unless the config file sets it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with any of seed, learning_rate, max_steps, batch_size,
    /// mc_samples. Flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Mixture2d,
    Line,
    MarkovChain,
    SeparatedGaussians,
}

#[derive(Args, Debug, Clone)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Rows (or sequences).
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// line: slope of y on x.
    #[arg(long, default_value_t = 3.0)]
    pub slope: f64,
    /// line: intercept.
    #[arg(long, default_value_t = 2.0)]
    pub intercept: f64,
    /// line: noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// mixture2d: number of modes on a circle.
    #[arg(long, default_value_t = 2)]
    pub modes: usize,
    /// mixture2d: circle radius.
    #[arg(long, default_value_t = 2.0 * std::f64::consts::SQRT_2)]
    pub radius: f64,
    /// Component standard deviation (mixture2d 0.5, separated-gaussians 1).
    #[arg(long)]
    pub sd: Option<f64>,
    /// separated-gaussians: distance between the two means.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    /// markov-chain: alphabet size.
    #[arg(long, default_value_t = 4)]
    pub alphabet: usize,
    /// markov-chain: sequence length.
    #[arg(long, default_value_t = 50)]
    pub length: usize,
}

#[derive(Args, Debug, Clone)]
pub struct LinregArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: String,
}

#[derive(Args, Debug, Clone)]
pub struct ClassifierArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: String,
    /// Number of classes; defaults to the largest label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug, Clone)]
pub struct MarkovArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Additive smoothing constant.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Alphabet size; defaults to the largest symbol plus one.
    #[arg(long)]
    pub alphabet: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct NeuralArArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub context: usize,
    #[arg(long)]
    pub alphabet: Option<usize>,
    /// Hidden widths, comma separated; `none` for softmax regression.
    #[arg(long, default_value = "none", value_parser = parse_widths)]
    pub hidden: Widths,
    #[arg(long, value_enum, default_value_t = Act::Relu)]
    pub activation: Act,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug, Clone)]
pub struct GmmArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub components: usize,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug, Clone)]
pub struct PpcaArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub latent_dim: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Regression,
    Bernoulli,
    Categorical,
}

#[derive(Args, Debug, Clone)]
pub struct MlpArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, value_enum, default_value_t = Head::Regression)]
    pub head: Head,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value = "16", value_parser = parse_widths)]
    pub hidden: Widths,
    #[arg(long, value_enum, default_value_t = Act::Logistic)]
    pub activation: Act,
    /// Fixed σ² of the regression head.
    #[arg(long, default_value_t = 1.0)]
    pub noise_variance: f64,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug, Clone)]
pub struct VaeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub latent_dim: usize,
    #[arg(long, default_value = "16", value_parser = parse_widths)]
    pub hidden: Widths,
    #[arg(long, value_enum, default_value_t = Act::Logistic)]
    pub activation: Act,
    #[arg(long, default_value_t = 0.1)]
    pub decoder_variance: f64,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Mean,
    Noise,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Unweighted,
    ForwardVariance,
    PosteriorVariance,
}

#[derive(Args, Debug, Clone)]
pub struct DiffusionArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of diffusion steps T.
    #[arg(long, default_value_t = 50)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub beta_lo: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta_hi: f64,
    #[arg(long, default_value = "64", value_parser = parse_widths)]
    pub hidden: Widths,
    #[arg(long, value_enum, default_value_t = Act::Relu)]
    pub activation: Act,
    #[arg(long, value_enum, default_value_t = Mode::Mean)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = Weighting::Unweighted)]
    pub weighting: Weighting,
    /// Train on raw coordinates instead of standardised ones.
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug, Clone)]
pub struct GanArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub latent_dim: usize,
    #[arg(long, default_value = "16", value_parser = parse_widths)]
    pub generator_hidden: Widths,
    #[arg(long, default_value = "16", value_parser = parse_widths)]
    pub discriminator_hidden: Widths,
    #[arg(long, value_enum, default_value_t = Act::Relu)]
    pub activation: Act,
    /// Discriminator learning rate (default: --lr).
    #[arg(long)]
    pub d_lr: Option<f64>,
    /// Generator learning rate (default: --lr).
    #[arg(long)]
    pub g_lr: Option<f64>,
    /// Backtrack the discriminator step until its objective does not drop.
    #[arg(long)]
    pub backtrack: bool,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug, Clone)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Corruption variance σ².
    #[arg(long, default_value_t = 0.25)]
    pub noise_variance: f64,
    #[arg(long, default_value = "32", value_parser = parse_widths)]
    pub hidden: Widths,
    #[arg(long, value_enum, default_value_t = Act::Logistic)]
    pub activation: Act,
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Sequence length for sequence models.
    #[arg(long, default_value_t = 50)]
    pub length: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Perplexity,
    Loglik,
    Elbo,
    Accuracy,
    Mse,
    Dsm,
    ScoreMse,
    Value,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub metric: Metric,
    #[arg(long, default_value = "y")]
    pub target: String,
    /// Needed by stochastic metrics (elbo, dsm, value).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub mc_samples: usize,
    /// Density spec JSON of the clean data (score-mse).
    #[arg(long)]
    pub density: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivSpec {
    Kl,
    ReverseKl,
    Tv,
    ChiSq,
    Js,
    HellingerSq,
    Hellinger,
    HockeyStick,
    Renyi,
    RenyiGen,
    CrossEntropy,
}

#[derive(Args, Debug, Clone)]
pub struct DivergenceArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<f64>,
    #[arg(long, value_enum)]
    pub spec: DivSpec,
    /// hockey-stick parameter.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// renyi and renyi-gen order.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Identity,
    Logistic,
    Relu,
}

impl From<Act> for Activation {
    fn from(a: Act) -> Self {
        match a {
            Act::Identity => Activation::Identity,
            Act::Logistic => Activation::Logistic,
            Act::Relu => Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

fn parse_widths(s: &str) -> Result<Widths, String> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(Widths(Vec::new()));
    }
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(0) => Err("layer widths must be positive".to_string()),
            Ok(w) => Ok(w),
            Err(e) => Err(format!("bad width `{t}`: {e}")),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Widths)
}
