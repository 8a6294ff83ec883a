use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crystalnet::{Activation, GraphOptions, Optimizer, Pooling, TrainConfig, WeightScheme};

#[derive(Debug, Parser)]
#[command(name = "crystalnet", version, about = "Crystal graphs, featurization and graph-convolution models")]
pub struct Cli {
    /// Element table CSV replacing the bundled one.
    #[arg(long, global = true, env = "CRYSTALNET_ELEMENT_TABLE", value_name = "PATH")]
    pub element_table: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build weighted neighbor graphs from structure files.
    BuildGraph(BuildGraphArgs),
    /// One-hot encode graph nodes with a featurization config.
    Featurize(FeaturizeArgs),
    /// Print a human-readable view of any pipeline document.
    Inspect(InspectArgs),
    /// Train a model on featurized documents and a targets CSV.
    Train(TrainArgs),
    /// Predict with a trained checkpoint.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Unit,
    InverseSquare,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Dot,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Softplus,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Max,
}

/// Neighbor-graph options, shared by every command that reads structures.
#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Neighbor cutoff radius in Å.
    #[arg(long, default_value_t = 8.0, value_name = "Å", allow_negative_numbers = true)]
    pub cutoff: f64,

    /// Keep at most N nearest neighbor images per atom.
    #[arg(long, value_name = "N")]
    pub max_neighbors: Option<usize>,

    /// Edge weight scheme.
    #[arg(long, value_enum, default_value_t = WeightsArg::InverseSquare)]
    pub weights: WeightsArg,

    /// Decay length for `--weights exp`.
    #[arg(long, value_name = "Å", allow_negative_numbers = true)]
    pub decay: Option<f64>,

    /// Divide weights by the largest weight (default).
    #[arg(long, overrides_with = "no_normalize")]
    pub normalize: bool,

    /// Keep raw weights.
    #[arg(long, overrides_with = "normalize")]
    pub no_normalize: bool,

    /// Keep periodic self-image edges on the diagonal.
    #[arg(long)]
    pub self_loops: bool,
}

impl GraphArgs {
    pub fn options(&self) -> anyhow::Result<GraphOptions> {
        let weight_scheme = match (self.weights, self.decay) {
            (WeightsArg::Exp, Some(decay)) => WeightScheme::Exponential { decay },
            (WeightsArg::Exp, None) => anyhow::bail!("--weights exp needs --decay"),
            (_, Some(_)) => anyhow::bail!("--decay only applies to --weights exp"),
            (WeightsArg::Unit, None) => WeightScheme::Unit,
            (WeightsArg::InverseSquare, None) => WeightScheme::InverseSquare,
        };
        let opts = GraphOptions {
            cutoff: self.cutoff,
            max_neighbors: self.max_neighbors,
            weight_scheme,
            normalize_weights: !self.no_normalize,
            keep_self_loops: self.self_loops,
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Structure files (.xyz, .extxyz) or directories of them.
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,

    #[command(flatten)]
    pub graph: GraphArgs,

    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,

    /// Output file for one input, or directory for several; stdout if absent
    /// and there is a single input.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Graph documents (.json) or structure files, or directories of them.
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,

    /// Featurization config (JSON).
    #[arg(long, value_name = "PATH")]
    pub featurization: PathBuf,

    /// Graph options used for structure inputs.
    #[command(flatten)]
    pub graph: GraphArgs,

    /// Output file for one input, or directory for several; stdout if absent
    /// and there is a single input.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Structure, graph, featurized document, featurization config or
    /// checkpoint.
    #[arg(value_name = "INPUT")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Featurized documents or directories of them.
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,

    /// CSV with header `source_id,target`.
    #[arg(long, value_name = "PATH")]
    pub targets: PathBuf,

    /// Checkpoint to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,

    /// Loss-history CSV (`epoch,loss`); defaults to `<out stem>.history.csv`
    /// next to the checkpoint.
    #[arg(long, value_name = "PATH")]
    pub history: Option<PathBuf>,

    /// Seed for initialization and minibatch shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Learning rate.
    #[arg(long, default_value_t = 1e-2, allow_negative_numbers = true)]
    pub lr: f64,

    /// Passes over the training set.
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,

    /// Samples per minibatch.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    /// Update rule; Adam uses β1 = 0.9, β2 = 0.999, ε = 1e-8.
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,

    /// Comma-separated output widths of the conv layers.
    #[arg(long, default_value = "16,16", value_parser = parse_dims, value_name = "N,..")]
    pub conv_dims: Dims,

    /// Comma-separated widths of the hidden dense layers, or `none`.
    #[arg(long, default_value = "16", value_parser = parse_dims, value_name = "N,..")]
    pub hidden_dims: Dims,

    /// Activation of conv and hidden dense layers.
    #[arg(long, value_enum, default_value_t = ActivationArg::Softplus)]
    pub activation: ActivationArg,

    /// Pooling over atoms.
    #[arg(long, value_enum, default_value_t = PoolingArg::Mean)]
    pub pooling: PoolingArg,
}

impl TrainArgs {
    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer: match self.optimizer {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Adam => Optimizer::adam(),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn activation(&self) -> Activation {
        match self.activation {
            ActivationArg::Softplus => Activation::Softplus,
            ActivationArg::Relu => Activation::Relu,
        }
    }

    pub fn pooling(&self) -> Pooling {
        match self.pooling {
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Max => Pooling::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

fn parse_dims(s: &str) -> Result<Dims, String> {
    if s.trim().eq_ignore_ascii_case("none") {
        return Ok(Dims(Vec::new()));
    }
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("`{t}` is not a positive layer width")),
            Ok(n) => Ok(n),
        })
        .collect::<Result<_, _>>()
        .map(Dims)
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Featurized documents, graph documents or structure files, or
    /// directories of them.
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,

    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    /// Graph options used for structure inputs.
    #[command(flatten)]
    pub graph: GraphArgs,

    /// Prediction CSV (`source_id,prediction`); stdout if absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}
