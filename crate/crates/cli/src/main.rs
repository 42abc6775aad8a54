mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::*;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Train digit-sequence seq2seq models and probe their encodings with tensor
/// product decomposition networks.
#[derive(Parser, Debug)]
#[command(name = "tpdn", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the train/dev/test digit-sequence splits
    GenData(GenData),
    /// Train one seq2seq model (cached under --out)
    Train(Train),
    /// Fit one TPDN to a trained model's encodings
    FitTpdn(FitTpdn),
    /// Substitution accuracy of TPDNs fed to a trained decoder
    Substitute(Substitute),
    /// Run the task x encoder x decoder x scheme x seed grid
    Grid(Grid),
    /// Substitution accuracy over filler and role widths
    SweepDims(SweepDims),
    /// Compare fits with and without the final linear layer
    AblateLinear(AblateLinear),
    /// Compare binding operations
    BindOps(BindOps),
    /// Role-diagnostic analogy distances for a trained encoder
    Analogy(Analogy),
    /// Fit a TPDN to an external embedding corpus
    Ingest(Ingest),
}

#[derive(Args, Debug)]
pub struct GenData {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct Train {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Args, Debug)]
pub struct FitTpdn {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub shape: TpdnShapeArgs,
    #[command(flatten)]
    pub tpdn_train: TpdnTrainArgs,
    #[command(flatten)]
    pub normalized: NormalizedArgs,
}

#[derive(Args, Debug)]
pub struct Substitute {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub schemes: SchemesArgs,
    #[command(flatten)]
    pub shape: TpdnShapeArgs,
    #[command(flatten)]
    pub tpdn_train: TpdnTrainArgs,
}

#[derive(Args, Debug)]
pub struct Grid {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub schemes: SchemesArgs,
    #[command(flatten)]
    pub shape: TpdnShapeArgs,
    #[command(flatten)]
    pub tpdn_train: TpdnTrainArgs,
    #[command(flatten)]
    pub normalized: NormalizedArgs,
}

#[derive(Args, Debug)]
pub struct SweepDims {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub tpdn_train: TpdnTrainArgs,
}

#[derive(Args, Debug)]
pub struct AblateLinear {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub ablation: AblationArgs,
    #[command(flatten)]
    pub tpdn_train: TpdnTrainArgs,
}

#[derive(Args, Debug)]
pub struct BindOps {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub schemes: SchemesArgs,
    #[command(flatten)]
    pub bind_ops: BindOpsArgs,
    #[command(flatten)]
    pub tpdn_train: TpdnTrainArgs,
}

#[derive(Args, Debug)]
pub struct Analogy {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub schemes: SchemesArgs,
    #[command(flatten)]
    pub analogy: AnalogyArgs,
}

#[derive(Args, Debug)]
pub struct Ingest {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub shape: TpdnShapeArgs,
    #[command(flatten)]
    pub tpdn_train: TpdnTrainArgs,
    #[command(flatten)]
    pub ingest: IngestArgs,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::FitTpdn(_) => "fit-tpdn",
            Command::Substitute(_) => "substitute",
            Command::Grid(_) => "grid",
            Command::SweepDims(_) => "sweep-dims",
            Command::AblateLinear(_) => "ablate-linear",
            Command::BindOps(_) => "bind-ops",
            Command::Analogy(_) => "analogy",
            Command::Ingest(_) => "ingest",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::GenData(c) => &c.common,
            Command::Train(c) => &c.common,
            Command::FitTpdn(c) => &c.common,
            Command::Substitute(c) => &c.common,
            Command::Grid(c) => &c.common,
            Command::SweepDims(c) => &c.common,
            Command::AblateLinear(c) => &c.common,
            Command::BindOps(c) => &c.common,
            Command::Analogy(c) => &c.common,
            Command::Ingest(c) => &c.common,
        }
    }

    /// Values given on the command line, keyed like the config file.
    fn flags(&self) -> toml::Table {
        let common = self.common().table();
        let rest = match self {
            Command::GenData(c) => vec![group(&c.data)],
            Command::Train(c) => vec![group(&c.data), group(&c.model), group(&c.train)],
            Command::FitTpdn(c) => vec![
                group(&c.data),
                group(&c.model),
                group(&c.train),
                group(&c.scheme),
                group(&c.shape),
                group(&c.tpdn_train),
                group(&c.normalized),
            ],
            Command::Substitute(c) => vec![
                group(&c.data),
                group(&c.model),
                group(&c.train),
                group(&c.schemes),
                group(&c.shape),
                group(&c.tpdn_train),
            ],
            Command::Grid(c) => vec![
                group(&c.data),
                group(&c.train),
                group(&c.grid),
                group(&c.schemes),
                group(&c.shape),
                group(&c.tpdn_train),
                group(&c.normalized),
            ],
            Command::SweepDims(c) => {
                vec![group(&c.data), group(&c.model), group(&c.train), group(&c.scheme), group(&c.sweep), group(&c.tpdn_train)]
            }
            Command::AblateLinear(c) => {
                vec![group(&c.data), group(&c.model), group(&c.train), group(&c.scheme), group(&c.ablation), group(&c.tpdn_train)]
            }
            Command::BindOps(c) => vec![
                group(&c.data),
                group(&c.model),
                group(&c.train),
                group(&c.schemes),
                group(&c.bind_ops),
                group(&c.tpdn_train),
            ],
            Command::Analogy(c) => vec![group(&c.data), group(&c.model), group(&c.train), group(&c.schemes), group(&c.analogy)],
            Command::Ingest(c) => vec![group(&c.scheme), group(&c.shape), group(&c.tpdn_train), group(&c.ingest)],
        };
        merge(std::iter::once(common).chain(rest))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_target(false).init();
    let name = cli.command.name();
    let config = match resolve(name, cli.command.common().config.as_deref(), cli.command.flags()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(name, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime { cell, message }) => {
            eprintln!("error: {cell}: {message}");
            ExitCode::from(1)
        }
    }
}
