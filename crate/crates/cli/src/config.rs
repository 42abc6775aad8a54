//! Run configuration: a TOML document overlaid by command-line flags.
//!
//! Every config key has a flag of the same name (snake_case in TOML,
//! kebab-case on the command line). Flags win over the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};
use tpdn_core::optim::AdamConfig;
use tpdn_core::roles::{RoleMode, RoleScheme};
use tpdn_core::seq2seq::Arch;
use tpdn_core::sequences::{DatasetConfig, TaskKind};
use tpdn_core::tpdn::{BindingOp, TpdnConfig};
use tpdn_core::training::TrainConfig;

pub const OUT_ENV: &str = "TPDN_OUT";
pub const DEFAULT_OUT: &str = "runs";

/// A filler/role dimension pair written `FxR`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DimPair(pub usize, pub usize);

impl FromStr for DimPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (f, r) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected FILLERxROLE, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension `{v}` in `{s}`"));
        Ok(DimPair(parse(f)?, parse(r)?))
    }
}

impl TryFrom<String> for DimPair {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<DimPair> for String {
    fn from(p: DimPair) -> String {
        p.to_string()
    }
}

impl fmt::Display for DimPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Subcommand the document is meant for; checked when present.
    pub command: Option<String>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub role_mode: RoleMode,

    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub min_len: usize,
    pub max_len: usize,

    pub task: Option<TaskKind>,
    pub encoder: Arch,
    pub decoder: Arch,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub checkpoint_interval: usize,
    pub patience: Option<usize>,

    pub scheme: Option<RoleScheme>,
    pub schemes: Vec<RoleScheme>,
    pub filler_dim: usize,
    pub role_dim: usize,
    pub binding: BindingOp,
    pub final_linear: bool,
    pub tpdn_epochs: usize,
    pub tpdn_lr: f64,

    pub tasks: Vec<TaskKind>,
    pub encoders: Vec<Arch>,
    pub decoders: Vec<Arch>,
    /// Number of model seeds, counted up from `seed`.
    pub seeds: usize,
    pub normalized_mse: bool,

    pub filler_dims: Vec<usize>,
    pub role_dims: Vec<usize>,
    pub pairs: Vec<DimPair>,
    pub ops: Vec<BindingOp>,
    pub dims: Vec<usize>,
    pub per_scheme: usize,

    pub input: Option<PathBuf>,
    pub fillers: Option<PathBuf>,
    pub dev_frac: f64,
    pub test_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = DatasetConfig::default();
        let train = TrainConfig::default();
        let tpdn = TpdnConfig::default();
        RunConfig {
            command: None,
            seed: 0,
            out: None,
            workers: 1,
            role_mode: RoleMode::Strict,
            train_size: data.train,
            dev_size: data.dev,
            test_size: data.test,
            min_len: data.min_len,
            max_len: data.max_len,
            task: None,
            encoder: Arch::Uni,
            decoder: Arch::Uni,
            epochs: train.max_epochs,
            batch_size: train.batch_size,
            lr: train.adam.lr,
            checkpoint_interval: train.checkpoint_interval,
            patience: None,
            scheme: None,
            schemes: RoleScheme::ALL.to_vec(),
            filler_dim: tpdn.filler_dim,
            role_dim: tpdn.role_dim,
            binding: tpdn.binding,
            final_linear: tpdn.use_final_linear,
            tpdn_epochs: train.max_epochs,
            tpdn_lr: train.adam.lr,
            tasks: TaskKind::ALL.to_vec(),
            encoders: Arch::ALL.to_vec(),
            decoders: Arch::ALL.to_vec(),
            seeds: 5,
            normalized_mse: true,
            filler_dims: vec![1, 2, 5, 10, 20, 30, 60],
            role_dims: vec![1, 2, 3, 4, 5, 6, 8, 10, 12, 20],
            pairs: vec![DimPair(5, 12), DimPair(6, 10), DimPair(10, 6), DimPair(12, 5), DimPair(20, 3), DimPair(30, 2), DimPair(60, 1)],
            ops: BindingOp::ALL.to_vec(),
            dims: vec![20, 60],
            per_scheme: 20,
            input: None,
            fillers: None,
            dev_frac: 0.1,
            test_frac: 0.1,
        }
    }
}

impl RunConfig {
    /// Output root: config or flag, then `$TPDN_OUT`, then `runs`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            train: self.train_size,
            dev: self.dev_size,
            test: self.test_size,
            min_len: self.min_len,
            max_len: self.max_len,
            seed: self.seed,
        }
    }

    pub fn seq2seq_training(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            checkpoint_interval: self.checkpoint_interval,
            patience: self.patience,
            max_epochs: self.epochs,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }

    pub fn tpdn_training(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            checkpoint_interval: self.checkpoint_interval,
            max_epochs: self.tpdn_epochs,
            adam: AdamConfig { lr: self.tpdn_lr, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }

    /// Width of the encodings TPDNs are fitted to.
    pub fn tpdn(&self, output_dim: usize) -> TpdnConfig {
        TpdnConfig {
            filler_dim: self.filler_dim,
            role_dim: self.role_dim,
            binding: self.binding,
            use_final_linear: self.final_linear,
            output_dim,
        }
    }

    pub fn task_or(&self, default: TaskKind) -> TaskKind {
        self.task.unwrap_or(default)
    }

    pub fn scheme_or(&self, default: RoleScheme) -> RoleScheme {
        self.scheme.unwrap_or(default)
    }
}

/// Reads the optional config file, overlays `flags` and validates the result.
pub fn resolve(command: &str, file: Option<&Path>, flags: toml::Table) -> Result<RunConfig, String> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            text.parse::<toml::Table>().map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => toml::Table::new(),
    };
    table.extend(flags);
    let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| format!("config: {}", e.message()))?;
    if let Some(c) = &config.command {
        if c != command {
            return Err(format!("config is for `{c}`, not `{command}`"));
        }
    }
    if config.workers == 0 {
        return Err("workers must be at least 1".into());
    }
    Ok(config)
}

fn table_of<S: Serialize>(value: &S) -> toml::Table {
    toml::Table::try_from(value).expect("flag groups serialise to a table")
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct CommonArgs {
    /// Seed for data generation, initialisation and fitting
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [env: TPDN_OUT, default: runs]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags override its values
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Worker threads for grid cells
    #[arg(long)]
    pub workers: Option<usize>,
    /// Reject role tokens not seen in training (sets role_mode = "strict")
    #[arg(long, conflicts_with = "lenient_roles")]
    #[serde(skip)]
    pub strict_roles: bool,
    /// Map unseen role tokens to a shared zero-initialised row (role_mode = "lenient")
    #[arg(long)]
    #[serde(skip)]
    pub lenient_roles: bool,
}

impl CommonArgs {
    pub fn table(&self) -> toml::Table {
        let mut t = table_of(self);
        if self.strict_roles {
            t.insert("role_mode".into(), "strict".into());
        }
        if self.lenient_roles {
            t.insert("role_mode".into(), "lenient".into());
        }
        t
    }
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct DataArgs {
    /// Training sequences
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Dev sequences
    #[arg(long)]
    pub dev_size: Option<usize>,
    /// Test sequences
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Shortest sequence length
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Longest sequence length
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct ModelArgs {
    /// autoencode, reverse, sort or interleave
    #[arg(long)]
    pub task: Option<TaskKind>,
    /// uni, bi or tree
    #[arg(long)]
    pub encoder: Option<Arch>,
    /// uni, bi or tree
    #[arg(long)]
    pub decoder: Option<Arch>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct TrainArgs {
    /// Maximum seq2seq training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate for seq2seq training
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training examples between dev evaluations
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Dev evaluations without improvement before stopping (default: one epoch)
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct TpdnShapeArgs {
    /// Filler embedding width
    #[arg(long)]
    pub filler_dim: Option<usize>,
    /// Role embedding width
    #[arg(long)]
    pub role_dim: Option<usize>,
    /// tensor-product, circular-convolution or elementwise-product
    #[arg(long)]
    pub binding: Option<BindingOp>,
    /// Map the bound representation through a learned affine layer
    #[arg(long)]
    pub final_linear: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct TpdnTrainArgs {
    /// Maximum TPDN training epochs
    #[arg(long)]
    pub tpdn_epochs: Option<usize>,
    /// Adam learning rate for TPDN fitting
    #[arg(long)]
    pub tpdn_lr: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct SchemeArgs {
    /// Role scheme: ltr, rtl, bi, wickel, tree or bow
    #[arg(long)]
    pub scheme: Option<RoleScheme>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct SchemesArgs {
    /// Comma-separated role schemes
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<RoleScheme>>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct GridArgs {
    /// Comma-separated tasks
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<TaskKind>>,
    /// Comma-separated encoders
    #[arg(long, value_delimiter = ',')]
    pub encoders: Option<Vec<Arch>>,
    /// Comma-separated decoders
    #[arg(long, value_delimiter = ',')]
    pub decoders: Option<Vec<Arch>>,
    /// Number of model seeds, starting at --seed
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct NormalizedArgs {
    /// Also fit a TPDN to random baseline vectors and report the MSE ratio
    #[arg(long)]
    pub normalized_mse: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct SweepArgs {
    /// Comma-separated filler widths
    #[arg(long, value_delimiter = ',')]
    pub filler_dims: Option<Vec<usize>>,
    /// Comma-separated role widths
    #[arg(long, value_delimiter = ',')]
    pub role_dims: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct AblationArgs {
    /// Comma-separated FILLERxROLE pairs whose product is the encoding width
    #[arg(long, value_delimiter = ',')]
    pub pairs: Option<Vec<DimPair>>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct BindOpsArgs {
    /// Comma-separated binding operations
    #[arg(long, value_delimiter = ',')]
    pub ops: Option<Vec<BindingOp>>,
    /// Comma-separated shared filler/role widths
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct AnalogyArgs {
    /// Diagnostic analogies generated per scheme
    #[arg(long)]
    pub per_scheme: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct IngestArgs {
    /// Embedding corpus file (`dim=D` header, one `tokens<TAB>vector` record per line)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Optional fixed filler embeddings in the same format, one token per record
    #[arg(long)]
    pub fillers: Option<PathBuf>,
    /// Fraction of records held out for dev
    #[arg(long)]
    pub dev_frac: Option<f64>,
    /// Fraction of records held out for test
    #[arg(long)]
    pub test_frac: Option<f64>,
}

pub fn merge(tables: impl IntoIterator<Item = toml::Table>) -> toml::Table {
    let mut out = toml::Table::new();
    for t in tables {
        out.extend(t);
    }
    out
}

pub fn group<S: Serialize>(value: &S) -> toml::Table {
    table_of(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_standard_setup() {
        let c = RunConfig::default();
        assert_eq!((c.filler_dim, c.role_dim, c.batch_size), (20, 20, 32));
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.dataset(), DatasetConfig::default());
        assert_eq!(c.role_mode, RoleMode::Strict);
    }

    #[test]
    fn flags_override_the_file_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\nfiller_dim = 7\nschemes = [\"ltr\", \"bow\"]\npairs = [\"5x12\"]\n").unwrap();
        let flags = group(&TpdnShapeArgs { filler_dim: Some(9), ..Default::default() });
        let c = resolve("grid", Some(&path), flags).unwrap();
        assert_eq!((c.seed, c.filler_dim), (3, 9));
        assert_eq!(c.schemes, vec![RoleScheme::Ltr, RoleScheme::Bow]);
        assert_eq!(c.pairs, vec![DimPair(5, 12)]);

        std::fs::write(&path, "filler_dimm = 7\n").unwrap();
        assert!(resolve("grid", Some(&path), toml::Table::new()).unwrap_err().contains("filler_dimm"));
        std::fs::write(&path, "command = \"train\"\n").unwrap();
        assert!(resolve("grid", Some(&path), toml::Table::new()).is_err());
    }

    #[test]
    fn role_flags_set_the_mode() {
        let lenient = CommonArgs { lenient_roles: true, ..Default::default() };
        assert_eq!(resolve("x", None, lenient.table()).unwrap().role_mode, RoleMode::Lenient);
        let strict = CommonArgs { strict_roles: true, ..Default::default() };
        assert_eq!(resolve("x", None, strict.table()).unwrap().role_mode, RoleMode::Strict);
    }

    #[test]
    fn dim_pairs_parse() {
        assert_eq!("5x12".parse::<DimPair>().unwrap(), DimPair(5, 12));
        assert!("5-12".parse::<DimPair>().is_err());
        assert_eq!(DimPair(60, 1).to_string(), "60x1");
    }
}
