//! Tensor product decomposition networks: `M(flatten(Σ bind(r_i, f_i)))`
//! fitted by MSE to vectors produced by some other encoder.

mod corpus;
mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use corpus::{load_filler_embeddings, parse_filler_embeddings, CorpusRecord, EmbeddingCorpus};
pub use metrics::{baseline_targets, decoded_accuracy, normalized_mse, substitution_accuracy, NormalizedMse};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::roles::{role_tokens, Binding, RoleMode, RoleScheme, RoleVocabulary};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::training::{bucketed_batches, train, TrainConfig, TrainReport};
use crate::tree::{parse, ParseTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingOp {
    TensorProduct,
    CircularConvolution,
    ElementwiseProduct,
}

impl BindingOp {
    pub const ALL: [BindingOp; 3] = [BindingOp::TensorProduct, BindingOp::CircularConvolution, BindingOp::ElementwiseProduct];

    pub fn name(self) -> &'static str {
        match self {
            BindingOp::TensorProduct => "tensor_product",
            BindingOp::CircularConvolution => "circular_convolution",
            BindingOp::ElementwiseProduct => "elementwise_product",
        }
    }
}

impl fmt::Display for BindingOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BindingOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        BindingOp::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Parse { line: 0, message: format!("unknown binding op `{s}`") })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpdnConfig {
    pub filler_dim: usize,
    pub role_dim: usize,
    pub binding: BindingOp,
    pub use_final_linear: bool,
    pub output_dim: usize,
}

impl Default for TpdnConfig {
    fn default() -> Self {
        TpdnConfig { filler_dim: 20, role_dim: 20, binding: BindingOp::TensorProduct, use_final_linear: true, output_dim: 60 }
    }
}

impl TpdnConfig {
    pub fn bound_dim(&self) -> usize {
        match self.binding {
            BindingOp::TensorProduct => self.filler_dim * self.role_dim,
            _ => self.filler_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filler_dim == 0 || self.role_dim == 0 || self.output_dim == 0 {
            return Err(Error::DimensionMismatch { context: "tpdn dims must be positive", expected: 1, found: 0 });
        }
        if self.binding != BindingOp::TensorProduct && self.filler_dim != self.role_dim {
            return Err(Error::DimensionMismatch {
                context: "non-tensor binding needs equal filler and role dims",
                expected: self.filler_dim,
                found: self.role_dim,
            });
        }
        if !self.use_final_linear && self.bound_dim() != self.output_dim {
            return Err(Error::IncompatibleDims { filler: self.filler_dim, role: self.role_dim, target: self.output_dim });
        }
        Ok(())
    }
}

/// A structure to encode: filler tokens in order, plus the parse when the
/// tokens are digits and tree roles are wanted.
#[derive(Clone, Debug, PartialEq)]
pub struct Structure {
    pub tokens: Vec<String>,
    pub tree: Option<ParseTree>,
}

impl Structure {
    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        Ok(Structure { tokens: digit_tokens(digits), tree: Some(parse(digits)?) })
    }

    /// Tokens only; digit-only sequences also get their parse.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let digits: Option<Vec<u8>> =
            tokens.iter().map(|t| (t.len() == 1).then(|| t.parse::<u8>().ok()).flatten()).collect();
        let tree = digits.filter(|d| !d.is_empty()).and_then(|d| parse(&d).ok());
        Structure { tokens, tree }
    }
}

pub fn digit_tokens(digits: &[u8]) -> Vec<String> {
    digits.iter().map(u8::to_string).collect()
}

/// A structure resolved to table indices, paired with its target vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded<T> {
    pub fillers: Vec<usize>,
    pub roles: Vec<usize>,
    pub target: Vec<T>,
}

#[derive(Clone, Debug)]
enum FillerSource<T> {
    Learned(ParamId),
    /// Fixed embeddings passed through a learned affine map.
    Pretrained { table: Tensor<T>, w: ParamId, b: ParamId },
}

/// Parameter layout and forward computation, independent of any store.
#[derive(Clone, Debug)]
pub struct TpdnNet<T> {
    pub config: TpdnConfig,
    fillers: FillerSource<T>,
    roles: ParamId,
    linear: Option<(ParamId, ParamId)>,
}

impl<T: Scalar> TpdnNet<T> {
    /// Output rows `[B, output_dim]` for a batch whose members all have the
    /// same number of bindings.
    pub fn forward(&self, g: &mut Graph<T>, params: &ParamStore<T>, trainable: bool, batch: &[&Encoded<T>]) -> Result<Var> {
        let get = |g: &mut Graph<T>, id| if trainable { g.param(params, id) } else { g.frozen(params, id) };
        let n = batch.first().map_or(0, |e| e.fillers.len());
        if let Some(bad) = batch.iter().find(|e| e.fillers.len() != n || e.roles.len() != n) {
            return Err(Error::BadLength(bad.fillers.len()));
        }
        let rows = batch.len();
        let bound_dim = self.config.bound_dim();
        let mut sum = if n == 0 { Some(g.constant(Tensor::zeros(&[rows, bound_dim]))) } else { None };
        if n > 0 {
            let filler_table = match &self.fillers {
                FillerSource::Learned(id) => get(g, *id),
                FillerSource::Pretrained { table, w, b } => {
                    let t = g.constant(table.clone());
                    let w = get(g, *w);
                    let b = get(g, *b);
                    let x = g.matmul(t, w)?;
                    g.add_row(x, b)?
                }
            };
            let role_table = get(g, self.roles);
            for k in 0..n {
                let fi: Vec<usize> = batch.iter().map(|e| e.fillers[k]).collect();
                let ri: Vec<usize> = batch.iter().map(|e| e.roles[k]).collect();
                let f = g.gather(filler_table, &fi)?;
                let r = g.gather(role_table, &ri)?;
                let bound = match self.config.binding {
                    BindingOp::TensorProduct => g.outer_rows(r, f)?,
                    BindingOp::CircularConvolution => g.circular_conv_rows(r, f)?,
                    BindingOp::ElementwiseProduct => g.mul(r, f)?,
                };
                sum = Some(match sum {
                    None => bound,
                    Some(acc) => g.add(acc, bound)?,
                });
            }
        }
        let sum = sum.expect("initialised above");
        match self.linear {
            Some((w, b)) => {
                let w = get(g, w);
                let b = get(g, b);
                let y = g.matmul(sum, w)?;
                g.add_row(y, b)
            }
            None => Ok(sum),
        }
    }

    pub fn loss(&self, g: &mut Graph<T>, params: &ParamStore<T>, trainable: bool, batch: &[&Encoded<T>]) -> Result<Var> {
        let out = self.forward(g, params, trainable, batch)?;
        let d = self.config.output_dim;
        let mut data = Vec::with_capacity(batch.len() * d);
        for e in batch {
            if e.target.len() != d {
                return Err(Error::DimensionMismatch { context: "tpdn target", expected: d, found: e.target.len() });
            }
            data.extend_from_slice(&e.target);
        }
        let target = g.constant(Tensor::new(vec![batch.len(), d], data)?);
        g.mse(out, target)
    }

    pub fn loss_and_grads(&self, params: &ParamStore<T>, batch: &[&Encoded<T>]) -> Result<(f64, Vec<Option<Tensor<T>>>)> {
        let mut g = Graph::new();
        let loss = self.loss(&mut g, params, true, batch)?;
        let value = g.value(loss).data()[0].to_f64_lossy();
        let grads = g.backward(loss)?;
        Ok((value, grads.collect(params)))
    }

    /// Outputs for arbitrary examples, batched internally.
    pub fn predict_all(&self, params: &ParamStore<T>, items: &[Encoded<T>]) -> Result<Vec<Vec<T>>> {
        let mut out = vec![Vec::new(); items.len()];
        for idx in length_groups(items) {
            for chunk in idx.chunks(512) {
                let batch: Vec<&Encoded<T>> = chunk.iter().map(|&i| &items[i]).collect();
                let mut g = Graph::new();
                let y = self.forward(&mut g, params, false, &batch)?;
                for (row, &i) in chunk.iter().enumerate() {
                    out[i] = g.value(y).row(row).to_vec();
                }
            }
        }
        Ok(out)
    }

    /// Mean squared error over every element of every target.
    pub fn mse(&self, params: &ParamStore<T>, items: &[Encoded<T>]) -> Result<f64> {
        let preds = self.predict_all(params, items)?;
        let (mut total, mut count) = (0.0, 0usize);
        for (p, e) in preds.iter().zip(items) {
            for (a, b) in p.iter().zip(&e.target) {
                let d = (*a - *b).to_f64_lossy();
                total += d * d;
            }
            count += e.target.len();
        }
        Ok(total / count.max(1) as f64)
    }
}

fn length_groups<T>(items: &[Encoded<T>]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in items.iter().enumerate() {
        groups.entry(e.fillers.len()).or_default().push(i);
    }
    groups.into_values().collect()
}

/// A TPDN together with the vocabularies that map symbols to table rows.
#[derive(Clone, Debug)]
pub struct TpdnModel<T> {
    pub net: TpdnNet<T>,
    pub params: ParamStore<T>,
    pub scheme: RoleScheme,
    pub mode: RoleMode,
    fillers: Vec<String>,
    filler_index: BTreeMap<String, usize>,
    roles: RoleVocabulary,
}

fn normal_tensor<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(StandardNormal.sample(&mut *rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

impl<T: Scalar> TpdnModel<T> {
    /// Fresh model. Filler and role embeddings are standard normal; `M` is
    /// uniform in `±1/sqrt(bound_dim)`. The extra role row used for unknown
    /// roles in lenient mode starts at zero.
    pub fn new<R: Rng + ?Sized>(
        config: TpdnConfig,
        scheme: RoleScheme,
        fillers: Vec<String>,
        roles: RoleVocabulary,
        mode: RoleMode,
        pretrained: Option<Tensor<T>>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let filler_source = match pretrained {
            None => FillerSource::Learned(params.add("filler", normal_tensor(&[fillers.len(), config.filler_dim], rng))),
            Some(table) => {
                if table.rows() != fillers.len() {
                    return Err(Error::DimensionMismatch {
                        context: "pretrained filler rows",
                        expected: fillers.len(),
                        found: table.rows(),
                    });
                }
                let d = table.cols();
                let bound = 1.0 / (d as f64).sqrt();
                let w = params.add("filler_map.w", Tensor::uniform(&[d, config.filler_dim], bound, rng));
                let b = params.add("filler_map.b", Tensor::uniform(&[config.filler_dim], bound, rng));
                FillerSource::Pretrained { table, w, b }
            }
        };
        let mut role_table = normal_tensor::<T, R>(&[roles.table_rows(), config.role_dim], rng);
        let unk = roles.unknown_index() * config.role_dim;
        role_table.data_mut()[unk..].iter_mut().for_each(|v| *v = T::zero());
        let role_id = params.add("role", role_table);
        let linear = config.use_final_linear.then(|| {
            let bd = config.bound_dim();
            let bound = 1.0 / (bd as f64).sqrt();
            let w = params.add("m.w", Tensor::uniform(&[bd, config.output_dim], bound, rng));
            let b = params.add("m.b", Tensor::uniform(&[config.output_dim], bound, rng));
            (w, b)
        });
        let filler_index = fillers.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(TpdnModel {
            net: TpdnNet { config, fillers: filler_source, roles: role_id, linear },
            params,
            scheme,
            mode,
            fillers,
            filler_index,
            roles,
        })
    }

    /// Digit fillers `0..=9` and a role vocabulary built from `structures`.
    pub fn for_digits<R: Rng + ?Sized>(
        config: TpdnConfig,
        scheme: RoleScheme,
        structures: &[Structure],
        mode: RoleMode,
        rng: &mut R,
    ) -> Result<Self> {
        let roles = role_vocabulary(scheme, structures)?;
        TpdnModel::new(config, scheme, digit_tokens(&(0..10).collect::<Vec<u8>>()), roles, mode, None, rng)
    }

    pub fn config(&self) -> &TpdnConfig {
        &self.net.config
    }

    pub fn fillers(&self) -> &[String] {
        &self.fillers
    }

    pub fn role_vocabulary(&self) -> &RoleVocabulary {
        &self.roles
    }

    pub fn filler_index(&self, token: &str) -> Result<usize> {
        self.filler_index
            .get(token)
            .copied()
            .ok_or_else(|| Error::InvalidSequence(format!("filler `{token}` is not in the vocabulary")))
    }

    /// Resolves a structure to table indices under the model's role mode.
    pub fn resolve(&self, s: &Structure) -> Result<(Vec<usize>, Vec<usize>)> {
        let tokens = role_tokens(self.scheme, &s.tokens, s.tree.as_ref())?;
        let roles = tokens.iter().map(|t| self.roles.lookup(t, self.mode)).collect::<Result<Vec<_>>>()?;
        let fillers = s.tokens.iter().map(|t| self.filler_index(t)).collect::<Result<Vec<_>>>()?;
        Ok((fillers, roles))
    }

    pub fn encode_targets(&self, structures: &[Structure], targets: &[Vec<T>]) -> Result<Vec<Encoded<T>>> {
        if structures.len() != targets.len() {
            return Err(Error::DimensionMismatch { context: "targets per structure", expected: structures.len(), found: targets.len() });
        }
        structures
            .iter()
            .zip(targets)
            .map(|(s, t)| {
                let (fillers, roles) = self.resolve(s)?;
                Ok(Encoded { fillers, roles, target: t.clone() })
            })
            .collect()
    }

    /// `M(flatten(Σ bind(r_i, f_i)))` for explicit digit bindings.
    pub fn compose(&self, bindings: &[Binding]) -> Result<Vec<T>> {
        let mut fillers = Vec::with_capacity(bindings.len());
        let mut roles = Vec::with_capacity(bindings.len());
        for b in bindings {
            fillers.push(self.filler_index(&b.filler.to_string())?);
            roles.push(self.roles.lookup(&b.role, self.mode)?);
        }
        let item = Encoded { fillers, roles, target: Vec::new() };
        let mut g = Graph::new();
        let y = self.net.forward(&mut g, &self.params, false, &[&item])?;
        Ok(g.value(y).data().to_vec())
    }

    /// Compositions for many structures.
    pub fn compose_all(&self, structures: &[Structure]) -> Result<Vec<Vec<T>>> {
        let items = structures
            .iter()
            .map(|s| {
                let (fillers, roles) = self.resolve(s)?;
                Ok(Encoded { fillers, roles, target: Vec::new() })
            })
            .collect::<Result<Vec<_>>>()?;
        self.net.predict_all(&self.params, &items)
    }

    pub fn mse(&self, items: &[Encoded<T>]) -> Result<f64> {
        self.net.mse(&self.params, items)
    }

    /// Mutable access to the filler table when fillers are learned directly.
    pub fn filler_table_mut(&mut self) -> Option<&mut Tensor<T>> {
        match self.net.fillers {
            FillerSource::Learned(id) => Some(self.params.get_mut(id)),
            FillerSource::Pretrained { .. } => None,
        }
    }

    pub fn role_table_mut(&mut self) -> &mut Tensor<T> {
        self.params.get_mut(self.net.roles)
    }

    /// `(weights [bound, out], bias [out])` of the final map, if present.
    pub fn final_linear_ids(&self) -> Option<(ParamId, ParamId)> {
        self.net.linear
    }
}

/// Role vocabulary of every role token occurring in `structures`.
pub fn role_vocabulary(scheme: RoleScheme, structures: &[Structure]) -> Result<RoleVocabulary> {
    let mut tokens = std::collections::BTreeSet::new();
    for s in structures {
        tokens.extend(role_tokens(scheme, &s.tokens, s.tree.as_ref())?);
    }
    Ok(RoleVocabulary::from_tokens(scheme, tokens))
}

/// Train/dev/test structures and target vectors for a fit.
#[derive(Clone, Debug)]
pub struct FitData<T> {
    pub train: (Vec<Structure>, Vec<Vec<T>>),
    pub dev: (Vec<Structure>, Vec<Vec<T>>),
    pub test: (Vec<Structure>, Vec<Vec<T>>),
}

impl<T: Scalar> FitData<T> {
    pub fn output_dim(&self) -> usize {
        self.train.1.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug)]
pub struct FitResult<T> {
    pub model: TpdnModel<T>,
    pub report: TrainReport,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Fits a TPDN with the given role scheme. The role vocabulary comes from
/// the training split.
pub fn fit_tpdn<T: Scalar>(data: &FitData<T>, scheme: RoleScheme, config: &TpdnConfig, train_config: &TrainConfig, mode: RoleMode, seed: u64) -> Result<FitResult<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = TpdnConfig { output_dim: data.output_dim(), ..*config };
    let model = TpdnModel::for_digits(config, scheme, &data.train.0, mode, &mut rng)?;
    fit_model(model, data, train_config, &mut rng)
}

/// Trains an already constructed model (e.g. one with pretrained fillers).
pub fn fit_model<T: Scalar, R: Rng>(mut model: TpdnModel<T>, data: &FitData<T>, train_config: &TrainConfig, rng: &mut R) -> Result<FitResult<T>> {
    let train_set = model.encode_targets(&data.train.0, &data.train.1)?;
    let dev_set = model.encode_targets(&data.dev.0, &data.dev.1)?;
    let test_set = model.encode_targets(&data.test.0, &data.test.1)?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::InvalidSequence("training and dev splits must be non-empty".into()));
    }
    let keys: Vec<usize> = train_set.iter().map(|e| e.fillers.len()).collect();
    let net = model.net.clone();
    let report = train(
        &mut model.params,
        train_config,
        train_set.len(),
        rng,
        |r| bucketed_batches(&keys, train_config.batch_size, r),
        |p, idx| {
            let batch: Vec<&Encoded<T>> = idx.iter().map(|&i| &train_set[i]).collect();
            net.loss_and_grads(p, &batch)
        },
        |p| net.mse(p, &dev_set),
    )?;
    let train_mse = model.mse(&train_set)?;
    let test_mse = if test_set.is_empty() { f64::NAN } else { model.mse(&test_set)? };
    Ok(FitResult { model, report, train_mse, test_mse })
}
