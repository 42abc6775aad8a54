use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gru::{gru_step, BoundGru, GruCell};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::sequences::{apply_task, DigitSequence, TaskKind};
use crate::tensor::Tensor;
use crate::tree::{parse, ParseTree, TreeShape};

/// Recurrent topology of an encoder or decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Uni,
    Bi,
    Tree,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Uni, Arch::Bi, Arch::Tree];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Uni => "uni",
            Arch::Bi => "bi",
            Arch::Tree => "tree",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse { line: 0, message: format!("unknown architecture `{s}`") })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: Arch,
    pub decoder: Arch,
    pub embed_dim: usize,
    pub hidden: usize,
    pub vocab: usize,
}

impl ModelConfig {
    pub fn new(encoder: Arch, decoder: Arch) -> Self {
        ModelConfig { encoder, decoder, embed_dim: 10, hidden: 60, vocab: 10 }
    }

    pub fn half(&self) -> usize {
        self.hidden / 2
    }
}

/// One input/target pair with the parses the tree models need.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<u8>,
    pub target: Vec<u8>,
    pub input_shape: TreeShape,
    pub target_shape: TreeShape,
}

impl Example {
    pub fn new(input: Vec<u8>, target: Vec<u8>) -> Result<Self> {
        let input_shape = parse(&input)?.shape();
        let target_shape = parse(&target)?.shape();
        Ok(Example { input, target, input_shape, target_shape })
    }

    pub fn for_task(input: &DigitSequence, task: TaskKind) -> Result<Self> {
        Example::new(input.digits().to_vec(), apply_task(task, input).digits().to_vec())
    }
}

#[derive(Clone, Copy, Debug)]
enum EncoderCells {
    Uni(GruCell),
    Bi(GruCell, GruCell),
    Tree { leaf: GruCell, compose: GruCell },
}

#[derive(Clone, Copy, Debug)]
enum DecoderCells {
    Uni(GruCell),
    Bi { bridge_w: ParamId, bridge_b: ParamId, fwd: GruCell, bwd: GruCell },
    Tree { left: GruCell, right: GruCell },
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    embed: ParamId,
    encoder: EncoderCells,
    decoder: DecoderCells,
    out_w: ParamId,
    out_b: ParamId,
}

enum BoundEncoder {
    Uni(BoundGru),
    Bi(BoundGru, BoundGru),
    Tree { leaf: BoundGru, compose: BoundGru },
}

enum BoundDecoder {
    Uni(BoundGru),
    Bi { bridge_w: Var, bridge_b: Var, fwd: BoundGru, bwd: BoundGru },
    Tree { left: BoundGru, right: BoundGru },
}

/// Every parameter of a model bound onto one graph.
pub struct BoundModel {
    config: ModelConfig,
    embed: Var,
    encoder: BoundEncoder,
    decoder: BoundDecoder,
    out_w: Var,
    out_b: Var,
}

/// GRU encoder/decoder over digit sequences.
#[derive(Clone, Debug)]
pub struct Seq2Seq<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    layout: Layout,
}

fn linear_uniform<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.add(format!("{name}.w"), Tensor::uniform(&[fan_in, fan_out], bound, rng));
    store.add(format!("{name}.b"), Tensor::uniform(&[fan_out], bound, rng));
}

fn require(store_has: Option<ParamId>, name: &str) -> Result<ParamId> {
    store_has.ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
}

fn cell<T: Scalar>(store: &ParamStore<T>, prefix: &str, input: usize, hidden: usize) -> Result<GruCell> {
    let c = GruCell::lookup(store, prefix)
        .ok_or_else(|| Error::Checkpoint(format!("missing or malformed GRU `{prefix}`")))?;
    if c.input_dim != input || c.hidden_dim != hidden {
        return Err(Error::Checkpoint(format!(
            "GRU `{prefix}` is {}x{}, expected {input}x{hidden}",
            c.input_dim, c.hidden_dim
        )));
    }
    Ok(c)
}

impl Layout {
    fn resolve<T: Scalar>(store: &ParamStore<T>, cfg: &ModelConfig) -> Result<Layout> {
        let (e, h, half) = (cfg.embed_dim, cfg.hidden, cfg.half());
        let find = |name: &str| require(store.find(name), name);
        let encoder = match cfg.encoder {
            Arch::Uni => EncoderCells::Uni(cell(store, "enc.fwd", e, h)?),
            Arch::Bi => EncoderCells::Bi(cell(store, "enc.fwd", e, half)?, cell(store, "enc.bwd", e, half)?),
            Arch::Tree => EncoderCells::Tree { leaf: cell(store, "enc.leaf", e, h)?, compose: cell(store, "enc.compose", h, h)? },
        };
        let decoder = match cfg.decoder {
            Arch::Uni => DecoderCells::Uni(cell(store, "dec.fwd", h, h)?),
            Arch::Bi => DecoderCells::Bi {
                bridge_w: find("dec.bridge.w")?,
                bridge_b: find("dec.bridge.b")?,
                fwd: cell(store, "dec.fwd", half, half)?,
                bwd: cell(store, "dec.bwd", half, half)?,
            },
            Arch::Tree => DecoderCells::Tree { left: cell(store, "dec.left", h, h)?, right: cell(store, "dec.right", h, h)? },
        };
        let layout = Layout { embed: find("embed")?, encoder, decoder, out_w: find("out.w")?, out_b: find("out.b")? };
        let expect = |id: ParamId, shape: &[usize]| {
            if store.get(id).shape() == shape {
                Ok(())
            } else {
                Err(Error::Checkpoint(format!("`{}` has shape {:?}, expected {shape:?}", store.name(id), store.get(id).shape())))
            }
        };
        expect(layout.embed, &[cfg.vocab, e])?;
        expect(layout.out_w, &[h, cfg.vocab])?;
        expect(layout.out_b, &[cfg.vocab])?;
        if let DecoderCells::Bi { bridge_w, bridge_b, .. } = decoder {
            expect(bridge_w, &[h, half])?;
            expect(bridge_b, &[half])?;
        }
        Ok(layout)
    }
}

impl<T: Scalar> Seq2Seq<T> {
    /// Fresh model. GRU weights are uniform in `±1/sqrt(H)`, linear maps in
    /// `±1/sqrt(fan_in)`, and digit embeddings standard normal.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let (e, h, half) = (config.embed_dim, config.hidden, config.half());
        let mut store = ParamStore::new();
        let embed: Vec<T> = (0..config.vocab * e)
            .map(|_| T::from_f64_lossy(StandardNormal.sample(&mut *rng)))
            .collect();
        store.add("embed", Tensor::new(vec![config.vocab, e], embed).expect("embedding shape"));
        match config.encoder {
            Arch::Uni => {
                GruCell::register(&mut store, "enc.fwd", e, h, rng);
            }
            Arch::Bi => {
                GruCell::register(&mut store, "enc.fwd", e, half, rng);
                GruCell::register(&mut store, "enc.bwd", e, half, rng);
            }
            Arch::Tree => {
                GruCell::register(&mut store, "enc.leaf", e, h, rng);
                GruCell::register(&mut store, "enc.compose", h, h, rng);
            }
        }
        match config.decoder {
            Arch::Uni => {
                GruCell::register(&mut store, "dec.fwd", h, h, rng);
            }
            Arch::Bi => {
                linear_uniform(&mut store, "dec.bridge", h, half, rng);
                GruCell::register(&mut store, "dec.fwd", half, half, rng);
                GruCell::register(&mut store, "dec.bwd", half, half, rng);
            }
            Arch::Tree => {
                GruCell::register(&mut store, "dec.left", h, h, rng);
                GruCell::register(&mut store, "dec.right", h, h, rng);
            }
        }
        linear_uniform(&mut store, "out", h, config.vocab, rng);
        let layout = Layout::resolve(&store, &config).expect("freshly registered layout");
        Seq2Seq { config, params: store, layout }
    }

    /// Wraps an existing parameter store, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let layout = Layout::resolve(&params, &config)?;
        Ok(Seq2Seq { config, params, layout })
    }

    pub fn encoding_dim(&self) -> usize {
        self.config.hidden
    }

    /// Binds all parameters. `trainable = false` records no gradients.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> BoundModel {
        let store = &self.params;
        let l = &self.layout;
        let get = |g: &mut Graph<T>, id| if trainable { g.param(store, id) } else { g.frozen(store, id) };
        let embed = get(g, l.embed);
        let encoder = match l.encoder {
            EncoderCells::Uni(c) => BoundEncoder::Uni(c.bind(g, store, trainable)),
            EncoderCells::Bi(f, b) => BoundEncoder::Bi(f.bind(g, store, trainable), b.bind(g, store, trainable)),
            EncoderCells::Tree { leaf, compose } => {
                BoundEncoder::Tree { leaf: leaf.bind(g, store, trainable), compose: compose.bind(g, store, trainable) }
            }
        };
        let decoder = match l.decoder {
            DecoderCells::Uni(c) => BoundDecoder::Uni(c.bind(g, store, trainable)),
            DecoderCells::Bi { bridge_w, bridge_b, fwd, bwd } => BoundDecoder::Bi {
                bridge_w: get(g, bridge_w),
                bridge_b: get(g, bridge_b),
                fwd: fwd.bind(g, store, trainable),
                bwd: bwd.bind(g, store, trainable),
            },
            DecoderCells::Tree { left, right } => {
                BoundDecoder::Tree { left: left.bind(g, store, trainable), right: right.bind(g, store, trainable) }
            }
        };
        let out_w = get(g, l.out_w);
        let out_b = get(g, l.out_b);
        BoundModel { config: self.config, embed, encoder, decoder, out_w, out_b }
    }

    /// Encoding of one sequence. Tree encoders need its parse.
    pub fn encode(&self, seq: &[u8], tree: Option<&ParseTree>) -> Result<Vec<T>> {
        if seq.is_empty() {
            return Err(Error::BadLength(0));
        }
        let shape = match (self.config.encoder, tree) {
            (Arch::Tree, None) => return Err(Error::MissingTree),
            (Arch::Tree, Some(t)) => {
                if t.leaves() != seq {
                    return Err(Error::InvalidSequence("tree leaves differ from the sequence".into()));
                }
                Some(t.shape())
            }
            _ => None,
        };
        let mut g = Graph::new();
        let bm = self.bind(&mut g, false);
        let enc = bm.encode_batch(&mut g, &[seq], shape.as_ref())?;
        Ok(g.value(enc).data().to_vec())
    }

    /// Logits `[n, vocab]` decoded from an encoding. Tree decoders take the
    /// target shape; the others only its length.
    pub fn decode(&self, encoding: &[T], len: usize, shape: Option<&TreeShape>) -> Result<Tensor<T>> {
        Ok(self.decode_batch(&[encoding], len, shape)?.remove(0))
    }

    /// Batched decode: one `[n, vocab]` logit matrix per encoding.
    pub fn decode_batch(&self, encodings: &[&[T]], len: usize, shape: Option<&TreeShape>) -> Result<Vec<Tensor<T>>> {
        let h = self.config.hidden;
        let mut data = Vec::with_capacity(encodings.len() * h);
        for e in encodings {
            if e.len() != h {
                return Err(Error::DimensionMismatch { context: "decoder input", expected: h, found: e.len() });
            }
            data.extend_from_slice(e);
        }
        let mut g = Graph::new();
        let bm = self.bind(&mut g, false);
        let enc = g.constant(Tensor::new(vec![encodings.len(), h], data)?);
        let steps = bm.decode_batch(&mut g, enc, len, shape)?;
        let v = self.config.vocab;
        Ok((0..encodings.len())
            .map(|b| {
                let mut rows = Vec::with_capacity(len * v);
                for s in &steps {
                    rows.extend_from_slice(g.value(*s).row(b));
                }
                Tensor::new(vec![len, v], rows).expect("logit shape")
            })
            .collect())
    }

    /// Encodings for many examples, computed in shape-homogeneous batches.
    pub fn encode_all(&self, examples: &[Example]) -> Result<Vec<Vec<T>>> {
        let mut out = vec![Vec::new(); examples.len()];
        for idx in eval_chunks(group_indices(examples, |e| self.encoder_key(e))) {
            let ex = &examples[idx[0]];
            let inputs: Vec<&[u8]> = idx.iter().map(|&i| examples[i].input.as_slice()).collect();
            let shape = (self.config.encoder == Arch::Tree).then_some(&ex.input_shape);
            let mut g = Graph::new();
            let bm = self.bind(&mut g, false);
            let enc = bm.encode_batch(&mut g, &inputs, shape)?;
            for (row, &i) in idx.iter().enumerate() {
                out[i] = g.value(enc).row(row).to_vec();
            }
        }
        Ok(out)
    }

    /// Argmax predictions for every example.
    pub fn predict_all(&self, examples: &[Example]) -> Result<Vec<Vec<u8>>> {
        let mut out = vec![Vec::new(); examples.len()];
        for idx in eval_chunks(group_indices(examples, |e| self.batch_key(e))) {
            let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let mut g = Graph::new();
            let bm = self.bind(&mut g, false);
            let steps = bm.forward(&mut g, &batch)?;
            for (row, &i) in idx.iter().enumerate() {
                out[i] = steps.iter().map(|&s| argmax(g.value(s).row(row)) as u8).collect();
            }
        }
        Ok(out)
    }

    /// Mean per-sequence negative log likelihood over `examples`.
    pub fn mean_loss(&self, examples: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for idx in eval_chunks(group_indices(examples, |e| self.batch_key(e))) {
            let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let mut g = Graph::new();
            let bm = self.bind(&mut g, false);
            let loss = bm.loss(&mut g, &batch)?;
            total += g.value(loss).data()[0].to_f64_lossy() * idx.len() as f64;
        }
        Ok(total / examples.len().max(1) as f64)
    }

    /// Loss and per-parameter gradients for one batch.
    pub fn loss_and_grads(&self, batch: &[&Example]) -> Result<(f64, Vec<Option<Tensor<T>>>)> {
        let mut g = Graph::new();
        let bm = self.bind(&mut g, true);
        let loss = bm.loss(&mut g, batch)?;
        let value = g.value(loss).data()[0].to_f64_lossy();
        let grads = g.backward(loss)?;
        Ok((value, grads.collect(&self.params)))
    }

    /// Key under which examples can share an encoder pass.
    pub fn encoder_key(&self, e: &Example) -> String {
        match self.config.encoder {
            Arch::Tree => e.input_shape.key(),
            _ => e.input.len().to_string(),
        }
    }

    /// Key under which examples can share a full forward pass.
    pub fn batch_key(&self, e: &Example) -> String {
        let dec = match self.config.decoder {
            Arch::Tree => e.target_shape.key(),
            _ => e.target.len().to_string(),
        };
        format!("{}|{dec}", self.encoder_key(e))
    }
}

/// Example indices grouped by `key`, in order of first appearance within
/// each group and groups ordered by key.
pub fn group_indices<K: Ord>(examples: &[Example], key: impl Fn(&Example) -> K) -> BTreeMap<K, Vec<usize>> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        groups.entry(key(e)).or_default().push(i);
    }
    groups
}

/// Evaluation batches: groups split into chunks small enough to stay in cache.
fn eval_chunks<K: Ord>(groups: BTreeMap<K, Vec<usize>>) -> Vec<Vec<usize>> {
    groups.into_values().flat_map(|idx| idx.chunks(EVAL_BATCH).map(<[usize]>::to_vec).collect::<Vec<_>>()).collect()
}

const EVAL_BATCH: usize = 256;

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl BoundModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Encodes a batch of equal-length inputs; for a tree encoder all inputs
    /// must share `shape`. Returns `[B, hidden]`.
    pub fn encode_batch<T: Scalar>(&self, g: &mut Graph<T>, inputs: &[&[u8]], shape: Option<&TreeShape>) -> Result<Var> {
        let n = inputs.first().map_or(0, |s| s.len());
        if n == 0 {
            return Err(Error::BadLength(0));
        }
        if let Some(bad) = inputs.iter().find(|s| s.len() != n) {
            return Err(Error::BadLength(bad.len()));
        }
        let b = inputs.len();
        let column = |t: usize| inputs.iter().map(|s| s[t] as usize).collect::<Vec<_>>();
        match &self.encoder {
            BoundEncoder::Uni(cell) => {
                let mut h = g.constant(Tensor::zeros(&[b, cell.hidden_dim]));
                for t in 0..n {
                    let x = g.gather(self.embed, &column(t))?;
                    h = gru_step(g, cell, x, h)?;
                }
                Ok(h)
            }
            BoundEncoder::Bi(fwd, bwd) => {
                let mut hf = g.constant(Tensor::zeros(&[b, fwd.hidden_dim]));
                let mut hb = g.constant(Tensor::zeros(&[b, bwd.hidden_dim]));
                for t in 0..n {
                    let xf = g.gather(self.embed, &column(t))?;
                    hf = gru_step(g, fwd, xf, hf)?;
                    let xb = g.gather(self.embed, &column(n - 1 - t))?;
                    hb = gru_step(g, bwd, xb, hb)?;
                }
                g.concat_cols(hf, hb)
            }
            BoundEncoder::Tree { leaf, compose } => {
                let shape = shape.ok_or(Error::MissingTree)?;
                if shape.leaf_count() != n {
                    return Err(Error::BadLength(n));
                }
                let zero = g.constant(Tensor::zeros(&[b, leaf.hidden_dim]));
                let mut next_leaf = 0;
                self.encode_tree(g, shape, &column, leaf, compose, zero, &mut next_leaf)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn encode_tree<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        shape: &TreeShape,
        column: &dyn Fn(usize) -> Vec<usize>,
        leaf: &BoundGru,
        compose: &BoundGru,
        zero: Var,
        next_leaf: &mut usize,
    ) -> Result<Var> {
        match shape {
            TreeShape::Leaf => {
                let x = g.gather(self.embed, &column(*next_leaf))?;
                *next_leaf += 1;
                gru_step(g, leaf, x, zero)
            }
            TreeShape::Node(l, r) => {
                let left = self.encode_tree(g, l, column, leaf, compose, zero, next_leaf)?;
                let right = self.encode_tree(g, r, column, leaf, compose, zero, next_leaf)?;
                // left child as the input, right child as the carried state
                gru_step(g, compose, left, right)
            }
        }
    }

    /// Output logits per position, each `[B, vocab]`. The recurrence only
    /// sees its own hidden state, never emitted symbols.
    pub fn decode_batch<T: Scalar>(&self, g: &mut Graph<T>, enc: Var, len: usize, shape: Option<&TreeShape>) -> Result<Vec<Var>> {
        if len == 0 {
            return Err(Error::BadLength(0));
        }
        let states = match &self.decoder {
            BoundDecoder::Uni(cell) => {
                let mut h = enc;
                let mut states = Vec::with_capacity(len);
                for _ in 0..len {
                    h = gru_step(g, cell, h, h)?;
                    states.push(h);
                }
                states
            }
            BoundDecoder::Bi { bridge_w, bridge_b, fwd, bwd } => {
                let start = g.matmul(enc, *bridge_w)?;
                let start = g.add_row(start, *bridge_b)?;
                let (mut hf, mut hb) = (start, start);
                let mut f_states = Vec::with_capacity(len);
                let mut b_states = Vec::with_capacity(len);
                for _ in 0..len {
                    hf = gru_step(g, fwd, hf, hf)?;
                    f_states.push(hf);
                    hb = gru_step(g, bwd, hb, hb)?;
                    b_states.push(hb);
                }
                let mut states = Vec::with_capacity(len);
                for i in 0..len {
                    states.push(g.concat_cols(f_states[i], b_states[len - 1 - i])?);
                }
                states
            }
            BoundDecoder::Tree { left, right } => {
                let shape = shape.ok_or(Error::MissingTree)?;
                if shape.leaf_count() != len {
                    return Err(Error::BadLength(len));
                }
                let mut states = Vec::with_capacity(len);
                expand_tree(g, shape, enc, left, right, &mut states)?;
                states
            }
        };
        let mut logits = Vec::with_capacity(len);
        for s in states {
            let o = g.matmul(s, self.out_w)?;
            logits.push(g.add_row(o, self.out_b)?);
        }
        Ok(logits)
    }

    /// Logits for a batch of examples sharing one batch key.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, batch: &[&Example]) -> Result<Vec<Var>> {
        let first = batch.first().ok_or(Error::BadLength(0))?;
        let inputs: Vec<&[u8]> = batch.iter().map(|e| e.input.as_slice()).collect();
        let enc_shape = (self.config.encoder == Arch::Tree).then_some(&first.input_shape);
        if let Some(s) = enc_shape {
            if batch.iter().any(|e| &e.input_shape != s) {
                return Err(Error::InvalidSequence("tree-encoder batch mixes input shapes".into()));
            }
        }
        let enc = self.encode_batch(g, &inputs, enc_shape)?;
        let len = first.target.len();
        if let Some(bad) = batch.iter().find(|e| e.target.len() != len) {
            return Err(Error::BadLength(bad.target.len()));
        }
        let dec_shape = (self.config.decoder == Arch::Tree).then_some(&first.target_shape);
        if let Some(s) = dec_shape {
            if batch.iter().any(|e| &e.target_shape != s) {
                return Err(Error::InvalidSequence("tree-decoder batch mixes target shapes".into()));
            }
        }
        self.decode_batch(g, enc, len, dec_shape)
    }

    /// Mean over the batch of the per-sequence summed negative log likelihood.
    pub fn loss<T: Scalar>(&self, g: &mut Graph<T>, batch: &[&Example]) -> Result<Var> {
        let logits = self.forward(g, batch)?;
        let mut total: Option<Var> = None;
        for (t, step) in logits.into_iter().enumerate() {
            let targets: Vec<usize> = batch.iter().map(|e| e.target[t] as usize).collect();
            let lp = g.log_softmax(step);
            let nll = g.nll(lp, &targets)?;
            total = Some(match total {
                None => nll,
                Some(acc) => g.add(acc, nll)?,
            });
        }
        Ok(total.expect("at least one position"))
    }
}

fn expand_tree<T: Scalar>(
    g: &mut Graph<T>,
    shape: &TreeShape,
    h: Var,
    left: &BoundGru,
    right: &BoundGru,
    out: &mut Vec<Var>,
) -> Result<()> {
    match shape {
        TreeShape::Leaf => out.push(h),
        TreeShape::Node(l, r) => {
            let hl = gru_step(g, left, h, h)?;
            let hr = gru_step(g, right, h, h)?;
            expand_tree(g, l, hl, left, right, out)?;
            expand_tree(g, r, hr, left, right, out)?;
        }
    }
    Ok(())
}
