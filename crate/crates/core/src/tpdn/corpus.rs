//! Text format for externally produced vectors.
//!
//! ```text
//! dim=<D> scheme_hint=<name or empty>
//! tok1 tok2 ... tokK<TAB>v1,v2,...,vD
//! ```
//!
//! Encoder-output caches use the same layout with digit tokens. Values are
//! written in shortest round-trip form, so write-then-read is exact.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FitData, Structure};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusRecord {
    pub tokens: Vec<String>,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCorpus {
    pub dim: usize,
    pub scheme_hint: Option<String>,
    pub records: Vec<CorpusRecord>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_header(line: &str) -> Result<(usize, Option<String>)> {
    let mut dim = None;
    let mut hint = None;
    for field in line.split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => dim = Some(v.parse::<usize>().map_err(|_| parse_error(1, format!("bad dim `{v}`")))?),
            Some(("scheme_hint", v)) => hint = (!v.is_empty()).then(|| v.to_string()),
            _ => return Err(parse_error(1, format!("unexpected header field `{field}`"))),
        }
    }
    let dim = dim.ok_or_else(|| parse_error(1, "header must start with dim=<D>"))?;
    if dim == 0 {
        return Err(parse_error(1, "dim must be positive"));
    }
    Ok((dim, hint))
}

fn parse_vector(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_error(line, format!("bad number `{v}`")))
        })
        .collect()
}

fn format_vector(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl EmbeddingCorpus {
    pub fn new(dim: usize, scheme_hint: Option<String>, records: Vec<CorpusRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::DimMismatch { record: i + 1, expected: dim, found: r.vector.len() });
            }
        }
        Ok(EmbeddingCorpus { dim, scheme_hint, records })
    }

    /// Corpus of digit sequences, e.g. cached encoder outputs.
    pub fn from_digit_vectors<T: Scalar>(sequences: &[Vec<u8>], vectors: &[Vec<T>], scheme_hint: Option<String>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        let records = sequences
            .iter()
            .zip(vectors)
            .map(|(s, v)| CorpusRecord {
                tokens: s.iter().map(u8::to_string).collect(),
                vector: v.iter().map(|x| x.to_f64_lossy()).collect(),
            })
            .collect();
        EmbeddingCorpus::new(dim, scheme_hint, records)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).ok_or_else(|| parse_error(1, "empty file"))?;
        let (dim, scheme_hint) = parse_header(header)?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (tokens, values) =
                line.split_once('\t').ok_or_else(|| parse_error(lineno, "expected <tokens>TAB<values>"))?;
            let tokens: Vec<String> = tokens.split_whitespace().map(str::to_string).collect();
            let vector = parse_vector(values, lineno)?;
            if vector.len() != dim {
                return Err(Error::DimMismatch { record: records.len() + 1, expected: dim, found: vector.len() });
            }
            records.push(CorpusRecord { tokens, vector });
        }
        Ok(EmbeddingCorpus { dim, scheme_hint, records })
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("dim={} scheme_hint={}\n", self.dim, self.scheme_hint.as_deref().unwrap_or(""));
        for r in &self.records {
            out.push_str(&r.tokens.join(" "));
            out.push('\t');
            out.push_str(&format_vector(&r.vector));
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EmbeddingCorpus::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn structures(&self) -> Vec<Structure> {
        self.records.iter().map(|r| Structure::from_tokens(r.tokens.clone())).collect()
    }

    pub fn vectors<T: Scalar>(&self) -> Vec<Vec<T>> {
        self.records.iter().map(|r| r.vector.iter().map(|&x| T::from_f64_lossy(x)).collect()).collect()
    }

    /// Distinct tokens in sorted order.
    pub fn vocabulary(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&String> = self.records.iter().flat_map(|r| &r.tokens).collect();
        set.into_iter().cloned().collect()
    }

    /// Seeded shuffle into train/dev/test by the given fractions.
    pub fn split<T: Scalar>(&self, dev_fraction: f64, test_fraction: f64, seed: u64) -> FitData<T> {
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = order.len();
        let n_dev = ((n as f64 * dev_fraction).round() as usize).max(usize::from(n > 1));
        let n_test = (n as f64 * test_fraction).round() as usize;
        let n_dev = n_dev.min(n);
        let n_test = n_test.min(n - n_dev);
        let structures = self.structures();
        let vectors = self.vectors::<T>();
        let take = |idx: &[usize]| {
            (idx.iter().map(|&i| structures[i].clone()).collect(), idx.iter().map(|&i| vectors[i].clone()).collect())
        };
        FitData {
            dev: take(&order[..n_dev]),
            test: take(&order[n_dev..n_dev + n_test]),
            train: take(&order[n_dev + n_test..]),
        }
    }
}

/// Fixed filler embeddings: the corpus header format with one token per record.
pub fn parse_filler_embeddings(text: &str) -> Result<(Vec<String>, Tensor<f64>)> {
    let corpus = EmbeddingCorpus::parse(text)?;
    let mut tokens = Vec::with_capacity(corpus.len());
    let mut data = Vec::with_capacity(corpus.len() * corpus.dim);
    for (i, r) in corpus.records.iter().enumerate() {
        if r.tokens.len() != 1 {
            return Err(parse_error(i + 2, "filler embedding records hold exactly one token"));
        }
        if tokens.contains(&r.tokens[0]) {
            return Err(parse_error(i + 2, format!("duplicate filler `{}`", r.tokens[0])));
        }
        tokens.push(r.tokens[0].clone());
        data.extend_from_slice(&r.vector);
    }
    let table = Tensor::new(vec![tokens.len(), corpus.dim], data)?;
    Ok((tokens, table))
}

pub fn load_filler_embeddings(path: &Path) -> Result<(Vec<String>, Tensor<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_filler_embeddings(&text)
}
