//! Digit-sequence corpus, task targets and the dataset file format.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tree::{self, ParseTree};

pub const MAX_LEN: usize = 6;
pub const ALPHABET: usize = 10;

/// A non-empty sequence of at most [`MAX_LEN`] digits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DigitSequence(Vec<u8>);

impl DigitSequence {
    pub fn new(digits: Vec<u8>) -> Result<Self> {
        if digits.is_empty() || digits.len() > MAX_LEN {
            return Err(Error::InvalidSequence(format!("length {} outside 1..={MAX_LEN}", digits.len())));
        }
        if let Some(d) = digits.iter().find(|&&d| d as usize >= ALPHABET) {
            return Err(Error::InvalidSequence(format!("digit {d} out of range")));
        }
        Ok(DigitSequence(digits))
    }

    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse_tree(&self) -> ParseTree {
        tree::parse(&self.0).expect("validated sequence always parses")
    }
}

impl fmt::Display for DigitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for DigitSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .split(',')
            .map(|p| p.trim().parse::<u8>().map_err(|_| Error::InvalidSequence(format!("bad digit `{p}`"))))
            .collect::<Result<Vec<_>>>()?;
        DigitSequence::new(digits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Autoencode,
    Reverse,
    Sort,
    Interleave,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Autoencode, TaskKind::Reverse, TaskKind::Sort, TaskKind::Interleave];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Autoencode => "autoencode",
            TaskKind::Reverse => "reverse",
            TaskKind::Sort => "sort",
            TaskKind::Interleave => "interleave",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parse { line: 0, message: format!("unknown task `{s}`") })
    }
}

/// Target sequence for `task`.
pub fn apply_task(task: TaskKind, seq: &DigitSequence) -> DigitSequence {
    let d = seq.digits();
    let out = match task {
        TaskKind::Autoencode => d.to_vec(),
        TaskKind::Reverse => d.iter().rev().copied().collect(),
        TaskKind::Sort => {
            let mut v = d.to_vec();
            v.sort();
            v
        }
        TaskKind::Interleave => {
            let (mut lo, mut hi) = (0usize, d.len());
            let mut v = Vec::with_capacity(d.len());
            while lo < hi {
                v.push(d[lo]);
                lo += 1;
                if lo < hi {
                    hi -= 1;
                    v.push(d[hi]);
                }
            }
            v
        }
    };
    DigitSequence(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { train: 40_000, dev: 5_000, test: 5_000, min_len: 1, max_len: MAX_LEN, seed: 0 }
    }
}

impl DatasetConfig {
    pub fn count(&self) -> usize {
        self.train + self.dev + self.test
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<DigitSequence>,
    pub dev: Vec<DigitSequence>,
    pub test: Vec<DigitSequence>,
    pub seed: u64,
}

/// Number of distinct sequences with lengths in `min_len..=max_len`.
pub fn universe_size(min_len: usize, max_len: usize) -> usize {
    (min_len..=max_len).map(|l| ALPHABET.pow(l as u32)).sum()
}

/// Draws distinct sequences: a length uniform in `min_len..=max_len`, then
/// uniform digits, rejecting repeats. The first `train` draws form the
/// training split, then dev, then test.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    if config.min_len == 0 || config.min_len > config.max_len || config.max_len > MAX_LEN {
        return Err(Error::InvalidSequence(format!(
            "length range {}..={} outside 1..={MAX_LEN}",
            config.min_len, config.max_len
        )));
    }
    let available = universe_size(config.min_len, config.max_len);
    let count = config.count();
    if count > available {
        return Err(Error::InsufficientSpace { requested: count, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = HashSet::with_capacity(count);
    let mut drawn = Vec::with_capacity(count);
    while drawn.len() < count {
        let len = rng.random_range(config.min_len..=config.max_len);
        let digits: Vec<u8> = (0..len).map(|_| rng.random_range(0..ALPHABET as u8)).collect();
        if seen.insert(digits.clone()) {
            drawn.push(DigitSequence(digits));
        }
    }
    let test = drawn.split_off(config.train + config.dev);
    let dev = drawn.split_off(config.train);
    Ok(Dataset { train: drawn, dev, test, seed: config.seed })
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[DigitSequence] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Split, &DigitSequence)> {
        self.train
            .iter()
            .map(|s| (Split::Train, s))
            .chain(self.dev.iter().map(|s| (Split::Dev, s)))
            .chain(self.test.iter().map(|s| (Split::Test, s)))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dataset file: header `split<TAB>digits<TAB>tree`, then one record
    /// per line with comma-separated digits and the parenthesized parse.
    pub fn to_file_string(&self, with_trees: bool) -> String {
        let mut out = String::from(if with_trees { "split\tdigits\ttree\n" } else { "split\tdigits\n" });
        for (split, seq) in self.iter() {
            out.push_str(split.name());
            out.push('\t');
            out.push_str(&seq.to_string());
            if with_trees {
                out.push('\t');
                out.push_str(&seq.parse_tree().to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_file_str(text: &str, seed: u64) -> Result<Self> {
        let mut ds = Dataset { train: Vec::new(), dev: Vec::new(), test: Vec::new(), seed };
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if i == 0 && line.starts_with("split") {
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::Parse { line: lineno, message: "expected 2 or 3 tab-separated fields".into() });
            }
            let seq: DigitSequence = fields[1]
                .parse()
                .map_err(|e: Error| Error::Parse { line: lineno, message: e.to_string() })?;
            if let Some(tree_text) = fields.get(2) {
                let t = ParseTree::from_parenthesized(tree_text)
                    .map_err(|_| Error::Parse { line: lineno, message: format!("bad tree `{tree_text}`") })?;
                if t.leaves() != seq.digits() {
                    return Err(Error::Parse { line: lineno, message: "tree leaves disagree with digits".into() });
                }
            }
            match fields[0] {
                "train" => ds.train.push(seq),
                "dev" => ds.dev.push(seq),
                "test" => ds.test.push(seq),
                other => return Err(Error::Parse { line: lineno, message: format!("unknown split `{other}`") }),
            }
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string(true)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_str(&text, seed)
    }

    /// SHA-256 over the serialized records.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string(false).as_bytes()))
    }

    pub fn mean_length(&self) -> f64 {
        let total: usize = self.iter().map(|(_, s)| s.len()).sum();
        total as f64 / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(d: &[u8]) -> DigitSequence {
        DigitSequence::new(d.to_vec()).unwrap()
    }

    #[test]
    fn task_examples() {
        assert_eq!(apply_task(TaskKind::Reverse, &seq(&[3, 4, 0])), seq(&[0, 4, 3]));
        assert_eq!(apply_task(TaskKind::Sort, &seq(&[4, 3, 6, 5, 1, 3])), seq(&[1, 3, 3, 4, 5, 6]));
        assert_eq!(apply_task(TaskKind::Interleave, &seq(&[4, 3, 6, 5, 1, 3])), seq(&[4, 3, 3, 1, 6, 5]));
        assert_eq!(apply_task(TaskKind::Interleave, &seq(&[3, 4, 0])), seq(&[3, 0, 4]));
        assert_eq!(apply_task(TaskKind::Reverse, &seq(&[4, 3, 6, 5, 1, 3])), seq(&[3, 1, 5, 6, 3, 4]));
        assert_eq!(apply_task(TaskKind::Autoencode, &seq(&[9])), seq(&[9]));
    }

    #[test]
    fn sequence_validation() {
        assert!(DigitSequence::new(vec![]).is_err());
        assert!(DigitSequence::new(vec![1; 7]).is_err());
        assert!(DigitSequence::new(vec![10]).is_err());
        assert_eq!("5,2,3".parse::<DigitSequence>().unwrap(), seq(&[5, 2, 3]));
    }

    #[test]
    fn universe_and_insufficient_space() {
        assert_eq!(universe_size(1, 6), 1_111_110);
        let cfg = DatasetConfig { train: 100, dev: 10, test: 1, min_len: 1, max_len: 2, seed: 1 };
        assert!(matches!(generate_dataset(&cfg), Err(Error::InsufficientSpace { requested: 111, available: 110 })));
        let exact = DatasetConfig { train: 100, dev: 5, test: 5, ..cfg };
        assert_eq!(generate_dataset(&exact).unwrap().len(), 110);
    }

    #[test]
    fn small_dataset_is_deterministic_and_distinct() {
        let cfg = DatasetConfig { train: 800, dev: 100, test: 100, seed: 9, ..Default::default() };
        let a = generate_dataset(&cfg).unwrap();
        assert_eq!(a, generate_dataset(&cfg).unwrap());
        let unique: HashSet<_> = a.iter().map(|(_, s)| s.clone()).collect();
        assert_eq!(unique.len(), 1000);
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (800, 100, 100));
    }

    #[test]
    fn file_round_trip() {
        let cfg = DatasetConfig { train: 20, dev: 3, test: 3, seed: 2, ..Default::default() };
        let ds = generate_dataset(&cfg).unwrap();
        let text = ds.to_file_string(true);
        assert!(text.starts_with("split\tdigits\ttree\n"));
        assert_eq!(Dataset::from_file_str(&text, 2).unwrap(), ds);
        assert!(Dataset::from_file_str("split\tdigits\nvalid\t1,2\n", 0).is_err());
        let err = Dataset::from_file_str("train\t1,2\t(2 1)\n", 0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn task_invariants(digits in proptest::collection::vec(0u8..10, 1..=6)) {
            let s = seq(&digits);
            let sorted = apply_task(TaskKind::Sort, &s);
            prop_assert!(sorted.digits().windows(2).all(|w| w[0] <= w[1]));
            let mut a = sorted.digits().to_vec();
            let mut b = digits.clone();
            a.sort();
            b.sort();
            prop_assert_eq!(&a, &b);

            let inter = apply_task(TaskKind::Interleave, &s);
            let mut c = inter.digits().to_vec();
            c.sort();
            prop_assert_eq!(&c, &b);
            // output position k reads input index 0, n-1, 1, n-2, ...
            let n = digits.len();
            for (k, &d) in inter.digits().iter().enumerate() {
                let src = if k % 2 == 0 { k / 2 } else { n - 1 - k / 2 };
                prop_assert_eq!(d, digits[src]);
            }

            prop_assert_eq!(apply_task(TaskKind::Reverse, &apply_task(TaskKind::Reverse, &s)), s.clone());
            for task in TaskKind::ALL {
                prop_assert_eq!(apply_task(task, &s).len(), s.len());
            }
        }
    }
}
