//! Role schemes, filler/role bindings and role vocabularies.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequences::DigitSequence;
use crate::tree::ParseTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleScheme {
    Ltr,
    Rtl,
    Bi,
    Wickel,
    Tree,
    Bow,
}

impl RoleScheme {
    pub const ALL: [RoleScheme; 6] =
        [RoleScheme::Ltr, RoleScheme::Rtl, RoleScheme::Bi, RoleScheme::Wickel, RoleScheme::Tree, RoleScheme::Bow];

    pub fn name(self) -> &'static str {
        match self {
            RoleScheme::Ltr => "ltr",
            RoleScheme::Rtl => "rtl",
            RoleScheme::Bi => "bi",
            RoleScheme::Wickel => "wickel",
            RoleScheme::Tree => "tree",
            RoleScheme::Bow => "bow",
        }
    }

    pub fn needs_tree(self) -> bool {
        self == RoleScheme::Tree
    }
}

impl fmt::Display for RoleScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoleScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RoleScheme::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Parse { line: 0, message: format!("unknown role scheme `{s}`") })
    }
}

/// One filler bound to one role token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Binding {
    pub filler: u8,
    pub role: String,
}

pub const WICKEL_BOUNDARY: &str = "#";

/// Role tokens for an arbitrary token sequence. Wickelroles use the
/// neighbours' display text; tree roles need a parse.
pub fn role_tokens<S: AsRef<str>>(scheme: RoleScheme, tokens: &[S], tree: Option<&ParseTree>) -> Result<Vec<String>> {
    let n = tokens.len();
    let out = match scheme {
        RoleScheme::Ltr => (0..n).map(|i| format!("ltr:{i}")).collect(),
        RoleScheme::Rtl => (0..n).map(|i| format!("rtl:{}", n - 1 - i)).collect(),
        RoleScheme::Bi => (0..n).map(|i| format!("bi:{}_{}", i, n - 1 - i)).collect(),
        RoleScheme::Wickel => (0..n)
            .map(|i| {
                let left = if i == 0 { WICKEL_BOUNDARY } else { tokens[i - 1].as_ref() };
                let right = if i + 1 == n { WICKEL_BOUNDARY } else { tokens[i + 1].as_ref() };
                format!("wickel:{left}_{right}")
            })
            .collect(),
        RoleScheme::Tree => {
            let tree = tree.ok_or(Error::MissingTree)?;
            let paths = tree.paths();
            if paths.len() != n {
                return Err(Error::DimensionMismatch { context: "tree leaves", expected: n, found: paths.len() });
            }
            paths.into_iter().map(|p| format!("tree:{p}")).collect()
        }
        RoleScheme::Bow => vec!["bow:r0".to_string(); n],
    };
    Ok(out)
}

/// One binding per digit, in sequence order.
pub fn assign_roles(scheme: RoleScheme, seq: &DigitSequence, tree: Option<&ParseTree>) -> Result<Vec<Binding>> {
    let digits = seq.digits();
    let labels: Vec<String> = digits.iter().map(u8::to_string).collect();
    let roles = role_tokens(scheme, &labels, tree)?;
    Ok(digits.iter().zip(roles).map(|(&filler, role)| Binding { filler, role }).collect())
}

/// Role assignment with the scheme's parse computed on demand.
pub fn bindings_for(scheme: RoleScheme, seq: &DigitSequence) -> Vec<Binding> {
    let tree = scheme.needs_tree().then(|| seq.parse_tree());
    assign_roles(scheme, seq, tree.as_ref()).expect("tree supplied when required")
}

/// How embeddings treat role tokens missing from the vocabulary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleMode {
    #[default]
    Strict,
    Lenient,
}

/// Dense index over the role tokens of one scheme.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleVocabulary {
    scheme: RoleScheme,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl RoleVocabulary {
    pub fn from_tokens(scheme: RoleScheme, tokens: impl IntoIterator<Item = String>) -> Self {
        let sorted: BTreeSet<String> = tokens.into_iter().collect();
        let tokens: Vec<String> = sorted.into_iter().collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        RoleVocabulary { scheme, tokens, index }
    }

    /// Every role token occurring in `sequences`, sorted.
    pub fn build<'a>(scheme: RoleScheme, sequences: impl IntoIterator<Item = &'a DigitSequence>) -> Self {
        let tokens = sequences.into_iter().flat_map(|s| bindings_for(scheme, s).into_iter().map(|b| b.role));
        Self::from_tokens(scheme, tokens)
    }

    pub fn scheme(&self) -> RoleScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Index reserved for unseen roles in lenient mode.
    pub fn unknown_index(&self) -> usize {
        self.tokens.len()
    }

    /// Rows an embedding table needs, including the unknown-role row.
    pub fn table_rows(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn lookup(&self, token: &str, mode: RoleMode) -> Result<usize> {
        match (self.index.get(token), mode) {
            (Some(&i), _) => Ok(i),
            (None, RoleMode::Lenient) => Ok(self.unknown_index()),
            (None, RoleMode::Strict) => Err(Error::UnknownRole(token.to_string())),
        }
    }

    /// Header `# scheme=<name>`, then `index<TAB>token` lines.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("# scheme={}\n", self.scheme);
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(&format!("{i}\t{t}\n"));
        }
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let scheme: RoleScheme = header
            .strip_prefix("# scheme=")
            .ok_or(Error::Parse { line: 1, message: "header must be `# scheme=<name>`".into() })?
            .parse()
            .map_err(|e: Error| Error::Parse { line: 1, message: e.to_string() })?;
        let mut tokens = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (idx, tok) =
                line.split_once('\t').ok_or(Error::Parse { line: lineno, message: "expected index<TAB>token".into() })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse { line: lineno, message: format!("bad index `{idx}`") })?;
            if idx != tokens.len() {
                return Err(Error::Parse { line: lineno, message: format!("index {idx} out of order") });
            }
            tokens.push(tok.to_string());
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(RoleVocabulary { scheme, tokens, index })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(d: &[u8]) -> DigitSequence {
        DigitSequence::new(d.to_vec()).unwrap()
    }

    fn roles(scheme: RoleScheme, d: &[u8]) -> Vec<String> {
        bindings_for(scheme, &seq(d)).into_iter().map(|b| b.role).collect()
    }

    #[test]
    fn figure_bindings_3116() {
        let s = [3, 1, 1, 6];
        assert_eq!(roles(RoleScheme::Ltr, &s), ["ltr:0", "ltr:1", "ltr:2", "ltr:3"]);
        assert_eq!(roles(RoleScheme::Rtl, &s), ["rtl:3", "rtl:2", "rtl:1", "rtl:0"]);
        assert_eq!(roles(RoleScheme::Bi, &s), ["bi:0_3", "bi:1_2", "bi:2_1", "bi:3_0"]);
        assert_eq!(roles(RoleScheme::Wickel, &s), ["wickel:#_1", "wickel:3_1", "wickel:1_6", "wickel:1_#"]);
        assert_eq!(roles(RoleScheme::Tree, &s), ["tree:L", "tree:RLL", "tree:RLR", "tree:RR"]);
        assert_eq!(roles(RoleScheme::Bow, &s), ["bow:r0"; 4]);
    }

    #[test]
    fn tree_scheme_without_parse_fails() {
        assert!(matches!(assign_roles(RoleScheme::Tree, &seq(&[1, 2]), None), Err(Error::MissingTree)));
    }

    #[test]
    fn vocabulary_sizes() {
        // every sequence of lengths 1..=6 over two digits covers all index/pair roles
        let mut all = Vec::new();
        for len in 1..=6u32 {
            for code in 0..(1u32 << len) {
                all.push(seq(&(0..len).map(|b| ((code >> b) & 1) as u8).collect::<Vec<_>>()));
            }
        }
        assert_eq!(RoleVocabulary::build(RoleScheme::Bow, &all).len(), 1);
        assert_eq!(RoleVocabulary::build(RoleScheme::Ltr, &all).len(), 6);
        assert_eq!(RoleVocabulary::build(RoleScheme::Rtl, &all).len(), 6);
        // brute-force count of (i, L-1-i) pairs
        let pairs: BTreeSet<(usize, usize)> = (1..=6).flat_map(|l| (0..l).map(move |i| (i, l - 1 - i))).collect();
        assert_eq!(pairs.len(), 21);
        assert_eq!(RoleVocabulary::build(RoleScheme::Bi, &all).len(), pairs.len());
        assert!(RoleVocabulary::build(RoleScheme::Wickel, &all).len() <= 11 * 11);
    }

    #[test]
    fn strict_and_lenient_lookup() {
        let v = RoleVocabulary::build(RoleScheme::Ltr, &[seq(&[1, 2])]);
        assert_eq!(v.lookup("ltr:1", RoleMode::Strict).unwrap(), 1);
        assert!(matches!(v.lookup("ltr:5", RoleMode::Strict), Err(Error::UnknownRole(_))));
        assert_eq!(v.lookup("ltr:5", RoleMode::Lenient).unwrap(), v.unknown_index());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = RoleVocabulary::build(RoleScheme::Tree, &[seq(&[5, 2, 3, 1, 9, 7]), seq(&[4])]);
        let text = v.to_file_string();
        assert!(text.starts_with("# scheme=tree\n0\ttree:\n"));
        assert_eq!(RoleVocabulary::from_file_str(&text).unwrap(), v);
        assert!(RoleVocabulary::from_file_str("0\tx\n").is_err());
    }

    proptest! {
        #[test]
        fn scheme_relations(digits in proptest::collection::vec(0u8..10, 1..=6)) {
            let n = digits.len();
            for scheme in RoleScheme::ALL {
                prop_assert_eq!(bindings_for(scheme, &seq(&digits)).len(), n);
            }
            let rev: Vec<u8> = digits.iter().rev().copied().collect();
            let rtl = roles(RoleScheme::Rtl, &digits);
            let ltr_rev = roles(RoleScheme::Ltr, &rev);
            for i in 0..n {
                prop_assert_eq!(&rtl[i][4..], &ltr_rev[n - 1 - i][4..]);
            }
            let bi = roles(RoleScheme::Bi, &digits);
            let ltr = roles(RoleScheme::Ltr, &digits);
            for i in 0..n {
                let (l, r) = bi[i][3..].split_once('_').unwrap();
                prop_assert_eq!(l, &ltr[i][4..]);
                prop_assert_eq!(r, &rtl[i][4..]);
            }
        }
    }
}
