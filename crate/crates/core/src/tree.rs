//! Deterministic binary parses of digit sequences.
//!
//! At each step the smallest item other than the last one is merged with
//! its right neighbour; ties go to the leftmost item. The merged pair takes
//! the right neighbour's value for later comparisons.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ParseTree {
    Leaf(u8),
    Node(Box<ParseTree>, Box<ParseTree>),
}

/// Structure of a tree with the digits erased.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreeShape {
    Leaf,
    Node(Box<TreeShape>, Box<TreeShape>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Left,
    Right,
}

impl ParseTree {
    pub fn node(left: ParseTree, right: ParseTree) -> Self {
        ParseTree::Node(Box::new(left), Box::new(right))
    }

    /// Digits in left-to-right leaf order.
    pub fn leaves(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<u8>) {
        match self {
            ParseTree::Leaf(d) => out.push(*d),
            ParseTree::Node(l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 1,
            ParseTree::Node(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    pub fn shape(&self) -> TreeShape {
        match self {
            ParseTree::Leaf(_) => TreeShape::Leaf,
            ParseTree::Node(l, r) => TreeShape::Node(Box::new(l.shape()), Box::new(r.shape())),
        }
    }

    /// Root-to-leaf branch strings (`L`/`R`), one per leaf in order.
    pub fn paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut prefix = String::new();
        self.collect_paths(&mut prefix, &mut out);
        out
    }

    fn collect_paths(&self, prefix: &mut String, out: &mut Vec<String>) {
        match self {
            ParseTree::Leaf(_) => out.push(prefix.clone()),
            ParseTree::Node(l, r) => {
                prefix.push('L');
                l.collect_paths(prefix, out);
                prefix.pop();
                prefix.push('R');
                r.collect_paths(prefix, out);
                prefix.pop();
            }
        }
    }

    /// Bracketing in the square-bracket notation, e.g. `[[2 3] 7]`.
    pub fn bracketed(&self) -> String {
        self.render('[', ']')
    }

    fn render(&self, open: char, close: char) -> String {
        match self {
            ParseTree::Leaf(d) => d.to_string(),
            ParseTree::Node(l, r) => format!("{open}{} {}{close}", l.render(open, close), r.render(open, close)),
        }
    }

    /// Parses the parenthesized form written by `Display`, e.g. `((2 3) 7)`.
    pub fn from_parenthesized(s: &str) -> Result<Self> {
        let tokens: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        // digits are single characters, so whitespace carries no information
        let mut pos = 0;
        let tree = parse_sexpr(&tokens, &mut pos).ok_or_else(|| bad_tree(s))?;
        if pos != tokens.len() {
            return Err(bad_tree(s));
        }
        Ok(tree)
    }
}

fn bad_tree(s: &str) -> Error {
    Error::Parse { line: 0, message: format!("malformed tree `{s}`") }
}

fn parse_sexpr(tokens: &[char], pos: &mut usize) -> Option<ParseTree> {
    match tokens.get(*pos)? {
        '(' => {
            *pos += 1;
            let left = parse_sexpr(tokens, pos)?;
            let right = parse_sexpr(tokens, pos)?;
            if tokens.get(*pos)? != &')' {
                return None;
            }
            *pos += 1;
            Some(ParseTree::node(left, right))
        }
        c => {
            let d = c.to_digit(10)? as u8;
            *pos += 1;
            Some(ParseTree::Leaf(d))
        }
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render('(', ')'))
    }
}

impl TreeShape {
    pub fn leaf_count(&self) -> usize {
        match self {
            TreeShape::Leaf => 1,
            TreeShape::Node(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    /// Compact key, `.` for a leaf.
    pub fn key(&self) -> String {
        match self {
            TreeShape::Leaf => ".".into(),
            TreeShape::Node(l, r) => format!("({}{})", l.key(), r.key()),
        }
    }
}

struct Item {
    tree: ParseTree,
    value: u8,
}

fn merge_step(items: &mut Vec<Item>) {
    // smallest among all but the last, leftmost on ties
    let mut best = 0;
    for i in 1..items.len() - 1 {
        if items[i].value < items[best].value {
            best = i;
        }
    }
    let right = items.remove(best + 1);
    let left = std::mem::replace(&mut items[best], Item { tree: ParseTree::Leaf(0), value: 0 });
    items[best] = Item { tree: ParseTree::node(left.tree, right.tree), value: right.value };
}

fn check_digits(digits: &[u8]) -> Result<()> {
    if digits.is_empty() {
        return Err(Error::InvalidSequence("empty sequence has no parse".into()));
    }
    if let Some(d) = digits.iter().find(|&&d| d > 9) {
        return Err(Error::InvalidSequence(format!("digit {d} out of range")));
    }
    Ok(())
}

/// Deterministic parse of a non-empty digit sequence.
pub fn parse(digits: &[u8]) -> Result<ParseTree> {
    check_digits(digits)?;
    let mut items: Vec<Item> = digits.iter().map(|&d| Item { tree: ParseTree::Leaf(d), value: d }).collect();
    while items.len() > 1 {
        merge_step(&mut items);
    }
    Ok(items.pop().map(|i| i.tree).expect("non-empty"))
}

/// Every intermediate state of [`parse`], starting with the bare sequence.
/// Each state lists its items in square-bracket notation separated by spaces.
pub fn parse_derivation(digits: &[u8]) -> Result<Vec<String>> {
    check_digits(digits)?;
    let mut items: Vec<Item> = digits.iter().map(|&d| Item { tree: ParseTree::Leaf(d), value: d }).collect();
    let render = |items: &[Item]| items.iter().map(|i| i.tree.bracketed()).collect::<Vec<_>>().join(" ");
    let mut states = vec![render(&items)];
    while items.len() > 1 {
        merge_step(&mut items);
        states.push(render(&items));
    }
    Ok(states)
}

/// Branch-choice path per leaf, in sequence order.
pub fn tree_paths(tree: &ParseTree) -> Vec<String> {
    tree.paths()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn figure_trees() {
        let t = parse(&[3, 1, 1, 6]).unwrap();
        assert_eq!(t.bracketed(), "[3 [[1 1] 6]]");
        assert_eq!(tree_paths(&t), ["L", "RLL", "RLR", "RR"]);

        let t = parse(&[5, 2, 3, 1, 9, 7]).unwrap();
        assert_eq!(t.bracketed(), "[[5 [[2 3] [1 9]]] 7]");
        assert_eq!(tree_paths(&t), ["LL", "LRLL", "LRLR", "LRRL", "LRRR", "R"]);
    }

    #[test]
    fn single_digit_is_a_leaf() {
        let t = parse(&[4]).unwrap();
        assert_eq!(t, ParseTree::Leaf(4));
        assert_eq!(tree_paths(&t), [""]);
    }

    #[test]
    fn derivation_of_523719() {
        let steps = parse_derivation(&[5, 2, 3, 7, 1, 9]).unwrap();
        assert_eq!(
            steps,
            [
                "5 2 3 7 1 9",
                "5 2 3 7 [1 9]",
                "5 [2 3] 7 [1 9]",
                "5 [[2 3] 7] [1 9]",
                "[5 [[2 3] 7]] [1 9]",
                "[[5 [[2 3] 7]] [1 9]]",
            ]
        );
    }

    #[test]
    fn merged_pair_compares_by_right_value() {
        // [0 9] takes value 9, so the 4 merges next rather than the pair
        let t = parse(&[0, 9, 4, 8]).unwrap();
        assert_eq!(t.bracketed(), "[[0 9] [4 8]]");
    }

    #[test]
    fn parenthesized_round_trip_and_errors() {
        let t = parse(&[5, 2, 3, 1, 9, 7]).unwrap();
        assert_eq!(t.to_string(), "((5 ((2 3) (1 9))) 7)");
        assert_eq!(ParseTree::from_parenthesized(&t.to_string()).unwrap(), t);
        assert!(ParseTree::from_parenthesized("((2 3) 7").is_err());
        assert!(ParseTree::from_parenthesized("(2 3 7)").is_err());
        assert!(parse(&[]).is_err());
    }

    proptest! {
        #[test]
        fn leaves_reproduce_sequence(digits in proptest::collection::vec(0u8..10, 1..=6)) {
            let t = parse(&digits).unwrap();
            prop_assert_eq!(t.leaves(), digits.clone());
            prop_assert_eq!(parse(&digits).unwrap(), t.clone());
            let paths = t.paths();
            for (i, a) in paths.iter().enumerate() {
                for (j, b) in paths.iter().enumerate() {
                    prop_assert!(i == j || !b.starts_with(a.as_str()));
                }
            }
        }
    }
}
