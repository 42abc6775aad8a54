//! Role-diagnostic analogies `a - b = c - d` over digit sequences.
//!
//! An analogy holds exactly under a role scheme when the signed multiset of
//! bindings `a - b - c + d` is empty, so an encoder whose vectors are
//! well approximated by that scheme should place `a - b + d` near `c`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::roles::{bindings_for, Binding, RoleScheme};
use crate::sequences::DigitSequence;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analogy {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    pub c: Vec<u8>,
    pub d: Vec<u8>,
    /// Schemes under which the bindings cancel.
    pub schemes: Vec<RoleScheme>,
}

fn seq(digits: &[u8]) -> DigitSequence {
    DigitSequence::new(digits.to_vec()).expect("analogy terms are valid digit sequences")
}

/// Bindings of `a - b - c + d` with non-zero multiplicity.
pub fn signed_bindings(scheme: RoleScheme, a: &[u8], b: &[u8], c: &[u8], d: &[u8]) -> BTreeMap<Binding, i32> {
    let mut counts: BTreeMap<Binding, i32> = BTreeMap::new();
    for (term, sign) in [(a, 1), (b, -1), (c, -1), (d, 1)] {
        for binding in bindings_for(scheme, &seq(term)) {
            *counts.entry(binding).or_insert(0) += sign;
        }
    }
    counts.retain(|_, n| *n != 0);
    counts
}

pub fn cancels(scheme: RoleScheme, a: &[u8], b: &[u8], c: &[u8], d: &[u8]) -> bool {
    signed_bindings(scheme, a, b, c, d).is_empty()
}

impl Analogy {
    /// Builds an analogy with its cancelling schemes found by the oracle.
    pub fn new(a: Vec<u8>, b: Vec<u8>, c: Vec<u8>, d: Vec<u8>) -> Self {
        let schemes = RoleScheme::ALL.into_iter().filter(|&s| cancels(s, &a, &b, &c, &d)).collect();
        Analogy { a, b, c, d, schemes }
    }

    pub fn terms(&self) -> [&[u8]; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    pub fn holds_under(&self, scheme: RoleScheme) -> bool {
        self.schemes.contains(&scheme)
    }
}

fn random_digits(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..10)).collect()
}

/// One random instance of each construction.
fn candidates(rng: &mut ChaCha8Rng) -> Vec<Analogy> {
    let mut out = Vec::new();
    let n = rng.random_range(1..=5);
    let (x, y, p) = (random_digits(rng, n), random_digits(rng, n), rng.random_range(0..10));
    // shared digit appended after two same-length prefixes
    out.push(Analogy::new([x.clone(), vec![p]].concat(), x.clone(), [y.clone(), vec![p]].concat(), y.clone()));
    // shared digit prepended
    out.push(Analogy::new([vec![p], x.clone()].concat(), x.clone(), [vec![p], y.clone()].concat(), y));

    // same substitution at one position of two same-length sequences
    let n = rng.random_range(1..=6);
    let i = rng.random_range(0..n);
    let (mut x, mut y) = (random_digits(rng, n), random_digits(rng, n));
    if rng.random_bool(0.5) {
        // share the neighbourhood so context roles can cancel too
        for j in [i.wrapping_sub(1), i + 1] {
            if j < n {
                y[j] = x[j];
            }
        }
    }
    let (p, q) = (rng.random_range(0..10), rng.random_range(0..10));
    let (mut xb, mut yb) = (x.clone(), y.clone());
    x[i] = p;
    y[i] = p;
    xb[i] = q;
    yb[i] = q;
    out.push(Analogy::new(x, xb, y, yb));

    // the same local change at different absolute positions
    let d: Vec<u8> = random_digits(rng, 7);
    let (u, l, p, q, r, v, w) = (d[0], d[1], d[2], d[3], d[4], d[5], d[6]);
    let z = rng.random_range(0..10);
    out.push(Analogy::new(vec![u, l, p, r, v, z], vec![u, l, q, r, v, z], vec![w, u, l, p, r, v], vec![w, u, l, q, r, v]));
    out
}

/// Analogies that diagnose each requested scheme, `per_scheme` apiece.
///
/// Candidates that cancel under every scheme are not diagnostic and are
/// dropped. The result is deterministic.
pub fn build_role_diagnostic_analogies(schemes: &[RoleScheme], per_scheme: usize) -> Vec<Analogy> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut seen = BTreeSet::new();
    let mut found: BTreeMap<RoleScheme, usize> = schemes.iter().map(|&s| (s, 0)).collect();
    let mut out = Vec::new();
    for _ in 0..20_000 {
        if found.values().all(|&n| n >= per_scheme) {
            break;
        }
        for candidate in candidates(&mut rng) {
            if candidate.schemes.len() == RoleScheme::ALL.len() || candidate.schemes.is_empty() {
                continue;
            }
            let wanted = candidate.schemes.iter().any(|s| found.get(s).is_some_and(|&n| n < per_scheme));
            if !wanted || !seen.insert(candidate.terms().map(<[u8]>::to_vec)) {
                continue;
            }
            for s in &candidate.schemes {
                if let Some(n) = found.get_mut(s) {
                    *n += 1;
                }
            }
            out.push(candidate);
        }
    }
    out
}

/// One way of solving the analogy for a single term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rearrangement {
    /// Index into `[a, b, c, d]` of the isolated term.
    pub isolated: usize,
    pub distance: f64,
    pub normalized: f64,
}

/// Distance from each isolated term to its analogy prediction:
/// `a ~ b + c - d`, `b ~ a - c + d`, `c ~ a - b + d`, `d ~ b + c - a`.
pub fn rearrangements(enc: [&[f64]; 4], normalizer: f64) -> [Rearrangement; 4] {
    let [a, b, c, d] = enc;
    let predict = |isolated: usize| -> f64 {
        let target = enc[isolated];
        (0..target.len())
            .map(|k| {
                let pred = match isolated {
                    0 => b[k] + c[k] - d[k],
                    1 => a[k] - c[k] + d[k],
                    2 => a[k] - b[k] + d[k],
                    _ => b[k] + c[k] - a[k],
                };
                (target[k] - pred).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    std::array::from_fn(|i| {
        let distance = predict(i);
        Rearrangement { isolated: i, distance, normalized: distance / normalizer }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalogyReport {
    /// Mean Euclidean distance over all pairs of distinct encodings in the set.
    pub normalizer: f64,
    pub per_analogy: Vec<[Rearrangement; 4]>,
    /// Mean normalized distance over analogies that hold under each scheme.
    pub per_scheme: BTreeMap<RoleScheme, f64>,
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

pub fn analogy_distances<F>(mut encode: F, analogies: &[Analogy]) -> Result<AnalogyReport>
where
    F: FnMut(&[u8]) -> Result<Vec<f64>>,
{
    let mut cache: BTreeMap<Vec<u8>, Vec<f64>> = BTreeMap::new();
    for a in analogies {
        for t in a.terms() {
            if !cache.contains_key(t) {
                cache.insert(t.to_vec(), encode(t)?);
            }
        }
    }
    let vectors: Vec<&Vec<f64>> = cache.values().collect();
    let (mut total, mut pairs) = (0.0, 0usize);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            total += euclid(vectors[i], vectors[j]);
            pairs += 1;
        }
    }
    let normalizer = if pairs == 0 || total == 0.0 { 1.0 } else { total / pairs as f64 };
    let per_analogy: Vec<[Rearrangement; 4]> =
        analogies.iter().map(|a| rearrangements(a.terms().map(|t| cache[t].as_slice()), normalizer)).collect();
    let mut sums: BTreeMap<RoleScheme, (f64, usize)> = BTreeMap::new();
    for (a, rs) in analogies.iter().zip(&per_analogy) {
        for &s in &a.schemes {
            let e = sums.entry(s).or_insert((0.0, 0));
            e.0 += rs.iter().map(|r| r.normalized).sum::<f64>();
            e.1 += rs.len();
        }
    }
    let per_scheme = sums.into_iter().map(|(s, (t, n))| (s, t / n as f64)).collect();
    Ok(AnalogyReport { normalizer, per_analogy, per_scheme })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roles::RoleMode;
    use crate::tpdn::{Structure, TpdnConfig, TpdnModel};

    #[test]
    fn append_analogy_holds_left_to_right_and_as_a_bag() {
        let a = Analogy::new(vec![5, 2, 4], vec![5, 2], vec![8, 3, 4], vec![8, 3]);
        assert!(a.holds_under(RoleScheme::Ltr));
        assert!(a.holds_under(RoleScheme::Bow));
        for s in [RoleScheme::Rtl, RoleScheme::Bi, RoleScheme::Wickel] {
            assert!(!a.holds_under(s), "{s}");
        }
    }

    #[test]
    fn prepend_analogy_holds_right_to_left_and_as_a_bag() {
        let a = Analogy::new(vec![4, 5, 2], vec![5, 2], vec![4, 8, 3], vec![8, 3]);
        assert!(a.holds_under(RoleScheme::Rtl));
        assert!(a.holds_under(RoleScheme::Bow));
        assert!(!a.holds_under(RoleScheme::Ltr));
        assert!(!a.holds_under(RoleScheme::Bi));
    }

    #[test]
    fn junction_analogy_diagnoses_wickelroles() {
        let a = Analogy::new(vec![1, 2, 3, 4, 5, 6], vec![1, 2, 7, 4, 5, 6], vec![9, 1, 2, 3, 4, 5], vec![9, 1, 2, 7, 4, 5]);
        assert!(a.holds_under(RoleScheme::Wickel));
        assert!(a.holds_under(RoleScheme::Bow));
        assert!(!a.holds_under(RoleScheme::Ltr));
        assert!(!a.holds_under(RoleScheme::Rtl));
    }

    #[test]
    fn identical_pairs_cancel_everywhere() {
        let a = Analogy::new(vec![3, 1], vec![3, 1], vec![7, 7, 2], vec![7, 7, 2]);
        assert_eq!(a.schemes, RoleScheme::ALL.to_vec());
    }

    #[test]
    fn generated_analogies_are_verified_and_cover_each_scheme() {
        let set = build_role_diagnostic_analogies(&RoleScheme::ALL, 5);
        assert_eq!(set, build_role_diagnostic_analogies(&RoleScheme::ALL, 5));
        for s in RoleScheme::ALL {
            assert!(set.iter().filter(|a| a.holds_under(s)).count() >= 5, "{s}");
        }
        for a in &set {
            for s in RoleScheme::ALL {
                assert_eq!(a.holds_under(s), cancels(s, &a.a, &a.b, &a.c, &a.d));
            }
            assert!(a.terms().iter().all(|t| !t.is_empty() && t.len() <= 6));
        }
    }

    fn exact_tpr(scheme: RoleScheme, analogies: &[Analogy]) -> TpdnModel<f64> {
        let structures: Vec<Structure> =
            analogies.iter().flat_map(|a| a.terms().map(|t| Structure::from_digits(t).unwrap())).collect();
        let config = TpdnConfig { filler_dim: 6, role_dim: 10, use_final_linear: false, output_dim: 60, ..TpdnConfig::default() };
        TpdnModel::for_digits(config, scheme, &structures, RoleMode::Strict, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    fn encoder(model: &TpdnModel<f64>, scheme: RoleScheme) -> impl FnMut(&[u8]) -> Result<Vec<f64>> + '_ {
        move |t| model.compose(&bindings_for(scheme, &seq(t)))
    }

    #[test]
    fn exact_encoder_zeroes_its_own_analogies_and_leaves_the_residual_elsewhere() {
        let set = build_role_diagnostic_analogies(&[RoleScheme::Ltr, RoleScheme::Rtl], 6);
        let model = exact_tpr(RoleScheme::Ltr, &set);
        let report = analogy_distances(encoder(&model, RoleScheme::Ltr), &set).unwrap();
        assert!(report.per_scheme[&RoleScheme::Ltr] < 1e-10);
        for (a, rs) in set.iter().zip(&report.per_analogy) {
            let residual = signed_bindings(RoleScheme::Ltr, &a.a, &a.b, &a.c, &a.d);
            let mut sum = vec![0.0; 60];
            for (binding, n) in &residual {
                for (s, v) in sum.iter_mut().zip(model.compose(std::slice::from_ref(binding)).unwrap()) {
                    *s += f64::from(*n) * v;
                }
            }
            let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
            for r in rs {
                assert!((r.distance - norm).abs() < 1e-9);
            }
            if !a.holds_under(RoleScheme::Ltr) {
                assert!(norm > 1e-6);
            }
        }
        assert!(report.per_scheme[&RoleScheme::Rtl] > 0.05);
    }

    #[test]
    fn normalized_distances_are_scale_invariant() {
        let set = build_role_diagnostic_analogies(&[RoleScheme::Bi, RoleScheme::Wickel], 4);
        let model = exact_tpr(RoleScheme::Rtl, &set);
        let base = analogy_distances(encoder(&model, RoleScheme::Rtl), &set).unwrap();
        let mut enc = encoder(&model, RoleScheme::Rtl);
        let scaled = analogy_distances(|t| Ok(enc(t)?.into_iter().map(|v| 10.0 * v).collect()), &set).unwrap();
        for (s, v) in &base.per_scheme {
            assert!((scaled.per_scheme[s] - v).abs() < 1e-12);
        }
        assert!((scaled.normalizer - 10.0 * base.normalizer).abs() < 1e-9 * scaled.normalizer);
    }

    #[test]
    fn all_four_rearrangements_share_the_residual() {
        let e: [Vec<f64>; 4] = [vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0], vec![2.0, 1.0]];
        let rs = rearrangements([&e[0], &e[1], &e[2], &e[3]], 2.0);
        for r in &rs[1..] {
            assert!((r.distance - rs[0].distance).abs() < 1e-12);
        }
        assert!((rs[0].normalized * 2.0 - rs[0].distance).abs() < 1e-12);
    }
}
