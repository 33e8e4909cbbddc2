//! Explicit degree-2 and degree-r feature maps.
//!
//! These materialize every monomial and therefore cost `O(p^2)` (or worse).
//! They exist to check the kernel and posterior code at small `p`; nothing on
//! the sampling path calls them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// A coefficient of the degree-2 model.
///
/// Covariate indices are zero-based in the API. The textual form (`x3`,
/// `x1:x4`, `x2^2`, `intercept`) is one-based to match column names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EffectId {
    Intercept,
    Main(usize),
    /// Always stored with `i < j`.
    Pair(usize, usize),
    Quad(usize),
}

impl EffectId {
    /// Pair effect with the indices put in order. Panics if `i == j`.
    pub fn pair(i: usize, j: usize) -> Self {
        assert_ne!(i, j, "pair effect needs two distinct covariates");
        EffectId::Pair(i.min(j), i.max(j))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let ok = match *self {
            EffectId::Intercept => true,
            EffectId::Main(i) | EffectId::Quad(i) => i < p,
            EffectId::Pair(i, j) => i < j && j < p,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("effect {self} out of range for p = {p}")))
        }
    }

    /// Position in the canonical order
    /// `[intercept, mains, pairs (lexicographic), quads]`.
    pub fn index(&self, p: usize) -> usize {
        match *self {
            EffectId::Intercept => 0,
            EffectId::Main(i) => 1 + i,
            EffectId::Pair(i, j) => 1 + p + pair_offset(p, i, j),
            EffectId::Quad(i) => 1 + p + p * (p - 1) / 2 + i,
        }
    }

    /// Every effect for dimension `p`, in canonical order.
    pub fn all(p: usize) -> impl Iterator<Item = EffectId> {
        std::iter::once(EffectId::Intercept)
            .chain((0..p).map(EffectId::Main))
            .chain((0..p).flat_map(move |i| (i + 1..p).map(move |j| EffectId::Pair(i, j))))
            .chain((0..p).map(EffectId::Quad))
    }
}

fn pair_offset(p: usize, i: usize, j: usize) -> usize {
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

impl fmt::Display for EffectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EffectId::Intercept => write!(f, "intercept"),
            EffectId::Main(i) => write!(f, "x{}", i + 1),
            EffectId::Pair(i, j) => write!(f, "x{}:x{}", i + 1, j + 1),
            EffectId::Quad(i) => write!(f, "x{}^2", i + 1),
        }
    }
}

impl FromStr for EffectId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse effect id {s:?}"));
        let covariate = |t: &str| -> Result<usize> {
            let n: usize = t.strip_prefix('x').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            n.checked_sub(1).ok_or_else(bad)
        };
        if s == "intercept" {
            Ok(EffectId::Intercept)
        } else if let Some(base) = s.strip_suffix("^2") {
            Ok(EffectId::Quad(covariate(base)?))
        } else if let Some((a, b)) = s.split_once(':') {
            let (i, j) = (covariate(a)?, covariate(b)?);
            if i == j {
                return Err(bad());
            }
            Ok(EffectId::pair(i, j))
        } else {
            Ok(EffectId::Main(covariate(s)?))
        }
    }
}

impl From<EffectId> for String {
    fn from(e: EffectId) -> String {
        e.to_string()
    }
}

impl TryFrom<String> for EffectId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Dimension of the degree-2 feature map: `1 + 2p + p(p-1)/2`.
pub fn phi2_dim(p: usize) -> Result<usize> {
    if p == 0 {
        return Err(Error::invalid("feature dimension needs p >= 1"));
    }
    Ok(1 + 2 * p + p * (p - 1) / 2)
}

/// Values of the degree-2 feature map, indexed by [`EffectId`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    p: usize,
    entries: Vec<f64>,
}

impl FeatureVector {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, e: EffectId) -> f64 {
        self.entries[e.index(self.p)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }
}

/// `(1, x_1..x_p, x_1 x_2, .., x_{p-1} x_p, x_1^2..x_p^2)`.
pub fn phi2_map(x: &[f64]) -> Result<FeatureVector> {
    let p = x.len();
    let dim = phi2_dim(p)?;
    ensure_finite(x, "feature map input")?;
    let mut entries = Vec::with_capacity(dim);
    entries.push(1.0);
    entries.extend_from_slice(x);
    for i in 0..p {
        for j in i + 1..p {
            entries.push(x[i] * x[j]);
        }
    }
    entries.extend(x.iter().map(|v| v * v));
    debug_assert_eq!(entries.len(), dim);
    Ok(FeatureVector { p, entries })
}

/// Exponent vectors of every monomial of total degree `0..=r` in `p`
/// variables. Ordered by degree, then lexicographically descending within a
/// degree (so degree one is `x_1, .., x_p`).
pub fn monomial_exponents(p: usize, r: usize) -> Vec<Vec<u32>> {
    fn fill(rest: usize, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = rest as u32;
            out.push(cur.clone());
            return;
        }
        for k in (0..=rest).rev() {
            cur[pos] = k as u32;
            fill(rest - k, pos + 1, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; p];
    for d in 0..=r {
        fill(d, 0, &mut cur, &mut out);
    }
    out
}

/// Evaluates a monomial given by its exponent vector.
pub fn monomial(x: &[f64], exponents: &[u32]) -> f64 {
    x.iter()
        .zip(exponents)
        .filter(|(_, &k)| k > 0)
        .map(|(v, &k)| v.powi(k as i32))
        .product()
}

/// All monomials of degree `0..=r` in the order of [`monomial_exponents`],
/// including the leading constant.
pub fn phi_r_map(x: &[f64], r: usize) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::invalid("interaction degree r must be >= 1"));
    }
    if x.is_empty() {
        return Err(Error::invalid("feature map needs p >= 1"));
    }
    ensure_finite(x, "feature map input")?;
    Ok(monomial_exponents(x.len(), r)
        .iter()
        .map(|k| monomial(x, k))
        .collect())
}

/// Exponent vector of a degree-2 effect.
pub fn effect_exponents(e: EffectId, p: usize) -> Vec<u32> {
    let mut k = vec![0u32; p];
    match e {
        EffectId::Intercept => {}
        EffectId::Main(i) => k[i] = 1,
        EffectId::Pair(i, j) => {
            k[i] = 1;
            k[j] = 1;
        }
        EffectId::Quad(i) => k[i] = 2,
    }
    k
}
