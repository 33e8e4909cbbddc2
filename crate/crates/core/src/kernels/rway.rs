use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_dims, induced_prior_diag, TwoWayKernelSpec};
use crate::error::{ensure_finite, Error, Result};
use crate::features::{effect_exponents, monomial_exponents, EffectId};

/// A product component `nu * prod_s x_{i_s} * prod_s y_{i_s}` over exactly
/// `degree` indices (repeats allowed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub indices: Vec<usize>,
    pub nu: f64,
}

/// A lower-degree interaction kernel applied to `nabla . x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedTerm {
    pub nabla: Vec<f64>,
    pub kernel: InteractionSpec,
}

/// Degree-`r` interaction kernel
///
/// ```text
/// sum_m (<l_m . x, l_m . y> + 1)^r + sum_m nu_m prod x prod y
///   + sum_m k_{r-1}(nabla_m . x, nabla_m . y)
/// ```
///
/// Constant offsets other than the `+1` of each polynomial component live only
/// in the degree-2 base case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RWaySpec {
    pub degree: usize,
    pub p: usize,
    pub lambdas: Vec<Vec<f64>>,
    pub products: Vec<ProductTerm>,
    pub nested: Vec<NestedTerm>,
}

/// Either the degree-2 base case or a recursive degree-`r` kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InteractionSpec {
    TwoWay(TwoWayKernelSpec),
    RWay(Box<RWaySpec>),
}

impl InteractionSpec {
    pub fn degree(&self) -> usize {
        match self {
            InteractionSpec::TwoWay(_) => 2,
            InteractionSpec::RWay(s) => s.degree,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            InteractionSpec::TwoWay(s) => s.p(),
            InteractionSpec::RWay(s) => s.p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InteractionSpec::TwoWay(s) => s.validate(),
            InteractionSpec::RWay(s) => s.validate(),
        }
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            InteractionSpec::TwoWay(s) => super::two_way_eval(s, x, y).expect("validated spec"),
            InteractionSpec::RWay(s) => s.eval_unchecked(x, y),
        }
    }

    /// Induced variance for every monomial with nonzero weight.
    fn prior_map(&self) -> Result<HashMap<Vec<u32>, f64>> {
        match self {
            InteractionSpec::TwoWay(s) => {
                let diag = induced_prior_diag(s)?;
                Ok(diag
                    .iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|(e, v): (EffectId, f64)| (effect_exponents(e, s.p()), v))
                    .collect())
            }
            InteractionSpec::RWay(s) => s.prior_map(),
        }
    }
}

impl RWaySpec {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 3 {
            return Err(Error::invalid(format!(
                "recursive interaction kernels need degree >= 3 (got {}); use a two-way spec",
                self.degree
            )));
        }
        if self.p == 0 {
            return Err(Error::invalid("interaction kernel needs p >= 1"));
        }
        for l in &self.lambdas {
            check_nonneg("lambda", l, self.p)?;
        }
        for t in &self.products {
            if t.indices.len() != self.degree || t.indices.iter().any(|&i| i >= self.p) {
                return Err(Error::invalid(format!(
                    "product term needs {} indices below {}",
                    self.degree, self.p
                )));
            }
            if !(t.nu >= 0.0) || !t.nu.is_finite() {
                return Err(Error::NegativeWeight { name: "nu", value: t.nu });
            }
        }
        for n in &self.nested {
            check_nonneg("nabla", &n.nabla, self.p)?;
            if n.kernel.degree() + 1 != self.degree || n.kernel.p() != self.p {
                return Err(Error::invalid(format!(
                    "nested kernel must have degree {} and p = {}",
                    self.degree - 1,
                    self.p
                )));
            }
            n.kernel.validate()?;
        }
        Ok(())
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = self.degree as i32;
        let mut k = 0.0;
        for l in &self.lambdas {
            let s: f64 = l.iter().zip(x).zip(y).map(|((l, a), b)| l * l * a * b).sum();
            k += (s + 1.0).powi(r);
        }
        for t in &self.products {
            let px: f64 = t.indices.iter().map(|&i| x[i]).product();
            let py: f64 = t.indices.iter().map(|&i| y[i]).product();
            k += t.nu * px * py;
        }
        for n in &self.nested {
            let nx: Vec<f64> = n.nabla.iter().zip(x).map(|(a, b)| a * b).collect();
            let ny: Vec<f64> = n.nabla.iter().zip(y).map(|(a, b)| a * b).collect();
            k += n.kernel.eval_unchecked(&nx, &ny);
        }
        k
    }

    fn prior_map(&self) -> Result<HashMap<Vec<u32>, f64>> {
        let r = self.degree;
        let mut out: HashMap<Vec<u32>, f64> = HashMap::new();
        if !self.lambdas.is_empty() {
            for k in monomial_exponents(self.p, r) {
                let c = multinomial(r, &k);
                for l in &self.lambdas {
                    let w: f64 = l
                        .iter()
                        .zip(&k)
                        .map(|(l, &e)| (l * l).powi(e as i32))
                        .product();
                    *out.entry(k.clone()).or_insert(0.0) += c * w;
                }
            }
        }
        for t in &self.products {
            let mut k = vec![0u32; self.p];
            for &i in &t.indices {
                k[i] += 1;
            }
            *out.entry(k).or_insert(0.0) += t.nu;
        }
        for n in &self.nested {
            for (k, v) in n.kernel.prior_map()? {
                let scale: f64 = n
                    .nabla
                    .iter()
                    .zip(&k)
                    .map(|(d, &e)| (d * d).powi(e as i32))
                    .product();
                *out.entry(k).or_insert(0.0) += v * scale;
            }
        }
        Ok(out)
    }
}

fn check_nonneg(name: &'static str, v: &[f64], p: usize) -> Result<()> {
    if v.len() != p {
        return Err(Error::DimensionMismatch {
            what: name,
            expected: p,
            got: v.len(),
        });
    }
    ensure_finite(v, name)?;
    if let Some(&w) = v.iter().find(|w| **w < 0.0) {
        return Err(Error::NegativeWeight { name, value: w });
    }
    Ok(())
}

/// `r! / (prod k_j! (r - |k|)!)`, the coefficient of `prod a_j^k_j` in
/// `(sum a_j + 1)^r`.
fn multinomial(r: usize, k: &[u32]) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let total: u32 = k.iter().sum();
    let denom: f64 = k.iter().map(|&e| fact(e)).product::<f64>() * fact(r as u32 - total);
    fact(r as u32) / denom
}

/// Evaluates an interaction kernel of any degree.
pub fn r_way_eval(spec: &InteractionSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    check_dims(spec.p(), x, y)?;
    Ok(spec.eval_unchecked(x, y))
}

/// Diagonal prior over all monomials of degree `0..=r`, ordered as
/// [`monomial_exponents`].
pub fn r_way_induced_prior(spec: &InteractionSpec) -> Result<Vec<(Vec<u32>, f64)>> {
    spec.validate()?;
    let map = spec.prior_map()?;
    Ok(monomial_exponents(spec.p(), spec.degree())
        .into_iter()
        .map(|k| {
            let v = map.get(&k).copied().unwrap_or(0.0);
            (k, v)
        })
        .collect())
}
