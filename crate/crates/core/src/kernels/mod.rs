//! Interaction kernels whose implicit feature space is the degree-2 map with a
//! diagonal prior covariance.
//!
//! Every kernel here satisfies `k(x, y) = sum_e S_e phi_e(x) phi_e(y)` over
//! the effects `e` of [`crate::features`]. [`InteractionKernel::variance`]
//! exposes `S_e` in `O(1)`, which is what makes probe evaluations cheap.

mod block;
mod probe;
mod rway;
mod two_way;

pub use block::{block_kernel_eval, skim_kernel_eval, BlockKernel, SkimKernel};
pub use probe::{cross_kernel_at_probes, probe_gram, Probe};
pub use rway::{r_way_eval, r_way_induced_prior, InteractionSpec, NestedTerm, ProductTerm, RWaySpec};
pub use two_way::{
    induced_prior_diag, solve_spec_from_diag, two_way_eval, KernelFamily, PairTerm,
    TwoWayKernel, TwoWayKernelSpec,
};

use faer::Mat;

use crate::data::Design;
use crate::error::{Error, Result};
use crate::features::{phi2_dim, EffectId};

/// A kernel with an `O(p)` evaluation and an `O(1)` induced prior variance
/// per coefficient.
pub trait InteractionKernel: Send + Sync {
    /// Covariate dimension.
    fn p(&self) -> usize;

    /// `k(x, y)`. Slices must have length [`InteractionKernel::p`].
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// Induced prior variance of one coefficient.
    fn variance(&self, e: EffectId) -> f64;

    fn prior_diag(&self) -> PriorDiag {
        PriorDiag::from_fn(self.p(), |e| self.variance(e))
    }
}

impl<K: InteractionKernel + ?Sized> InteractionKernel for &K {
    fn p(&self) -> usize {
        (**self).p()
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
    fn variance(&self, e: EffectId) -> f64 {
        (**self).variance(e)
    }
}

/// `(x^T y + c)^d`.
pub fn poly_kernel(x: &[f64], y: &[f64], c: f64, d: u32) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "polynomial kernel inputs",
            expected: x.len(),
            got: y.len(),
        });
    }
    if d == 0 {
        return Err(Error::invalid("polynomial kernel degree must be >= 1"));
    }
    Ok((dot(x, y) + c).powi(d as i32))
}

/// Diagonal prior covariance over all degree-2 coefficients, stored densely in
/// canonical effect order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDiag {
    p: usize,
    variances: Vec<f64>,
}

impl PriorDiag {
    pub fn zeros(p: usize) -> Self {
        let dim = phi2_dim(p).expect("p >= 1");
        Self {
            p,
            variances: vec![0.0; dim],
        }
    }

    pub fn from_fn(p: usize, mut f: impl FnMut(EffectId) -> f64) -> Self {
        Self {
            p,
            variances: EffectId::all(p).map(&mut f).collect(),
        }
    }

    /// Validates nonnegativity and length.
    pub fn from_vec(p: usize, variances: Vec<f64>) -> Result<Self> {
        let dim = phi2_dim(p)?;
        if variances.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "prior diagonal",
                expected: dim,
                got: variances.len(),
            });
        }
        if let Some((k, v)) = variances.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            let e = EffectId::all(p).nth(k).unwrap();
            return Err(Error::invalid(format!("prior variance {v} at {e} is not >= 0")));
        }
        Ok(Self { p, variances })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, e: EffectId) -> f64 {
        self.variances[e.index(self.p)]
    }

    pub fn set(&mut self, e: EffectId, v: f64) {
        let k = e.index(self.p);
        self.variances[k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.variances
    }

    pub fn iter(&self) -> impl Iterator<Item = (EffectId, f64)> + '_ {
        EffectId::all(self.p).zip(self.variances.iter().copied())
    }

    /// Entrywise sum, i.e. the prior induced by adding two kernels.
    pub fn sum(&self, other: &PriorDiag) -> Result<PriorDiag> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch {
                what: "prior diagonal dimension",
                expected: self.p,
                got: other.p,
            });
        }
        Ok(PriorDiag {
            p: self.p,
            variances: self.variances.iter().zip(&other.variances).map(|(a, b)| a + b).collect(),
        })
    }

    /// Largest entrywise deviation relative to the larger magnitude.
    pub fn max_rel_diff(&self, other: &PriorDiag) -> f64 {
        self.variances
            .iter()
            .zip(&other.variances)
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs().max(b.abs())))
            .fold(0.0, f64::max)
    }
}

/// Prior induced by the standard `(x^T y + c)^2` kernel.
pub fn poly_induced_prior(c: f64, p: usize) -> Result<PriorDiag> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!("polynomial offset c = {c} must be finite and >= 0")));
    }
    phi2_dim(p)?;
    Ok(PriorDiag::from_fn(p, |e| match e {
        EffectId::Intercept => c * c,
        EffectId::Main(_) => 2.0 * c,
        EffectId::Pair(..) => 2.0,
        EffectId::Quad(_) => 1.0,
    }))
}

/// Gram matrix `K_ij = k(x_i, x_j)` for an arbitrary kernel closure.
pub fn kernel_matrix_fn<F>(k: F, x: &Design) -> Result<Mat<f64>>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let n = x.nrows();
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..=i {
            let v = k(xi, x.row(j));
            if !v.is_finite() {
                return Err(Error::non_finite(format!("kernel matrix entry ({i}, {j})")));
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Gram matrix of an interaction kernel over the rows of `x`, `O(n^2 p)`.
pub fn kernel_matrix<K: InteractionKernel + ?Sized>(k: &K, x: &Design) -> Result<Mat<f64>> {
    if x.ncols() != k.p() {
        return Err(Error::DimensionMismatch {
            what: "design columns vs kernel dimension",
            expected: k.p(),
            got: x.ncols(),
        });
    }
    kernel_matrix_fn(|a, b| k.eval(a, b), x)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `sum_i w_i x_i y_i`.
#[inline]
pub(crate) fn weighted_dot(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    debug_assert!(w.len() == x.len() && x.len() == y.len());
    let mut acc = [0.0f64; 4];
    let n4 = w.len() / 4 * 4;
    let mut k = 0;
    while k < n4 {
        acc[0] += w[k] * x[k] * y[k];
        acc[1] += w[k + 1] * x[k + 1] * y[k + 1];
        acc[2] += w[k + 2] * x[k + 2] * y[k + 2];
        acc[3] += w[k + 3] * x[k + 3] * y[k + 3];
        k += 4;
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in n4..w.len() {
        s += w[k] * x[k] * y[k];
    }
    s
}

/// `sum_i w_i x_i^2 y_i^2`.
#[inline]
pub(crate) fn weighted_dot_sq(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    debug_assert!(w.len() == x.len() && x.len() == y.len());
    let mut acc = [0.0f64; 4];
    let n4 = w.len() / 4 * 4;
    let mut k = 0;
    while k < n4 {
        for l in 0..4 {
            let t = x[k + l] * y[k + l];
            acc[l] += w[k + l] * t * t;
        }
        k += 4;
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in n4..w.len() {
        let t = x[k] * y[k];
        s += w[k] * t * t;
    }
    s
}

pub(crate) fn check_dims(p: usize, x: &[f64], y: &[f64]) -> Result<()> {
    for v in [x, y] {
        if v.len() != p {
            return Err(Error::DimensionMismatch {
                what: "kernel input length",
                expected: p,
                got: v.len(),
            });
        }
    }
    Ok(())
}
