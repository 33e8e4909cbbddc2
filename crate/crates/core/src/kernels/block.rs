use super::{check_dims, dot, weighted_dot, weighted_dot_sq, InteractionKernel};
use crate::error::{ensure_finite, Error, Result};
use crate::features::EffectId;
use crate::skim::HyperState;

/// Degree-block prior: every main effect has variance `eta1^2`, every pair
/// `eta2^2`, every quad `eta3^2`, the intercept `c2`.
///
/// Written as a weighted sum of polynomial kernels:
///
/// ```text
/// (eta2^2/2)(x^T y + 1)^2 + (eta3^2 - eta2^2/2) <x.x, y.y>
///   + (eta1^2 - eta2^2) x^T y + c2 - eta2^2/2
/// ```
///
/// Construction requires all four component weights to be nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockKernel {
    pub p: usize,
    pub eta: [f64; 3],
    pub c2: f64,
}

impl BlockKernel {
    pub fn new(p: usize, eta: [f64; 3], c2: f64) -> Result<Self> {
        ensure_finite(&eta, "block kernel eta")?;
        ensure_finite(&[c2], "block kernel c2")?;
        let [e1, e2, e3] = eta.map(|v| v * v);
        for (name, w) in [
            ("eta1^2 - eta2^2", e1 - e2),
            ("eta3^2 - eta2^2/2", e3 - e2 / 2.0),
            ("c2 - eta2^2/2", c2 - e2 / 2.0),
        ] {
            if w < 0.0 {
                return Err(Error::NegativeWeight { name, value: w });
            }
        }
        Ok(Self { p, eta, c2 })
    }

    fn weights(&self) -> [f64; 4] {
        let [e1, e2, e3] = self.eta.map(|v| v * v);
        [e2 / 2.0, e3 - e2 / 2.0, e1 - e2, self.c2 - e2 / 2.0]
    }
}

impl InteractionKernel for BlockKernel {
    fn p(&self) -> usize {
        self.p
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let [w_poly, w_sq, w_lin, w_const] = self.weights();
        let s1 = dot(x, y);
        let s2: f64 = x.iter().zip(y).map(|(a, b)| (a * b) * (a * b)).sum();
        w_poly * (s1 + 1.0) * (s1 + 1.0) + w_sq * s2 + w_lin * s1 + w_const
    }

    fn variance(&self, e: EffectId) -> f64 {
        match e {
            EffectId::Intercept => self.c2,
            EffectId::Main(_) => self.eta[0] * self.eta[0],
            EffectId::Pair(..) => self.eta[1] * self.eta[1],
            EffectId::Quad(_) => self.eta[2] * self.eta[2],
        }
    }
}

/// Block kernel evaluation with weight and dimension checks.
pub fn block_kernel_eval(eta: [f64; 3], c2: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let k = BlockKernel::new(x.len(), eta, c2)?;
    check_dims(x.len(), x, y)?;
    Ok(k.eval(x, y))
}

/// The block kernel applied to `kappa . x`: variances `eta1^2 kappa_i^2`,
/// `eta2^2 kappa_i^2 kappa_j^2`, `eta3^2 kappa_i^4` and `c2`.
///
/// Evaluated in the expanded form
/// `c2 + eta1^2 s1 + eta3^2 s2 + (eta2^2/2)(s1^2 - s2)` with
/// `s1 = sum kappa^2 x y` and `s2 = sum kappa^4 x^2 y^2`, which is the same
/// polynomial without the offsetting constants. Because every induced variance
/// is nonnegative the kernel is positive semidefinite for any finite
/// hyperparameters; the block component weights are not required to be
/// nonnegative here.
#[derive(Debug, Clone, PartialEq)]
pub struct SkimKernel {
    eta2: [f64; 3],
    c2: f64,
    kappa2: Vec<f64>,
    kappa4: Vec<f64>,
}

impl SkimKernel {
    pub fn new(eta: [f64; 3], c2: f64, kappa: &[f64]) -> Result<Self> {
        ensure_finite(&eta, "skim kernel eta")?;
        ensure_finite(&[c2], "skim kernel c2")?;
        ensure_finite(kappa, "skim kernel kappa")?;
        if kappa.is_empty() {
            return Err(Error::invalid("skim kernel needs p >= 1"));
        }
        let kappa2: Vec<f64> = kappa.iter().map(|k| k * k).collect();
        let kappa4 = kappa2.iter().map(|k| k * k).collect();
        Ok(Self {
            eta2: eta.map(|v| v * v),
            c2,
            kappa2,
            kappa4,
        })
    }

    /// `(eta1^2, eta2^2, eta3^2)`.
    pub fn eta_squared(&self) -> [f64; 3] {
        self.eta2
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn kappa2(&self) -> &[f64] {
        &self.kappa2
    }

    /// Kernel value from the two inner products `s1`, `s2`.
    #[inline]
    pub fn combine(&self, s1: f64, s2: f64) -> f64 {
        let [e1, e2, e3] = self.eta2;
        self.c2 + e1 * s1 + e3 * s2 + 0.5 * e2 * (s1 * s1 - s2)
    }

    /// The same kernel written as the weighted block kernel on `kappa . x`.
    pub fn eval_block_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let [e1, e2, e3] = self.eta2;
        let s1 = weighted_dot(&self.kappa2, x, y);
        let s2 = weighted_dot_sq(&self.kappa4, x, y);
        (e2 / 2.0) * (s1 + 1.0).powi(2) + (e3 - e2 / 2.0) * s2 + (e1 - e2) * s1 + self.c2 - e2 / 2.0
    }
}

impl InteractionKernel for SkimKernel {
    fn p(&self) -> usize {
        self.kappa2.len()
    }

    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let s1 = weighted_dot(&self.kappa2, x, y);
        let s2 = weighted_dot_sq(&self.kappa4, x, y);
        self.combine(s1, s2)
    }

    fn variance(&self, e: EffectId) -> f64 {
        let [e1, e2, e3] = self.eta2;
        match e {
            EffectId::Intercept => self.c2,
            EffectId::Main(i) => e1 * self.kappa2[i],
            EffectId::Pair(i, j) => e2 * self.kappa2[i] * self.kappa2[j],
            EffectId::Quad(i) => e3 * self.kappa4[i],
        }
    }
}

/// SKIM kernel of a hyperparameter state evaluated at `(x, y)`.
pub fn skim_kernel_eval(tau: &HyperState, x: &[f64], y: &[f64]) -> Result<f64> {
    let k = tau.to_kernel()?;
    check_dims(k.p(), x, y)?;
    Ok(k.eval(x, y))
}
