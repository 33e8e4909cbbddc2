//! Regularized-horseshoe hierarchy over the SKIM kernel hyperparameters.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Cauchy, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::kernels::SkimKernel;

/// Number of global coordinates ahead of the `log lambda` block in `z`.
pub const N_GLOBAL: usize = 6;
pub const IDX_M2: usize = 0;
pub const IDX_XI2: usize = 1;
pub const IDX_PSI2: usize = 2;
pub const IDX_C2: usize = 3;
pub const IDX_SIGMA: usize = 4;
pub const IDX_ETA1: usize = 5;

/// Names of the unconstrained coordinates, in order.
pub fn coordinate_names(p: usize) -> Vec<String> {
    let mut v: Vec<String> = ["log_m2", "log_xi2", "log_psi2", "log_c2", "log_sigma", "log_eta1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend((1..=p).map(|i| format!("log_lambda{i}")));
    v
}

/// Hyperparameters of the hierarchy.
///
/// `alpha`/`beta` hold the inverse-gamma shape and scale for
/// `m^2, xi^2, c^2, psi^2` (in that order); `alpha[4]` is the half-normal
/// scale of `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkimConfig {
    pub p: usize,
    pub n: usize,
    pub s: f64,
    pub alpha: [f64; 5],
    pub beta: [f64; 4],
}

impl SkimConfig {
    pub const DEFAULT_S: f64 = 5.0;

    /// Defaults: every inverse gamma is `(2, 1)`, `alpha5 = 5`, `s = 5` (halved
    /// to `p / 2` when `p <= 5`).
    pub fn new(p: usize, n: usize) -> Result<Self> {
        let s = if (p as f64) > Self::DEFAULT_S { Self::DEFAULT_S } else { p as f64 / 2.0 };
        let c = Self {
            p,
            n,
            s,
            alpha: [2.0, 2.0, 2.0, 2.0, 5.0],
            beta: [1.0; 4],
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Err(Error::invalid(format!("need p >= 1 and N >= 1 (got p = {}, N = {})", self.p, self.n)));
        }
        if !(self.s > 0.0 && self.s < self.p as f64) {
            return Err(Error::invalid(format!("expected sparsity s = {} must lie in (0, p = {})", self.s, self.p)));
        }
        for (i, a) in self.alpha.iter().enumerate() {
            if !(a.is_finite() && *a > 0.0) {
                return Err(Error::invalid(format!("alpha{} = {a} must be positive", i + 1)));
            }
        }
        for (i, b) in self.beta.iter().enumerate() {
            if !(b.is_finite() && *b > 0.0) {
                return Err(Error::invalid(format!("beta{} = {b} must be positive", i + 1)));
            }
        }
        Ok(())
    }

    /// `(s / (p - s)) / sqrt(N)`; multiply by `sigma` for the scale of `eta1`.
    pub fn phi_factor(&self) -> f64 {
        self.s / (self.p as f64 - self.s) / (self.n as f64).sqrt()
    }

    /// Length of the unconstrained vector.
    pub fn dim(&self) -> usize {
        self.p + N_GLOBAL
    }

    /// Overrides defaults with whatever a config file sets.
    pub fn with_overrides(mut self, f: &ConfigFile) -> Result<Self> {
        if let Some(s) = f.s {
            self.s = s;
        }
        let alphas = [f.alpha1, f.alpha2, f.alpha3, f.alpha4, f.alpha5];
        for (dst, src) in self.alpha.iter_mut().zip(alphas) {
            if let Some(v) = src {
                *dst = v;
            }
        }
        for (dst, src) in self.beta.iter_mut().zip([f.beta1, f.beta2, f.beta3, f.beta4]) {
            if let Some(v) = src {
                *dst = v;
            }
        }
        self.validate()?;
        Ok(self)
    }
}

/// Key-value prior configuration read from JSON or TOML.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub s: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha3: Option<f64>,
    pub alpha4: Option<f64>,
    pub alpha5: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub beta4: Option<f64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    /// Parses by extension: `.toml` as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        }
    }
}

/// A point in the hierarchy together with its derived kernel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub m2: f64,
    pub xi2: f64,
    pub psi2: f64,
    pub c2: f64,
    pub sigma: f64,
    pub eta1: f64,
    pub lambda: Vec<f64>,
    pub kappa: Vec<f64>,
    pub eta2: f64,
    pub eta3: f64,
    pub phi: f64,
}

/// `m lambda / sqrt(m^2 + eta1^2 lambda^2)` without overflow for huge `lambda`.
pub fn kappa_of(m: f64, eta1: f64, lambda: f64) -> f64 {
    if lambda <= 1.0 {
        m * lambda / (m * m + eta1 * eta1 * lambda * lambda).sqrt()
    } else {
        let r = m / lambda;
        m / (r * r + eta1 * eta1).sqrt()
    }
}

impl HyperState {
    /// Builds a state from its free parameters, filling derived fields.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: &SkimConfig,
        m2: f64,
        xi2: f64,
        psi2: f64,
        c2: f64,
        sigma: f64,
        eta1: f64,
        lambda: Vec<f64>,
    ) -> Result<Self> {
        if lambda.len() != config.p {
            return Err(Error::DimensionMismatch {
                what: "local scales",
                expected: config.p,
                got: lambda.len(),
            });
        }
        let globals = [m2, xi2, psi2, c2, sigma, eta1];
        ensure_finite(&globals, "hyperparameters")?;
        ensure_finite(&lambda, "local scales")?;
        if globals.iter().chain(&lambda).any(|v| *v <= 0.0) {
            return Err(Error::invalid("hyperparameters must be positive"));
        }
        let m = m2.sqrt();
        let kappa = lambda.iter().map(|&l| kappa_of(m, eta1, l)).collect();
        let ratio = eta1 * eta1 / m2;
        Ok(Self {
            m2,
            xi2,
            psi2,
            c2,
            sigma,
            eta1,
            kappa,
            eta2: ratio * xi2.sqrt(),
            eta3: ratio * psi2.sqrt(),
            phi: config.phi_factor() * sigma,
            lambda,
        })
    }

    /// Exponentiates an unconstrained vector.
    pub fn from_unconstrained(z: &[f64], config: &SkimConfig) -> Result<Self> {
        if z.len() != config.dim() {
            return Err(Error::DimensionMismatch {
                what: "unconstrained vector",
                expected: config.dim(),
                got: z.len(),
            });
        }
        ensure_finite(z, "unconstrained vector")?;
        Self::new(
            config,
            z[IDX_M2].exp(),
            z[IDX_XI2].exp(),
            z[IDX_PSI2].exp(),
            z[IDX_C2].exp(),
            z[IDX_SIGMA].exp(),
            z[IDX_ETA1].exp(),
            z[N_GLOBAL..].iter().map(|v| v.exp()).collect(),
        )
    }

    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut z = vec![
            self.m2.ln(),
            self.xi2.ln(),
            self.psi2.ln(),
            self.c2.ln(),
            self.sigma.ln(),
            self.eta1.ln(),
        ];
        z.extend(self.lambda.iter().map(|l| l.ln()));
        z
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// The kernel indexed by `(eta1, eta2, eta3, kappa, c2)`.
    pub fn to_kernel(&self) -> Result<SkimKernel> {
        SkimKernel::new([self.eta1, self.eta2, self.eta3], self.c2, &self.kappa)
    }
}

#[cfg(test)]
fn ln_half_cauchy(x: f64, scale: f64) -> f64 {
    let r = x / scale;
    (2.0 / PI).ln() - scale.ln() - r.mul_add(r, 1.0).ln()
}

/// Log-density of `InvGamma(a, b)` at `x`.
pub fn ln_inv_gamma(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - libm::lgamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Log-density in `z` coordinates (including the exp-transform Jacobian),
/// with its gradient.
pub fn log_prior_unconstrained(z: &[f64], config: &SkimConfig) -> Result<(f64, Vec<f64>)> {
    if z.len() != config.dim() {
        return Err(Error::DimensionMismatch {
            what: "unconstrained vector",
            expected: config.dim(),
            got: z.len(),
        });
    }
    ensure_finite(z, "unconstrained vector")?;
    let mut lp = 0.0;
    let mut grad = vec![0.0; z.len()];
    // inverse gammas; config order is m2, xi2, c2, psi2
    for (idx, k) in [(IDX_M2, 0), (IDX_XI2, 1), (IDX_C2, 2), (IDX_PSI2, 3)] {
        let (a, b) = (config.alpha[k], config.beta[k]);
        let u = z[idx];
        let e = (-u).exp();
        lp += a * b.ln() - libm::lgamma(a) - a * u - b * e;
        grad[idx] = -a + b * e;
    }
    // half-normal sigma
    let a5 = config.alpha[4];
    let v = z[IDX_SIGMA];
    let sig = v.exp();
    let q = sig / a5;
    lp += 0.5 * (2.0 / PI).ln() - a5.ln() - 0.5 * q * q + v;
    grad[IDX_SIGMA] = 1.0 - q * q;
    // half-Cauchy eta1 with scale phi = phi_factor * sigma
    let w = z[IDX_ETA1];
    let ln_phi = config.phi_factor().ln() + v;
    let t = w - ln_phi;
    let r2 = (2.0 * t).exp();
    let frac = if r2.is_finite() { 2.0 * r2 / (1.0 + r2) } else { 2.0 };
    lp += (2.0 / PI).ln() - ln_phi - ln1p_exp(2.0 * t) + w;
    grad[IDX_ETA1] = 1.0 - frac;
    grad[IDX_SIGMA] += -1.0 + frac;
    // half-Cauchy(0, 1) local scales
    for (g, &l) in grad[N_GLOBAL..].iter_mut().zip(&z[N_GLOBAL..]) {
        let r2 = (2.0 * l).exp();
        let frac = if r2.is_finite() { 2.0 * r2 / (1.0 + r2) } else { 2.0 };
        lp += (2.0 / PI).ln() - ln1p_exp(2.0 * l) + l;
        *g = 1.0 - frac;
    }
    Ok((lp, grad))
}

/// `ln(1 + e^x)` without overflow.
fn ln1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Draws a state from the hierarchy.
pub fn sample_prior(config: &SkimConfig, seed: u64) -> Result<HyperState> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    sample_prior_with(config, &mut rng)
}

pub fn sample_prior_with<R: Rng + ?Sized>(config: &SkimConfig, rng: &mut R) -> Result<HyperState> {
    let mut inv_gamma = |k: usize| -> Result<f64> {
        let g = Gamma::new(config.alpha[k], 1.0 / config.beta[k]).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(1.0 / g.sample(rng))
    };
    let m2 = inv_gamma(0)?;
    let xi2 = inv_gamma(1)?;
    let c2 = inv_gamma(2)?;
    let psi2 = inv_gamma(3)?;
    let normal = Normal::new(0.0, config.alpha[4]).map_err(|e| Error::invalid(e.to_string()))?;
    let sigma = normal.sample(rng).abs();
    let phi = config.phi_factor() * sigma;
    let eta1 = Cauchy::new(0.0, phi).map_err(|e| Error::invalid(e.to_string()))?.sample(rng).abs();
    let unit: Cauchy<f64> = Cauchy::new(0.0, 1.0).expect("unit cauchy");
    let lambda = (0..config.p).map(|_| unit.sample(rng).abs()).collect();
    HyperState::new(config, m2, xi2, psi2, c2, sigma, eta1, lambda)
}
