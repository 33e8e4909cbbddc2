use faer::Mat;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::kernel_matrix;
use crate::likelihood::gp_log_marginal;
use crate::linalg::SpdFactor;
use crate::skim::{
    log_prior_unconstrained, HyperState, SkimConfig, IDX_C2, IDX_ETA1, IDX_M2, IDX_PSI2, IDX_SIGMA, IDX_XI2, N_GLOBAL,
};

/// Unnormalized log posterior of `z`, assembled from scratch. Returns `-inf`
/// when the state cannot be evaluated.
pub fn target_log_density(z: &[f64], data: &Dataset, config: &SkimConfig) -> f64 {
    fn inner(z: &[f64], data: &Dataset, config: &SkimConfig) -> Result<f64> {
        let tau = HyperState::from_unconstrained(z, config)?;
        let k = tau.to_kernel()?;
        let km = kernel_matrix(&k, &data.x)?;
        let ll = gp_log_marginal(&km, tau.noise_variance(), &data.y)?.log_density;
        let (lp, _) = log_prior_unconstrained(z, config)?;
        Ok(ll + lp)
    }
    match inner(z, data, config) {
        Ok(v) if v.is_finite() => v,
        Ok(_) => f64::NEG_INFINITY,
        Err(e) => {
            log::debug!("target rejected state: {e}");
            f64::NEG_INFINITY
        }
    }
}

/// `exp(z)` pieces the kernel depends on.
#[derive(Debug, Clone, Copy)]
struct Globals {
    m2: f64,
    eta1_sq: f64,
    eta2_sq: f64,
    eta3_sq: f64,
    c2: f64,
    sigma2: f64,
}

impl Globals {
    fn from_z(z: &[f64]) -> Self {
        let m2 = z[IDX_M2].exp();
        let eta1_sq = (2.0 * z[IDX_ETA1]).exp();
        // eta2^2 = eta1^4 xi^2 / m^4, likewise eta3 with psi
        let base = 4.0 * z[IDX_ETA1] - 2.0 * z[IDX_M2];
        Self {
            m2,
            eta1_sq,
            eta2_sq: (base + z[IDX_XI2]).exp(),
            eta3_sq: (base + z[IDX_PSI2]).exp(),
            c2: z[IDX_C2].exp(),
            sigma2: (2.0 * z[IDX_SIGMA]).exp(),
        }
    }
}

/// `kappa_i^2` and `E1 lambda^2 / (m^2 + E1 lambda^2)` from `log lambda_i`.
fn kappa_sq(g: &Globals, log_lambda: f64) -> (f64, f64) {
    let lam2 = (2.0 * log_lambda).exp();
    let r = g.eta1_sq * lam2 / g.m2;
    let frac = 1.0 / (1.0 + 1.0 / r);
    // kappa^2 = m^2 lambda^2 / (m^2 + E1 lambda^2) = (m^2 / E1) frac
    let k2 = if r > 1.0 { g.m2 / g.eta1_sq * frac } else { lam2 / (1.0 + r) };
    (k2, frac)
}

/// Log posterior with the Gram matrices `S1 = X diag(kappa^2) X^T` and
/// `S2 = X^2 diag(kappa^4) (X^2)^T` cached, so that moving one local scale
/// costs `O(N^2)` before the factorization.
pub struct SkimTarget<'a> {
    data: &'a Dataset,
    config: SkimConfig,
    /// Columns of X and of X^2 (elementwise), each `p` vectors of length N.
    cols: Vec<Vec<f64>>,
    cols_sq: Vec<Vec<f64>>,
    xt: Mat<f64>,
    x2t: Mat<f64>,
    z: Vec<f64>,
    q: Vec<f64>,
    s1: Mat<f64>,
    s2: Mat<f64>,
    k: Mat<f64>,
    log_lik: f64,
    log_prior: f64,
    factorizations: usize,
    failures: usize,
}

impl<'a> SkimTarget<'a> {
    pub fn new(data: &'a Dataset, config: SkimConfig, z: Vec<f64>) -> Result<Self> {
        if data.p() != config.p || data.n() != config.n {
            return Err(Error::invalid(format!(
                "prior configured for N = {}, p = {} but data has N = {}, p = {}",
                config.n,
                config.p,
                data.n(),
                data.p()
            )));
        }
        let (n, p) = (data.n(), data.p());
        let cols: Vec<Vec<f64>> = (0..p).map(|j| data.x.column(j)).collect();
        let cols_sq: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| v * v).collect()).collect();
        let xt = Mat::from_fn(n, p, |i, j| cols[j][i]);
        let x2t = Mat::from_fn(n, p, |i, j| cols_sq[j][i]);
        let mut t = Self {
            data,
            cols,
            cols_sq,
            xt,
            x2t,
            q: vec![0.0; p],
            s1: Mat::zeros(n, n),
            s2: Mat::zeros(n, n),
            k: Mat::zeros(n, n),
            z: vec![0.0; config.dim()],
            config,
            log_lik: f64::NEG_INFINITY,
            log_prior: f64::NEG_INFINITY,
            factorizations: 0,
            failures: 0,
        };
        if z.len() != t.config.dim() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial unconstrained vector has wrong length or non-finite entries"));
        }
        t.z = z;
        t.refresh();
        Ok(t)
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn config(&self) -> &SkimConfig {
        &self.config
    }

    pub fn log_post(&self) -> f64 {
        self.log_lik + self.log_prior
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Evaluations rejected because the factorization failed.
    pub fn failures(&self) -> usize {
        self.failures
    }

    /// Recomputes every cache at the current `z`.
    pub fn refresh(&mut self) {
        let g = Globals::from_z(&self.z);
        self.recompute_grams(&g);
        let (ll, lp) = self.evaluate(&self.z.clone(), &g);
        self.log_lik = ll;
        self.log_prior = lp;
    }

    fn recompute_grams(&mut self, g: &Globals) {
        for (i, qi) in self.q.iter_mut().enumerate() {
            *qi = kappa_sq(g, self.z[N_GLOBAL + i]).0;
        }
        let n = self.data.n();
        let a = Mat::from_fn(n, self.q.len(), |r, j| self.xt[(r, j)] * self.q[j]);
        self.s1 = &a * self.xt.transpose();
        let b = Mat::from_fn(n, self.q.len(), |r, j| self.x2t[(r, j)] * self.q[j] * self.q[j]);
        self.s2 = &b * self.x2t.transpose();
    }

    fn build_k(&mut self, g: &Globals) {
        let n = self.data.n();
        let half = 0.5 * g.eta2_sq;
        for c in 0..n {
            for r in c..n {
                let s1 = self.s1[(r, c)];
                let s2 = self.s2[(r, c)];
                self.k[(r, c)] = g.c2 + g.eta1_sq * s1 + g.eta3_sq * s2 + half * (s1 * s1 - s2);
            }
            self.k[(c, c)] += g.sigma2;
        }
    }

    /// `(log likelihood, log prior)` at `z` from the current Gram caches.
    fn evaluate(&mut self, z: &[f64], g: &Globals) -> (f64, f64) {
        let lp = match log_prior_unconstrained(z, &self.config) {
            Ok((v, _)) if v.is_finite() => v,
            _ => return (f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        self.build_k(g);
        self.factorizations += 1;
        match SpdFactor::new(self.k.as_ref()) {
            Ok(f) => {
                let ll = crate::likelihood::gp_from_factor(&f, &self.data.y).log_density;
                if ll.is_finite() {
                    (ll, lp)
                } else {
                    self.failures += 1;
                    (f64::NEG_INFINITY, lp)
                }
            }
            Err(e) => {
                self.failures += 1;
                log::debug!("factorization failed, rejecting proposal: {e}");
                (f64::NEG_INFINITY, lp)
            }
        }
    }

    fn rank_one(&mut self, i: usize, dq: f64, dq2: f64) {
        let n = self.data.n();
        let x = &self.cols[i];
        let x2 = &self.cols_sq[i];
        for c in 0..n {
            let a = dq * x[c];
            let b = dq2 * x2[c];
            for r in c..n {
                self.s1[(r, c)] += a * x[r];
                self.s2[(r, c)] += b * x2[r];
            }
        }
    }

    /// Metropolis step on coordinate `j` to value `new`. Returns whether it
    /// was accepted; `log_u` is the log of a uniform draw.
    pub fn propose_coordinate(&mut self, j: usize, new: f64, log_u: f64) -> bool {
        let old = self.z[j];
        self.z[j] = new;
        let g = Globals::from_z(&self.z);
        let local = j >= N_GLOBAL;
        let grams_move = local || j == IDX_M2 || j == IDX_ETA1;
        let mut saved = None;
        if local {
            let i = j - N_GLOBAL;
            let (qn, _) = kappa_sq(&g, new);
            let qo = self.q[i];
            self.rank_one(i, qn - qo, qn * qn - qo * qo);
            self.q[i] = qn;
            saved = Some((i, qo, qn));
        } else if grams_move {
            let keep = (self.s1.clone(), self.s2.clone(), self.q.clone());
            self.recompute_grams(&g);
            let (ll, lp) = self.evaluate(&self.z.clone(), &g);
            return self.finish(ll, lp, log_u, j, old, None, Some(keep));
        }
        let (ll, lp) = self.evaluate(&self.z.clone(), &g);
        self.finish(ll, lp, log_u, j, old, saved, None)
    }

    #[allow(clippy::type_complexity)]
    fn finish(
        &mut self,
        ll: f64,
        lp: f64,
        log_u: f64,
        j: usize,
        old: f64,
        local: Option<(usize, f64, f64)>,
        globals: Option<(Mat<f64>, Mat<f64>, Vec<f64>)>,
    ) -> bool {
        let cur = self.log_post();
        let prop = ll + lp;
        if prop.is_finite() && (log_u < prop - cur || !cur.is_finite()) {
            self.log_lik = ll;
            self.log_prior = lp;
            return true;
        }
        self.z[j] = old;
        if let Some((i, qo, qn)) = local {
            self.rank_one(i, qo - qn, qo * qo - qn * qn);
            self.q[i] = qo;
        }
        if let Some((s1, s2, q)) = globals {
            self.s1 = s1;
            self.s2 = s2;
            self.q = q;
        }
        false
    }

    /// Metropolis step to an arbitrary point (all caches rebuilt).
    pub fn propose_point(&mut self, z_new: Vec<f64>, log_u: f64) -> bool {
        let old = std::mem::replace(&mut self.z, z_new);
        let keep = (self.s1.clone(), self.s2.clone(), self.q.clone());
        let g = Globals::from_z(&self.z);
        self.recompute_grams(&g);
        let (ll, lp) = self.evaluate(&self.z.clone(), &g);
        let prop = ll + lp;
        if prop.is_finite() && (log_u < prop - self.log_post() || !self.log_post().is_finite()) {
            self.log_lik = ll;
            self.log_prior = lp;
            true
        } else {
            self.z = old;
            (self.s1, self.s2, self.q) = keep;
            false
        }
    }

    /// Log posterior and its gradient at `z`, without touching the cached
    /// state used by coordinate moves.
    pub fn log_density_and_grad(&mut self, z: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (lp, mut grad) = log_prior_unconstrained(z, &self.config).ok()?;
        let g = Globals::from_z(z);
        let n = self.data.n();
        let p = self.config.p;
        let mut qs = Vec::with_capacity(p);
        let mut fracs = Vec::with_capacity(p);
        for i in 0..p {
            let (q, f) = kappa_sq(&g, z[N_GLOBAL + i]);
            qs.push(q);
            fracs.push(f);
        }
        let a = Mat::from_fn(n, p, |r, j| self.xt[(r, j)] * qs[j]);
        let s1 = &a * self.xt.transpose();
        let b = Mat::from_fn(n, p, |r, j| self.x2t[(r, j)] * qs[j] * qs[j]);
        let s2 = &b * self.x2t.transpose();
        let half = 0.5 * g.eta2_sq;
        let kfull = Mat::from_fn(n, n, |r, c| {
            let (v1, v2) = (s1[(r, c)], s2[(r, c)]);
            g.c2 + g.eta1_sq * v1 + g.eta3_sq * v2 + half * (v1 * v1 - v2) + if r == c { g.sigma2 } else { 0.0 }
        });
        self.factorizations += 1;
        let f = match SpdFactor::new(kfull.as_ref()) {
            Ok(f) => f,
            Err(_) => {
                self.failures += 1;
                return None;
            }
        };
        let ll = crate::likelihood::gp_from_factor(&f, &self.data.y).log_density;
        let alpha = f.solve_vec(&self.data.y);
        let inv = f.inverse();
        // W = alpha alpha^T - L^{-1}; d ll = tr(W dK) / 2
        let w = Mat::from_fn(n, n, |r, c| alpha[r] * alpha[c] - inv[(r, c)]);
        let mut tr_s1 = 0.0;
        let mut tr_s2 = 0.0;
        let mut tr_d2 = 0.0;
        let mut sum_w = 0.0;
        let mut trace_w = 0.0;
        for c in 0..n {
            for r in 0..n {
                let wv = w[(r, c)];
                let (v1, v2) = (s1[(r, c)], s2[(r, c)]);
                tr_s1 += wv * v1;
                tr_s2 += wv * v2;
                tr_d2 += wv * 0.5 * (v1 * v1 - v2);
                sum_w += wv;
            }
            trace_w += w[(c, c)];
        }
        let d_e1 = 0.5 * tr_s1;
        let d_e2 = 0.5 * tr_d2;
        let d_e3 = 0.5 * tr_s2;
        // dK/dS1 = E1 + E2 S1 elementwise, dK/dS2 = E3 - E2/2
        let m1 = Mat::from_fn(n, n, |r, c| w[(r, c)] * (g.eta1_sq + g.eta2_sq * s1[(r, c)]));
        let m1x = &m1 * &self.xt;
        let wx2 = &w * &self.x2t;
        let c2coef = g.eta3_sq - 0.5 * g.eta2_sq;
        let mut d_logq = vec![0.0; p];
        for i in 0..p {
            let quad1: f64 = (0..n).map(|r| self.xt[(r, i)] * m1x[(r, i)]).sum();
            let quad2: f64 = (0..n).map(|r| self.x2t[(r, i)] * wx2[(r, i)]).sum();
            let dq = 0.5 * (quad1 + c2coef * 2.0 * qs[i] * quad2);
            d_logq[i] = qs[i] * dq;
        }
        let sum_um: f64 = d_logq.iter().zip(&fracs).map(|(d, f)| d * f).sum();
        grad[IDX_M2] += -2.0 * g.eta2_sq * d_e2 - 2.0 * g.eta3_sq * d_e3 + sum_um;
        grad[IDX_XI2] += g.eta2_sq * d_e2;
        grad[IDX_PSI2] += g.eta3_sq * d_e3;
        grad[IDX_C2] += 0.5 * g.c2 * sum_w;
        grad[IDX_SIGMA] += g.sigma2 * trace_w;
        grad[IDX_ETA1] += 2.0 * g.eta1_sq * d_e1 + 4.0 * g.eta2_sq * d_e2 + 4.0 * g.eta3_sq * d_e3 - 2.0 * sum_um;
        for i in 0..p {
            grad[N_GLOBAL + i] += d_logq[i] * 2.0 * (1.0 - fracs[i]);
        }
        let total = ll + lp;
        if total.is_finite() && grad.iter().all(|v| v.is_finite()) {
            Some((total, grad))
        } else {
            None
        }
    }
}
