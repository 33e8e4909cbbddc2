//! Exact Gaussian posteriors of individual coefficients and coefficient
//! subsets, read off the GP posterior at sparse probe inputs.

use std::collections::HashSet;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::Design;
use crate::error::{ensure_finite, Error, Result};
use crate::features::{phi2_dim, phi2_map, EffectId};
use crate::kernels::{cross_kernel_at_probes, kernel_matrix, probe_gram, InteractionKernel, Probe};
use crate::linalg::SpdFactor;

/// Default ceiling on the subset size of a joint query.
pub const DEFAULT_JOINT_CAP: usize = 64;

/// Relative slack below zero tolerated on a posterior variance before it is
/// treated as a failure.
pub const VARIANCE_CLAMP_TOL: f64 = 1e-10;

/// An ordered list of distinct probes containing the origin exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSet {
    probes: Vec<Probe>,
}

impl ProbeSet {
    fn position(&self, a: Probe) -> usize {
        self.probes.iter().position(|b| *b == a).expect("probe present")
    }

    /// Probes for one coefficient.
    pub fn for_effect(e: EffectId) -> Self {
        let probes = match e {
            EffectId::Intercept => vec![Probe::Origin],
            EffectId::Main(i) | EffectId::Quad(i) => vec![Probe::pos(i), Probe::neg(i), Probe::Origin],
            EffectId::Pair(i, j) => vec![Probe::pos(i), Probe::neg(i), Probe::pos(j), Probe::sum(i, j), Probe::Origin],
        };
        Self { probes }
    }

    /// `e_k, -e_k` for `k` in the subset, `e_k + e_l` for pairs, then the origin.
    pub fn for_subset(subset: &[usize]) -> Self {
        let mut probes = Vec::with_capacity(2 * subset.len() + subset.len() * subset.len() / 2 + 1);
        for &k in subset {
            probes.push(Probe::pos(k));
            probes.push(Probe::neg(k));
        }
        for (a, &k) in subset.iter().enumerate() {
            for &l in &subset[a + 1..] {
                probes.push(Probe::sum(k, l));
            }
        }
        probes.push(Probe::Origin);
        Self { probes }
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

/// Sparse rows mapping probe evaluations to coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    pub effects: Vec<EffectId>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub n_probes: usize,
}

impl CombinationMatrix {
    pub fn new(effects: &[EffectId], probes: &ProbeSet) -> Self {
        let rows = effects
            .iter()
            .map(|&e| {
                let at = |a: Probe| probes.position(a);
                match e {
                    EffectId::Intercept => vec![(at(Probe::Origin), 1.0)],
                    EffectId::Main(i) => vec![(at(Probe::pos(i)), 0.5), (at(Probe::neg(i)), -0.5)],
                    EffectId::Quad(i) => vec![
                        (at(Probe::pos(i)), 0.5),
                        (at(Probe::neg(i)), 0.5),
                        (at(Probe::Origin), -1.0),
                    ],
                    EffectId::Pair(i, j) => vec![
                        (at(Probe::sum(i, j)), 1.0),
                        (at(Probe::pos(i)), -1.0),
                        (at(Probe::pos(j)), -1.0),
                        (at(Probe::Origin), 1.0),
                    ],
                }
            })
            .collect();
        Self {
            effects: effects.to_vec(),
            rows,
            n_probes: probes.len(),
        }
    }

    /// Dense `q x n_probes` form.
    pub fn dense(&self) -> Mat<f64> {
        let mut r = Mat::<f64>::zeros(self.rows.len(), self.n_probes);
        for (q, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                r[(q, k)] += v;
            }
        }
        r
    }

    /// `R [phi2(probe_1) ... phi2(probe_m)]^T`, a `q x D` matrix. Every entry
    /// is a dyadic rational, so the product is exact in binary floating point.
    pub fn selection(&self, probes: &ProbeSet, p: usize) -> Result<Mat<f64>> {
        let d = phi2_dim(p)?;
        let feats: Vec<Vec<f64>> = probes
            .probes()
            .iter()
            .map(|a| phi2_map(&a.to_dense(p)).map(|f| f.into_vec()))
            .collect::<Result<_>>()?;
        let mut s = Mat::<f64>::zeros(self.rows.len(), d);
        for (q, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                for c in 0..d {
                    s[(q, c)] += v * feats[k][c];
                }
            }
        }
        Ok(s)
    }

    fn apply(&self, m: &Mat<f64>) -> Mat<f64> {
        Mat::from_fn(self.rows.len(), m.ncols(), |q, c| self.rows[q].iter().map(|&(k, v)| v * m[(k, c)]).sum())
    }
}

/// Mean and covariance over a list of coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub effects: Vec<EffectId>,
    pub mean: Vec<f64>,
    pub covariance: Mat<f64>,
}

#[derive(Serialize, Deserialize)]
struct SummaryJson {
    effects: Vec<EffectId>,
    mean: Vec<f64>,
    /// Row `i` holds covariance entries `(i, 0..=i)`.
    covariance_lower: Vec<Vec<f64>>,
}

impl Serialize for GaussianSummary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SummaryJson {
            effects: self.effects.clone(),
            mean: self.mean.clone(),
            covariance_lower: (0..self.mean.len())
                .map(|i| (0..=i).map(|j| self.covariance[(i, j)]).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianSummary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SummaryJson::deserialize(d)?;
        let q = j.mean.len();
        if j.effects.len() != q || j.covariance_lower.len() != q || j.covariance_lower.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
            return Err(serde::de::Error::custom("summary shapes disagree"));
        }
        let l = &j.covariance_lower;
        Ok(Self {
            effects: j.effects,
            mean: j.mean,
            covariance: Mat::from_fn(q, q, |a, b| if b <= a { l[a][b] } else { l[b][a] }),
        })
    }
}

impl GaussianSummary {
    pub fn variance(&self, k: usize) -> f64 {
        self.covariance[(k, k)]
    }

    pub fn sd(&self, k: usize) -> f64 {
        self.variance(k).sqrt()
    }

    pub fn position(&self, e: EffectId) -> Option<usize> {
        self.effects.iter().position(|f| *f == e)
    }
}

/// The factor of `K + sigma2 I` and `H Y` for one kernel, shared by every
/// coefficient query.
pub struct PosteriorFactor<'a, K: InteractionKernel + ?Sized> {
    kernel: &'a K,
    x: &'a Design,
    factor: SpdFactor,
    h_y: Vec<f64>,
}

impl<'a, K: InteractionKernel + ?Sized> PosteriorFactor<'a, K> {
    pub fn new(kernel: &'a K, x: &'a Design, y: &[f64], sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be positive, got {sigma2}")));
        }
        let mut l = kernel_matrix(kernel, x)?;
        for i in 0..x.nrows() {
            l[(i, i)] += sigma2;
        }
        let factor = SpdFactor::new(l.as_ref())?;
        Self::from_factor(kernel, x, y, factor)
    }

    /// Reuses a factor of `K + sigma2 I` computed elsewhere.
    pub fn from_factor(kernel: &'a K, x: &'a Design, y: &[f64], factor: SpdFactor) -> Result<Self> {
        if y.len() != x.nrows() || factor.dim() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "response / factor vs design rows",
                expected: x.nrows(),
                got: if y.len() != x.nrows() { y.len() } else { factor.dim() },
            });
        }
        if x.ncols() != kernel.p() {
            return Err(Error::DimensionMismatch {
                what: "design columns vs kernel dimension",
                expected: kernel.p(),
                got: x.ncols(),
            });
        }
        ensure_finite(y, "response")?;
        let h_y = factor.solve_vec(y);
        Ok(Self { kernel, x, factor, h_y })
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    fn summarize(&self, effects: &[EffectId], probes: &ProbeSet) -> Result<GaussianSummary> {
        let comb = CombinationMatrix::new(effects, probes);
        let cross = cross_kernel_at_probes(self.kernel, probes.probes(), self.x)?;
        let gram = probe_gram(self.kernel, probes.probes())?;
        // R K(A, X): q x N
        let rc = comb.apply(&cross);
        let mean: Vec<f64> = (0..effects.len())
            .map(|q| (0..self.x.nrows()).map(|n| rc[(q, n)] * self.h_y[n]).sum())
            .collect();
        let prior = comb.apply(&comb.apply(&gram).transpose().to_owned());
        let mut w = rc.transpose().to_owned();
        self.factor.solve_lower_in_place(&mut w);
        let reduction = w.transpose() * &w;
        let q = effects.len();
        let mut cov = Mat::from_fn(q, q, |a, b| prior[(a, b)] - reduction[(a, b)]);
        for a in 0..q {
            for b in 0..a {
                let v = 0.5 * (cov[(a, b)] + cov[(b, a)]);
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
            let v = cov[(a, a)];
            if v < 0.0 {
                if v >= -VARIANCE_CLAMP_TOL * (1.0 + prior[(a, a)].abs()) {
                    cov[(a, a)] = 0.0;
                } else {
                    return Err(Error::NegativeVariance {
                        effect: effects[a].to_string(),
                        value: v,
                    });
                }
            }
        }
        ensure_finite(&mean, "posterior mean")?;
        Ok(GaussianSummary {
            effects: effects.to_vec(),
            mean,
            covariance: cov,
        })
    }

    /// Posterior of one coefficient.
    pub fn effect_posterior(&self, e: EffectId) -> Result<GaussianSummary> {
        e.validate(self.kernel.p())?;
        self.summarize(&[e], &ProbeSet::for_effect(e))
    }

    /// Posterior of every selected coefficient supported on `subset`.
    pub fn joint_posterior(&self, subset: &[usize], include: Include, cap: usize) -> Result<GaussianSummary> {
        let p = self.kernel.p();
        if subset.len() > cap {
            return Err(Error::CapExceeded { dim: subset.len(), cap });
        }
        let mut seen = HashSet::new();
        for &k in subset {
            if k >= p {
                return Err(Error::invalid(format!("index {} out of range for p = {p}", k + 1)));
            }
            if !seen.insert(k) {
                return Err(Error::invalid(format!("duplicate index {} in subset", k + 1)));
            }
        }
        let effects = include.effects(subset);
        if effects.is_empty() {
            return Err(Error::invalid("joint query selects no effects"));
        }
        self.summarize(&effects, &ProbeSet::for_subset(subset))
    }
}

/// Which effect groups a joint query returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Include {
    pub intercept: bool,
    pub mains: bool,
    pub pairs: bool,
    pub quads: bool,
}

impl Include {
    pub const ALL: Include = Include {
        intercept: true,
        mains: true,
        pairs: true,
        quads: true,
    };
    pub const MAINS: Include = Include {
        intercept: false,
        mains: true,
        pairs: false,
        quads: false,
    };
    pub const NO_INTERCEPT: Include = Include {
        intercept: false,
        mains: true,
        pairs: true,
        quads: true,
    };

    /// Effects in canonical order: intercept, mains, pairs, quads.
    pub fn effects(&self, subset: &[usize]) -> Vec<EffectId> {
        let mut out = Vec::new();
        if self.intercept {
            out.push(EffectId::Intercept);
        }
        if self.mains {
            out.extend(subset.iter().map(|&k| EffectId::Main(k)));
        }
        if self.pairs {
            for (a, &k) in subset.iter().enumerate() {
                for &l in &subset[a + 1..] {
                    out.push(EffectId::pair(k, l));
                }
            }
        }
        if self.quads {
            out.extend(subset.iter().map(|&k| EffectId::Quad(k)));
        }
        out
    }
}

/// Builds the factor and queries one coefficient.
pub fn effect_posterior<K: InteractionKernel + ?Sized>(
    kernel: &K,
    x: &Design,
    y: &[f64],
    sigma2: f64,
    e: EffectId,
) -> Result<GaussianSummary> {
    PosteriorFactor::new(kernel, x, y, sigma2)?.effect_posterior(e)
}

/// Builds the factor and queries a subset jointly.
pub fn joint_posterior<K: InteractionKernel + ?Sized>(
    kernel: &K,
    x: &Design,
    y: &[f64],
    sigma2: f64,
    subset: &[usize],
    include: Include,
) -> Result<GaussianSummary> {
    PosteriorFactor::new(kernel, x, y, sigma2)?.joint_posterior(subset, include, DEFAULT_JOINT_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{SkimKernel, TwoWayKernel, TwoWayKernelSpec};
    use crate::likelihood::{explicit_gram, feature_matrix, synthetic_gaussian};
    use proptest::prelude::*;

    /// Conjugate posterior over all of phi2 in the covariance form, which
    /// tolerates zero prior variances.
    fn conjugate(k: &dyn InteractionKernel, x: &Design, y: &[f64], sigma2: f64) -> (Vec<f64>, Mat<f64>) {
        let phi = feature_matrix(x, 10_000).unwrap();
        let s = k.prior_diag();
        let n = x.nrows();
        let mut c = explicit_gram(&phi, &s);
        for i in 0..n {
            c[(i, i)] += sigma2;
        }
        let f = SpdFactor::new(c.as_ref()).unwrap();
        let sphi_t = Mat::from_fn(phi.ncols(), n, |d, r| s.as_slice()[d] * phi[(r, d)]);
        let w = f.solve(&sphi_t.transpose().to_owned());
        let yv = Mat::from_fn(n, 1, |i, _| y[i]);
        let mean = &sphi_t * f.solve(&yv);
        let red = &sphi_t * &w;
        let dd = phi.ncols();
        let cov = Mat::from_fn(dd, dd, |a, b| if a == b { s.as_slice()[a] } else { 0.0 } - red[(a, b)]);
        ((0..dd).map(|i| mean[(i, 0)]).collect(), cov)
    }

    fn close(a: f64, b: f64, scale: f64) -> bool {
        (a - b).abs() <= 1e-6 * (scale + a.abs().max(b.abs())) + 1e-12
    }

    #[test]
    fn single_effects_match_oracle() {
        let p = 3;
        let data = synthetic_gaussian(10, p, 3).unwrap();
        let k = SkimKernel::new([1.1, 0.8, 0.6], 1.3, &[0.9, 0.4, 1.2]).unwrap();
        let (mu, cov) = conjugate(&k, &data.x, &data.y, 0.5);
        let pf = PosteriorFactor::new(&k, &data.x, &data.y, 0.5).unwrap();
        for e in EffectId::all(p) {
            let s = pf.effect_posterior(e).unwrap();
            let d = e.index(p);
            assert!(close(s.mean[0], mu[d], 0.0), "{e}: {} vs {}", s.mean[0], mu[d]);
            assert!(close(s.variance(0), cov[(d, d)], 0.0), "{e}: {} vs {}", s.variance(0), cov[(d, d)]);
        }
    }

    #[test]
    fn joint_matches_oracle_and_marginals() {
        let p = 4;
        let data = synthetic_gaussian(12, p, 8).unwrap();
        let k = SkimKernel::new([1.0, 0.9, 0.4], 0.7, &[0.5, 1.1, 0.8, 1.4]).unwrap();
        let (mu, cov) = conjugate(&k, &data.x, &data.y, 0.8);
        let pf = PosteriorFactor::new(&k, &data.x, &data.y, 0.8).unwrap();
        let s = pf.joint_posterior(&[0, 1, 2], Include::NO_INTERCEPT, 64).unwrap();
        assert_eq!(s.effects.len(), 9);
        for (a, ea) in s.effects.iter().enumerate() {
            assert!(close(s.mean[a], mu[ea.index(p)], 0.0));
            for (b, eb) in s.effects.iter().enumerate() {
                assert!(close(s.covariance[(a, b)], cov[(ea.index(p), eb.index(p))], 1e-3));
            }
            let single = pf.effect_posterior(*ea).unwrap();
            assert!(close(single.mean[0], s.mean[a], 0.0));
            assert!(close(single.variance(0), s.variance(a), 0.0));
        }
        let one = pf.joint_posterior(&[2], Include::MAINS, 64).unwrap();
        let direct = pf.effect_posterior(EffectId::Main(2)).unwrap();
        assert_eq!(one.mean, direct.mean);
        assert_eq!(one.variance(0), direct.variance(0));
    }

    #[test]
    fn probe_count_and_guards() {
        assert_eq!(ProbeSet::for_subset(&[0, 3, 5, 6]).len(), 2 * 4 + 6 + 1);
        let data = synthetic_gaussian(5, 3, 0).unwrap();
        let k = SkimKernel::new([1.0, 1.0, 1.0], 1.0, &[1.0; 3]).unwrap();
        let pf = PosteriorFactor::new(&k, &data.x, &data.y, 1.0).unwrap();
        assert!(pf.joint_posterior(&[0, 0], Include::ALL, 64).is_err());
        assert!(matches!(pf.joint_posterior(&[0, 1, 2], Include::ALL, 2), Err(Error::CapExceeded { .. })));
        assert!(pf.joint_posterior(&[3], Include::ALL, 64).is_err());
    }

    #[test]
    fn zero_response_and_zero_prior() {
        let spec = TwoWayKernelSpec {
            alpha: vec![0.0, 1.0, 0.5],
            psi: vec![1.0, 1.0, 1.0],
            a_const: 1.0,
            ..TwoWayKernelSpec::zero(3)
        };
        let k = TwoWayKernel::new(spec).unwrap();
        let mut data = synthetic_gaussian(6, 3, 1).unwrap();
        let pf = PosteriorFactor::new(&k, &data.x, &data.y, 0.5).unwrap();
        let s = pf.effect_posterior(EffectId::Main(0)).unwrap();
        assert!(s.mean[0].abs() < 1e-10 && s.variance(0).abs() < 1e-10);
        let s = pf.effect_posterior(EffectId::pair(1, 2)).unwrap();
        assert!(s.mean[0].abs() < 1e-10 && s.variance(0).abs() < 1e-10);
        data.y = vec![0.0; 6];
        let pf = PosteriorFactor::new(&k, &data.x, &data.y, 0.5).unwrap();
        let s = pf.joint_posterior(&[0, 1, 2], Include::ALL, 64).unwrap();
        assert!(s.mean.iter().all(|m| *m == 0.0));
        let eig = s.covariance.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        assert!(eig.iter().all(|e| *e >= -1e-10));
    }

    #[test]
    fn summary_json_round_trip() {
        let data = synthetic_gaussian(5, 2, 4).unwrap();
        let k = SkimKernel::new([1.0, 1.0, 1.0], 1.0, &[0.5, 2.0]).unwrap();
        let s = joint_posterior(&k, &data.x, &data.y, 1.0, &[0, 1], Include::ALL).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"x1:x2\""));
        let back: GaussianSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    fn unit_rows_hold(subset: &[usize], p: usize) -> bool {
        let probes = ProbeSet::for_subset(subset);
        let effects = Include::ALL.effects(subset);
        let comb = CombinationMatrix::new(&effects, &probes);
        let sel = comb.selection(&probes, p).unwrap();
        effects.iter().enumerate().all(|(q, e)| {
            (0..phi2_dim(p).unwrap()).all(|c| sel[(q, c)] == if c == e.index(p) { 1.0 } else { 0.0 })
        })
    }

    #[test]
    fn rows_select_single_coefficients_exactly() {
        for e in EffectId::all(4) {
            let probes = ProbeSet::for_effect(e);
            let comb = CombinationMatrix::new(&[e], &probes);
            let sel = comb.selection(&probes, 4).unwrap();
            for c in 0..15 {
                assert_eq!(sel[(0, c)], if c == e.index(4) { 1.0 } else { 0.0 }, "{e}");
            }
        }
        // main rows annihilate the intercept feature
        let probes = ProbeSet::for_effect(EffectId::Main(1));
        let comb = CombinationMatrix::new(&[EffectId::Main(1)], &probes);
        assert_eq!(comb.selection(&probes, 3).unwrap()[(0, 0)], 0.0);
    }

    proptest! {
        #[test]
        fn subset_rows_select_exactly(p in 1usize..7, mask in 1u32..64) {
            let subset: Vec<usize> = (0..p).filter(|k| mask & (1 << k) != 0).collect();
            prop_assume!(!subset.is_empty());
            prop_assert!(unit_rows_hold(&subset, p));
        }
    }
}
