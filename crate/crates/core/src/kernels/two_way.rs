use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_dims, dot, weighted_dot, weighted_dot_sq, InteractionKernel, PriorDiag};
use crate::error::{Error, Result};
use crate::features::{phi2_dim, EffectId};

/// A single-pair product component `nu * x_i x_j y_i y_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub nu: f64,
}

/// Weights of a two-way interaction kernel
///
/// ```text
/// sum_m (<l_m . x, l_m . y> + 1)^2 + sum_m nu_m x_i x_j y_i y_j
///   + <a . x, a . y> + A + <psi . x . x, psi . y . y>
/// ```
///
/// The number of polynomial components `m1` must equal `lambdas.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct TwoWayKernelSpec {
    pub lambdas: Vec<Vec<f64>>,
    pub pair_terms: Vec<PairTerm>,
    pub alpha: Vec<f64>,
    pub psi: Vec<f64>,
    pub a_const: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    m1: usize,
    lambdas: Vec<Vec<f64>>,
    pair_terms: Vec<PairTerm>,
    alpha: Vec<f64>,
    psi: Vec<f64>,
    a_const: f64,
}

impl TryFrom<RawSpec> for TwoWayKernelSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        if raw.m1 != raw.lambdas.len() {
            return Err(Error::invalid(format!(
                "m1 = {} but {} lambda vectors given",
                raw.m1,
                raw.lambdas.len()
            )));
        }
        let spec = TwoWayKernelSpec {
            lambdas: raw.lambdas,
            pair_terms: raw.pair_terms,
            alpha: raw.alpha,
            psi: raw.psi,
            a_const: raw.a_const,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<TwoWayKernelSpec> for RawSpec {
    fn from(s: TwoWayKernelSpec) -> Self {
        RawSpec {
            m1: s.lambdas.len(),
            lambdas: s.lambdas,
            pair_terms: s.pair_terms,
            alpha: s.alpha,
            psi: s.psi,
            a_const: s.a_const,
        }
    }
}

fn check_weights(name: &'static str, v: &[f64], p: usize) -> Result<()> {
    if v.len() != p {
        return Err(Error::DimensionMismatch {
            what: name,
            expected: p,
            got: v.len(),
        });
    }
    for &w in v {
        if !w.is_finite() {
            return Err(Error::non_finite(name));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { name, value: w });
        }
    }
    Ok(())
}

impl TwoWayKernelSpec {
    /// All-zero weights for dimension `p`.
    pub fn zero(p: usize) -> Self {
        Self {
            lambdas: Vec::new(),
            pair_terms: Vec::new(),
            alpha: vec![0.0; p],
            psi: vec![0.0; p],
            a_const: 0.0,
        }
    }

    pub fn p(&self) -> usize {
        self.alpha.len()
    }

    pub fn m1(&self) -> usize {
        self.lambdas.len()
    }

    pub fn m2(&self) -> usize {
        self.pair_terms.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        phi2_dim(p)?;
        check_weights("psi", &self.psi, p)?;
        check_weights("alpha", &self.alpha, p)?;
        for l in &self.lambdas {
            check_weights("lambda", l, p)?;
        }
        for t in &self.pair_terms {
            if !(t.i < t.j && t.j < p) {
                return Err(Error::invalid(format!(
                    "pair term ({}, {}) needs i < j < p = {p}",
                    t.i, t.j
                )));
            }
            if !t.nu.is_finite() {
                return Err(Error::non_finite("nu"));
            }
            if t.nu < 0.0 {
                return Err(Error::NegativeWeight { name: "nu", value: t.nu });
            }
        }
        if !self.a_const.is_finite() {
            return Err(Error::non_finite("A"));
        }
        if self.m1() as f64 + self.a_const < 0.0 {
            return Err(Error::invalid(format!(
                "intercept variance m1 + A = {} is negative",
                self.m1() as f64 + self.a_const
            )));
        }
        Ok(())
    }

    /// Concatenates the components of two kernels; the induced prior is the
    /// entrywise sum.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.p() != other.p() {
            return Err(Error::DimensionMismatch {
                what: "kernel dimension",
                expected: self.p(),
                got: other.p(),
            });
        }
        // a single alpha/psi slot per kernel: squares add
        let hyp = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(u, v)| (u * u + v * v).sqrt()).collect()
        };
        Ok(Self {
            lambdas: self.lambdas.iter().chain(&other.lambdas).cloned().collect(),
            pair_terms: self.pair_terms.iter().chain(&other.pair_terms).copied().collect(),
            alpha: hyp(&self.alpha, &other.alpha),
            psi: hyp(&self.psi, &other.psi),
            a_const: self.a_const + other.a_const,
        })
    }
}

/// A validated [`TwoWayKernelSpec`] with squared weights and per-coordinate
/// variance summaries precomputed (`O(p M1 + M2)` once).
#[derive(Debug, Clone)]
pub struct TwoWayKernel {
    spec: TwoWayKernelSpec,
    lambda2: Vec<Vec<f64>>,
    alpha2: Vec<f64>,
    psi2: Vec<f64>,
    main_var: Vec<f64>,
    quad_var: Vec<f64>,
    nu: HashMap<(usize, usize), f64>,
}

impl TwoWayKernel {
    pub fn new(spec: TwoWayKernelSpec) -> Result<Self> {
        spec.validate()?;
        let p = spec.p();
        let sq = |v: &[f64]| v.iter().map(|w| w * w).collect::<Vec<_>>();
        let lambda2: Vec<Vec<f64>> = spec.lambdas.iter().map(|l| sq(l)).collect();
        let alpha2 = sq(&spec.alpha);
        let psi2 = sq(&spec.psi);
        let mut main_var = alpha2.clone();
        let mut quad_var = psi2.clone();
        for l2 in &lambda2 {
            for i in 0..p {
                main_var[i] += 2.0 * l2[i];
                quad_var[i] += l2[i] * l2[i];
            }
        }
        let mut nu = HashMap::new();
        for t in &spec.pair_terms {
            *nu.entry((t.i, t.j)).or_insert(0.0) += t.nu;
        }
        Ok(Self {
            spec,
            lambda2,
            alpha2,
            psi2,
            main_var,
            quad_var,
            nu,
        })
    }

    pub fn spec(&self) -> &TwoWayKernelSpec {
        &self.spec
    }
}

impl InteractionKernel for TwoWayKernel {
    fn p(&self) -> usize {
        self.spec.p()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut k = 0.0;
        for l2 in &self.lambda2 {
            let s = weighted_dot(l2, x, y) + 1.0;
            k += s * s;
        }
        for t in &self.spec.pair_terms {
            k += t.nu * x[t.i] * x[t.j] * y[t.i] * y[t.j];
        }
        k += weighted_dot(&self.alpha2, x, y) + self.spec.a_const;
        k += weighted_dot_sq(&self.psi2, x, y);
        k
    }

    fn variance(&self, e: EffectId) -> f64 {
        match e {
            EffectId::Intercept => self.lambda2.len() as f64 + self.spec.a_const,
            EffectId::Main(i) => self.main_var[i],
            EffectId::Quad(i) => self.quad_var[i],
            EffectId::Pair(i, j) => {
                let poly: f64 = self.lambda2.iter().map(|l2| l2[i] * l2[j]).sum();
                2.0 * poly + self.nu.get(&(i, j)).copied().unwrap_or(0.0)
            }
        }
    }
}

/// Direct `O((M1 + 1) p + M2)` evaluation with dimension checks.
pub fn two_way_eval(spec: &TwoWayKernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    check_dims(spec.p(), x, y)?;
    let mut k = 0.0;
    for l in &spec.lambdas {
        let lx: Vec<f64> = l.iter().zip(x).map(|(a, b)| a * b).collect();
        let ly: Vec<f64> = l.iter().zip(y).map(|(a, b)| a * b).collect();
        k += (dot(&lx, &ly) + 1.0).powi(2);
    }
    for t in &spec.pair_terms {
        k += t.nu * x[t.i] * x[t.j] * y[t.i] * y[t.j];
    }
    let ax: Vec<f64> = spec.alpha.iter().zip(x).map(|(a, b)| a * b).collect();
    let ay: Vec<f64> = spec.alpha.iter().zip(y).map(|(a, b)| a * b).collect();
    k += dot(&ax, &ay) + spec.a_const;
    let qx: Vec<f64> = spec.psi.iter().zip(x).map(|(a, b)| a * b * b).collect();
    let qy: Vec<f64> = spec.psi.iter().zip(y).map(|(a, b)| a * b * b).collect();
    k += dot(&qx, &qy);
    Ok(k)
}

/// Diagonal prior covariance induced by a two-way kernel.
///
/// * main `i`: `alpha_i^2 + 2 sum_m lambda_mi^2`
/// * pair `(i, j)`: `2 sum_m (lambda_mi lambda_mj)^2 + sum of matching nu`
/// * quad `i`: `psi_i^2 + sum_m lambda_mi^4`
/// * intercept: `M1 + A`
pub fn induced_prior_diag(spec: &TwoWayKernelSpec) -> Result<PriorDiag> {
    spec.validate()?;
    let p = spec.p();
    let mut s = PriorDiag::zeros(p);
    s.set(EffectId::Intercept, spec.m1() as f64 + spec.a_const);
    for i in 0..p {
        let l2: f64 = spec.lambdas.iter().map(|l| l[i] * l[i]).sum();
        let l4: f64 = spec.lambdas.iter().map(|l| l[i].powi(4)).sum();
        s.set(EffectId::Main(i), spec.alpha[i].powi(2) + 2.0 * l2);
        s.set(EffectId::Quad(i), spec.psi[i].powi(2) + l4);
        for j in i + 1..p {
            let lij: f64 = spec.lambdas.iter().map(|l| (l[i] * l[j]).powi(2)).sum();
            s.set(EffectId::Pair(i, j), 2.0 * lij);
        }
    }
    for t in &spec.pair_terms {
        let e = EffectId::Pair(t.i, t.j);
        s.set(e, s.get(e) + t.nu);
    }
    Ok(s)
}

/// How [`solve_spec_from_diag`] parameterizes the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// Equal variance within each degree block; one polynomial component.
    Block,
    /// Pair variances of the form `2 u_i u_j`; one polynomial component with
    /// per-coordinate scales.
    SkimLike,
    /// Any diagonal; one product term per pair, so evaluation is `O(p^2)`.
    General,
}

const REL_TOL: f64 = 1e-10;

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Finds kernel weights whose induced prior equals `target`.
pub fn solve_spec_from_diag(target: &PriorDiag, family: KernelFamily) -> Result<TwoWayKernelSpec> {
    let p = target.p();
    if let Some((e, v)) = target.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(format!("target variance {v} at {e} is not >= 0")));
    }
    match family {
        KernelFamily::General => Ok(solve_general(target)),
        KernelFamily::Block => {
            for (block, first) in [
                ("main", EffectId::Main(0)),
                ("quad", EffectId::Quad(0)),
            ] {
                let v0 = target.get(first);
                for i in 0..p {
                    let e = match first {
                        EffectId::Main(_) => EffectId::Main(i),
                        _ => EffectId::Quad(i),
                    };
                    if !near(target.get(e), v0) {
                        return Err(Error::Infeasible {
                            equation: "block structure",
                            detail: format!("{block} variances differ at {e}"),
                        });
                    }
                }
            }
            if p >= 2 {
                let v0 = target.get(EffectId::Pair(0, 1));
                for i in 0..p {
                    for j in i + 1..p {
                        if !near(target.get(EffectId::Pair(i, j)), v0) {
                            return Err(Error::Infeasible {
                                equation: "block structure",
                                detail: format!("pair variances differ at {}", EffectId::Pair(i, j)),
                            });
                        }
                    }
                }
                let u = (v0 / 2.0).sqrt();
                solve_with_scales(target, vec![u; p])
            } else {
                solve_with_scales(target, vec![0.0; p])
            }
        }
        KernelFamily::SkimLike => {
            let u = rank_one_scales(target)?;
            solve_with_scales(target, u)
        }
    }
}

/// Existence construction: no polynomial component, one product term per
/// pair.
fn solve_general(target: &PriorDiag) -> TwoWayKernelSpec {
    let p = target.p();
    let mut spec = TwoWayKernelSpec::zero(p);
    for i in 0..p {
        spec.alpha[i] = target.get(EffectId::Main(i)).sqrt();
        spec.psi[i] = target.get(EffectId::Quad(i)).sqrt();
        for j in i + 1..p {
            spec.pair_terms.push(PairTerm {
                i,
                j,
                nu: target.get(EffectId::Pair(i, j)),
            });
        }
    }
    spec.a_const = target.get(EffectId::Intercept);
    spec
}

/// Recovers `u` with `pair(i, j) = 2 u_i u_j`, or reports that the pair
/// variances are not rank one.
fn rank_one_scales(target: &PriorDiag) -> Result<Vec<f64>> {
    let p = target.p();
    let q = |i: usize, j: usize| target.get(EffectId::pair(i, j)) / 2.0;
    let mut best = (0, 0, 0.0);
    for i in 0..p {
        for j in i + 1..p {
            if q(i, j) > best.2 {
                best = (i, j, q(i, j));
            }
        }
    }
    let (a, b, qab) = best;
    let mut u = vec![0.0; p];
    if qab == 0.0 {
        return Ok(u);
    }
    // Fix the scale of u_a through a third coordinate when one is active;
    // with only (a, b) active the split between u_a and u_b is free.
    let third = (0..p)
        .filter(|&c| c != a && c != b)
        .map(|c| (c, q(a, c) * q(b, c)))
        .filter(|&(_, w)| w > 0.0)
        .max_by(|x, y| x.1.total_cmp(&y.1));
    u[a] = match third {
        Some((c, _)) => (qab * q(a, c) / q(b, c)).sqrt(),
        None => qab.sqrt(),
    };
    for i in 0..p {
        if i != a {
            u[i] = q(a, i) / u[a];
        }
    }
    for i in 0..p {
        for j in i + 1..p {
            let want = target.get(EffectId::Pair(i, j));
            let got = 2.0 * u[i] * u[j];
            if (want - got).abs() > REL_TOL * (want.abs() + 2.0 * qab) {
                return Err(Error::Infeasible {
                    equation: "pair: 2 lambda_i^2 lambda_j^2 = S_(ij)",
                    detail: format!(
                        "pair variances are not of product form at {}",
                        EffectId::Pair(i, j)
                    ),
                });
            }
        }
    }
    Ok(u)
}

/// One polynomial component with `lambda_i^2 = u_i`; alpha, psi and A absorb
/// the rest.
fn solve_with_scales(target: &PriorDiag, u: Vec<f64>) -> Result<TwoWayKernelSpec> {
    let p = target.p();
    let active = u.iter().any(|&v| v > 0.0);
    let m1 = if active { 1.0 } else { 0.0 };
    let mut spec = TwoWayKernelSpec::zero(p);
    for i in 0..p {
        let main = target.get(EffectId::Main(i));
        let a2 = main - 2.0 * u[i];
        spec.alpha[i] = clamp_sqrt(a2, main).ok_or_else(|| Error::Infeasible {
            equation: "main: alpha_i^2 = S_(i) - 2 lambda_i^2",
            detail: format!("alpha_{}^2 = {a2} < 0", i + 1),
        })?;
        let quad = target.get(EffectId::Quad(i));
        let p2 = quad - u[i] * u[i];
        spec.psi[i] = clamp_sqrt(p2, quad).ok_or_else(|| Error::Infeasible {
            equation: "quad: psi_i^2 = S_(ii) - lambda_i^4",
            detail: format!("psi_{}^2 = {p2} < 0", i + 1),
        })?;
    }
    if active {
        spec.lambdas.push(u.iter().map(|v| v.sqrt()).collect());
    }
    spec.a_const = target.get(EffectId::Intercept) - m1;
    spec.validate()?;
    Ok(spec)
}

fn clamp_sqrt(v: f64, scale: f64) -> Option<f64> {
    if v >= 0.0 {
        Some(v.sqrt())
    } else if v >= -REL_TOL * scale.abs() {
        Some(0.0)
    } else {
        None
    }
}
