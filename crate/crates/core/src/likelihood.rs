//! Marginal likelihood `log p(Y | tau, sigma^2)` with the coefficients
//! integrated out, by three routes.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design};
use crate::error::{ensure_finite, Error, Result};
use crate::features::{phi2_dim, phi2_map, EffectId};
use crate::kernels::{kernel_matrix, BlockKernel, InteractionKernel, PriorDiag};
use crate::linalg::SpdFactor;

/// Default ceiling on the explicit feature dimension.
pub const DEFAULT_FEATURE_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalResult {
    pub log_density: f64,
    pub cholesky_ok: bool,
    pub jitter_used: f64,
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("noise variance must be positive and finite, got {sigma2}")))
    }
}

/// `-1/2 Y^T L^{-1} Y - 1/2 log|L| - N/2 log(2 pi)` with `L = K + sigma2 I`.
pub fn gp_log_marginal(k: &Mat<f64>, sigma2: f64, y: &[f64]) -> Result<MarginalResult> {
    check_sigma2(sigma2)?;
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "kernel matrix vs response",
            expected: n,
            got: k.nrows(),
        });
    }
    ensure_finite(y, "response")?;
    let mut l = k.clone();
    for i in 0..n {
        l[(i, i)] += sigma2;
    }
    let f = SpdFactor::new(l.as_ref())?;
    Ok(gp_from_factor(&f, y))
}

/// Log marginal from an existing factor of `K + sigma2 I`.
pub fn gp_from_factor(f: &SpdFactor, y: &[f64]) -> MarginalResult {
    let n = y.len() as f64;
    let log_density = -0.5 * f.quad_form(y) - 0.5 * f.log_det() - 0.5 * n * (2.0 * PI).ln();
    MarginalResult {
        log_density,
        cholesky_ok: true,
        jitter_used: f.jitter(),
    }
}

/// Builds the Gram matrix and evaluates [`gp_log_marginal`].
pub fn gp_log_marginal_kernel<K: InteractionKernel + ?Sized>(
    k: &K,
    data: &Dataset,
    sigma2: f64,
) -> Result<MarginalResult> {
    let km = kernel_matrix(k, &data.x)?;
    gp_log_marginal(&km, sigma2, &data.y)
}

/// Explicit `N x D` degree-2 feature matrix, refused when `D > cap`.
pub fn feature_matrix(x: &Design, cap: usize) -> Result<Mat<f64>> {
    let d = phi2_dim(x.ncols())?;
    if d > cap {
        return Err(Error::CapExceeded { dim: d, cap });
    }
    let mut phi = Mat::<f64>::zeros(x.nrows(), d);
    for (n, row) in x.rows().enumerate() {
        for (c, v) in phi2_map(row)?.as_slice().iter().enumerate() {
            phi[(n, c)] = *v;
        }
    }
    Ok(phi)
}

/// `D x N` features with row `c` scaled by `w[c]`; each observation is a
/// contiguous column.
fn scaled_features_t(x: &Design, w: Option<&[f64]>, cap: usize) -> Result<Mat<f64>> {
    let d = phi2_dim(x.ncols())?;
    if d > cap {
        return Err(Error::CapExceeded { dim: d, cap });
    }
    let mut ft = Mat::<f64>::zeros(d, x.nrows());
    for (n, row) in x.rows().enumerate() {
        let f = phi2_map(row)?;
        let col = ft.col_mut(n).try_as_col_major_mut().expect("fresh matrix is contiguous").as_slice_mut();
        match w {
            Some(w) => col.iter_mut().zip(f.as_slice()).zip(w).for_each(|((o, v), s)| *o = v * s),
            None => col.copy_from_slice(f.as_slice()),
        }
    }
    Ok(ft)
}

/// Features materialized per block by the Woodbury route.
pub const FEATURE_CHUNK: usize = 2048;

fn effect_value(e: EffectId, x: &[f64]) -> f64 {
    match e {
        EffectId::Intercept => 1.0,
        EffectId::Main(i) => x[i],
        EffectId::Pair(i, j) => x[i] * x[j],
        EffectId::Quad(i) => x[i] * x[i],
    }
}

/// `Phi Sigma Phi^T` accumulated over blocks of at most [`FEATURE_CHUNK`]
/// explicit features.
fn chunked_gram(x: &Design, s: &PriorDiag, cap: usize) -> Result<Mat<f64>> {
    let p = x.ncols();
    let d = phi2_dim(p)?;
    if d > cap {
        return Err(Error::CapExceeded { dim: d, cap });
    }
    let effects: Vec<EffectId> = EffectId::all(p).collect();
    let sd: Vec<f64> = s.as_slice().iter().map(|v| v.sqrt()).collect();
    let n = x.nrows();
    let mut g = Mat::<f64>::zeros(n, n);
    let mut blk = Mat::<f64>::zeros(FEATURE_CHUNK.min(d), n);
    for start in (0..d).step_by(FEATURE_CHUNK) {
        let len = FEATURE_CHUNK.min(d - start);
        for (r, row) in x.rows().enumerate() {
            for q in 0..len {
                let c = start + q;
                blk[(q, r)] = effect_value(effects[c], row) * sd[c];
            }
        }
        let b = blk.as_ref().subrows(0, len);
        matmul(g.as_mut(), Accum::Add, b.transpose(), b, 1.0, Par::Seq);
    }
    Ok(g)
}

fn positive_prior(k: &(impl InteractionKernel + ?Sized)) -> Result<PriorDiag> {
    let s = k.prior_diag();
    if let Some((e, _)) = s.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::SingularPrior { effect: e.to_string() });
    }
    ensure_finite(s.as_slice(), "prior variances")?;
    Ok(s)
}

fn check_data(k: &(impl InteractionKernel + ?Sized), data: &Dataset, sigma2: f64) -> Result<()> {
    check_sigma2(sigma2)?;
    if data.p() != k.p() {
        return Err(Error::DimensionMismatch {
            what: "design columns vs kernel dimension",
            expected: k.p(),
            got: data.p(),
        });
    }
    Ok(())
}

/// Explicit-feature evaluation through the `D x D` posterior precision
/// `Sigma^{-1} + sigma^{-2} Phi^T Phi`.
pub fn naive_log_marginal<K: InteractionKernel + ?Sized>(
    k: &K,
    data: &Dataset,
    sigma2: f64,
    cap: usize,
) -> Result<MarginalResult> {
    check_data(k, data, sigma2)?;
    let ft = scaled_features_t(&data.x, None, cap)?;
    let s = positive_prior(k)?;
    let n = data.n() as f64;
    let mut prec = &ft * ft.transpose();
    for c in 0..prec.nrows() {
        for r in 0..prec.nrows() {
            prec[(r, c)] /= sigma2;
        }
        prec[(c, c)] += 1.0 / s.as_slice()[c];
    }
    let f = SpdFactor::new(prec.as_ref())?;
    let y = &data.y;
    let b: Vec<f64> = (0..ft.nrows()).map(|c| (0..y.len()).map(|r| ft[(c, r)] * y[r]).sum()).collect();
    let log_det_sigma_n = -f.log_det();
    let log_det_prior: f64 = s.as_slice().iter().map(|v| v.ln()).sum();
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let log_density = -0.5 * n * (2.0 * PI * sigma2).ln() + 0.5 * log_det_sigma_n - 0.5 * log_det_prior
        - yty / (2.0 * sigma2)
        + f.quad_form(&b) / (2.0 * sigma2 * sigma2);
    Ok(MarginalResult {
        log_density,
        cholesky_ok: true,
        jitter_used: f.jitter(),
    })
}

/// `Phi Sigma Phi^T`, formed as `B B^T` with `B = Phi Sigma^{1/2}`.
pub fn explicit_gram(phi: &Mat<f64>, s: &PriorDiag) -> Mat<f64> {
    let sd: Vec<f64> = s.as_slice().iter().map(|v| v.sqrt()).collect();
    let b = Mat::from_fn(phi.nrows(), phi.ncols(), |r, c| phi[(r, c)] * sd[c]);
    &b * b.transpose()
}

/// Explicit-feature evaluation through the `N x N` matrix
/// `I + sigma^{-2} Phi Sigma Phi^T` (determinant lemma plus Woodbury inverse).
pub fn woodbury_log_marginal<K: InteractionKernel + ?Sized>(
    k: &K,
    data: &Dataset,
    sigma2: f64,
    cap: usize,
) -> Result<MarginalResult> {
    check_data(k, data, sigma2)?;
    let s = positive_prior(k)?;
    let g = chunked_gram(&data.x, &s, cap)?;
    let nn = data.n();
    let mut c = Mat::from_fn(nn, nn, |r, q| g[(r, q)] / sigma2);
    for i in 0..nn {
        c[(i, i)] += 1.0;
    }
    let f = SpdFactor::new(c.as_ref())?;
    let y = &data.y;
    let gy: Vec<f64> = (0..nn).map(|r| (0..nn).map(|q| g[(r, q)] * y[q]).sum()).collect();
    let ygy: f64 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();
    // Y^T Phi Sigma_N Phi^T Y
    let quad = ygy - f.quad_form(&gy) / sigma2;
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let log_density =
        -0.5 * nn as f64 * (2.0 * PI * sigma2).ln() - 0.5 * f.log_det() - yty / (2.0 * sigma2)
            + quad / (2.0 * sigma2 * sigma2);
    Ok(MarginalResult {
        log_density,
        cholesky_ok: true,
        jitter_used: f.jitter(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kis,
    Woodbury,
    Naive,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Kis => "kis",
            Method::Woodbury => "woodbury",
            Method::Naive => "naive",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kis" | "gp" => Ok(Method::Kis),
            "woodbury" => Ok(Method::Woodbury),
            "naive" => Ok(Method::Naive),
            _ => Err(Error::invalid(format!("unknown method {s:?} (kis, woodbury, naive)"))),
        }
    }
}

/// One benchmark cell. `seconds` is empty for cells skipped as infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub seconds: Option<f64>,
    pub bytes_peak_estimate: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub repetitions: usize,
    pub seed: u64,
    pub feature_cap: usize,
    pub sigma2: f64,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            repetitions: 3,
            seed: 0,
            feature_cap: DEFAULT_FEATURE_CAP,
            sigma2: 1.0,
        }
    }
}

/// Dominant allocations of one evaluation, in bytes.
pub fn bytes_estimate(method: Method, n: usize, p: usize) -> u64 {
    let d = 1 + 2 * p as u64 + (p as u64) * (p as u64).saturating_sub(1) / 2;
    let (n, p) = (n as u64, p as u64);
    8 * match method {
        Method::Kis => 2 * n * n + n * p,
        Method::Woodbury => n * d.min(FEATURE_CHUNK as u64) + 3 * d + 3 * n * n,
        Method::Naive => n * d + 2 * d * d,
    }
}

/// Random standard-normal dataset.
pub fn synthetic_gaussian(n: usize, p: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Dataset::new(Design::from_row_major(n, p, data)?, y)
}

/// Times one marginal-likelihood evaluation per repetition for every `p`,
/// using the isotropic block kernel. KIS time includes the Gram build.
pub fn benchmark_marginal(method: Method, n: usize, p_grid: &[usize], opts: &BenchmarkOptions) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for (gi, &p) in p_grid.iter().enumerate() {
        let data = synthetic_gaussian(n, p, opts.seed.wrapping_add(gi as u64))?;
        let kernel = BlockKernel::new(p, [1.0, 1.0, 1.0], 1.0)?;
        let feasible = method == Method::Kis || phi2_dim(p).is_ok_and(|d| d <= opts.feature_cap);
        let eval = || match method {
            Method::Kis => gp_log_marginal_kernel(&kernel, &data, opts.sigma2),
            Method::Woodbury => woodbury_log_marginal(&kernel, &data, opts.sigma2, opts.feature_cap),
            Method::Naive => naive_log_marginal(&kernel, &data, opts.sigma2, opts.feature_cap),
        };
        if feasible && gi == 0 {
            // untimed warm-up
            std::hint::black_box(eval()?);
        }
        for rep in 0..opts.repetitions {
            let seconds = if feasible {
                let t = Instant::now();
                let r = eval()?;
                let dt = t.elapsed().as_secs_f64();
                std::hint::black_box(r);
                Some(dt)
            } else {
                None
            };
            rows.push(TimingRow {
                method,
                n,
                p,
                rep,
                seconds,
                bytes_peak_estimate: bytes_estimate(method, n, p),
            });
        }
    }
    Ok(rows)
}

/// Median seconds per `p` over the feasible repetitions.
pub fn median_times(rows: &[TimingRow]) -> Vec<(usize, f64)> {
    let mut ps: Vec<usize> = rows.iter().map(|r| r.p).collect();
    ps.dedup();
    ps.into_iter()
        .filter_map(|p| {
            let mut t: Vec<f64> = rows.iter().filter(|r| r.p == p).filter_map(|r| r.seconds).collect();
            if t.is_empty() {
                return None;
            }
            t.sort_by(f64::total_cmp);
            let m = t.len() / 2;
            Some((p, if t.len() % 2 == 1 { t[m] } else { 0.5 * (t[m - 1] + t[m]) }))
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("slope needs at least two points"));
    }
    let xs: Vec<f64> = points.iter().map(|(x, _)| (*x as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    ensure_finite(&ys, "benchmark times")?;
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope needs two distinct grid values"));
    }
    Ok(sxy / sxx)
}

pub fn write_timing_csv(path: &Path, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
