#![allow(dead_code)]

use kis::data::{Dataset, Design};
use kis::features::EffectId;
use kis::kernels::{PairTerm, TwoWayKernelSpec};
use kis::skim::{HyperState, SkimConfig};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Effects in feature order: intercept, mains, pairs by (i, j), quads.
pub fn effect_list(p: usize) -> Vec<EffectId> {
    let mut v = vec![EffectId::Intercept];
    for i in 0..p {
        v.push(EffectId::Main(i));
    }
    for i in 0..p {
        for j in i + 1..p {
            v.push(EffectId::Pair(i, j));
        }
    }
    for i in 0..p {
        v.push(EffectId::Quad(i));
    }
    v
}

pub fn monomial(e: EffectId, x: &[f64]) -> f64 {
    match e {
        EffectId::Intercept => 1.0,
        EffectId::Main(i) => x[i],
        EffectId::Pair(i, j) => x[i] * x[j],
        EffectId::Quad(i) => x[i] * x[i],
    }
}

pub fn phi2(x: &[f64]) -> Vec<f64> {
    effect_list(x.len()).into_iter().map(|e| monomial(e, x)).collect()
}

pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        assert!(d > 0.0, "oracle Cholesky: matrix not positive definite (pivot {d})");
        l[j][j] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    l
}

pub fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i][k] * z[k];
        }
        z[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[k][i] * z[k];
        }
        z[i] /= l[i][i];
    }
    z
}

pub fn chol_log_det(l: &[Vec<f64>]) -> f64 {
    2.0 * (0..l.len()).map(|i| l[i][i].ln()).sum::<f64>()
}

/// `log N(y | 0, K + sigma2 I)`.
pub fn log_marginal_oracle(k: &[Vec<f64>], sigma2: f64, y: &[f64]) -> f64 {
    let n = y.len();
    let mut a = k.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += sigma2;
    }
    let l = cholesky(&a);
    let alpha = chol_solve(&l, y);
    let quad: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    -0.5 * quad - 0.5 * chol_log_det(&l) - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Explicit kernel matrix `Phi S Phi^T`.
pub fn explicit_kernel(x: &Design, s: &[f64]) -> Vec<Vec<f64>> {
    let feats: Vec<Vec<f64>> = x.rows().map(phi2).collect();
    feats
        .iter()
        .map(|a| feats.iter().map(|b| a.iter().zip(b).zip(s).map(|((u, v), w)| u * v * w).sum()).collect())
        .collect()
}

pub struct Conjugate {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Posterior of `theta ~ N(0, diag(s))` under `y = Phi theta + N(0, sigma2)`,
/// through the `D x D` precision.
pub fn conjugate_posterior(x: &Design, s: &[f64], y: &[f64], sigma2: f64) -> Conjugate {
    let feats: Vec<Vec<f64>> = x.rows().map(phi2).collect();
    let d = s.len();
    let mut prec = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            prec[a][b] = feats.iter().map(|f| f[a] * f[b]).sum::<f64>() / sigma2;
        }
        prec[a][a] += 1.0 / s[a];
    }
    let l = cholesky(&prec);
    let rhs: Vec<f64> = (0..d).map(|a| feats.iter().zip(y).map(|(f, v)| f[a] * v).sum::<f64>() / sigma2).collect();
    let mean = chol_solve(&l, &rhs);
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mut e = vec![0.0; d];
            e[c] = 1.0;
            chol_solve(&l, &e)
        })
        .collect();
    Conjugate { mean, cov }
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

pub fn random_design(rng: &mut ChaCha20Rng, n: usize, p: usize, scale: f64) -> Design {
    let v = (0..n * p).map(|_| rng.random_range(-scale..scale)).collect();
    Design::from_row_major(n, p, v).unwrap()
}

pub fn random_dataset(rng: &mut ChaCha20Rng, n: usize, p: usize) -> Dataset {
    let x = random_design(rng, n, p, 1.5);
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Dataset::new(x, y).unwrap()
}

/// A spec whose induced variances are all strictly positive.
pub fn random_two_way_spec(rng: &mut ChaCha20Rng, p: usize) -> TwoWayKernelSpec {
    let m1 = rng.random_range(1..=3);
    let lambdas = (0..m1).map(|_| (0..p).map(|_| rng.random_range(0.2..1.2)).collect()).collect();
    let mut pair_terms = Vec::new();
    if p >= 2 {
        for _ in 0..rng.random_range(0..=2) {
            let i = rng.random_range(0..p);
            let mut j = rng.random_range(0..p - 1);
            if j >= i {
                j += 1;
            }
            pair_terms.push(PairTerm {
                i: i.min(j),
                j: i.max(j),
                nu: rng.random_range(0.0..1.0),
            });
        }
    }
    TwoWayKernelSpec {
        lambdas,
        pair_terms,
        alpha: (0..p).map(|_| rng.random_range(0.0..1.5)).collect(),
        psi: (0..p).map(|_| rng.random_range(0.0..1.5)).collect(),
        a_const: rng.random_range(0.0..1.0),
    }
}

fn log_uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

pub fn random_hyper(rng: &mut ChaCha20Rng, p: usize, n: usize) -> HyperState {
    let cfg = SkimConfig::new(p, n).unwrap();
    HyperState::new(
        &cfg,
        log_uniform(rng, 0.3, 3.0),
        log_uniform(rng, 0.3, 3.0),
        log_uniform(rng, 0.3, 3.0),
        log_uniform(rng, 0.3, 3.0),
        log_uniform(rng, 0.5, 2.0),
        log_uniform(rng, 0.3, 2.0),
        (0..p).map(|_| log_uniform(rng, 0.2, 3.0)).collect(),
    )
    .unwrap()
}

/// Probe points and combination weights isolating one coefficient, written
/// out from scratch.
pub fn unit_probe_rows(e: EffectId, p: usize) -> Vec<(Vec<f64>, f64)> {
    let unit = |i: usize, s: f64| {
        let mut v = vec![0.0; p];
        v[i] = s;
        v
    };
    let origin = vec![0.0; p];
    match e {
        EffectId::Intercept => vec![(origin, 1.0)],
        EffectId::Main(i) => vec![(unit(i, 1.0), 0.5), (unit(i, -1.0), -0.5)],
        EffectId::Quad(i) => vec![(unit(i, 1.0), 0.5), (unit(i, -1.0), 0.5), (origin, -1.0)],
        EffectId::Pair(i, j) => {
            let mut both = unit(i, 1.0);
            both[j] = 1.0;
            vec![(both, 1.0), (unit(i, 1.0), -1.0), (unit(j, 1.0), -1.0), (origin, 1.0)]
        }
    }
}
