//! Synthetic sparse-interaction datasets.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design};
use crate::error::{Error, Result};
use crate::features::EffectId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// Covariates are drawn from `N(0, lambda^2 I)`.
    pub lambda: f64,
    pub n_true_mains: usize,
    pub magnitude: f64,
    pub noise_variance: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, p: usize, lambda: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            lambda,
            n_true_mains: 5,
            magnitude: 1.0,
            noise_variance: 25.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("N must be >= 1"));
        }
        if self.n_true_mains == 0 || self.n_true_mains > self.p {
            return Err(Error::invalid(format!(
                "need 1 <= true mains ({}) <= p ({})",
                self.n_true_mains, self.p
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(format!("signal scale lambda = {} must be positive", self.lambda)));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::invalid("noise variance must be finite and >= 0"));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::invalid("effect magnitude must be finite"));
        }
        Ok(())
    }
}

/// Ground truth, 1-based in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub true_mains: Vec<usize>,
    pub true_pairs: Vec<(usize, usize)>,
    pub magnitude: f64,
    pub noise_variance: f64,
    pub spec: SyntheticSpec,
}

impl Truth {
    /// Nonzero effects with 0-based indices.
    pub fn effects(&self) -> Vec<EffectId> {
        let mut v: Vec<EffectId> = self.true_mains.iter().map(|&i| EffectId::Main(i - 1)).collect();
        v.extend(self.true_pairs.iter().map(|&(i, j)| EffectId::pair(i - 1, j - 1)));
        v
    }
}

/// Draws `X ~ N(0, lambda^2 I)`, picks the true mains uniformly and sets
/// `y = theta^T phi2(x) + eps` with every main and pairwise interaction among
/// the true mains at `magnitude`.
pub fn simulate(spec: &SyntheticSpec) -> Result<(Dataset, Truth)> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut mains: Vec<usize> = sample(&mut rng, spec.p, spec.n_true_mains).into_vec();
    mains.sort_unstable();
    let xdist = Normal::new(0.0, spec.lambda).map_err(|e| Error::invalid(e.to_string()))?;
    let data: Vec<f64> = (0..spec.n * spec.p).map(|_| xdist.sample(&mut rng)).collect();
    let x = Design::from_row_major(spec.n, spec.p, data)?;
    let noise = Normal::new(0.0, spec.noise_variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut pairs = Vec::new();
    for (a, &i) in mains.iter().enumerate() {
        for &j in &mains[a + 1..] {
            pairs.push((i, j));
        }
    }
    let y = x
        .rows()
        .map(|row| {
            let signal: f64 = mains.iter().map(|&i| row[i]).sum::<f64>()
                + pairs.iter().map(|&(i, j)| row[i] * row[j]).sum::<f64>();
            spec.magnitude * signal + noise.sample(&mut rng)
        })
        .collect();
    let truth = Truth {
        true_mains: mains.iter().map(|i| i + 1).collect(),
        true_pairs: pairs.iter().map(|&(i, j)| (i + 1, j + 1)).collect(),
        magnitude: spec.magnitude,
        noise_variance: spec.noise_variance,
        spec: spec.clone(),
    };
    Ok((Dataset::new(x, y)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_well_formed() {
        let spec = SyntheticSpec::new(50, 20, 2.0, 3);
        let (d1, t1) = simulate(&spec).unwrap();
        let (d2, t2) = simulate(&spec).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(t1, t2);
        assert_eq!(t1.true_mains.len(), 5);
        assert_eq!(t1.true_pairs.len(), 10);
        assert!(t1.true_mains.iter().all(|&i| (1..=20).contains(&i)));
        assert!(t1.true_mains.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn noiseless_response_is_the_signal() {
        let spec = SyntheticSpec {
            noise_variance: 0.0,
            ..SyntheticSpec::new(4, 6, 1.0, 0)
        };
        let (d, t) = simulate(&spec).unwrap();
        for (n, row) in d.x.rows().enumerate() {
            let want: f64 = t.effects().iter().map(|e| match *e {
                EffectId::Main(i) => row[i],
                EffectId::Pair(i, j) => row[i] * row[j],
                _ => 0.0,
            }).sum();
            assert!((d.y[n] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn column_variance_matches_lambda() {
        let (d, _) = simulate(&SyntheticSpec::new(10_000, 5, 3.0, 1)).unwrap();
        for j in 0..5 {
            let c = d.x.column(j);
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let v = c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (c.len() - 1) as f64;
            assert!((v / 9.0 - 1.0).abs() < 0.05, "column {j}: {v}");
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(simulate(&SyntheticSpec::new(10, 5, 0.0, 0)).is_err());
        assert!(simulate(&SyntheticSpec::new(10, 4, 1.0, 0)).is_err());
        assert!(simulate(&SyntheticSpec::new(0, 10, 1.0, 0)).is_err());
    }
}
