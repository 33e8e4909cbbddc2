use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Trace;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::EffectId;
use crate::kernels::kernel_matrix;
use crate::linalg::SpdFactor;
use crate::skim::HyperState;
use crate::trick::PosteriorFactor;

/// Posterior summary of one coefficient across stored draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub effect: EffectId,
    /// Average conditional mean.
    pub mu_t: f64,
    /// Average conditional standard deviation.
    pub sigma_t: f64,
    /// Standard deviation of the conditional means across draws.
    pub sd_of_means: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRun {
    pub summaries: Vec<EffectSummary>,
    /// Kernel factorizations performed; one per stored draw.
    pub factorizations: usize,
}

/// `(mu_T, sigma_T, sd_of_means)` from per-draw `(mean, sd)` pairs.
pub fn aggregate(conditionals: &[(f64, f64)]) -> (f64, f64, f64) {
    let t = conditionals.len() as f64;
    if conditionals.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mu = conditionals.iter().map(|c| c.0).sum::<f64>() / t;
    let sigma = conditionals.iter().map(|c| c.1).sum::<f64>() / t;
    let spread = if conditionals.len() > 1 {
        (conditionals.iter().map(|c| (c.0 - mu) * (c.0 - mu)).sum::<f64>() / (t - 1.0)).sqrt()
    } else {
        0.0
    };
    (mu, sigma, spread)
}

/// Conditional `(mean, sd)` of each effect given one draw.
pub fn conditional_summaries(tau: &HyperState, data: &Dataset, effects: &[EffectId]) -> Result<Vec<(f64, f64)>> {
    let k = tau.to_kernel()?;
    let mut l = kernel_matrix(&k, &data.x)?;
    for i in 0..data.n() {
        l[(i, i)] += tau.noise_variance();
    }
    let f = SpdFactor::new(l.as_ref())?;
    let pf = PosteriorFactor::from_factor(&k, &data.x, &data.y, f)?;
    effects
        .iter()
        .map(|&e| {
            let s = pf.effect_posterior(e)?;
            Ok((s.mean[0], s.sd(0)))
        })
        .collect()
}

/// Averages conditional posteriors over every stored draw, factorizing the
/// kernel once per draw.
pub fn posterior_summaries(traces: &[Trace], data: &Dataset, effects: &[EffectId]) -> Result<SummaryRun> {
    let draws: Vec<&HyperState> = traces.iter().flat_map(|t| t.draws.iter()).collect();
    if draws.is_empty() {
        return Err(Error::invalid("no posterior draws to summarize"));
    }
    for e in effects {
        e.validate(data.p())?;
    }
    let count = AtomicUsize::new(0);
    let per_draw: Vec<Vec<(f64, f64)>> = draws
        .par_iter()
        .map(|tau| {
            count.fetch_add(1, Ordering::Relaxed);
            conditional_summaries(tau, data, effects)
        })
        .collect::<Result<_>>()?;
    let summaries = effects
        .iter()
        .enumerate()
        .map(|(q, &effect)| {
            let col: Vec<(f64, f64)> = per_draw.iter().map(|d| d[q]).collect();
            let (mu_t, sigma_t, sd_of_means) = aggregate(&col);
            EffectSummary {
                effect,
                mu_t,
                sigma_t,
                sd_of_means,
                draws: col.len(),
            }
        })
        .collect();
    Ok(SummaryRun {
        summaries,
        factorizations: count.into_inner(),
    })
}
