//! MCMC over the unconstrained hyperparameter vector.

mod diagnostics;
mod hmc;
mod mwg;
mod output;
mod summaries;
mod target;

pub use diagnostics::{rhat_table, split_rhat};
pub use output::{read_trace_csv, write_trace_csv};
pub use summaries::{aggregate, conditional_summaries, posterior_summaries, EffectSummary, SummaryRun};
pub use target::{target_log_density, SkimTarget};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::skim::{HyperState, SkimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    AdaptiveRwm,
    Hmc,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::AdaptiveRwm => "adaptive-rwm",
            Algorithm::Hmc => "hmc",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive-rwm" | "rwm" => Ok(Algorithm::AdaptiveRwm),
            "hmc" => Ok(Algorithm::Hmc),
            _ => Err(Error::invalid(format!("unknown algorithm {s:?} (adaptive-rwm, hmc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    /// Per-coordinate acceptance for the random walk, per-transition for HMC.
    pub target_accept: f64,
    /// Leapfrog steps per HMC transition.
    pub leapfrog_steps: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            chains: 4,
            warmup: 1000,
            iterations: 1000,
            target_accept: match algorithm {
                Algorithm::AdaptiveRwm => 0.44,
                Algorithm::Hmc => 0.8,
            },
            leapfrog_steps: 16,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup == 0 || self.iterations == 0 {
            return Err(Error::invalid("chains, warmup and iterations must all be >= 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid(format!("target_accept = {} must lie in (0, 1)", self.target_accept)));
        }
        if self.algorithm == Algorithm::Hmc && self.leapfrog_steps == 0 {
            return Err(Error::invalid("leapfrog_steps must be >= 1"));
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::new(Algorithm::AdaptiveRwm)
    }
}

/// Post-warmup draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub chain_id: usize,
    pub seed: u64,
    pub draws: Vec<HyperState>,
    pub log_post: Vec<f64>,
    /// Fraction of accepted coordinate moves per sweep, or the HMC
    /// acceptance probability.
    pub accept_stats: Vec<f64>,
    /// Mean random-walk scale or HMC step size per iteration.
    pub step_sizes: Vec<f64>,
    /// Proposals rejected because the kernel could not be factorized.
    pub failed_evaluations: usize,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn unconstrained(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| d.to_unconstrained()).collect()
    }

    fn check_acceptance(&mut self) {
        let mean = self.accept_stats.iter().sum::<f64>() / self.accept_stats.len().max(1) as f64;
        if mean < 0.01 {
            let msg = format!("chain {}: post-warmup acceptance {mean:.4} is below 1%", self.chain_id);
            log::warn!("{msg}");
            self.warnings.push(msg);
        }
    }
}

/// RNG for one chain: the shared seed with the chain id as stream.
pub fn chain_rng(seed: u64, chain_id: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chain_id as u64);
    rng
}

/// Uniform(-2, 2) initialization on every unconstrained coordinate.
pub fn initial_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Runs one chain.
pub fn run_chain(data: &Dataset, skim: &SkimConfig, cfg: &SamplerConfig, chain_id: usize) -> Result<Trace> {
    cfg.validate()?;
    skim.validate()?;
    let mut rng = chain_rng(cfg.seed, chain_id);
    // retry initial points that cannot be evaluated
    let mut target = None;
    for _ in 0..100 {
        let z0 = initial_point(skim.dim(), &mut rng);
        let t = SkimTarget::new(data, skim.clone(), z0)?;
        if t.log_post().is_finite() {
            target = Some(t);
            break;
        }
    }
    let target = target.ok_or_else(|| Error::invalid("no finite initial point found in 100 attempts"))?;
    let mut trace = match cfg.algorithm {
        Algorithm::AdaptiveRwm => mwg::run(target, cfg, &mut rng)?,
        Algorithm::Hmc => hmc::run(target, cfg, &mut rng)?,
    };
    trace.chain_id = chain_id;
    trace.seed = cfg.seed;
    trace.check_acceptance();
    Ok(trace)
}

/// Runs `cfg.chains` independent chains in parallel on the current rayon
/// pool; results are ordered by chain id.
pub fn run_chains(data: &Dataset, skim: &SkimConfig, cfg: &SamplerConfig) -> Result<Vec<Trace>> {
    cfg.validate()?;
    (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(data, skim, cfg, c))
        .collect()
}

/// Robbins-Monro gain at iteration `t`.
pub(crate) fn gain(t: usize) -> f64 {
    ((t + 1) as f64).powf(-0.6)
}
