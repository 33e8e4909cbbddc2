use rand::Rng;
use rand_distr::StandardNormal;

use super::{SamplerConfig, SkimTarget, Trace};
use crate::error::{Error, Result};
use crate::skim::HyperState;

/// Dual averaging of the log step size toward a target acceptance rate.
struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    t: usize,
    target: f64,
}

impl DualAveraging {
    fn new(eps: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            t: 0,
            target,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.t += 1;
        let t = self.t as f64;
        let w = 1.0 / (t + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        let log_eps = self.mu - t.sqrt() / GAMMA * self.h_bar;
        let eta = t.powf(-KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Static-length HMC with a diagonal metric estimated over the middle of
/// warmup and a dual-averaged, jittered step size.
pub(super) fn run<R: Rng + ?Sized>(mut target: SkimTarget<'_>, cfg: &SamplerConfig, rng: &mut R) -> Result<Trace> {
    let dim = target.z().len();
    let mut z = target.z().to_vec();
    let (mut lp, mut grad) = target
        .log_density_and_grad(&z)
        .ok_or_else(|| Error::invalid("gradient unavailable at the initial point"))?;
    let mut inv_metric = vec![1.0; dim];
    let mut eps = 0.05;
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    let win_start = cfg.warmup * 15 / 100;
    let win_end = cfg.warmup * 75 / 100;
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut trace = Trace {
        chain_id: 0,
        seed: cfg.seed,
        draws: Vec::with_capacity(cfg.iterations),
        log_post: Vec::with_capacity(cfg.iterations),
        accept_stats: Vec::with_capacity(cfg.iterations),
        step_sizes: Vec::with_capacity(cfg.iterations),
        failed_evaluations: 0,
        warnings: Vec::new(),
    };
    for t in 0..cfg.warmup + cfg.iterations {
        let warm = t < cfg.warmup;
        let step = eps * rng.random_range(0.9..1.1);
        let mut mom: Vec<f64> = inv_metric.iter().map(|m: &f64| rng.sample::<f64, _>(StandardNormal) / m.sqrt()).collect();
        let kinetic = |p: &[f64]| 0.5 * p.iter().zip(&inv_metric).map(|(a, m)| a * a * m).sum::<f64>();
        let h0 = -lp + kinetic(&mom);
        let mut zn = z.clone();
        let mut gn = grad.clone();
        let mut lpn = lp;
        let mut ok = true;
        for _ in 0..cfg.leapfrog_steps {
            for (p, g) in mom.iter_mut().zip(&gn) {
                *p += 0.5 * step * g;
            }
            for ((x, p), m) in zn.iter_mut().zip(&mom).zip(&inv_metric) {
                *x += step * m * p;
            }
            match target.log_density_and_grad(&zn) {
                Some((v, g)) => {
                    lpn = v;
                    gn = g;
                }
                None => {
                    ok = false;
                    break;
                }
            }
            for (p, g) in mom.iter_mut().zip(&gn) {
                *p += 0.5 * step * g;
            }
        }
        let accept = if ok {
            let h1 = -lpn + kinetic(&mom);
            let a = (h0 - h1).exp().min(1.0);
            if a.is_nan() {
                0.0
            } else {
                a
            }
        } else {
            0.0
        };
        if rng.random::<f64>() < accept {
            z = zn;
            lp = lpn;
            grad = gn;
        }
        if warm {
            eps = da.update(accept);
            if t >= win_start && t < win_end {
                window.push(z.clone());
            }
            if t + 1 == win_end && window.len() >= 10 {
                let n = window.len() as f64;
                for k in 0..dim {
                    let mean = window.iter().map(|w| w[k]).sum::<f64>() / n;
                    let var = window.iter().map(|w| (w[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    inv_metric[k] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
                da = DualAveraging::new(eps, cfg.target_accept);
            }
            if t + 1 == cfg.warmup {
                eps = da.final_step();
            }
        } else {
            trace.draws.push(HyperState::from_unconstrained(&z, target.config())?);
            trace.log_post.push(lp);
            trace.accept_stats.push(accept);
            trace.step_sizes.push(step);
        }
    }
    trace.failed_evaluations = target.failures();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(1.0, 0.8);
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.update(0.1);
        }
        assert!(eps < 1.0);
        let mut da = DualAveraging::new(0.01, 0.8);
        for _ in 0..50 {
            eps = da.update(1.0);
        }
        assert!(eps > 0.01);
    }
}
