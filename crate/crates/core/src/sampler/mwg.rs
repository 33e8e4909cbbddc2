use rand::Rng;
use rand_distr::StandardNormal;

use super::{gain, SamplerConfig, SkimTarget, Trace};
use crate::error::Result;
use crate::skim::{HyperState, IDX_ETA1, IDX_M2, IDX_PSI2, IDX_XI2, N_GLOBAL};

/// Directions along which the likelihood is flat or nearly so: trading
/// `eta1` against every local scale leaves `eta1 kappa_i` fixed, and raising
/// `m^2` with `xi^2, psi^2` keeps `eta2, eta3` fixed.
fn joint_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut scale = vec![0.0; dim];
    scale[IDX_ETA1] = 1.0;
    for v in &mut scale[N_GLOBAL..] {
        *v = -1.0;
    }
    let mut slab = vec![0.0; dim];
    slab[IDX_M2] = 1.0;
    slab[IDX_XI2] = 2.0;
    slab[IDX_PSI2] = 2.0;
    vec![scale, slab]
}

/// What a component-wise Metropolis sweep needs from a density.
pub(crate) trait CoordinateTarget {
    fn z(&self) -> &[f64];
    fn propose_coordinate(&mut self, j: usize, new: f64, log_u: f64) -> bool;
    fn propose_point(&mut self, z_new: Vec<f64>, log_u: f64) -> bool;
}

impl CoordinateTarget for SkimTarget<'_> {
    fn z(&self) -> &[f64] {
        SkimTarget::z(self)
    }
    fn propose_coordinate(&mut self, j: usize, new: f64, log_u: f64) -> bool {
        SkimTarget::propose_coordinate(self, j, new, log_u)
    }
    fn propose_point(&mut self, z_new: Vec<f64>, log_u: f64) -> bool {
        SkimTarget::propose_point(self, z_new, log_u)
    }
}

/// Per-coordinate random-walk scales plus optional joint directions, each
/// with a Robbins-Monro adapted log scale.
pub(crate) struct Mwg {
    log_scale: Vec<f64>,
    dirs: Vec<Vec<f64>>,
    dir_scale: Vec<f64>,
    target_accept: f64,
}

impl Mwg {
    pub(crate) fn new(dim: usize, dirs: Vec<Vec<f64>>, target_accept: f64) -> Self {
        Self {
            log_scale: vec![(0.5f64).ln(); dim],
            dir_scale: vec![(0.2f64).ln(); dirs.len()],
            dirs,
            target_accept,
        }
    }

    pub(crate) fn moves(&self) -> usize {
        self.log_scale.len() + self.dirs.len()
    }

    pub(crate) fn mean_scale(&self) -> f64 {
        self.log_scale.iter().map(|l| l.exp()).sum::<f64>() / self.log_scale.len() as f64
    }

    /// One sweep; adapts scales when `adapt` is set. Returns accepted moves.
    pub(crate) fn sweep<T: CoordinateTarget, R: Rng + ?Sized>(&mut self, target: &mut T, t: usize, adapt: bool, rng: &mut R) -> usize {
        let mut accepted = 0;
        for j in 0..self.log_scale.len() {
            let eps: f64 = rng.sample(StandardNormal);
            let new = target.z()[j] + self.log_scale[j].exp() * eps;
            let log_u = rng.random::<f64>().ln();
            let acc = target.propose_coordinate(j, new, log_u);
            accepted += acc as usize;
            if adapt {
                self.log_scale[j] += gain(t) * (acc as u8 as f64 - self.target_accept);
            }
        }
        for d in 0..self.dirs.len() {
            let step = self.dir_scale[d].exp() * rng.sample::<f64, _>(StandardNormal);
            let z_new: Vec<f64> = target.z().iter().zip(&self.dirs[d]).map(|(z, v)| z + step * v).collect();
            let log_u = rng.random::<f64>().ln();
            let acc = target.propose_point(z_new, log_u);
            accepted += acc as usize;
            if adapt {
                self.dir_scale[d] += gain(t) * (acc as u8 as f64 - self.target_accept);
            }
        }
        accepted
    }
}

/// Component-wise adaptive random-walk Metropolis with two joint moves per
/// sweep. Scales adapt during warmup only.
pub(super) fn run<R: Rng + ?Sized>(mut target: SkimTarget<'_>, cfg: &SamplerConfig, rng: &mut R) -> Result<Trace> {
    let dim = target.z().len();
    let mut mwg = Mwg::new(dim, joint_directions(dim), cfg.target_accept);
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
        // clear drift from incremental Gram updates
        target.refresh();
        let accepted = mwg.sweep(&mut target, t, warm, rng);
        if !warm {
            trace.draws.push(HyperState::from_unconstrained(target.z(), target.config())?);
            trace.log_post.push(target.log_post());
            trace.accept_stats.push(accepted as f64 / mwg.moves() as f64);
            trace.step_sizes.push(mwg.mean_scale());
        }
    }
    trace.failed_evaluations = target.failures();
    Ok(trace)
}
