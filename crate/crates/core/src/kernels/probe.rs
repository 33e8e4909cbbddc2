use faer::Mat;
use serde::{Deserialize, Serialize};

use super::InteractionKernel;
use crate::data::Design;
use crate::error::{Error, Result};
use crate::features::EffectId;

/// A sparse test input: the origin, `+e_i`, `-e_i` or `e_i + e_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Probe {
    Origin,
    Unit { index: usize, negative: bool },
    PairSum(usize, usize),
}

impl Probe {
    pub fn pos(i: usize) -> Self {
        Probe::Unit { index: i, negative: false }
    }

    pub fn neg(i: usize) -> Self {
        Probe::Unit { index: i, negative: true }
    }

    pub fn sum(i: usize, j: usize) -> Self {
        Probe::PairSum(i.min(j), i.max(j))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let ok = match *self {
            Probe::Origin => true,
            Probe::Unit { index, .. } => index < p,
            Probe::PairSum(i, j) => i < j && j < p,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("probe {self:?} out of range for p = {p}")))
        }
    }

    /// The probe as a dense covariate vector.
    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        let mut v = vec![0.0; p];
        match *self {
            Probe::Origin => {}
            Probe::Unit { index, negative } => v[index] = if negative { -1.0 } else { 1.0 },
            Probe::PairSum(i, j) => {
                v[i] = 1.0;
                v[j] = 1.0;
            }
        }
        v
    }

    /// Nonzero entries of the degree-2 feature map at this probe.
    pub fn features(&self) -> Vec<(EffectId, f64)> {
        match *self {
            Probe::Origin => vec![(EffectId::Intercept, 1.0)],
            Probe::Unit { index, negative } => vec![
                (EffectId::Intercept, 1.0),
                (EffectId::Main(index), if negative { -1.0 } else { 1.0 }),
                (EffectId::Quad(index), 1.0),
            ],
            Probe::PairSum(i, j) => vec![
                (EffectId::Intercept, 1.0),
                (EffectId::Main(i), 1.0),
                (EffectId::Main(j), 1.0),
                (EffectId::Pair(i, j), 1.0),
                (EffectId::Quad(i), 1.0),
                (EffectId::Quad(j), 1.0),
            ],
        }
    }
}

fn feature_at(e: EffectId, x: &[f64]) -> f64 {
    match e {
        EffectId::Intercept => 1.0,
        EffectId::Main(i) => x[i],
        EffectId::Pair(i, j) => x[i] * x[j],
        EffectId::Quad(i) => x[i] * x[i],
    }
}

/// Weighted feature support `S_e phi_e(probe)` for each probe.
fn weighted_support<K: InteractionKernel + ?Sized>(k: &K, probes: &[Probe]) -> Result<Vec<Vec<(EffectId, f64)>>> {
    probes
        .iter()
        .map(|a| {
            a.validate(k.p())?;
            Ok(a.features().into_iter().map(|(e, v)| (e, v * k.variance(e))).collect())
        })
        .collect()
}

/// `k(probe_r, x_n)` for every probe and row, each entry `O(1)` through the
/// kernel's per-coefficient variances.
pub fn cross_kernel_at_probes<K: InteractionKernel + ?Sized>(
    k: &K,
    probes: &[Probe],
    x: &Design,
) -> Result<Mat<f64>> {
    if x.ncols() != k.p() {
        return Err(Error::DimensionMismatch {
            what: "design columns vs kernel dimension",
            expected: k.p(),
            got: x.ncols(),
        });
    }
    let support = weighted_support(k, probes)?;
    Ok(Mat::from_fn(probes.len(), x.nrows(), |r, n| {
        let row = x.row(n);
        support[r].iter().map(|&(e, w)| w * feature_at(e, row)).sum()
    }))
}

/// Kernel among probes.
pub fn probe_gram<K: InteractionKernel + ?Sized>(k: &K, probes: &[Probe]) -> Result<Mat<f64>> {
    let support = weighted_support(k, probes)?;
    let feats: Vec<Vec<(EffectId, f64)>> = probes.iter().map(|b| b.features()).collect();
    let mut g = Mat::<f64>::zeros(probes.len(), probes.len());
    for a in 0..probes.len() {
        for b in 0..=a {
            let mut v = 0.0;
            for &(e, w) in &support[a] {
                if let Some(&(_, fb)) = feats[b].iter().find(|(eb, _)| *eb == e) {
                    v += w * fb;
                }
            }
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}
