//! Interval selection on posterior summaries and the top-k main-effect screen.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::EffectId;
use crate::sampler::{posterior_summaries, EffectSummary, Trace};

pub const DEFAULT_Z: f64 = 2.59;

/// Floor on `sigma_T` when ranking mains by `|mu_T| / sigma_T`.
pub const RANK_SD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub effect: EffectId,
    /// The effect written with covariate names.
    pub label: String,
    pub mu_t: f64,
    pub sigma_t: f64,
    pub lower: f64,
    pub upper: f64,
    pub selected: bool,
    /// Spread of the conditional means across draws.
    pub sd_of_means: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub z: f64,
    pub selected_mains: Vec<SelectionRow>,
    pub selected_pairs: Vec<SelectionRow>,
    pub selected_quads: Vec<SelectionRow>,
    pub candidate_pair_count: usize,
    /// Every evaluated effect, selected or not.
    pub rows: Vec<SelectionRow>,
}

/// `|mu| > z sigma`, i.e. the open interval `(mu - z sigma, mu + z sigma)`
/// excludes zero.
pub fn is_selected(mu: f64, sigma: f64, z: f64) -> bool {
    mu.abs() > z * sigma
}

fn check_z(z: f64) -> Result<()> {
    if z.is_finite() && z > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("z = {z} must be positive")))
    }
}

/// Applies the interval rule to every summary.
pub fn select_effects(summaries: &[EffectSummary], z: f64) -> Result<SelectionReport> {
    check_z(z)?;
    let mut rows = Vec::with_capacity(summaries.len());
    for s in summaries {
        if !(s.sigma_t >= 0.0) || !s.mu_t.is_finite() {
            return Err(Error::invalid(format!(
                "summary for {} has mu_T = {}, sigma_T = {}",
                s.effect, s.mu_t, s.sigma_t
            )));
        }
        rows.push(SelectionRow {
            effect: s.effect,
            label: s.effect.to_string(),
            mu_t: s.mu_t,
            sigma_t: s.sigma_t,
            lower: s.mu_t - z * s.sigma_t,
            upper: s.mu_t + z * s.sigma_t,
            selected: is_selected(s.mu_t, s.sigma_t, z),
            sd_of_means: s.sd_of_means,
        });
    }
    let pick = |f: fn(&EffectId) -> bool| rows.iter().filter(|r| r.selected && f(&r.effect)).cloned().collect();
    Ok(SelectionReport {
        z,
        selected_mains: pick(|e| matches!(e, EffectId::Main(_))),
        selected_pairs: pick(|e| matches!(e, EffectId::Pair(..))),
        selected_quads: pick(|e| matches!(e, EffectId::Quad(_))),
        candidate_pair_count: 0,
        rows: rows.clone(),
    })
}

/// Main effects ordered by `|mu_T| / max(sigma_T, floor)`, largest first;
/// ties keep index order.
pub fn rank_mains(summaries: &[EffectSummary]) -> Vec<usize> {
    let mut mains: Vec<(usize, f64)> = summaries
        .iter()
        .filter_map(|s| match s.effect {
            EffectId::Main(i) => Some((i, s.mu_t.abs() / s.sigma_t.max(RANK_SD_FLOOR))),
            _ => None,
        })
        .collect();
    mains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    mains.into_iter().map(|(i, _)| i).collect()
}

/// Pairs and quads among the given mains.
pub fn screen_candidates(top: &[usize]) -> Vec<EffectId> {
    let mut v = Vec::new();
    for (a, &i) in top.iter().enumerate() {
        for &j in &top[a + 1..] {
            v.push(EffectId::pair(i, j));
        }
    }
    v.extend(top.iter().map(|&i| EffectId::Quad(i)));
    v
}

/// Summarizes every main effect, then only the pairs and quads among the `k`
/// highest-ranked mains, and applies the interval rule to all of them.
pub fn hierarchical_screen(traces: &[Trace], data: &Dataset, k: usize, z: f64) -> Result<SelectionReport> {
    check_z(z)?;
    let p = data.p();
    if k > p {
        return Err(Error::invalid(format!("k = {k} exceeds p = {p}")));
    }
    if k == 0 {
        return Ok(SelectionReport {
            z,
            selected_mains: vec![],
            selected_pairs: vec![],
            selected_quads: vec![],
            candidate_pair_count: 0,
            rows: vec![],
        });
    }
    let mains: Vec<EffectId> = (0..p).map(EffectId::Main).collect();
    let main_run = posterior_summaries(traces, data, &mains)?;
    let mut top: Vec<usize> = rank_mains(&main_run.summaries).into_iter().take(k).collect();
    top.sort_unstable();
    let pair_run = posterior_summaries(traces, data, &screen_candidates(&top))?;
    let mut all = main_run.summaries;
    all.extend(pair_run.summaries);
    let mut report = select_effects(&all, z)?;
    report.candidate_pair_count = k * (k - 1) / 2;
    report.relabel(&data.names);
    Ok(report)
}

/// `names[i]` for mains, `a:b` for pairs, `a^2` for quads.
pub fn effect_label(e: EffectId, names: &[String]) -> String {
    match e {
        EffectId::Intercept => "intercept".into(),
        EffectId::Main(i) => names[i].clone(),
        EffectId::Pair(i, j) => format!("{}:{}", names[i], names[j]),
        EffectId::Quad(i) => format!("{}^2", names[i]),
    }
}

impl SelectionReport {
    pub fn relabel(&mut self, names: &[String]) {
        for r in self
            .rows
            .iter_mut()
            .chain(&mut self.selected_mains)
            .chain(&mut self.selected_pairs)
            .chain(&mut self.selected_quads)
        {
            r.label = effect_label(r.effect, names);
        }
    }

    /// Fixed-width table with columns effect, mu_T, sigma_T, lower, upper,
    /// selected.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:>14} {:>14} {:>14} {:>14} {:>9}",
            "effect", "mu_T", "sigma_T", "lower", "upper", "selected"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>9}",
                r.label,
                r.mu_t,
                r.sigma_t,
                r.lower,
                r.upper,
                if r.selected { "yes" } else { "no" }
            );
        }
        s
    }

    pub fn selected_effects(&self) -> Vec<EffectId> {
        self.rows.iter().filter(|r| r.selected).map(|r| r.effect).collect()
    }
}
