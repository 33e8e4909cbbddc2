use crate::error::{Error, Result};
use crate::skim::coordinate_names;

use super::Trace;

/// Split potential scale reduction over `chains`, each halved.
///
/// Returns exactly 1 when every sequence is constant at the same value and
/// `+inf` when sequences are constant at different values.
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::invalid(format!("split R-hat needs at least 2 chains, got {}", chains.len())));
    }
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if len < 4 {
        return Err(Error::invalid(format!("split R-hat needs chains of length >= 4, got {len}")));
    }
    let n = len / 2;
    let mut seqs: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..len];
        seqs.push(&c[..n]);
        seqs.push(&c[len - n..]);
    }
    if seqs.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::non_finite("R-hat input"));
    }
    let m = seqs.len() as f64;
    let nf = n as f64;
    let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    let means: Vec<f64> = seqs
        .iter()
        .map(|s| if constant(s) { s[0] } else { s.iter().sum::<f64>() / nf })
        .collect();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| {
            if constant(s) {
                0.0
            } else {
                s.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (nf - 1.0)
            }
        })
        .sum::<f64>()
        / m;
    let b = if constant(&means) {
        0.0
    } else {
        let grand = means.iter().sum::<f64>() / m;
        nf * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1.0)
    };
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

/// Split R-hat of every unconstrained coordinate and of the log posterior.
pub fn rhat_table(traces: &[Trace]) -> Result<Vec<(String, f64)>> {
    let p = traces.first().and_then(|t| t.draws.first()).map(|d| d.p()).ok_or_else(|| Error::invalid("no draws"))?;
    let zs: Vec<Vec<Vec<f64>>> = traces.iter().map(|t| t.unconstrained()).collect();
    let mut out = Vec::with_capacity(p + 7);
    for (k, name) in coordinate_names(p).into_iter().enumerate() {
        let cols: Vec<Vec<f64>> = zs.iter().map(|z| z.iter().map(|row| row[k]).collect()).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        out.push((name, split_rhat(&refs)?));
    }
    let refs: Vec<&[f64]> = traces.iter().map(|t| t.log_post.as_slice()).collect();
    out.push(("log_post".to_string(), split_rhat(&refs)?));
    Ok(out)
}
