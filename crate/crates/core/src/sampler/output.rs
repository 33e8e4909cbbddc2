use std::path::Path;

use super::Trace;
use crate::error::{Error, Result};
use crate::skim::{HyperState, SkimConfig};

fn header(p: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iteration", "log_post", "accept", "step_size", "m2", "xi2", "psi2", "c2", "sigma", "eta1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=p).map(|i| format!("lambda{i}")));
    h
}

/// One row per stored draw with the constrained hyperparameters.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let p = trace.draws.first().map(|d| d.p()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(p))?;
    for (t, d) in trace.draws.iter().enumerate() {
        let mut rec = vec![
            t.to_string(),
            trace.log_post[t].to_string(),
            trace.accept_stats[t].to_string(),
            trace.step_sizes[t].to_string(),
        ];
        rec.extend([d.m2, d.xi2, d.psi2, d.c2, d.sigma, d.eta1].iter().map(|v| v.to_string()));
        rec.extend(d.lambda.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]; derived fields are rebuilt
/// from `config`.
pub fn read_trace_csv(path: &Path, config: &SkimConfig, chain_id: usize, seed: u64) -> Result<Trace> {
    let mut r = csv::Reader::from_path(path)?;
    let want = header(config.p);
    let got: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    if got != want {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("trace header does not match p = {}", config.p),
        });
    }
    let mut trace = Trace {
        chain_id,
        seed,
        draws: Vec::new(),
        log_post: Vec::new(),
        accept_stats: Vec::new(),
        step_sizes: Vec::new(),
        failed_evaluations: 0,
        warnings: Vec::new(),
    };
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(col, s)| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    row: row + 2,
                    column: col + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        trace.log_post.push(v[1]);
        trace.accept_stats.push(v[2]);
        trace.step_sizes.push(v[3]);
        trace.draws.push(HyperState::new(config, v[4], v[5], v[6], v[7], v[8], v[9], v[10..].to_vec())?);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skim::sample_prior;

    #[test]
    fn round_trip() {
        let c = SkimConfig::new(3, 10).unwrap();
        let draws: Vec<HyperState> = (0..4).map(|s| sample_prior(&c, s).unwrap()).collect();
        let trace = Trace {
            chain_id: 1,
            seed: 9,
            draws,
            log_post: vec![-1.5, -2.0, -0.1, -3.25],
            accept_stats: vec![0.4, 0.5, 0.1, 0.3],
            step_sizes: vec![0.2; 4],
            failed_evaluations: 0,
            warnings: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace_chain1.csv");
        write_trace_csv(&path, &trace).unwrap();
        let back = read_trace_csv(&path, &c, 1, 9).unwrap();
        assert_eq!(back, trace);
    }
}
