//! Command-line entry points.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::EffectId;
use crate::io::{read_dataset_csv, read_json, write_dataset_csv, write_json, DataMeta};
use crate::likelihood::{
    benchmark_marginal, loglog_slope, median_times, write_timing_csv, BenchmarkOptions, Method, DEFAULT_FEATURE_CAP,
};
use crate::sampler::{
    posterior_summaries, read_trace_csv, rhat_table, run_chains, write_trace_csv, Algorithm, EffectSummary,
    SamplerConfig, Trace,
};
use crate::select::{hierarchical_screen, SelectionReport, DEFAULT_Z};
use crate::simulate::{simulate, SyntheticSpec, Truth};
use crate::skim::{ConfigFile, SkimConfig};

#[derive(Debug, Parser)]
#[command(name = "kis", version, about = "Sparse interaction selection with kernel posterior summaries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Base RNG seed; overrides any seed in --config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Prior configuration (JSON, or TOML by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known sparse effects.
    Simulate(SimulateArgs),
    /// Sample the hyperparameter posterior.
    Fit(FitArgs),
    /// Screen and select effects from a fit.
    Select(SelectArgs),
    /// Time marginal-likelihood evaluation across p.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "n", default_value_t = 100)]
    pub n: usize,
    #[arg(long = "p", default_value_t = 50)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5)]
    pub true_mains: usize,
    #[arg(long, default_value_t = 1.0)]
    pub magnitude: f64,
    #[arg(long, default_value_t = 25.0)]
    pub noise_variance: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Headered CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column name; the last column by default.
    #[arg(long)]
    pub response: Option<String>,
    /// Scale every covariate to mean 0 and SD 1 first.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value = "adaptive-rwm")]
    pub algorithm: Algorithm,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub leapfrog_steps: usize,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding fit.json and the trace files.
    #[arg(long)]
    pub fit: PathBuf,
    /// Number of top-ranked mains whose pairs are screened.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_Z)]
    pub z: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_value = "kis,woodbury")]
    pub methods: Vec<Method>,
    #[arg(long = "n", default_value_t = 50)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800")]
    pub p_grid: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_FEATURE_CAP)]
    pub feature_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatEntry {
    pub name: String,
    /// Empty when the statistic is infinite.
    pub value: Option<f64>,
}

/// Everything `fit` records; `select` rebuilds its inputs from this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub data: DataMeta,
    pub skim: SkimConfig,
    pub sampler: SamplerConfig,
    /// Each chain uses `sampler.seed` with its index as the stream.
    pub chain_streams: Vec<usize>,
    pub trace_files: Vec<String>,
    pub rhat: Vec<RhatEntry>,
    pub max_rhat: Option<f64>,
    pub failed_evaluations: usize,
    pub warnings: Vec<String>,
    pub main_summaries: Vec<EffectSummary>,
    pub factorizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRecord {
    pub fit: FitRecord,
    pub k: usize,
    pub report: SelectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub n: usize,
    pub p_grid: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub feature_cap: usize,
    pub slopes: Vec<MethodSlope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSlope {
    pub method: Method,
    pub median_seconds: Vec<(usize, f64)>,
    pub slope: Option<f64>,
}

fn resolve_seed(common: &Common, file: Option<&ConfigFile>) -> u64 {
    common.seed.or(file.and_then(|f| f.seed)).unwrap_or(0)
}

fn load_config(common: &Common) -> Result<Option<ConfigFile>> {
    common.config.as_deref().map(ConfigFile::load).transpose()
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn trace_file_name(chain: usize) -> String {
    format!("trace_chain{}.csv", chain + 1)
}

/// Runs `f` inside a pool of the requested size.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::invalid("--threads must be >= 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(f),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Truth> {
    let file = load_config(&args.common)?;
    let spec = SyntheticSpec {
        n: args.n,
        p: args.p,
        lambda: args.lambda,
        n_true_mains: args.true_mains,
        magnitude: args.magnitude,
        noise_variance: args.noise_variance,
        seed: resolve_seed(&args.common, file.as_ref()),
    };
    let (data, truth) = simulate(&spec)?;
    prepare_out(&args.common.out)?;
    write_dataset_csv(&args.common.out.join("data.csv"), &data)?;
    write_json(&args.common.out.join("truth.json"), &truth)?;
    log::info!("wrote {} rows to {}", data.n(), args.common.out.display());
    Ok(truth)
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitRecord> {
    let file = load_config(&args.common)?;
    let (data, meta) = read_dataset_csv(&args.data, args.response.as_deref(), args.standardize)?;
    let mut skim = SkimConfig::new(data.p(), data.n())?;
    if let Some(f) = &file {
        skim = skim.with_overrides(f)?;
    }
    let mut sampler = SamplerConfig::new(args.algorithm);
    sampler.chains = args.chains;
    sampler.warmup = args.warmup;
    sampler.iterations = args.iterations;
    sampler.leapfrog_steps = args.leapfrog_steps;
    if let Some(a) = args.target_accept {
        sampler.target_accept = a;
    }
    sampler.seed = resolve_seed(&args.common, file.as_ref());
    sampler.validate()?;
    prepare_out(&args.common.out)?;

    with_threads(args.common.threads, || {
        log::info!("sampling {} chains on N = {}, p = {}", sampler.chains, data.n(), data.p());
        let traces = run_chains(&data, &skim, &sampler)?;
        let mut trace_files = Vec::new();
        for t in &traces {
            let name = trace_file_name(t.chain_id);
            write_trace_csv(&args.common.out.join(&name), t)?;
            trace_files.push(name);
        }
        let rhat: Vec<RhatEntry> = if traces.len() >= 2 && traces.iter().all(|t| t.len() >= 4) {
            rhat_table(&traces)?
                .into_iter()
                .map(|(name, v)| RhatEntry {
                    name,
                    value: v.is_finite().then_some(v),
                })
                .collect()
        } else {
            log::warn!("R-hat needs at least 2 chains of length 4; skipped");
            Vec::new()
        };
        let max_rhat = if rhat.iter().any(|r| r.value.is_none()) {
            None
        } else {
            rhat.iter().filter_map(|r| r.value).reduce(f64::max)
        };
        let mains: Vec<EffectId> = (0..data.p()).map(EffectId::Main).collect();
        let run = posterior_summaries(&traces, &data, &mains)?;
        let record = FitRecord {
            data: meta,
            skim: skim.clone(),
            sampler: sampler.clone(),
            chain_streams: traces.iter().map(|t| t.chain_id).collect(),
            trace_files,
            rhat,
            max_rhat,
            failed_evaluations: traces.iter().map(|t| t.failed_evaluations).sum(),
            warnings: traces.iter().flat_map(|t| t.warnings.iter().cloned()).collect(),
            main_summaries: run.summaries,
            factorizations: run.factorizations,
        };
        write_json(&args.common.out.join("fit.json"), &record)?;
        Ok(record)
    })
}

/// Reloads the data exactly as the fit saw it, reapplying the recorded
/// standardization rather than refitting it.
pub fn reload_data(meta: &DataMeta) -> Result<Dataset> {
    let (data, _) = read_dataset_csv(&meta.path, Some(&meta.response), false)?;
    match &meta.standardization {
        Some(s) => data.standardize(s),
        None => Ok(data),
    }
}

pub fn load_traces(dir: &Path, record: &FitRecord) -> Result<Vec<Trace>> {
    record
        .trace_files
        .iter()
        .zip(&record.chain_streams)
        .map(|(name, &c)| {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(Error::Format {
                    path,
                    message: "trace file is missing".into(),
                });
            }
            read_trace_csv(&path, &record.skim, c, record.sampler.seed)
        })
        .collect()
}

pub fn cmd_select(args: &SelectArgs) -> Result<SelectRecord> {
    let fit_path = args.fit.join("fit.json");
    if !fit_path.is_file() {
        return Err(Error::Format {
            path: fit_path,
            message: "fit record is missing".into(),
        });
    }
    let fit: FitRecord = read_json(&fit_path)?;
    let traces = load_traces(&args.fit, &fit)?;
    let data = reload_data(&fit.data)?;
    let report = with_threads(args.common.threads, || hierarchical_screen(&traces, &data, args.k, args.z))?;
    prepare_out(&args.common.out)?;
    let record = SelectRecord { fit, k: args.k, report };
    write_json(&args.common.out.join("report.json"), &record)?;
    let header = format!(
        "# k = {}, z = {}, seed = {}, chains = {}, candidate pairs = {}\n",
        record.k,
        record.report.z,
        record.fit.sampler.seed,
        record.fit.sampler.chains,
        record.report.candidate_pair_count
    );
    std::fs::write(args.common.out.join("report.txt"), header + &record.report.to_table())?;
    Ok(record)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<SlopeRecord> {
    let file = load_config(&args.common)?;
    let opts = BenchmarkOptions {
        repetitions: args.reps,
        seed: resolve_seed(&args.common, file.as_ref()),
        feature_cap: args.feature_cap,
        ..BenchmarkOptions::default()
    };
    prepare_out(&args.common.out)?;
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &m in &args.methods {
        let r = with_threads(args.common.threads, || benchmark_marginal(m, args.n, &args.p_grid, &opts))?;
        let med = median_times(&r);
        let slope = loglog_slope(&med).ok();
        log::info!("{m}: slope {slope:?}");
        slopes.push(MethodSlope {
            method: m,
            median_seconds: med,
            slope,
        });
        rows.extend(r);
    }
    write_timing_csv(&args.common.out.join("timing.csv"), &rows)?;
    let record = SlopeRecord {
        n: args.n,
        p_grid: args.p_grid.clone(),
        repetitions: args.reps,
        seed: opts.seed,
        feature_cap: args.feature_cap,
        slopes,
    };
    write_json(&args.common.out.join("slopes.json"), &record)?;
    Ok(record)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ()),
        Command::Fit(a) => cmd_fit(&a).map(|_| ()),
        Command::Select(a) => cmd_select(&a).map(|_| ()),
        Command::Benchmark(a) => cmd_benchmark(&a).map(|_| ()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shared_flags() {
        let cli = Cli::try_parse_from([
            "kis", "benchmark", "--methods", "kis,naive", "--p-grid", "5,10", "--seed", "3", "--out", "x",
        ])
        .unwrap();
        match cli.command {
            Command::Benchmark(b) => {
                assert_eq!(b.methods, vec![Method::Kis, Method::Naive]);
                assert_eq!(b.p_grid, vec![5, 10]);
                assert_eq!(b.common.seed, Some(3));
                assert_eq!(b.common.out, PathBuf::from("x"));
            }
            _ => panic!(),
        }
        assert!(Cli::try_parse_from(["kis", "fit"]).is_err());
    }

    #[test]
    fn seed_precedence() {
        let c = Common {
            seed: None,
            threads: None,
            out: ".".into(),
            config: None,
        };
        let f = ConfigFile {
            seed: Some(8),
            ..Default::default()
        };
        assert_eq!(resolve_seed(&c, Some(&f)), 8);
        assert_eq!(resolve_seed(&Common { seed: Some(1), ..c.clone() }, Some(&f)), 1);
        assert_eq!(resolve_seed(&c, None), 0);
    }
}
