mod common;

use kis::features::EffectId;
use kis::likelihood::synthetic_gaussian;
use kis::sampler::{
    posterior_summaries, read_trace_csv, rhat_table, run_chains, split_rhat, target_log_density, write_trace_csv,
    Algorithm, SamplerConfig,
};
use kis::skim::SkimConfig;

fn short(alg: Algorithm, seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains: 2,
        warmup: 30,
        iterations: 20,
        seed,
        ..SamplerConfig::new(alg)
    }
}

#[test]
fn same_seed_same_chains() {
    let d = synthetic_gaussian(15, 4, 1).unwrap();
    let skim = SkimConfig::new(4, 15).unwrap();
    for alg in [Algorithm::AdaptiveRwm, Algorithm::Hmc] {
        let a = run_chains(&d, &skim, &short(alg, 7)).unwrap();
        let b = run_chains(&d, &skim, &short(alg, 7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].draws, a[1].draws);
        assert_eq!(a[0].len(), 20);
        let c = run_chains(&d, &skim, &short(alg, 8)).unwrap();
        assert_ne!(a[0].draws, c[0].draws);
    }
}

#[test]
fn stored_log_post_matches_target() {
    let d = synthetic_gaussian(12, 3, 2).unwrap();
    let skim = SkimConfig::new(3, 12).unwrap();
    let t = &run_chains(&d, &skim, &short(Algorithm::AdaptiveRwm, 1)).unwrap()[0];
    for (z, lp) in t.unconstrained().iter().zip(&t.log_post) {
        let want = target_log_density(z, &d, &skim);
        assert!((want - lp).abs() <= 1e-8 * (1.0 + want.abs()), "{lp} vs {want}");
    }
}

#[test]
fn traces_round_trip_and_summaries_count_factorizations() {
    let d = synthetic_gaussian(10, 3, 3).unwrap();
    let skim = SkimConfig::new(3, 10).unwrap();
    let traces = run_chains(&d, &skim, &short(Algorithm::AdaptiveRwm, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for t in &traces {
        let path = dir.path().join(format!("c{}.csv", t.chain_id));
        write_trace_csv(&path, t).unwrap();
        let back = read_trace_csv(&path, &skim, t.chain_id, t.seed).unwrap();
        assert_eq!(back.draws, t.draws);
        assert_eq!(back.log_post, t.log_post);
    }
    let effects = [EffectId::Main(0), EffectId::Pair(0, 2), EffectId::Quad(1)];
    let run = posterior_summaries(&traces, &d, &effects).unwrap();
    assert_eq!(run.factorizations, 40);
    assert!(run.summaries.iter().all(|s| s.sigma_t > 0.0 && s.draws == 40));
    let table = rhat_table(&traces).unwrap();
    assert_eq!(table.len(), 3 + 6 + 1);
    assert!(table.iter().all(|(_, r)| *r >= 0.0));
}

#[test]
fn rhat_flags_disjoint_chains() {
    let a: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
    let b: Vec<f64> = a.iter().map(|v| v + 50.0).collect();
    assert!(split_rhat(&[&a, &b]).unwrap() > 2.0);
}
