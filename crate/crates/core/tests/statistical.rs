//! Monte Carlo sanity checks with loose, sampling-based tolerances.

use addow::classic::pro1_pro2;
use addow::estimation::{storey_estimate, NullEstimates};
use addow::harness::{run_scenario, MuRule, RunOptions, ScenarioConfig, SweepPoint};
use addow::model::GroupedPValues;
use addow::oracle::{AlternativeCdf, GaussianModel};
use addow::stabilize::{null_quantile_table, z_statistic};
use addow::stepup::bh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn generated_pvalues_follow_their_distributions() {
    let model = GaussianModel::new(vec![2.0], vec![200_000], vec![100_000]).unwrap();
    let d = model.generate_seeded(1);
    let p = &d.group(0).pvalues;
    assert!(ks_distance(&p[..100_000], |x| x) < 0.01);
    let alt = model.alternatives()[0];
    assert!(ks_distance(&p[100_000..], |x| alt.cdf(x)) < 0.01);
}

#[test]
fn storey_estimate_on_gaussian_data() {
    let model = GaussianModel::new(vec![3.0], vec![5000], vec![4000]).unwrap();
    for seed in 0..5 {
        let d = model.generate_seeded(seed);
        let est = storey_estimate(&d, 0.5).unwrap();
        assert!((est.pi0()[0] - 0.8).abs() < 0.05, "{:?}", est.pi0());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let uniform = GroupedPValues::from_pvalues(vec![(0..20_000).map(|_| rng.gen()).collect()]).unwrap();
    assert!(storey_estimate(&uniform, 0.5).unwrap().pi0()[0] > 0.97);
}

#[test]
fn null_statistic_is_positive_and_tight() {
    let table = null_quantile_table(&[500, 500], 0.05, 1000, 4).unwrap();
    let mean = table.samples.iter().sum::<f64>() / 1000.0;
    assert!(mean > 0.0 && mean < 3.0, "mean {mean}");
}

#[test]
fn full_null_test_level() {
    let sizes = [100, 100];
    let table = null_quantile_table(&sizes, 0.05, 2000, 5).unwrap();
    let q = table.quantile(0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let runs = 2000;
    let mut hits = 0;
    for _ in 0..runs {
        let p = sizes.iter().map(|&n| (0..n).map(|_| rng.gen()).collect()).collect();
        if z_statistic(&GroupedPValues::from_pvalues(p).unwrap(), 0.05) > q {
            hits += 1;
        }
    }
    let rate = hits as f64 / runs as f64;
    // binomial sd at 0.05 over 2000 runs is about 0.005
    assert!(rate <= 0.05 + 0.015, "rate {rate}");
}

#[test]
fn two_stage_procedures_on_full_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut extra = 0i64;
    for _ in 0..300 {
        let p = (0..2).map(|_| (0..200).map(|_| rng.gen()).collect()).collect();
        let d = GroupedPValues::from_pvalues(p).unwrap();
        let est = NullEstimates::oracle(&d, vec![1.0, 1.0]).unwrap();
        let two = pro1_pro2(&d, &est, 0.05);
        assert!(two.u_m <= 0.05);
        extra += two.pro2.num_rejections() as i64 - bh(&d, 0.05).num_rejections() as i64;
    }
    assert!(extra <= 100, "{extra}");
}

#[test]
fn adaptive_bh_and_stabilized_fdr() {
    let config = ScenarioConfig {
        name: "check".into(),
        mu_rule: vec![MuRule { offset: 0.0, scale: 1.0 }, MuRule { offset: 0.0, scale: 2.0 }],
        size_fractions: vec![0.5, 0.5],
        null_fractions: vec![0.8, 0.8],
        sweep: vec![SweepPoint { mu_bar: 3.0, m: 1000 }, SweepPoint { mu_bar: 0.01, m: 500 }],
        alpha: 0.05,
        beta: Some(0.05),
        procedures: ["abh:ce", "saddow:ce", "saddow:ne"].iter().map(|p| p.parse().unwrap()).collect(),
        replications: 400,
        quantile_replicates: 500,
        seed: 8,
    };
    let report = run_scenario(&config, &RunOptions::default()).unwrap();
    let abh = &report.rows[0];
    assert!((abh.fdr - 0.05).abs() < 0.006, "abh fdr {}", abh.fdr);
    // weak signal: FDR <= beta + (m0/m) alpha, plus sampling slack
    for r in &report.rows[4..] {
        assert!(r.fdr <= 0.05 + 0.8 * 0.05 + 0.01, "{} fdr {}", r.procedure, r.fdr);
        assert!(r.branch_rate.unwrap() <= 0.15, "{:?}", r.branch_rate);
    }
}
