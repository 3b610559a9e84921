//! Acceptance checks. Each test prints one PASS/FAIL line.

use std::io::Write;
use std::time::Instant;

use addow::addow::{
    addow, argmax_weights_on_grid, ihw, min_cost_profile, CostVector,
};
use addow::estimation::NullEstimates;
use addow::harness::{
    run_scenario, MuRule, Procedure, ReportRow, RunOptions, ScenarioConfig, ScenarioReport,
    SweepPoint,
};
use addow::model::GroupedPValues;
use addow::oracle::{
    critical_alpha, oracle_solution, AlternativeCdf, CriticalGroup, GaussianAlternative,
    GaussianModel,
};
use addow::stabilize::z_statistic;
use addow::stepup::{bh, grid_point, mwbh, wbh, WeightFunction, WeightVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    // straight to the handle so the line survives output capture
    let line = format!("[{}] {id} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn random_data(rng: &mut ChaCha8Rng, max_groups: usize, max_m: usize) -> GroupedPValues {
    let groups = rng.gen_range(1..=max_groups);
    let m = rng.gen_range(groups..=max_m);
    let mut sizes = vec![1; groups];
    for _ in groups..m {
        sizes[rng.gen_range(0..groups)] += 1;
    }
    let pvalues = sizes
        .iter()
        .map(|&n| {
            let power = rng.gen_range(1.0..6.0);
            (0..n)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        // occasional ties and exact zeros
                        [0.0, 0.01, 0.5, 1.0][rng.gen_range(0..4)]
                    } else {
                        rng.gen::<f64>().powf(power)
                    }
                })
                .collect()
        })
        .collect();
    GroupedPValues::from_pvalues(pvalues).unwrap()
}

// every split, costs added in group order
fn enumerate_min_cost(d: &GroupedPValues, costs: &[f64]) -> Vec<f64> {
    let sizes = d.group_sizes();
    let mut best = vec![f64::INFINITY; d.m() + 1];
    let mut split = vec![0usize; sizes.len()];
    'outer: loop {
        let mut total = 0.0;
        for (g, &k) in split.iter().enumerate() {
            if k > 0 {
                total += costs[g] * d.sorted(g)[k - 1];
            }
        }
        let r: usize = split.iter().sum();
        if total < best[r] {
            best[r] = total;
        }
        for g in 0..sizes.len() {
            if split[g] < sizes[g] {
                split[g] += 1;
                continue 'outer;
            }
            split[g] = 0;
        }
        return best;
    }
}

#[test]
fn criterion_1_optimizer_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..500 {
        let d = random_data(&mut rng, 3, 12);
        let costs: Vec<f64> = (0..d.num_groups()).map(|_| rng.gen_range(0.01..2.0)).collect();
        let profile = min_cost_profile(&d, &CostVector::new(costs.clone()).unwrap());
        if profile.min_cost() != enumerate_min_cost(&d, &costs).as_slice() {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "optimizer exactness",
        mismatches == 0 && secs < 10.0,
        &format!("{mismatches} mismatches over 500 instances, {secs:.2} s (zero tolerance, < 10 s)"),
    );
}

fn textbook_bh(d: &GroupedPValues, alpha: f64) -> usize {
    let mut all: Vec<f64> = d.groups().iter().flat_map(|g| g.pvalues.clone()).collect();
    all.sort_by(f64::total_cmp);
    let m = all.len();
    (1..=m)
        .rev()
        .find(|&k| all[k - 1] <= alpha * k as f64 / m as f64)
        .unwrap_or(0)
}

// largest k with #{p_{g,i} <= alpha (k/m) W_g(k/m)} >= k, by direct counting
fn direct_mwbh(d: &GroupedPValues, wf: &WeightFunction, alpha: f64) -> usize {
    let m = d.m();
    (1..=m)
        .rev()
        .find(|&k| {
            let u = grid_point(k, m);
            let count: usize = d
                .groups()
                .iter()
                .zip(wf.at(k).as_slice())
                .map(|(g, &w)| g.pvalues.iter().filter(|&&p| p <= alpha * u * w).count())
                .sum();
            count >= k
        })
        .unwrap_or(0)
}

#[test]
fn criterion_2_reduction_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut fails = [0usize; 4];

    for _ in 0..1000 {
        // IHW as MWBH over the argmax weights at every grid point
        let d = random_data(&mut rng, 3, 50);
        let alpha = rng.gen_range(0.01..0.6);
        let ne = NullEstimates::non_estimated(&d);
        let profile = min_cost_profile(&d, &CostVector::from_estimates(&d, &ne));
        let rows = (0..=d.m())
            .map(|k| argmax_weights_on_grid(&d, &profile, alpha, k))
            .collect();
        let wf = WeightFunction::new(d.m(), rows).unwrap();
        let path = mwbh(&d, &wf, alpha).unwrap();
        let direct = addow(&d, &ne, alpha);
        if path.rejections != direct.rejections || path.rejections != ihw(&d, alpha).rejections {
            fails[0] += 1;
        }
    }
    for _ in 0..1000 {
        let d = random_data(&mut rng, 1, 50);
        let alpha = rng.gen_range(0.01..0.6);
        let out = ihw(&d, alpha);
        if out.num_rejections() != textbook_bh(&d, alpha) || out.rejections != bh(&d, alpha).rejections {
            fails[1] += 1;
        }
    }
    for _ in 0..1000 {
        let d = random_data(&mut rng, 3, 50);
        let alpha = rng.gen_range(0.01..0.6);
        let pi0 = (0..d.num_groups()).map(|_| rng.gen_range(0.1..=1.0)).collect();
        let est = NullEstimates::oracle(&d, pi0).unwrap();
        let out = addow(&d, &est, alpha);
        let again = wbh(&d, &out.weights, alpha);
        if again.rejections != out.rejections || again.k_hat != out.k_hat {
            fails[2] += 1;
        }
    }
    for _ in 0..1000 {
        // random weight functions with nondecreasing thresholds
        let d = random_data(&mut rng, 3, 50);
        let alpha = rng.gen_range(0.01..0.6);
        let m = d.m();
        let groups = d.num_groups();
        let mut t = vec![0.0; groups];
        let mut rows = vec![WeightVector::zeros(groups)];
        for k in 1..=m {
            let u = grid_point(k, m);
            for tg in t.iter_mut() {
                *tg += rng.gen::<f64>() * 2.0 / m as f64;
            }
            rows.push(WeightVector::new(t.iter().map(|x| x / (alpha * u)).collect()).unwrap());
        }
        let wf = WeightFunction::new(m, rows).unwrap();
        if mwbh(&d, &wf, alpha).unwrap().k_hat != direct_mwbh(&d, &wf, alpha) {
            fails[3] += 1;
        }
    }
    verdict(
        2,
        "reduction identities",
        fails == [0; 4],
        &format!(
            "mismatches: ihw path {}, single-group bh {}, addow = wbh(own weights) {}, mwbh sweep {} (1000 instances each, m <= 50)",
            fails[0], fails[1], fails[2], fails[3]
        ),
    );
}

fn two_group(
    name: &str,
    mu: [(f64, f64); 2],
    sizes: [f64; 2],
    nulls: [f64; 2],
    sweep: Vec<SweepPoint>,
    alpha: f64,
    beta: Option<f64>,
    procedures: &[&str],
    seed: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        mu_rule: mu.iter().map(|&(offset, scale)| MuRule { offset, scale }).collect(),
        size_fractions: sizes.to_vec(),
        null_fractions: nulls.to_vec(),
        sweep,
        alpha,
        beta,
        procedures: procedures.iter().map(|p| p.parse::<Procedure>().unwrap()).collect(),
        replications: 1000,
        quantile_replicates: 1000,
        seed,
    }
}

fn row<'a>(report: &'a ScenarioReport, point: &SweepPoint, procedure: &str) -> &'a ReportRow {
    let label = point.label();
    report
        .rows
        .iter()
        .find(|r| r.sweep == label && r.procedure == procedure)
        .unwrap()
}

#[test]
fn criterion_3_fdr_levels() {
    let config = two_group(
        "fdr-levels",
        [(0.0, 1.0), (0.0, 2.0)],
        [0.5, 0.5],
        [0.8, 0.8],
        vec![SweepPoint { mu_bar: 3.0, m: 2000 }],
        0.05,
        None,
        &["bh", "ihw", "addow:ce"],
        303,
    );
    let start = Instant::now();
    let report = run_scenario(&config, &RunOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let checks = [("bh", 0.040, 0.005), ("ihw", 0.040, 0.008), ("addow:ce", 0.050, 0.008)];
    let mut pass = secs < 300.0;
    let mut detail = Vec::new();
    for (p, target, tol) in checks {
        let r = row(&report, &config.sweep[0], p);
        pass &= (r.fdr - target).abs() <= tol && r.failures == 0;
        detail.push(format!("{p} {:.4} (se {:.4}, target {target} ± {tol})", r.fdr, r.fdr_se));
    }
    verdict(3, "fdr levels", pass, &format!("{}; {secs:.1} s", detail.join(", ")));
}

#[test]
fn criterion_4_power_ordering() {
    let procedures = [
        "addow:ce",
        "bh",
        "abh:ce",
        "hzz:ce",
        "pro1:ce",
        "pro2:ce",
        "ihw",
        "oracle-mwbh:ne",
        "oracle-mwbh:ce",
    ];
    let config = two_group(
        "power-ordering",
        [(0.0, 1.0), (0.0, 2.0)],
        [0.5, 0.5],
        [0.7, 0.8],
        vec![SweepPoint { mu_bar: 3.0, m: 4000 }],
        0.05,
        None,
        &procedures,
        404,
    );
    let report = run_scenario(&config, &RunOptions::default()).unwrap();
    let top = row(&report, &config.sweep[0], "addow:ce").pow;
    let mut pass = true;
    let mut detail = vec![format!("addow:ce {top:.5}")];
    for p in &procedures[1..8] {
        let r = row(&report, &config.sweep[0], p);
        pass &= top >= r.pow - 0.005 && r.failures == 0;
        detail.push(format!("{p} {:.5}", r.pow));
    }
    let oracle = row(&report, &config.sweep[0], "oracle-mwbh:ce");
    pass &= (top - oracle.pow).abs() <= 0.01 && oracle.failures == 0;
    detail.push(format!("oracle-mwbh:ce {:.5} (|gap| <= 0.01)", oracle.pow));
    verdict(
        4,
        "power ordering",
        pass,
        &format!("{} (slack 0.005)", detail.join(", ")),
    );
}

#[test]
fn criterion_5_ihw_beaten_by_bh() {
    let mut config = ScenarioConfig::scenario2();
    config.seed = 505;
    let report = run_scenario(&config, &RunOptions::default()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, point) in config.sweep.iter().enumerate() {
        let a = row(&report, &config.sweep[i], "ihw");
        let b = row(&report, &config.sweep[i], "addow:ce");
        pass &= a.diffpow < 0.0 && b.diffpow > 0.0;
        detail.push(format!(
            "mu2={}: ihw {:+.5} (se {:.5}), addow:ce {:+.5} (se {:.5})",
            point.mu_bar, a.diffpow, a.diffpow_se, b.diffpow, b.diffpow_se
        ));
    }
    verdict(5, "ihw below bh, addow above", pass, &detail.join("; "));
}

#[test]
fn criterion_6_stabilization() {
    let config = two_group(
        "stabilization",
        [(0.0, 1.0), (0.0, 2.0)],
        [0.5, 0.5],
        [0.8, 0.8],
        vec![SweepPoint { mu_bar: 0.01, m: 1000 }, SweepPoint { mu_bar: 3.0, m: 1000 }],
        0.05,
        Some(0.05),
        &["bh", "addow:ne", "saddow:ne"],
        606,
    );
    let report = run_scenario(&config, &RunOptions::default()).unwrap();
    let weak_s = row(&report, &config.sweep[0], "saddow:ne");
    let weak_a = row(&report, &config.sweep[0], "addow:ne");
    let strong_s = row(&report, &config.sweep[1], "saddow:ne");
    let branch = strong_s.branch_rate.unwrap();
    let pass = weak_s.fdr <= 0.06 && weak_a.fdr >= 0.06 && branch >= 0.99;
    verdict(
        6,
        "stabilization",
        pass,
        &format!(
            "weak: saddow fdr {:.4} (<= 0.06), addow fdr {:.4} (>= 0.06); strong: branch rate {:.3} (>= 0.99)",
            weak_s.fdr, weak_a.fdr, branch
        ),
    );
}

// maximizes the expected power along the budget line by golden section
fn line_search_oracle(model: &GaussianModel, costs: &[f64], alpha: f64, u: f64) -> [f64; 2] {
    let budget = alpha * u;
    let m = model.m() as f64;
    let gains: Vec<f64> = model.alternative_counts().iter().map(|&n| n as f64 / m).collect();
    let alts = model.alternatives();
    let value = |t1: f64| {
        let t2 = ((budget - costs[0] * t1) / costs[1]).min(1.0);
        gains[0] * alts[0].cdf(t1) + gains[1] * alts[1].cdf(t2)
    };
    let lo0 = ((budget - costs[1]) / costs[0]).max(0.0);
    let hi0 = (budget / costs[0]).min(1.0);
    // coarse grid first, then golden section around the best cell
    let n = 10_000;
    let step = (hi0 - lo0) / n as f64;
    let best = (0..=n)
        .map(|i| lo0 + i as f64 * step)
        .max_by(|a, b| value(*a).total_cmp(&value(*b)))
        .unwrap();
    let (mut lo, mut hi) = ((best - step).max(lo0), (best + step).min(hi0));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if value(a) < value(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let t1 = 0.5 * (lo + hi);
    [t1, ((budget - costs[0] * t1) / costs[1]).min(1.0)]
}

#[test]
fn criterion_7_oracle_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_residual: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..200 {
        let sizes = vec![rng.gen_range(100..3000), rng.gen_range(100..3000)];
        let nulls = sizes.iter().map(|&s| (s as f64 * rng.gen_range(0.05..0.95)) as usize).collect();
        let model = GaussianModel::new(
            vec![rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0)],
            sizes,
            nulls,
        )
        .unwrap();
        let costs = if rng.gen_bool(0.5) { model.consistent_costs() } else { model.non_estimated_costs() };
        let alpha = rng.gen_range(0.01..0.3);
        let u = rng.gen_range(0.01..1.0);
        let s = oracle_solution(&model, &costs, alpha, u).unwrap();
        worst_residual = worst_residual.max(s.residual);
        if s.multiplier > 0.0 {
            let grid = line_search_oracle(&model, costs.as_slice(), alpha, u);
            for g in 0..2 {
                let w_grid = grid[g] / (alpha * u);
                let w = s.weights.as_slice()[g];
                worst_gap = worst_gap.max((w - w_grid).abs() / w_grid.max(1.0));
            }
        }
    }
    let mut worst_sym: f64 = 0.0;
    for mu in [0.5, 1.0, 2.0, 3.5] {
        for pi0 in [0.2, 0.5, 0.9] {
            let n0 = (1000.0 * pi0) as usize;
            let model = GaussianModel::new(vec![mu, mu], vec![1000, 1000], vec![n0, n0]).unwrap();
            let costs = model.consistent_costs();
            let total: f64 = costs.as_slice().iter().sum();
            for u in [0.05, 0.3, 0.9] {
                let w = oracle_solution(&model, &costs, 0.05, u).unwrap().weights;
                for &x in w.as_slice() {
                    worst_sym = worst_sym.max((x - 1.0 / total).abs());
                }
            }
        }
    }
    let pass = worst_residual <= 1e-10 && worst_sym <= 1e-12 && worst_gap <= 1e-4;
    verdict(
        7,
        "oracle solver",
        pass,
        &format!(
            "budget residual {worst_residual:.2e} (<= 1e-10), symmetric weights {worst_sym:.2e} (<= 1e-12), line-search gap {worst_gap:.2e} (<= 1e-4)"
        ),
    );
}

struct Power {
    a: f64,
}

impl AlternativeCdf for Power {
    // 1 - (1 - x)^a, concave for a > 1 with f(0+) = a
    fn cdf(&self, x: f64) -> f64 {
        1.0 - (1.0 - x).powf(self.a)
    }
    fn density(&self, x: f64) -> f64 {
        self.a * (1.0 - x).powf(self.a - 1.0)
    }
    fn density_at_zero(&self) -> f64 {
        self.a
    }
}

#[test]
fn criterion_8_critical_alpha() {
    let gaussian = GaussianModel::new(vec![1.0, 2.5], vec![300, 700], vec![200, 600]).unwrap();
    let zero = gaussian.critical_alpha(&[1.0, 1.0]).unwrap();

    let quad = Power { a: 2.0 };
    let q = critical_alpha(
        &[CriticalGroup { weight: 1.0, null_fraction: 0.5, alternative: &quad }],
        &[1.0],
    )
    .unwrap();
    assert!((quad.cdf(0.3) - (0.6 - 0.09)).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut all_below = true;
    for i in 0..100 {
        let groups = rng.gen_range(1..5);
        let alts: Vec<Power> = (0..groups).map(|_| Power { a: rng.gen_range(1.01..20.0) }).collect();
        let gaussians: Vec<GaussianAlternative> =
            (0..groups).map(|_| GaussianAlternative { mu: rng.gen_range(0.1..4.0) }).collect();
        let mut weights: Vec<f64> = (0..groups).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let nulls: Vec<f64> = (0..groups).map(|_| rng.gen_range(0.01..0.99)).collect();
        let pibar: Vec<f64> = nulls.iter().map(|&p| rng.gen_range(p..=1.0)).collect();
        let cg: Vec<CriticalGroup<'_>> = (0..groups)
            .map(|g| CriticalGroup {
                weight: weights[g],
                null_fraction: nulls[g],
                alternative: if i % 2 == 0 { &alts[g] as &dyn AlternativeCdf } else { &gaussians[g] },
            })
            .collect();
        let a = critical_alpha(&cg, &pibar).unwrap();
        all_below &= (0.0..1.0).contains(&a);
    }
    let pass = zero == 0.0 && (q - 2.0 / 3.0).abs() <= 1e-12 && all_below;
    verdict(
        8,
        "critical alpha",
        pass,
        &format!("gaussian {zero}, 2x - x^2 example {q:.15} (2/3 ± 1e-12), alpha* < 1 on 100 random models: {all_below}"),
    );
}

#[test]
fn criterion_9_z_statistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut mismatches = 0;
    for _ in 0..500 {
        let d = random_data(&mut rng, 3, 50);
        let alpha = rng.gen_range(0.01..0.6);
        let m = d.m();
        let min_cost = enumerate_min_cost(&d, CostVector::non_estimated(&d).as_slice());
        let mut best = f64::NEG_INFINITY;
        for k in 1..=m {
            let budget = alpha * grid_point(k, m);
            for r in 0..=m {
                if min_cost[r] <= budget + budget * 1e-12 {
                    best = best.max(grid_point(r, m) - alpha * grid_point(k, m));
                }
            }
        }
        if z_statistic(&d, alpha) != (m as f64).sqrt() * best {
            mismatches += 1;
        }
    }
    verdict(
        9,
        "z statistic",
        mismatches == 0,
        &format!("{mismatches} mismatches against the double loop over 500 instances, m <= 50 (exact)"),
    );
}

#[test]
fn criterion_10_convergence_trend() {
    let config = two_group(
        "convergence",
        [(0.0, 1.0), (0.0, 2.0)],
        [0.5, 0.5],
        [0.8, 0.8],
        [500, 2000, 5000].iter().map(|&m| SweepPoint { mu_bar: 3.0, m }).collect(),
        0.05,
        None,
        &["addow:ce"],
        1010,
    );
    let report = run_scenario(&config, &RunOptions::default()).unwrap();
    let rows: Vec<&ReportRow> = (0..3).map(|i| row(&report, &config.sweep[i], "addow:ce")).collect();
    let mut pass = true;
    for w in rows.windows(2) {
        let d0 = (w[0].fdr - 0.05).abs();
        let d1 = (w[1].fdr - 0.05).abs();
        pass &= d1 <= d0 + 2.0 * (w[0].fdr_se.powi(2) + w[1].fdr_se.powi(2)).sqrt();
    }
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("m={}: fdr {:.4} (se {:.4})", r.m, r.fdr, r.fdr_se))
        .collect();
    verdict(
        10,
        "convergence trend",
        pass,
        &format!("{}; |fdr - 0.05| nonincreasing within 2 se", detail.join(", ")),
    );
}
