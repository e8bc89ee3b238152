//! Exact summation against Monte Carlo, and reproducibility of simulated output.

use curtail_core::sim::{
    evaluate_estimation_with, evaluate_oc, write_csv, EstimatorTable, EvalMode, PerformanceRow, ScenarioGrid,
};
use curtail_core::{Design, Hypotheses, IntervalMethod, OutcomeKind, SamplingDistribution};

const REPS: u64 = 10_000;

type Measure = (&'static str, Box<dyn Fn(&PerformanceRow) -> f64>, Box<dyn Fn(usize, f64) -> f64>);

fn measures(dist: &SamplingDistribution, table: &EstimatorTable) -> Vec<Measure> {
    let support = dist.support().to_vec();
    let mut out: Vec<Measure> = Vec::new();
    let s = support.clone();
    out.push(("power", Box::new(|r| r.power), Box::new(move |i, _| (s[i].kind == OutcomeKind::Efficacy) as u8 as f64)));
    let s = support.clone();
    out.push(("asn", Box::new(|r| r.asn), Box::new(move |i, _| s[i].m as f64)));
    let est = [table.naive.clone(), table.adjusted.clone(), table.mue.clone()];
    let bias: [fn(&PerformanceRow) -> Option<f64>; 3] = [|r| r.bias_naive, |r| r.bias_adjusted, |r| r.bias_mue];
    let rmse: [fn(&PerformanceRow) -> Option<f64>; 3] = [|r| r.rmse_naive, |r| r.rmse_adjusted, |r| r.rmse_mue];
    for j in 0..3 {
        let e = est[j].clone();
        let get = bias[j];
        out.push(("bias", Box::new(move |r| get(r).unwrap()), Box::new(move |i, p| e[i] - p)));
        let e = est[j].clone();
        let get = rmse[j];
        out.push(("mse", Box::new(move |r| get(r).unwrap().powi(2)), Box::new(move |i, p| (e[i] - p).powi(2))));
    }
    for method in IntervalMethod::ALL {
        let rows: Vec<_> = (0..dist.len()).map(|i| *table.intervals.get(i, method)).collect();
        let rows2 = rows.clone();
        out.push((
            "coverage",
            Box::new(move |r| r.coverage(method).unwrap()),
            Box::new(move |i, p| rows[i].contains(p) as u8 as f64),
        ));
        out.push((
            "length",
            Box::new(move |r| r.expected_length(method).unwrap()),
            Box::new(move |i, _| rows2[i].length()),
        ));
    }
    out
}

fn check_design(hyp: Hypotheses, design: Design, seed: u64) {
    let dist = SamplingDistribution::build(&design);
    let table = EstimatorTable::build(&dist, hyp.alpha).unwrap();
    let grid = ScenarioGrid::standard_p_true();
    let exact = evaluate_estimation_with(&hyp, &dist, &table, &grid, EvalMode::Exact, 0);
    let mc = evaluate_estimation_with(&hyp, &dist, &table, &grid, EvalMode::MonteCarlo { replications: REPS, seed }, 0);
    let mut checked = 0;
    for ((e, m), &p) in exact.iter().zip(&mc).zip(&grid) {
        for (name, get, g) in measures(&dist, &table) {
            let mean = get(e);
            let var = dist.expectation(p, |o| (g(dist.rank(o.m, o.s).unwrap(), p) - mean).powi(2));
            let se = (var / REPS as f64).sqrt();
            let diff = (get(m) - mean).abs();
            if se < 1e-12 {
                assert!(diff < 1e-9, "{name} at p={p}: exact {mean} mc {}", get(m));
            } else {
                assert!(diff <= 4.0 * se, "{name} at p={p}: exact {mean} mc {} se {se}", get(m));
            }
            checked += 1;
        }
    }
    assert_eq!(checked, grid.len() * 18);
}

#[test]
fn monte_carlo_matches_exact_design_4_9() {
    check_design(Hypotheses::new(0.1, 0.55, 0.025, 0.2).unwrap(), Design::new(4, 9).unwrap(), 3);
}

#[test]
fn monte_carlo_matches_exact_design_6_22() {
    check_design(Hypotheses::new(0.1, 0.35, 0.025, 0.2).unwrap(), Design::new(6, 22).unwrap(), 4);
}

fn oc_csv(seed: u64) -> Vec<u8> {
    let grid = ScenarioGrid::single(0.2, 0.4);
    let rows = evaluate_oc(&grid, EvalMode::MonteCarlo { replications: 2_000, seed }).unwrap();
    assert_eq!(rows.len(), 4 * grid.p_true.len());
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    buf
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = oc_csv(99);
    assert_eq!(a, oc_csv(99));
    assert_ne!(a, oc_csv(100));
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert_eq!(a, single.install(|| oc_csv(99)));
}
