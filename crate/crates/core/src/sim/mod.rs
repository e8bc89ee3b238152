//! Operating-characteristic and estimator-performance evaluation.
//!
//! Every measure is available two ways: exact summation over the terminal
//! support (the default) and Monte Carlo replication. Monte Carlo draws use
//! one ChaCha stream per `(scenario, replication)`, so results do not depend
//! on thread scheduling.

mod output;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{
    fixed_exact_design, simon_characteristics, simon_search, FixedDesign, SimonCriterion, SimonDesign,
};
use crate::error::Result;
use crate::estimation::{bias_adjusted_estimate, mue, BiasMode, PValueOrdering, DEFAULT_MUE_STEP};
use crate::exact::{classify_state, search_design, Design, Hypotheses, StageDecision};
use crate::intervals::{IntervalMethod, IntervalTable, DEFAULT_GRID_STEP};
use crate::numeric::binom_sf;
use crate::sampling::{SamplingDistribution, TerminalOutcome};

pub use output::{emit_results, plot_json, read_csv, write_csv, OutputFormat, PlotDocument, PLOT_SCHEMA_VERSION};

/// Replications used for operating characteristics by default.
pub const OC_REPLICATIONS: u64 = 100_000;
/// Replications used for estimator performance by default.
pub const ESTIMATION_REPLICATIONS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub p_true: Vec<f64>,
    pub hypothesis_pairs: Vec<(f64, f64)>,
    pub alpha: f64,
    pub power: f64,
}

impl ScenarioGrid {
    /// True rates 0.05..0.60 by 0.05 and the twelve standard `(p0, p1)`
    /// pairs with `p1 - p0 >= 0.15`, at one-sided 0.025 and power 0.8.
    pub fn standard() -> Self {
        let mut pairs = Vec::new();
        for p0 in [1u32, 2, 3] {
            for p1 in 5u32..=10 {
                // Work in units of 0.05 to keep the grid exact.
                if p1 >= 2 * p0 + 3 {
                    pairs.push((p0 as f64 / 10.0, p1 as f64 / 20.0));
                }
            }
        }
        ScenarioGrid { p_true: Self::standard_p_true(), hypothesis_pairs: pairs, alpha: 0.025, power: 0.8 }
    }

    /// Grid for a single hypothesis pair.
    pub fn single(p0: f64, p1: f64) -> Self {
        ScenarioGrid { hypothesis_pairs: vec![(p0, p1)], ..Self::standard() }
    }

    pub fn standard_p_true() -> Vec<f64> {
        (1..=12).map(|i| i as f64 / 20.0).collect()
    }

    pub fn hypotheses(&self) -> Result<Vec<Hypotheses>> {
        self.hypothesis_pairs.iter().map(|&(p0, p1)| Hypotheses::new(p0, p1, self.alpha, 1.0 - self.power)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    Exact,
    MonteCarlo { replications: u64, seed: u64 },
}

/// One evaluated scenario. Estimator and interval columns are empty for
/// operating-characteristic rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub design: String,
    pub p0: f64,
    pub p1: f64,
    pub p_true: f64,
    pub max_n: u32,
    pub power: f64,
    pub asn: f64,
    pub bias_naive: Option<f64>,
    pub rmse_naive: Option<f64>,
    pub bias_adjusted: Option<f64>,
    pub rmse_adjusted: Option<f64>,
    pub bias_mue: Option<f64>,
    pub rmse_mue: Option<f64>,
    pub coverage_cp: Option<f64>,
    pub length_cp: Option<f64>,
    pub coverage_jt: Option<f64>,
    pub length_jt: Option<f64>,
    pub coverage_midp_cp: Option<f64>,
    pub length_midp_cp: Option<f64>,
    pub coverage_midp_jt: Option<f64>,
    pub length_midp_jt: Option<f64>,
    pub coverage_dufsat: Option<f64>,
    pub length_dufsat: Option<f64>,
    /// `exact` or `monte_carlo`.
    pub mode: String,
    pub replications: Option<u64>,
    pub seed: Option<u64>,
}

impl PerformanceRow {
    fn new(design: &str, hyp: &Hypotheses, p_true: f64, max_n: u32, mode: EvalMode) -> Self {
        let (mode, replications, seed) = match mode {
            EvalMode::Exact => ("exact", None, None),
            EvalMode::MonteCarlo { replications, seed } => ("monte_carlo", Some(replications), Some(seed)),
        };
        PerformanceRow {
            design: design.to_string(),
            p0: hyp.p0,
            p1: hyp.p1,
            p_true,
            max_n,
            power: 0.0,
            asn: 0.0,
            bias_naive: None,
            rmse_naive: None,
            bias_adjusted: None,
            rmse_adjusted: None,
            bias_mue: None,
            rmse_mue: None,
            coverage_cp: None,
            length_cp: None,
            coverage_jt: None,
            length_jt: None,
            coverage_midp_cp: None,
            length_midp_cp: None,
            coverage_midp_jt: None,
            length_midp_jt: None,
            coverage_dufsat: None,
            length_dufsat: None,
            mode: mode.to_string(),
            replications,
            seed,
        }
    }

    pub fn coverage(&self, method: IntervalMethod) -> Option<f64> {
        match method {
            IntervalMethod::Cp => self.coverage_cp,
            IntervalMethod::Jt => self.coverage_jt,
            IntervalMethod::MidpCp => self.coverage_midp_cp,
            IntervalMethod::MidpJt => self.coverage_midp_jt,
            IntervalMethod::DufSat => self.coverage_dufsat,
        }
    }

    pub fn expected_length(&self, method: IntervalMethod) -> Option<f64> {
        match method {
            IntervalMethod::Cp => self.length_cp,
            IntervalMethod::Jt => self.length_jt,
            IntervalMethod::MidpCp => self.length_midp_cp,
            IntervalMethod::MidpJt => self.length_midp_jt,
            IntervalMethod::DufSat => self.length_dufsat,
        }
    }

    fn set_interval(&mut self, method: IntervalMethod, coverage: f64, length: f64) {
        let (c, l) = match method {
            IntervalMethod::Cp => (&mut self.coverage_cp, &mut self.length_cp),
            IntervalMethod::Jt => (&mut self.coverage_jt, &mut self.length_jt),
            IntervalMethod::MidpCp => (&mut self.coverage_midp_cp, &mut self.length_midp_cp),
            IntervalMethod::MidpJt => (&mut self.coverage_midp_jt, &mut self.length_midp_jt),
            IntervalMethod::DufSat => (&mut self.coverage_dufsat, &mut self.length_dufsat),
        };
        *c = Some(coverage);
        *l = Some(length);
    }
}

/// RNG for one replication of one scenario.
pub fn substream(seed: u64, scenario: u64, replication: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&scenario.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}

/// Enrolls Bernoulli(`p`) patients under `design` until a stop.
/// Returns `(m, s, decision)`.
pub fn simulate_stop<R: Rng + ?Sized>(design: &Design, p: f64, rng: &mut R) -> (u32, u32, StageDecision) {
    let mut s = 0;
    for k in 1..=design.max_n() {
        s += rng.random_bool(p) as u32;
        let decision = classify_state(design, k, s).expect("state within design");
        if decision.is_stop() {
            return (k, s, decision);
        }
    }
    unreachable!("stage K always stops")
}

/// Simulates one trial and returns the support outcome it ends in.
pub fn simulate_trial<'a, R: Rng + ?Sized>(dist: &'a SamplingDistribution, p: f64, rng: &mut R) -> &'a TerminalOutcome {
    let (m, s, _) = simulate_stop(dist.design(), p, rng);
    dist.outcome(m, s).expect("simulated stop lies in the support")
}

/// A design whose power and sample size can be evaluated both ways.
pub trait TrialDesign: Sync {
    fn label(&self) -> &str;
    fn max_sample_size(&self) -> u32;
    fn exact_power(&self, p: f64) -> f64;
    fn exact_asn(&self, p: f64) -> f64;
    /// One simulated trial: `(patients enrolled, H0 rejected)`.
    fn simulate(&self, p: f64, rng: &mut ChaCha8Rng) -> (u32, bool);
}

#[derive(Debug, Clone)]
pub struct ProposedTrial {
    pub dist: SamplingDistribution,
}

impl ProposedTrial {
    pub fn new(design: &Design) -> Self {
        ProposedTrial { dist: SamplingDistribution::build(design) }
    }
}

impl TrialDesign for ProposedTrial {
    fn label(&self) -> &str {
        "Proposed"
    }
    fn max_sample_size(&self) -> u32 {
        self.dist.design().max_n()
    }
    fn exact_power(&self, p: f64) -> f64 {
        self.dist.exact_power(p)
    }
    fn exact_asn(&self, p: f64) -> f64 {
        self.dist.expected_sample_size(p)
    }
    fn simulate(&self, p: f64, rng: &mut ChaCha8Rng) -> (u32, bool) {
        let (m, _, d) = simulate_stop(self.dist.design(), p, rng);
        (m, d == StageDecision::StopEfficacy)
    }
}

impl TrialDesign for FixedDesign {
    fn label(&self) -> &str {
        "Fixed"
    }
    fn max_sample_size(&self) -> u32 {
        self.n
    }
    fn exact_power(&self, p: f64) -> f64 {
        binom_sf(self.n, self.r, p)
    }
    fn exact_asn(&self, _p: f64) -> f64 {
        self.n as f64
    }
    fn simulate(&self, p: f64, rng: &mut ChaCha8Rng) -> (u32, bool) {
        let s = (0..self.n).filter(|_| rng.random_bool(p)).count() as u32;
        (self.n, s >= self.r)
    }
}

impl TrialDesign for SimonDesign {
    fn label(&self) -> &str {
        match self.criterion {
            SimonCriterion::Minimax => "Minimax",
            SimonCriterion::Optimal => "Optimal",
        }
    }
    fn max_sample_size(&self) -> u32 {
        self.n
    }
    fn exact_power(&self, p: f64) -> f64 {
        simon_characteristics(self, p).power
    }
    fn exact_asn(&self, p: f64) -> f64 {
        simon_characteristics(self, p).asn
    }
    fn simulate(&self, p: f64, rng: &mut ChaCha8Rng) -> (u32, bool) {
        let x1 = (0..self.n1).filter(|_| rng.random_bool(p)).count() as u32;
        if x1 <= self.r1 {
            return (self.n1, false);
        }
        let x2 = (self.n1..self.n).filter(|_| rng.random_bool(p)).count() as u32;
        (self.n, x1 + x2 > self.r)
    }
}

/// The proposed design and its three comparators for one hypothesis pair.
#[derive(Debug, Clone)]
pub struct DesignSet {
    pub hypotheses: Hypotheses,
    pub proposed: ProposedTrial,
    pub fixed: FixedDesign,
    pub minimax: SimonDesign,
    pub optimal: SimonDesign,
}

impl DesignSet {
    pub fn for_hypotheses(hyp: &Hypotheses) -> Result<Self> {
        Ok(DesignSet {
            hypotheses: *hyp,
            proposed: ProposedTrial::new(&search_design(hyp)?.design),
            fixed: fixed_exact_design(hyp)?,
            minimax: simon_search(hyp, SimonCriterion::Minimax)?,
            optimal: simon_search(hyp, SimonCriterion::Optimal)?,
        })
    }

    pub fn designs(&self) -> [&dyn TrialDesign; 4] {
        [&self.proposed, &self.fixed, &self.minimax, &self.optimal]
    }
}

fn scenario_id(group: usize, design: usize, point: usize) -> u64 {
    ((group as u64) << 32) | ((design as u64) << 16) | point as u64
}

/// Power and average sample number of each design at each true rate.
/// `group` namespaces the Monte Carlo substreams.
pub fn evaluate_designs(
    hyp: &Hypotheses,
    designs: &[&dyn TrialDesign],
    p_true: &[f64],
    mode: EvalMode,
    group: usize,
) -> Vec<PerformanceRow> {
    let jobs: Vec<(usize, usize)> = (0..designs.len()).flat_map(|d| (0..p_true.len()).map(move |i| (d, i))).collect();
    jobs.par_iter()
        .map(|&(d, i)| {
            let design = designs[d];
            let p = p_true[i];
            let mut row = PerformanceRow::new(design.label(), hyp, p, design.max_sample_size(), mode);
            match mode {
                EvalMode::Exact => {
                    row.power = design.exact_power(p);
                    row.asn = design.exact_asn(p);
                }
                EvalMode::MonteCarlo { replications, seed } => {
                    let scenario = scenario_id(group, d, i);
                    let (mut enrolled, mut rejected) = (0u64, 0u64);
                    for rep in 0..replications {
                        let (n, rej) = design.simulate(p, &mut substream(seed, scenario, rep));
                        enrolled += n as u64;
                        rejected += rej as u64;
                    }
                    row.power = rejected as f64 / replications as f64;
                    row.asn = enrolled as f64 / replications as f64;
                }
            }
            row
        })
        .collect()
}

/// Operating characteristics of the proposed, fixed and both Simon designs
/// across the grid. Rows are grouped by pair, then design, then `p`.
pub fn evaluate_oc(grid: &ScenarioGrid, mode: EvalMode) -> Result<Vec<PerformanceRow>> {
    let sets = grid.hypotheses()?.iter().map(DesignSet::for_hypotheses).collect::<Result<Vec<_>>>()?;
    Ok(sets
        .iter()
        .enumerate()
        .flat_map(|(g, set)| evaluate_designs(&set.hypotheses, &set.designs(), &grid.p_true, mode, g))
        .collect())
}

/// Precomputed estimates and intervals for every support outcome.
#[derive(Debug, Clone)]
pub struct EstimatorTable {
    pub naive: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub mue: Vec<f64>,
    pub intervals: IntervalTable,
}

impl EstimatorTable {
    pub fn build(dist: &SamplingDistribution, alpha: f64) -> Result<Self> {
        let per_outcome = dist
            .support()
            .par_iter()
            .map(|o| {
                Ok((
                    o.naive_estimate(),
                    bias_adjusted_estimate(dist, o.m, o.s, BiasMode::PlugIn)?,
                    mue(dist, o.m, o.s, PValueOrdering::StageWise, DEFAULT_MUE_STEP)?.estimate,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (naive, rest): (Vec<f64>, Vec<(f64, f64)>) = per_outcome.into_iter().map(|(a, b, c)| (a, (b, c))).unzip();
        let (adjusted, mue) = rest.into_iter().unzip();
        Ok(EstimatorTable { naive, adjusted, mue, intervals: IntervalTable::build(dist, alpha, DEFAULT_GRID_STEP)? })
    }
}

/// Weighted per-outcome sums behind one estimation row.
#[derive(Default)]
struct Accumulator {
    weight: f64,
    enrolled: f64,
    efficacy: f64,
    err: [f64; 3],
    sq_err: [f64; 3],
    covered: [f64; 5],
    length: [f64; 5],
}

impl Accumulator {
    fn add(&mut self, dist: &SamplingDistribution, table: &EstimatorTable, rank: usize, p: f64, w: f64) {
        let o = &dist.support()[rank];
        self.weight += w;
        self.enrolled += w * o.m as f64;
        if o.kind == crate::sampling::OutcomeKind::Efficacy {
            self.efficacy += w;
        }
        for (j, est) in [table.naive[rank], table.adjusted[rank], table.mue[rank]].into_iter().enumerate() {
            self.err[j] += w * (est - p);
            self.sq_err[j] += w * (est - p).powi(2);
        }
        for (j, ci) in table.intervals.rows[rank].iter().enumerate() {
            if ci.contains(p) {
                self.covered[j] += w;
            }
            self.length[j] += w * ci.length();
        }
    }

    fn finish(self, row: &mut PerformanceRow) {
        let n = self.weight;
        row.power = self.efficacy / n;
        row.asn = self.enrolled / n;
        row.bias_naive = Some(self.err[0] / n);
        row.rmse_naive = Some((self.sq_err[0] / n).sqrt());
        row.bias_adjusted = Some(self.err[1] / n);
        row.rmse_adjusted = Some((self.sq_err[1] / n).sqrt());
        row.bias_mue = Some(self.err[2] / n);
        row.rmse_mue = Some((self.sq_err[2] / n).sqrt());
        for (j, method) in IntervalMethod::ALL.into_iter().enumerate() {
            row.set_interval(method, self.covered[j] / n, self.length[j] / n);
        }
    }
}

/// Bias and RMSE of the naive, bias-adjusted and median-unbiased estimators
/// plus coverage and expected length of the five intervals, for the
/// proposed design at each true rate.
pub fn evaluate_estimation(
    hyp: &Hypotheses,
    dist: &SamplingDistribution,
    p_true: &[f64],
    mode: EvalMode,
) -> Result<Vec<PerformanceRow>> {
    let table = EstimatorTable::build(dist, hyp.alpha)?;
    Ok(evaluate_estimation_with(hyp, dist, &table, p_true, mode, 0))
}

pub fn evaluate_estimation_with(
    hyp: &Hypotheses,
    dist: &SamplingDistribution,
    table: &EstimatorTable,
    p_true: &[f64],
    mode: EvalMode,
    group: usize,
) -> Vec<PerformanceRow> {
    p_true
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut row = PerformanceRow::new("Proposed", hyp, p, dist.design().max_n(), mode);
            let mut acc = Accumulator::default();
            match mode {
                EvalMode::Exact => {
                    for rank in 0..dist.len() {
                        acc.add(dist, table, rank, p, dist.pmf_at(rank, p));
                    }
                }
                EvalMode::MonteCarlo { replications, seed } => {
                    let scenario = scenario_id(group, u16::MAX as usize, i);
                    for rep in 0..replications {
                        let o = simulate_trial(dist, p, &mut substream(seed, scenario, rep));
                        let rank = dist.rank(o.m, o.s).expect("support outcome");
                        acc.add(dist, table, rank, p, 1.0);
                    }
                }
            }
            acc.finish(&mut row);
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(u: u32, k: u32) -> Design {
        Design::new(u, k).unwrap()
    }

    #[test]
    fn standard_grid_shape() {
        let g = ScenarioGrid::standard();
        assert_eq!(g.p_true.len(), 12);
        assert_eq!(g.p_true[0], 0.05);
        assert_eq!(g.p_true[11], 0.6);
        assert_eq!(g.hypothesis_pairs.len(), 12);
        assert_eq!(g.hypothesis_pairs[0], (0.1, 0.25));
        assert_eq!(g.hypothesis_pairs[11], (0.3, 0.5));
        assert!(g.hypothesis_pairs.contains(&(0.2, 0.35)));
        assert!(!g.hypothesis_pairs.contains(&(0.2, 0.3)));
    }

    #[test]
    fn simulate_degenerate_rates() {
        let d = design(4, 9);
        let mut rng = substream(1, 2, 3);
        for _ in 0..50 {
            assert_eq!(simulate_stop(&d, 0.0, &mut rng), (6, 0, StageDecision::StopFutility));
            assert_eq!(simulate_stop(&d, 1.0, &mut rng), (4, 4, StageDecision::StopEfficacy));
        }
    }

    #[test]
    fn simulated_power_near_exact() {
        let dist = SamplingDistribution::build(&design(4, 9));
        let n = 100_000u64;
        let hits = (0..n)
            .filter(|&r| {
                let o = simulate_trial(&dist, 0.55, &mut substream(7, 0, r));
                o.kind == crate::sampling::OutcomeKind::Efficacy
            })
            .count() as f64;
        let freq = hits / n as f64;
        let exact = dist.exact_power(0.55);
        assert!((freq - exact).abs() < 3.0 * (exact * (1.0 - exact) / n as f64).sqrt(), "{freq} vs {exact}");
    }

    #[test]
    fn substreams_are_reproducible() {
        let a: Vec<u32> = (0..5).map(|_| substream(9, 1, 2).random()).collect();
        let b: Vec<u32> = (0..5).map(|_| substream(9, 1, 2).random()).collect();
        assert_eq!(a, b);
        let c: u64 = substream(9, 1, 3).random();
        let d: u64 = substream(9, 1, 2).random();
        assert_ne!(c, d);
    }

    #[test]
    fn oc_rows_cover_every_design_and_point() {
        let grid = ScenarioGrid::single(0.1, 0.35);
        let rows = evaluate_oc(&grid, EvalMode::Exact).unwrap();
        assert_eq!(rows.len(), 4 * 12);
        let labels: Vec<&str> = rows.iter().step_by(12).map(|r| r.design.as_str()).collect();
        assert_eq!(labels, ["Proposed", "Fixed", "Minimax", "Optimal"]);
    }

    #[test]
    fn proposed_asn_shape() {
        let hyp = Hypotheses::new(0.1, 0.35, 0.025, 0.2).unwrap();
        let set = DesignSet::for_hypotheses(&hyp).unwrap();
        let p: Vec<f64> = (1..=12).map(|i| i as f64 / 20.0).collect();
        let rows = evaluate_designs(&hyp, &[&set.proposed], &p, EvalMode::Exact, 0);
        let asn: Vec<f64> = rows.iter().map(|r| r.asn).collect();
        // Falls beyond p1 = 0.35 ...
        assert!(asn[6..].windows(2).all(|w| w[1] < w[0]), "{asn:?}");
        // ... and below the peak as p drops towards p0.
        let peak = asn.iter().cloned().fold(0.0, f64::max);
        assert!(asn[0] < peak && asn[1] < peak);
    }

    #[test]
    fn exact_and_monte_carlo_asn_agree() {
        let dist = SamplingDistribution::build(&design(4, 9));
        let trial = ProposedTrial { dist: dist.clone() };
        let hyp = Hypotheses::new(0.1, 0.55, 0.025, 0.2).unwrap();
        let exact = &evaluate_designs(&hyp, &[&trial], &[0.3], EvalMode::Exact, 0)[0];
        let mc =
            &evaluate_designs(&hyp, &[&trial], &[0.3], EvalMode::MonteCarlo { replications: 100_000, seed: 11 }, 0)[0];
        let var = dist.expectation(0.3, |o| (o.m as f64).powi(2)) - exact.asn.powi(2);
        assert!((exact.asn - mc.asn).abs() < 3.0 * (var / 1e5).sqrt());
    }

    #[test]
    fn exact_estimation_rows_match_definitions() {
        let hyp = Hypotheses::new(0.1, 0.55, 0.025, 0.2).unwrap();
        let dist = SamplingDistribution::build(&design(4, 9));
        let rows = evaluate_estimation(&hyp, &dist, &[0.3, 0.55], EvalMode::Exact).unwrap();
        let naive_bias = dist.expected_naive_estimate(0.3) - 0.3;
        assert!((rows[0].bias_naive.unwrap() - naive_bias).abs() < 1e-12);
        assert!((rows[1].power - dist.exact_power(0.55)).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.coverage_dufsat.unwrap() >= 0.95 - 1e-12));
    }
}
