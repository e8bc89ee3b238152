//! Two-sided `1 - 2 alpha` confidence intervals for the response rate.
//!
//! Exact tails use either the binomial law of `S` given `m` (Clopper-Pearson)
//! or the terminal distribution under the stage-wise ordering
//! (Jennison-Turnbull). Lower limits solve an upper-tail equation and upper
//! limits a lower-tail equation, so `lower <= upper` always holds; a tail
//! that never reaches `alpha` clamps its limit to 0 or 1.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binom_pmf_vec, bisect};
use crate::sampling::{OutcomeKind, SamplingDistribution};

pub const ROOT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_GRID_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntervalMethod {
    #[serde(rename = "CP")]
    Cp,
    #[serde(rename = "JT")]
    Jt,
    #[serde(rename = "midp-CP")]
    MidpCp,
    #[serde(rename = "midp-JT")]
    MidpJt,
    #[serde(rename = "DufSat")]
    DufSat,
}

impl IntervalMethod {
    pub const ALL: [IntervalMethod; 5] = [
        IntervalMethod::Cp,
        IntervalMethod::Jt,
        IntervalMethod::MidpCp,
        IntervalMethod::MidpJt,
        IntervalMethod::DufSat,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IntervalMethod::Cp => "CP",
            IntervalMethod::Jt => "JT",
            IntervalMethod::MidpCp => "midp-CP",
            IntervalMethod::MidpJt => "midp-JT",
            IntervalMethod::DufSat => "DufSat",
        }
    }
}

impl std::fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub method: IntervalMethod,
    /// Two-sided confidence level `1 - 2 alpha`.
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::domain(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    Ok(())
}

/// Lower limit: root of a nondecreasing upper tail `F(p) = alpha`.
fn lower_limit<F: Fn(f64) -> f64>(tail: F, alpha: f64) -> f64 {
    if tail(0.0) >= alpha {
        return 0.0;
    }
    bisect(&tail, alpha, true, ROOT_TOLERANCE).unwrap_or(1.0)
}

/// Upper limit: root of a nonincreasing lower tail `G(p) = alpha`.
fn upper_limit<G: Fn(f64) -> f64>(tail: G, alpha: f64) -> f64 {
    if tail(1.0) >= alpha {
        return 1.0;
    }
    bisect(&tail, alpha, false, ROOT_TOLERANCE).unwrap_or(0.0)
}

fn interval(method: IntervalMethod, alpha: f64, lower: f64, upper: f64) -> ConfidenceInterval {
    ConfidenceInterval { method, level: 1.0 - 2.0 * alpha, lower, upper: upper.max(lower) }
}

/// Binomial tails `(below, at, above)` of `S ~ Bin(m, p)` around `s`.
fn binom_split(m: u32, s: u32, p: f64) -> (f64, f64, f64) {
    let pmf = binom_pmf_vec(m, p);
    let below: f64 = pmf[..s as usize].iter().sum();
    let above: f64 = pmf[s as usize + 1..].iter().sum();
    (below, pmf[s as usize], above)
}

fn check_counts(m: u32, s: u32) -> Result<()> {
    if m == 0 || s > m {
        return Err(Error::domain(format!("need 0 <= s <= m and m >= 1, got m={m}, s={s}")));
    }
    Ok(())
}

/// Clopper-Pearson interval treating `m` as fixed.
pub fn cp_interval(m: u32, s: u32, alpha: f64) -> Result<ConfidenceInterval> {
    check_counts(m, s)?;
    check_alpha(alpha)?;
    let lower = if s == 0 {
        0.0
    } else {
        lower_limit(
            |p| {
                let (_, at, above) = binom_split(m, s, p);
                at + above
            },
            alpha,
        )
    };
    let upper = if s == m {
        1.0
    } else {
        upper_limit(
            |p| {
                let (below, at, _) = binom_split(m, s, p);
                below + at
            },
            alpha,
        )
    };
    Ok(interval(IntervalMethod::Cp, alpha, lower, upper))
}

pub fn midp_cp_interval(m: u32, s: u32, alpha: f64) -> Result<ConfidenceInterval> {
    check_counts(m, s)?;
    check_alpha(alpha)?;
    let lower = if s == 0 {
        0.0
    } else {
        lower_limit(
            |p| {
                let (_, at, above) = binom_split(m, s, p);
                above + 0.5 * at
            },
            alpha,
        )
    };
    let upper = if s == m {
        1.0
    } else {
        upper_limit(
            |p| {
                let (below, at, _) = binom_split(m, s, p);
                below + 0.5 * at
            },
            alpha,
        )
    };
    Ok(interval(IntervalMethod::MidpCp, alpha, lower, upper))
}

/// Stage-wise tails `(below, at, above)` of the terminal distribution.
fn stagewise_split(dist: &SamplingDistribution, rank: usize, p: f64) -> (f64, f64, f64) {
    let f = dist.pmf_vector(p);
    (f[..rank].iter().sum(), f[rank], f[rank + 1..].iter().sum())
}

/// Jennison-Turnbull interval from the stage-wise ordering.
pub fn jt_interval(dist: &SamplingDistribution, m: u32, s: u32, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let r = dist.rank(m, s)?;
    let lower = lower_limit(
        |p| {
            let (_, at, above) = stagewise_split(dist, r, p);
            at + above
        },
        alpha,
    );
    let upper = upper_limit(
        |p| {
            let (below, at, _) = stagewise_split(dist, r, p);
            below + at
        },
        alpha,
    );
    Ok(interval(IntervalMethod::Jt, alpha, lower, upper))
}

pub fn midp_jt_interval(dist: &SamplingDistribution, m: u32, s: u32, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let r = dist.rank(m, s)?;
    let lower = lower_limit(
        |p| {
            let (_, at, above) = stagewise_split(dist, r, p);
            above + 0.5 * at
        },
        alpha,
    );
    let upper = upper_limit(
        |p| {
            let (below, at, _) = stagewise_split(dist, r, p);
            below + 0.5 * at
        },
        alpha,
    );
    Ok(interval(IntervalMethod::MidpJt, alpha, lower, upper))
}

/// Contiguous run of support outcomes, by stage-wise rank, accepted at `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRegion {
    pub p: f64,
    pub first: usize,
    pub last: usize,
}

impl AcceptanceRegion {
    pub fn contains(&self, rank: usize) -> bool {
        self.first <= rank && rank <= self.last
    }

    pub fn mass(&self, dist: &SamplingDistribution) -> f64 {
        (self.first..=self.last).map(|i| dist.pmf_at(i, self.p)).sum()
    }
}

/// Greedy minimum-cardinality region: start at the mode and repeatedly
/// absorb the adjacent outcome with larger pmf (ties go up the ordering)
/// until the region holds at least `level`.
fn greedy_region(pmf: &[f64], level: f64) -> (usize, usize) {
    let mode = pmf.iter().enumerate().fold(0, |best, (i, &v)| if v >= pmf[best] { i } else { best });
    let (mut lo, mut hi, mut mass) = (mode, mode, pmf[mode]);
    while mass < level {
        let left = if lo > 0 { Some(pmf[lo - 1]) } else { None };
        let right = pmf.get(hi + 1).copied();
        match (left, right) {
            (Some(l), Some(r)) if l > r => {
                lo -= 1;
                mass += l;
            }
            (_, Some(r)) => {
                hi += 1;
                mass += r;
            }
            (Some(l), None) => {
                lo -= 1;
                mass += l;
            }
            (None, None) => break,
        }
    }
    (lo, hi)
}

/// Duffy-Santner acceptance regions over a uniform grid of `p`, with
/// endpoints made nondecreasing in `p`.
#[derive(Debug, Clone)]
pub struct DufSatTable {
    alpha: f64,
    regions: Vec<AcceptanceRegion>,
}

impl DufSatTable {
    pub fn build(dist: &SamplingDistribution, alpha: f64, grid_step: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(grid_step > 0.0 && grid_step <= 0.5) {
            return Err(Error::domain(format!("grid step must lie in (0, 0.5], got {grid_step}")));
        }
        let level = 1.0 - 2.0 * alpha;
        let n = (1.0 / grid_step).round() as u64;
        let mut regions: Vec<AcceptanceRegion> = (0..=n)
            .into_par_iter()
            .map(|i| {
                let p = i as f64 / n as f64;
                let (first, last) = greedy_region(&dist.pmf_vector(p), level);
                AcceptanceRegion { p, first, last }
            })
            .collect();
        // Coherence: raising `last` forward and lowering `first` backward only
        // enlarges regions, so coverage is kept.
        for i in 1..regions.len() {
            regions[i].last = regions[i].last.max(regions[i - 1].last);
        }
        for i in (0..regions.len() - 1).rev() {
            regions[i].first = regions[i].first.min(regions[i + 1].first);
        }
        Ok(DufSatTable { alpha, regions })
    }

    pub fn regions(&self) -> &[AcceptanceRegion] {
        &self.regions
    }

    /// Interval for the outcome at stage-wise position `rank`.
    pub fn interval_for_rank(&self, rank: usize) -> ConfidenceInterval {
        let mut hits = self.regions.iter().filter(|r| r.contains(rank));
        let (lower, upper) = match (hits.next(), hits.next_back()) {
            (Some(a), Some(b)) => (a.p, b.p),
            (Some(a), None) => (a.p, a.p),
            _ => {
                // Skipped between two adjacent grid points.
                let i = self.regions.iter().position(|r| r.first > rank).unwrap_or(self.regions.len() - 1);
                (self.regions[i.saturating_sub(1)].p, self.regions[i].p)
            }
        };
        interval(IntervalMethod::DufSat, self.alpha, lower, upper)
    }

    pub fn interval(&self, dist: &SamplingDistribution, m: u32, s: u32) -> Result<ConfidenceInterval> {
        Ok(self.interval_for_rank(dist.rank(m, s)?))
    }
}

pub fn dufsat_interval(
    dist: &SamplingDistribution,
    m: u32,
    s: u32,
    alpha: f64,
    grid_step: f64,
) -> Result<ConfidenceInterval> {
    let rank = dist.rank(m, s)?;
    Ok(DufSatTable::build(dist, alpha, grid_step)?.interval_for_rank(rank))
}

/// The five intervals for every support outcome, in stage-wise order.
#[derive(Debug, Clone)]
pub struct IntervalTable {
    pub alpha: f64,
    /// `rows[rank]` holds the intervals in [`IntervalMethod::ALL`] order.
    pub rows: Vec<[ConfidenceInterval; 5]>,
}

impl IntervalTable {
    pub fn build(dist: &SamplingDistribution, alpha: f64, grid_step: f64) -> Result<Self> {
        let dufsat = DufSatTable::build(dist, alpha, grid_step)?;
        let rows = dist
            .support()
            .par_iter()
            .enumerate()
            .map(|(rank, o)| {
                Ok([
                    cp_interval(o.m, o.s, alpha)?,
                    jt_interval(dist, o.m, o.s, alpha)?,
                    midp_cp_interval(o.m, o.s, alpha)?,
                    midp_jt_interval(dist, o.m, o.s, alpha)?,
                    dufsat.interval_for_rank(rank),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IntervalTable { alpha, rows })
    }

    pub fn get(&self, rank: usize, method: IntervalMethod) -> &ConfidenceInterval {
        let col = IntervalMethod::ALL.iter().position(|&m| m == method).expect("known method");
        &self.rows[rank][col]
    }

    /// Exact coverage of `method` at the true rate `p`.
    pub fn coverage(&self, dist: &SamplingDistribution, method: IntervalMethod, p: f64) -> f64 {
        (0..dist.len()).filter(|&r| self.get(r, method).contains(p)).map(|r| dist.pmf_at(r, p)).sum()
    }

    /// Expected interval length of `method` at `p`.
    pub fn expected_length(&self, dist: &SamplingDistribution, method: IntervalMethod, p: f64) -> f64 {
        (0..dist.len()).map(|r| self.get(r, method).length() * dist.pmf_at(r, p)).sum()
    }

    pub fn write_csv<W: Write>(&self, dist: &SamplingDistribution, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "s", "kind", "method", "level", "lower", "upper"])?;
        for (o, row) in dist.support().iter().zip(&self.rows) {
            let kind = if o.kind == OutcomeKind::Efficacy { "efficacy" } else { "futility" };
            for ci in row {
                w.write_record([
                    o.m.to_string(),
                    o.s.to_string(),
                    kind.to_string(),
                    ci.method.to_string(),
                    ci.level.to_string(),
                    ci.lower.to_string(),
                    ci.upper.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::Design;
    use crate::numeric::{binom_cdf, binom_sf};

    fn dist(u: u32, k: u32) -> SamplingDistribution {
        SamplingDistribution::build(&Design::new(u, k).unwrap())
    }

    #[test]
    fn cp_boundary_conventions() {
        assert_eq!(cp_interval(10, 0, 0.025).unwrap().lower, 0.0);
        assert_eq!(cp_interval(10, 10, 0.025).unwrap().upper, 1.0);
        assert_eq!(midp_cp_interval(10, 0, 0.025).unwrap().lower, 0.0);
        assert_eq!(midp_cp_interval(10, 10, 0.025).unwrap().upper, 1.0);
        assert!(cp_interval(10, 11, 0.025).is_err());
        assert!(cp_interval(10, 1, 0.5).is_err());
    }

    #[test]
    fn cp_endpoints_resubstitute() {
        let ci = cp_interval(22, 6, 0.025).unwrap();
        assert!((binom_cdf(22, 6, ci.upper) - 0.025).abs() < 1e-8);
        assert!((binom_sf(22, 6, ci.lower) - 0.025).abs() < 1e-8);
        assert!((ci.level - 0.95).abs() < 1e-15);
    }

    #[test]
    fn jt_at_minimal_outcome() {
        let d = dist(6, 22);
        let ci = jt_interval(&d, 17, 0, 0.025).unwrap();
        assert_eq!(ci.lower, 0.0);
        let closed = 1.0 - 0.025f64.powf(1.0 / 17.0);
        assert!((ci.upper - closed).abs() < 1e-9);
        assert!((ci.upper - 0.1951).abs() < 1e-4);
        let mid = midp_jt_interval(&d, 17, 0, 0.025).unwrap();
        let closed = 1.0 - 0.05f64.powf(1.0 / 17.0);
        assert!((mid.upper - closed).abs() < 1e-9);
        assert!((mid.upper - 0.1616).abs() < 1e-4);
        assert_eq!(jt_interval(&d, 6, 6, 0.025).unwrap().upper, 1.0);
        assert!(matches!(jt_interval(&d, 5, 5, 0.025), Err(Error::NotInSupport { .. })));
    }

    #[test]
    fn midp_nested_in_exact() {
        let d = dist(4, 9);
        for o in d.support() {
            let (cp, mcp) = (cp_interval(o.m, o.s, 0.025).unwrap(), midp_cp_interval(o.m, o.s, 0.025).unwrap());
            assert!(mcp.lower >= cp.lower - 1e-9 && mcp.upper <= cp.upper + 1e-9);
            let (jt, mjt) = (jt_interval(&d, o.m, o.s, 0.025).unwrap(), midp_jt_interval(&d, o.m, o.s, 0.025).unwrap());
            assert!(mjt.lower >= jt.lower - 1e-9 && mjt.upper <= jt.upper + 1e-9);
        }
    }

    #[test]
    fn greedy_region_contains_mode() {
        let pmf = [0.05, 0.1, 0.4, 0.3, 0.15];
        let (lo, hi) = greedy_region(&pmf, 0.8);
        assert!(lo <= 2 && 2 <= hi);
        assert_eq!((lo, hi), (2, 4));
        assert_eq!(greedy_region(&[0.0, 1.0, 0.0], 0.95), (1, 1));
    }

    #[test]
    fn dufsat_regions_hold_level_and_are_monotone() {
        let d = dist(4, 9);
        let table = DufSatTable::build(&d, 0.025, 1e-3).unwrap();
        let mode_ok = table.regions().iter().all(|r| {
            let f = d.pmf_vector(r.p);
            let max = f.iter().cloned().fold(0.0, f64::max);
            (r.first..=r.last).any(|i| f[i] == max)
        });
        assert!(mode_ok);
        for w in table.regions().windows(2) {
            assert!(w[0].first <= w[1].first && w[0].last <= w[1].last);
        }
        for r in table.regions() {
            assert!(r.mass(&d) >= 0.95 - 1e-12, "p={} mass={}", r.p, r.mass(&d));
        }
    }

    #[test]
    fn dufsat_intervals_near_naive_estimate() {
        let d = dist(4, 9);
        let table = DufSatTable::build(&d, 0.025, DEFAULT_GRID_STEP).unwrap();
        for (rank, o) in d.support().iter().enumerate() {
            let ci = table.interval_for_rank(rank);
            let x = o.naive_estimate();
            assert!(ci.lower - DEFAULT_GRID_STEP <= x && x <= ci.upper + DEFAULT_GRID_STEP, "({},{}) {ci:?}", o.m, o.s);
        }
    }

    #[test]
    fn dufsat_exact_coverage_on_grid() {
        let d = dist(4, 9);
        let table = IntervalTable::build(&d, 0.025, DEFAULT_GRID_STEP).unwrap();
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let cov = table.coverage(&d, IntervalMethod::DufSat, p);
            assert!(cov >= 0.95 - 1e-12, "p={p} coverage {cov}");
        }
    }

    #[test]
    fn endpoints_monotone_along_ordering() {
        let d = dist(6, 22);
        let table = IntervalTable::build(&d, 0.025, DEFAULT_GRID_STEP).unwrap();
        for method in [IntervalMethod::Jt, IntervalMethod::MidpJt, IntervalMethod::DufSat] {
            for r in 1..d.len() {
                let (a, b) = (table.get(r - 1, method), table.get(r, method));
                assert!(a.lower <= b.lower + 1e-9 && a.upper <= b.upper + 1e-9, "{method} rank {r}");
            }
        }
    }

    #[test]
    fn interval_json_shape() {
        let ci = cp_interval(10, 3, 0.025).unwrap();
        let v = serde_json::to_value(ci).unwrap();
        assert_eq!(v["method"], "CP");
        assert!(v["level"].is_number() && v["lower"].is_number() && v["upper"].is_number());
    }
}
