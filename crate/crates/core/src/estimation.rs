//! Point estimation at the end of a curtailed trial.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{bisect, grid_crossing};
use crate::sampling::SamplingDistribution;

/// Grid spacing used when locating median-unbiased roots.
pub const DEFAULT_MUE_STEP: f64 = 1e-4;

/// Ordering of the terminal sample space behind the p-value functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueOrdering {
    /// Orders outcomes by responder count alone.
    SampleSpace,
    /// Futility stops by stage, then efficacy stops by reverse stage.
    StageWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// `s/m - B(s/m)`.
    PlugIn,
    /// Root of `p + B(p) = s/m`.
    RootSolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub naive: f64,
    pub bias_adjusted: f64,
    pub mue: f64,
    pub mue_lower: f64,
    pub mue_upper: f64,
    pub ordering: PValueOrdering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianUnbiased {
    /// Root of `P(p) = 1/2`.
    pub lower: f64,
    /// Root of `Q(p) = 1/2`.
    pub upper: f64,
    pub estimate: f64,
}

pub fn naive_estimate(m: u32, s: u32) -> f64 {
    s as f64 / m as f64
}

/// `B(p) = E[S/M | p] - p`.
pub fn bias_function(dist: &SamplingDistribution, p: f64) -> f64 {
    dist.expected_naive_estimate(p) - p
}

pub fn bias_adjusted_estimate(dist: &SamplingDistribution, m: u32, s: u32, mode: BiasMode) -> Result<f64> {
    dist.rank(m, s)?;
    let naive = naive_estimate(m, s);
    Ok(match mode {
        BiasMode::PlugIn => (naive - bias_function(dist, naive)).clamp(0.0, 1.0),
        BiasMode::RootSolve => {
            let mean = |p: f64| dist.expected_naive_estimate(p);
            match bisect(mean, naive, true, 1e-8) {
                Some(p) => p,
                None if mean(0.0) > naive => 0.0,
                None => 1.0,
            }
        }
    })
}

/// Tail sums over the terminal support relative to one observed outcome.
struct Tails<'a> {
    dist: &'a SamplingDistribution,
    /// Outcomes ranked strictly above the observation.
    above: Vec<usize>,
    /// Outcomes tied with the observation (its equality class).
    tied: Vec<usize>,
}

impl<'a> Tails<'a> {
    fn new(dist: &'a SamplingDistribution, m: u32, s: u32, ordering: PValueOrdering) -> Result<Self> {
        let rank = dist.rank(m, s)?;
        let (mut above, mut tied) = (Vec::new(), Vec::new());
        for (i, o) in dist.support().iter().enumerate() {
            let cmp = match ordering {
                PValueOrdering::SampleSpace => o.s.cmp(&s),
                PValueOrdering::StageWise => i.cmp(&rank),
            };
            match cmp {
                std::cmp::Ordering::Greater => above.push(i),
                std::cmp::Ordering::Equal => tied.push(i),
                std::cmp::Ordering::Less => {}
            }
        }
        Ok(Tails { dist, above, tied })
    }

    fn mass(&self, idx: &[usize], p: f64) -> f64 {
        idx.iter().map(|&i| self.dist.pmf_at(i, p)).sum()
    }

    /// Probability of an outcome at least as extreme: `P(p)`.
    fn at_least(&self, p: f64) -> f64 {
        (self.mass(&self.above, p) + self.mass(&self.tied, p)).min(1.0)
    }

    /// Probability of a strictly more extreme outcome: `Q(p)`.
    fn beyond(&self, p: f64) -> f64 {
        self.mass(&self.above, p).min(1.0)
    }
}

/// `P(p)`: probability of an outcome ranked at or above `(m, s)`.
///
/// Both branches of the defining display (efficacy stop and futility stop)
/// reduce to this upper tail, which is nondecreasing in `p`.
pub fn pvalue_p(dist: &SamplingDistribution, m: u32, s: u32, p: f64, ordering: PValueOrdering) -> Result<f64> {
    Ok(Tails::new(dist, m, s, ordering)?.at_least(p))
}

/// `Q(p)`: probability of an outcome ranked strictly above `(m, s)`.
pub fn pvalue_q(dist: &SamplingDistribution, m: u32, s: u32, p: f64, ordering: PValueOrdering) -> Result<f64> {
    Ok(Tails::new(dist, m, s, ordering)?.beyond(p))
}

/// Median-unbiased estimate: midpoint of the roots of `P = 1/2` and
/// `Q = 1/2`, each located on a grid of spacing `step`.
pub fn mue(dist: &SamplingDistribution, m: u32, s: u32, ordering: PValueOrdering, step: f64) -> Result<MedianUnbiased> {
    let tails = Tails::new(dist, m, s, ordering)?;
    let lower = grid_crossing(|p| tails.at_least(p), 0.5, step);
    let upper = grid_crossing(|p| tails.beyond(p), 0.5, step);
    Ok(MedianUnbiased { lower, upper, estimate: 0.5 * (lower + upper) })
}

pub fn estimate_report(
    dist: &SamplingDistribution,
    m: u32,
    s: u32,
    ordering: PValueOrdering,
    mode: BiasMode,
) -> Result<EstimateReport> {
    let h = mue(dist, m, s, ordering, DEFAULT_MUE_STEP)?;
    Ok(EstimateReport {
        naive: naive_estimate(m, s),
        bias_adjusted: bias_adjusted_estimate(dist, m, s, mode)?,
        mue: h.estimate,
        mue_lower: h.lower,
        mue_upper: h.upper,
        ordering,
    })
}
