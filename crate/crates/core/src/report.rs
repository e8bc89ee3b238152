//! Everything reported at the end of a trial, from one terminal outcome.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{bias_adjusted_estimate, estimate_report, BiasMode, EstimateReport, PValueOrdering};
use crate::intervals::{
    cp_interval, jt_interval, midp_cp_interval, midp_jt_interval, ConfidenceInterval, DufSatTable, DEFAULT_GRID_STEP,
};
use crate::sampling::{OutcomeKind, SamplingDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub m: u32,
    pub s: u32,
    pub kind: OutcomeKind,
    /// Stage-wise estimates with the plug-in bias adjustment.
    pub estimates: EstimateReport,
    pub bias_adjusted_root_solve: f64,
    /// CP, JT, midp-CP, midp-JT and DufSat, in that order.
    pub intervals: Vec<ConfidenceInterval>,
}

/// Builds the report at terminal `(m, s)` with two-sided level `1 - 2 alpha`.
pub fn final_report(dist: &SamplingDistribution, m: u32, s: u32, alpha: f64) -> Result<FinalReport> {
    let kind = dist.outcome(m, s)?.kind;
    let estimates = estimate_report(dist, m, s, PValueOrdering::StageWise, BiasMode::PlugIn)?;
    let intervals = vec![
        cp_interval(m, s, alpha)?,
        jt_interval(dist, m, s, alpha)?,
        midp_cp_interval(m, s, alpha)?,
        midp_jt_interval(dist, m, s, alpha)?,
        DufSatTable::build(dist, alpha, DEFAULT_GRID_STEP)?.interval(dist, m, s)?,
    ];
    Ok(FinalReport {
        m,
        s,
        kind,
        estimates,
        bias_adjusted_root_solve: bias_adjusted_estimate(dist, m, s, BiasMode::RootSolve)?,
        intervals,
    })
}
