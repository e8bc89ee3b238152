//! Exact sequential single-arm design for a binary endpoint.
//!
//! A trial enrolls one patient at a time and stops for efficacy as soon as
//! the responder count reaches a fixed threshold `u`, or for futility once
//! `u` can no longer be reached within the maximum sample size `K`. The
//! crate covers design search with exact error rates, the exact terminal
//! distribution, post-trial estimates and confidence intervals, classical
//! comparator designs and a simulation harness.

pub mod comparators;
pub mod error;
pub mod estimation;
pub mod exact;
pub mod intervals;
pub mod monitor;
mod numeric;
pub mod report;
pub mod sampling;
pub mod sim;

pub use comparators::{
    agresti_coull_z, fixed_exact_design, score_sample_size, simon_characteristics, simon_search, wald_sample_size,
    FixedDesign, SimonCharacteristics, SimonCriterion, SimonDesign,
};
pub use error::{Error, Result};
pub use estimation::{BiasMode, EstimateReport, PValueOrdering};
pub use exact::{
    classify_state, efficacy_probability, futility_boundaries, nb_pmf, operating_characteristics, search_design,
    search_design_with, Design, DesignDocument, DesignSearch, Hypotheses, OperatingCharacteristics, SearchOptions,
    StageDecision,
};
pub use intervals::{ConfidenceInterval, IntervalMethod};
pub use monitor::{MonitorUpdate, TrialMonitor};
pub use numeric::{binom_cdf, binom_pmf, binom_sf};
pub use report::{final_report, FinalReport};
pub use sampling::{OutcomeKind, SamplingDistribution, TerminalOutcome};
