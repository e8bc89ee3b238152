use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use curtail_core::{search_design, Design, Hypotheses};

use crate::error::CliError;
use crate::render::Format;

#[derive(Debug, Parser)]
#[command(
    name = "curtail",
    version,
    about = "Exact sequential single-arm trial designs with curtailed futility stopping"
)]
pub struct Cli {
    /// Output format; `design` defaults to json, everything else to table.
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search the smallest (u, K) meeting the error constraints.
    Design(HypothesisArgs),
    /// Stopping thresholds of the proposed, fixed and Simon designs.
    Boundaries(HypothesisArgs),
    /// Power, average sample number and stopping probabilities over true rates.
    Oc(OcArgs),
    /// Estimates and confidence intervals at a terminal outcome.
    Estimate(EstimateArgs),
    /// Read outcomes from stdin (y/n per patient) and print decisions.
    Monitor(MonitorArgs),
    /// Evaluate operating characteristics or estimator performance over the scenario grid.
    Simulate(SimulateArgs),
    /// Maximum sample sizes of all designs across hypothesis pairs.
    Compare(CompareArgs),
    /// Run the HTTP monitoring service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct HypothesisArgs {
    /// Null response rate.
    #[arg(long)]
    pub p0: f64,
    /// Alternative response rate.
    #[arg(long)]
    pub p1: f64,
    /// One-sided type I error level.
    #[arg(long, default_value_t = 0.025)]
    pub alpha: f64,
    /// Type II error level.
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
}

impl HypothesisArgs {
    pub fn hypotheses(&self) -> Result<Hypotheses, CliError> {
        Ok(Hypotheses::new(self.p0, self.p1, self.alpha, self.beta)?)
    }
}

/// A design given directly by `--u/--K` or searched from `--p0/--p1`.
#[derive(Debug, Clone, Args)]
pub struct DesignSource {
    #[arg(long, requires = "p1", conflicts_with_all = ["u", "max_n"])]
    pub p0: Option<f64>,
    #[arg(long, requires = "p0")]
    pub p1: Option<f64>,
    #[arg(long, default_value_t = 0.025)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    /// Efficacy threshold.
    #[arg(long, requires = "max_n")]
    pub u: Option<u32>,
    /// Maximum sample size.
    #[arg(long = "K", id = "max_n", requires = "u")]
    pub max_n: Option<u32>,
}

impl DesignSource {
    /// The design, plus hypotheses when they were given.
    pub fn resolve(&self) -> Result<(Design, Option<Hypotheses>), CliError> {
        match (self.p0, self.p1, self.u, self.max_n) {
            (Some(p0), Some(p1), _, _) => {
                let hyp = Hypotheses::new(p0, p1, self.alpha, self.beta)?;
                Ok((search_design(&hyp)?.design, Some(hyp)))
            }
            (_, _, Some(u), Some(k)) => Ok((Design::new(u, k)?, None)),
            _ => Err(CliError::Usage("give either --p0 and --p1, or --u and --K".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct OcArgs {
    #[command(flatten)]
    pub design: DesignSource,
    /// True response rates; defaults to 0.05..0.60 by 0.05.
    #[arg(long = "p", value_delimiter = ',')]
    pub p: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub design: DesignSource,
    /// Patients enrolled at the stop.
    #[arg(long)]
    pub m: u32,
    /// Responders at the stop.
    #[arg(long)]
    pub s: u32,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub design: DesignSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimulateKind {
    /// Power and average sample number of all four designs.
    Oc,
    /// Estimator bias/RMSE and interval coverage/length of the proposed design.
    Estimation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimulateKind::Oc)]
    pub kind: SimulateKind,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Monte Carlo replications per scenario; defaults to 100000 for oc and 10000 for estimation.
    #[arg(long)]
    pub replications: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Restrict to one hypothesis pair (otherwise all twelve standard pairs).
    #[arg(long, requires = "p1")]
    pub p0: Option<f64>,
    #[arg(long, requires = "p0")]
    pub p1: Option<f64>,
    /// Write CSV (or plot JSON with --format json) here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Restrict to one hypothesis pair (otherwise all twelve standard pairs).
    #[arg(long, requires = "p1")]
    pub p0: Option<f64>,
    #[arg(long, requires = "p0")]
    pub p1: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; overrides CURTAIL_LISTEN.
    #[arg(long)]
    pub listen: Option<std::net::SocketAddr>,
    /// Data directory; overrides CURTAIL_DATA_DIR.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}
