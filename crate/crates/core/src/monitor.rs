//! Patient-by-patient application of the stopping rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{classify_state, Design, StageDecision};

/// Decision after one recorded outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorUpdate {
    pub decision: StageDecision,
    /// Patients observed so far.
    pub k: u32,
    /// Responders so far.
    pub s: u32,
    /// Further responders required for an efficacy stop, `u - s` floored at 0.
    pub responders_needed: u32,
}

impl MonitorUpdate {
    pub fn message(&self) -> String {
        match self.decision {
            StageDecision::StopEfficacy => {
                format!("stop for efficacy: {} responders in {} patients", self.s, self.k)
            }
            StageDecision::StopFutility => {
                format!("stop for futility: {} responders in {} patients, threshold unreachable", self.s, self.k)
            }
            StageDecision::Continue => format!(
                "continue: {} responders in {} patients, {} more responders needed for success",
                self.s, self.k, self.responders_needed
            ),
        }
    }
}

/// In-memory trial state: the design and the ordered outcomes seen so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialMonitor {
    design: Design,
    outcomes: Vec<bool>,
}

impl TrialMonitor {
    pub fn new(design: Design) -> Self {
        TrialMonitor { design, outcomes: Vec::new() }
    }

    /// Rebuilds the state from a full outcome history.
    pub fn from_outcomes(design: Design, outcomes: &[bool]) -> Result<Self> {
        let mut monitor = TrialMonitor::new(design);
        for &r in outcomes {
            monitor.record(r)?;
        }
        Ok(monitor)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn enrolled(&self) -> u32 {
        self.outcomes.len() as u32
    }

    pub fn responders(&self) -> u32 {
        self.outcomes.iter().filter(|&&r| r).count() as u32
    }

    pub fn responders_needed(&self) -> u32 {
        self.design.u().saturating_sub(self.responders())
    }

    /// Current decision; `Continue` before the first patient.
    pub fn decision(&self) -> StageDecision {
        match self.enrolled() {
            0 => StageDecision::Continue,
            k => classify_state(&self.design, k, self.responders()).expect("state within design"),
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.decision().is_stop()
    }

    pub fn update(&self) -> MonitorUpdate {
        MonitorUpdate {
            decision: self.decision(),
            k: self.enrolled(),
            s: self.responders(),
            responders_needed: self.responders_needed(),
        }
    }

    pub fn record(&mut self, responder: bool) -> Result<MonitorUpdate> {
        if self.is_stopped() {
            return Err(Error::validation(format!(
                "trial already stopped at patient {} ({:?})",
                self.enrolled(),
                self.decision()
            )));
        }
        self.outcomes.push(responder);
        Ok(self.update())
    }

    pub fn undo(&mut self) -> Result<MonitorUpdate> {
        if self.outcomes.pop().is_none() {
            return Err(Error::validation("no outcome to undo"));
        }
        Ok(self.update())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn futility_after_seventeen_non_responders() {
        let mut m = TrialMonitor::new(Design::new(6, 22).unwrap());
        for _ in 0..16 {
            assert_eq!(m.record(false).unwrap().decision, StageDecision::Continue);
        }
        let up = m.record(false).unwrap();
        assert_eq!((up.decision, up.k, up.s), (StageDecision::StopFutility, 17, 0));
        assert!(m.record(true).is_err());
    }

    #[test]
    fn efficacy_at_sixth_patient() {
        let outcomes = [true, false, true, false, true];
        let mut m = TrialMonitor::from_outcomes(Design::new(4, 9).unwrap(), &outcomes).unwrap();
        assert_eq!(m.responders_needed(), 1);
        let up = m.record(true).unwrap();
        assert_eq!((up.decision, up.k, up.s), (StageDecision::StopEfficacy, 6, 4));
        assert_eq!(up.responders_needed, 0);
        let back = m.undo().unwrap();
        assert_eq!(back.decision, StageDecision::Continue);
        assert!(!m.is_stopped());
    }

    #[test]
    fn undo_on_empty_fails() {
        let mut m = TrialMonitor::new(Design::new(4, 9).unwrap());
        assert!(m.undo().is_err());
        assert!(m.update().message().contains("4 more responders needed"));
    }
}
