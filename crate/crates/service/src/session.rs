//! Session state and the events that produce it.
//!
//! A session is never mutated directly: every change is an [`EventRecord`]
//! and [`TrialSession::apply`] is the only transition function, used both for
//! live requests and for replay from disk.

use chrono::{DateTime, Utc};
use curtail_core::{
    final_report, search_design, Design, FinalReport, Hypotheses, MonitorUpdate, SamplingDistribution, StageDecision,
    TrialMonitor,
};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{ServiceError, ServiceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Enrolling,
    StoppedEfficacy,
    StoppedFutility,
    Finalized,
}

impl SessionStatus {
    /// Status implied by the recorded outcomes alone.
    pub fn from_outcomes(design: &Design, outcomes: &[bool]) -> SessionStatus {
        let s = outcomes.iter().filter(|&&r| r).count() as u32;
        match outcomes.len() {
            0 => SessionStatus::Enrolling,
            k => match curtail_core::classify_state(design, k as u32, s).expect("outcomes within design") {
                StageDecision::Continue => SessionStatus::Enrolling,
                StageDecision::StopEfficacy => SessionStatus::StoppedEfficacy,
                StageDecision::StopFutility => SessionStatus::StoppedFutility,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    Created { hypotheses: Hypotheses, design: Design },
    OutcomeRecorded { responder: bool },
    OutcomeUndone,
    Finalized { report: FinalReport },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_id: Uuid,
    pub seq: u64,
    #[serde(flatten)]
    pub event: SessionEvent,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSession {
    pub id: Uuid,
    pub hypotheses: Hypotheses,
    pub design: Design,
    pub outcomes: Vec<bool>,
    pub status: SessionStatus,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub final_report: Option<FinalReport>,
    /// Sequence number of the last applied event.
    pub seq: u64,
}

impl TrialSession {
    /// First event of a new session; the design comes from the standard search.
    pub fn create(hypotheses: Hypotheses, now: DateTime<Utc>) -> ServiceResult<EventRecord> {
        hypotheses.validate()?;
        let design = search_design(&hypotheses)?.design;
        Ok(EventRecord {
            session_id: Uuid::new_v4(),
            seq: 1,
            event: SessionEvent::Created { hypotheses, design },
            timestamp: now,
        })
    }

    /// Rebuilds a session from its full event log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a EventRecord>) -> ServiceResult<TrialSession> {
        let mut events = events.into_iter();
        let first = events.next().ok_or_else(|| ServiceError::Corrupt("empty event log".into()))?;
        let mut session = TrialSession::from_created(first)?;
        for record in events {
            session.apply(record)?;
        }
        Ok(session)
    }

    fn from_created(record: &EventRecord) -> ServiceResult<TrialSession> {
        match &record.event {
            SessionEvent::Created { hypotheses, design } if record.seq == 1 => Ok(TrialSession {
                id: record.session_id,
                hypotheses: *hypotheses,
                design: design.clone(),
                outcomes: Vec::new(),
                status: SessionStatus::Enrolling,
                created_at: record.timestamp,
                updated_at: record.timestamp,
                final_report: None,
                seq: 1,
            }),
            _ => Err(ServiceError::Corrupt(format!(
                "session {} does not start with a creation event",
                record.session_id
            ))),
        }
    }

    /// Checks that `event` is legal in the current state, without applying it.
    pub fn check(&self, event: &SessionEvent) -> ServiceResult<()> {
        match event {
            SessionEvent::Created { .. } => Err(ServiceError::Conflict("session already exists".into())),
            SessionEvent::OutcomeRecorded { .. } => match self.status {
                SessionStatus::Enrolling => Ok(()),
                status => Err(ServiceError::Conflict(format!("cannot record an outcome: session is {status:?}"))),
            },
            SessionEvent::OutcomeUndone => {
                if self.status == SessionStatus::Finalized {
                    Err(ServiceError::Conflict("cannot undo: session is finalized".into()))
                } else if self.outcomes.is_empty() {
                    Err(ServiceError::Validation("no outcome to undo".into()))
                } else {
                    Ok(())
                }
            }
            SessionEvent::Finalized { .. } => self.check_finalize(),
        }
    }

    pub fn check_finalize(&self) -> ServiceResult<()> {
        match self.status {
            SessionStatus::StoppedEfficacy | SessionStatus::StoppedFutility => Ok(()),
            status => Err(ServiceError::Conflict(format!("cannot finalize: session is {status:?}"))),
        }
    }

    pub fn apply(&mut self, record: &EventRecord) -> ServiceResult<()> {
        if record.session_id != self.id {
            return Err(ServiceError::Corrupt(format!("event for {} applied to {}", record.session_id, self.id)));
        }
        if record.seq != self.seq + 1 {
            return Err(ServiceError::Corrupt(format!(
                "session {}: expected seq {}, found {}",
                self.id,
                self.seq + 1,
                record.seq
            )));
        }
        self.check(&record.event)?;
        match &record.event {
            SessionEvent::Created { .. } => unreachable!("rejected by check"),
            SessionEvent::OutcomeRecorded { responder } => self.outcomes.push(*responder),
            SessionEvent::OutcomeUndone => {
                self.outcomes.pop();
            }
            SessionEvent::Finalized { report } => self.final_report = Some(report.clone()),
        }
        self.status = match self.final_report {
            Some(_) => SessionStatus::Finalized,
            None => SessionStatus::from_outcomes(&self.design, &self.outcomes),
        };
        self.seq = record.seq;
        self.updated_at = record.timestamp;
        Ok(())
    }

    pub fn responders(&self) -> u32 {
        self.outcomes.iter().filter(|&&r| r).count() as u32
    }

    pub fn monitor(&self) -> TrialMonitor {
        TrialMonitor::from_outcomes(self.design.clone(), &self.outcomes).expect("session outcomes never pass a stop")
    }

    pub fn update(&self) -> MonitorUpdate {
        self.monitor().update()
    }

    /// Report at the terminal outcome, at the two-sided level `1 - 2 alpha`.
    pub fn compute_report(&self) -> ServiceResult<FinalReport> {
        let dist = SamplingDistribution::build(&self.design);
        Ok(final_report(&dist, self.outcomes.len() as u32, self.responders(), self.hypotheses.alpha)?)
    }
}
