//! Exact terminal distribution of the stopping point `(M, S)`.
//!
//! Path counts come from a lattice recursion over continuation states
//! `l_k < s < u`; a trial stops at `(m, u)` when the `u`-th response
//! arrives at patient `m`, and at `(m, l_m)` when a non-response at patient
//! `m` drops the count onto the futility boundary. Because the boundaries
//! rise by exactly one per stage, each stage has at most one futility
//! outcome.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{classify_state, Design, StageDecision};
use crate::numeric::ln_bernoulli_weight;

/// Largest `K` accepted by the `2^K` enumeration oracle.
pub const ORACLE_MAX_K: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Futility,
    Efficacy,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TerminalOutcome {
    /// Stopping stage, equal to the number of enrolled patients.
    pub m: u32,
    /// Responders at the stop.
    pub s: u32,
    pub kind: OutcomeKind,
    /// Number of response sequences that first stop at `(m, s)`.
    pub path_count: BigUint,
}

impl TerminalOutcome {
    /// Sort key for the stage-wise ordering: futility stops by ascending
    /// stage, then efficacy stops by descending stage.
    pub fn stagewise_key(&self) -> (OutcomeKind, i64) {
        match self.kind {
            OutcomeKind::Futility => (OutcomeKind::Futility, self.m as i64),
            OutcomeKind::Efficacy => (OutcomeKind::Efficacy, -(self.m as i64)),
        }
    }

    pub fn naive_estimate(&self) -> f64 {
        self.s as f64 / self.m as f64
    }
}

#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    design: Design,
    support: Vec<TerminalOutcome>,
    ln_counts: Vec<f64>,
    /// `continuation[k][s]` for `k < K`, `s < u`; zero off the continuation region.
    continuation: Vec<Vec<BigUint>>,
    index: HashMap<(u32, u32), usize>,
}

fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().map_or(f64::INFINITY, f64::ln);
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

impl SamplingDistribution {
    pub fn build(design: &Design) -> Self {
        let u = design.u() as usize;
        let big_k = design.max_n();
        let mut continuation = vec![vec![BigUint::zero(); u]; big_k as usize];
        continuation[0][0] = BigUint::one();
        for k in 1..big_k {
            let low = (design.futility_bound(k) + 1).max(0) as usize;
            for s in low..u.min(k as usize + 1) {
                let stay = continuation[k as usize - 1][s].clone();
                let step = if s > 0 { continuation[k as usize - 1][s - 1].clone() } else { BigUint::zero() };
                continuation[k as usize][s] = stay + step;
            }
        }

        let mut support = Vec::new();
        for m in design.first_futility_stage()..=big_k {
            let s = design.futility_bound(m) as u32;
            support.push(TerminalOutcome {
                m,
                s,
                kind: OutcomeKind::Futility,
                path_count: continuation[m as usize - 1][s as usize].clone(),
            });
        }
        for m in (design.u()..=big_k).rev() {
            support.push(TerminalOutcome {
                m,
                s: design.u(),
                kind: OutcomeKind::Efficacy,
                path_count: continuation[m as usize - 1][u - 1].clone(),
            });
        }
        debug_assert!(support.iter().all(|o| !o.path_count.is_zero()));

        let ln_counts = support.iter().map(|o| ln_big(&o.path_count)).collect();
        let index = support.iter().enumerate().map(|(i, o)| ((o.m, o.s), i)).collect();
        SamplingDistribution { design: design.clone(), support, ln_counts, continuation, index }
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Terminal outcomes in stage-wise order.
    pub fn support(&self) -> &[TerminalOutcome] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Number of paths reaching continuation state `(k, s)`, zero elsewhere.
    pub fn continuation_count(&self, k: u32, s: u32) -> BigUint {
        self.continuation.get(k as usize).and_then(|row| row.get(s as usize)).cloned().unwrap_or_default()
    }

    /// Position of `(m, s)` in the stage-wise ordering.
    pub fn rank(&self, m: u32, s: u32) -> Result<usize> {
        self.index.get(&(m, s)).copied().ok_or(Error::NotInSupport { m, s })
    }

    pub fn outcome(&self, m: u32, s: u32) -> Result<&TerminalOutcome> {
        Ok(&self.support[self.rank(m, s)?])
    }

    pub fn contains(&self, m: u32, s: u32) -> bool {
        self.index.contains_key(&(m, s))
    }

    /// `f(m, s | p) = c_{m,s} p^s (1-p)^(m-s)`.
    pub fn terminal_pmf(&self, m: u32, s: u32, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability must lie in [0, 1], got {p}")));
        }
        Ok(self.pmf_at(self.rank(m, s)?, p))
    }

    /// pmf of the outcome at stage-wise position `rank`.
    pub fn pmf_at(&self, rank: usize, p: f64) -> f64 {
        let o = &self.support[rank];
        (self.ln_counts[rank] + ln_bernoulli_weight(o.s, o.m - o.s, p)).exp()
    }

    /// pmf over the whole support, in stage-wise order.
    pub fn pmf_vector(&self, p: f64) -> Vec<f64> {
        (0..self.support.len()).map(|i| self.pmf_at(i, p)).collect()
    }

    pub fn stagewise_compare(&self, a: &TerminalOutcome, b: &TerminalOutcome) -> Result<Ordering> {
        let (ra, rb) = (self.rank(a.m, a.s), self.rank(b.m, b.s));
        match (ra, rb) {
            (Ok(ra), Ok(rb)) if self.support[ra] == *a && self.support[rb] == *b => Ok(ra.cmp(&rb)),
            _ => Err(Error::MixedDesign),
        }
    }

    /// `E[g(M, S) | p]`.
    pub fn expectation<G: Fn(&TerminalOutcome) -> f64>(&self, p: f64, g: G) -> f64 {
        self.support.iter().enumerate().map(|(i, o)| g(o) * self.pmf_at(i, p)).sum()
    }

    /// Average sample number at `p`.
    pub fn expected_sample_size(&self, p: f64) -> f64 {
        self.expectation(p, |o| o.m as f64)
    }

    /// Probability of stopping for efficacy at `p`.
    pub fn exact_power(&self, p: f64) -> f64 {
        self.expectation(p, |o| (o.kind == OutcomeKind::Efficacy) as u8 as f64)
    }

    /// `E[S / M | p]`.
    pub fn expected_naive_estimate(&self, p: f64) -> f64 {
        self.expectation(p, TerminalOutcome::naive_estimate)
    }

    /// Writes the support table with pmf columns at each `p` as CSV.
    pub fn write_csv<W: Write>(&self, out: W, ps: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["m".to_string(), "s".into(), "kind".into(), "c_ms".into()];
        header.extend(ps.iter().map(|p| format!("f({p})")));
        w.write_record(&header)?;
        for (i, o) in self.support.iter().enumerate() {
            let kind = match o.kind {
                OutcomeKind::Efficacy => "efficacy",
                OutcomeKind::Futility => "futility",
            };
            let mut rec = vec![o.m.to_string(), o.s.to_string(), kind.to_string(), o.path_count.to_string()];
            rec.extend(ps.iter().map(|&p| self.pmf_at(i, p).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })?;
        Ok(())
    }
}

fn check_oracle_size(design: &Design) -> Result<()> {
    if design.max_n() > ORACLE_MAX_K {
        return Err(Error::SizeLimit { k: design.max_n(), limit: ORACLE_MAX_K });
    }
    Ok(())
}

/// Stopping point of one complete response sequence (bit `i` = patient `i + 1`).
fn stop_of(design: &Design, bits: u32) -> (u32, u32) {
    let mut s = 0;
    for k in 1..=design.max_n() {
        s += (bits >> (k - 1)) & 1;
        if classify_state(design, k, s).expect("valid stage") != StageDecision::Continue {
            return (k, s);
        }
    }
    unreachable!("every sequence stops by stage K")
}

/// Stopping probabilities by exhaustive enumeration of all `2^K`
/// response sequences, each weighted by its full-length probability.
pub fn brute_force_oracle(design: &Design, p: f64) -> Result<BTreeMap<(u32, u32), f64>> {
    check_oracle_size(design)?;
    let big_k = design.max_n();
    let mut mass = BTreeMap::new();
    for bits in 0..(1u32 << big_k) {
        let ones = bits.count_ones();
        let w = ln_bernoulli_weight(ones, big_k - ones, p).exp();
        *mass.entry(stop_of(design, bits)).or_insert(0.0) += w;
    }
    Ok(mass)
}

/// Number of length-`K` sequences whose stopping point is `(m, s)`.
///
/// Each equals `c_{m,s} 2^(K-m)`; the counts sum to `2^K`.
pub fn path_census(design: &Design) -> Result<BTreeMap<(u32, u32), u64>> {
    check_oracle_size(design)?;
    let mut census = BTreeMap::new();
    for bits in 0..(1u32 << design.max_n()) {
        *census.entry(stop_of(design, bits)).or_insert(0) += 1;
    }
    Ok(census)
}
