//! Exact error rates, curtailment boundaries, design search and the
//! per-patient stopping rule.
//!
//! The efficacy threshold `u` is constant across stages. The trial stops
//! for efficacy at the first stage where the responder count reaches `u`,
//! so the stopping stage follows a negative binomial law and the error
//! rates are finite sums of its pmf. Futility stopping is deterministic
//! curtailment: stop as soon as `u` is out of reach even if every
//! remaining patient responds.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::comparators::score_sample_size;
use crate::error::{Error, Result};
use crate::numeric::ln_bernoulli_weight;

/// Null and alternative response rates with nominal error levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub p0: f64,
    pub p1: f64,
    /// One-sided nominal type I level.
    pub alpha: f64,
    /// Nominal type II level.
    pub beta: f64,
}

impl Hypotheses {
    pub fn new(p0: f64, p1: f64, alpha: f64, beta: f64) -> Result<Self> {
        let hyp = Hypotheses { p0, p1, alpha, beta };
        hyp.validate()?;
        Ok(hyp)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x.is_finite() && x > 0.0 && x < 1.0;
        if !open_unit(self.p0) {
            return Err(Error::validation(format!("p0 must lie in (0, 1), got {}", self.p0)));
        }
        if !open_unit(self.p1) {
            return Err(Error::validation(format!("p1 must lie in (0, 1), got {}", self.p1)));
        }
        if self.p0 >= self.p1 {
            return Err(Error::validation("p0 must be < p1"));
        }
        if !open_unit(self.alpha) {
            return Err(Error::validation(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !open_unit(self.beta) {
            return Err(Error::validation(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        Ok(())
    }

    pub fn power_target(&self) -> f64 {
        1.0 - self.beta
    }
}

/// Efficacy threshold `u`, maximum sample size `K` and the futility
/// boundaries `l_1..l_K` implied by curtailment.
///
/// A negative boundary means futility stopping is impossible at that stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DesignRepr", into = "DesignRepr")]
pub struct Design {
    u: u32,
    max_n: u32,
    futility: Vec<i32>,
}

#[derive(Serialize, Deserialize)]
struct DesignRepr {
    u: u32,
    #[serde(rename = "K")]
    max_n: u32,
    #[serde(default)]
    l: Vec<i32>,
}

impl TryFrom<DesignRepr> for Design {
    type Error = Error;

    fn try_from(repr: DesignRepr) -> Result<Self> {
        let design = Design::new(repr.u, repr.max_n)?;
        if !repr.l.is_empty() && repr.l != design.futility {
            return Err(Error::validation("futility boundaries do not match (u, K)"));
        }
        Ok(design)
    }
}

impl From<Design> for DesignRepr {
    fn from(d: Design) -> Self {
        DesignRepr { u: d.u, max_n: d.max_n, l: d.futility }
    }
}

impl Design {
    pub fn new(u: u32, max_n: u32) -> Result<Self> {
        let futility = futility_boundaries(u, max_n)?;
        Ok(Design { u, max_n, futility })
    }

    /// Efficacy threshold `u`.
    pub fn u(&self) -> u32 {
        self.u
    }

    /// Maximum sample size `K`.
    pub fn max_n(&self) -> u32 {
        self.max_n
    }

    /// Futility boundary `l_k` for 1-based stage `k`.
    ///
    /// # Panics
    ///
    /// If `k` is 0 or exceeds `K`.
    pub fn futility_bound(&self, k: u32) -> i32 {
        assert!(k >= 1 && k <= self.max_n, "stage {k} outside 1..={}", self.max_n);
        self.futility[(k - 1) as usize]
    }

    /// `l_1..l_K` in stage order.
    pub fn futility_bounds(&self) -> &[i32] {
        &self.futility
    }

    /// Earliest stage at which a futility stop is possible, `K - u + 1`.
    pub fn first_futility_stage(&self) -> u32 {
        self.max_n - self.u + 1
    }
}

/// Boundary decision after observing `s` responders among `k` patients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageDecision {
    Continue,
    StopEfficacy,
    StopFutility,
}

impl StageDecision {
    pub fn is_stop(self) -> bool {
        !matches!(self, StageDecision::Continue)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub alpha_actual: f64,
    pub power: f64,
    pub design: Design,
}

/// Probability that the `s`-th response arrives exactly at patient `k`:
/// `C(k-1, s-1) p^s (1-p)^(k-s)`.
pub fn nb_pmf(s: u32, k: u32, p: f64) -> Result<f64> {
    if s < 1 || s > k {
        return Err(Error::domain(format!("nb_pmf requires 1 <= s <= k, got s={s}, k={k}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(nb_pmf_unchecked(s, k, p))
}

pub(crate) fn nb_pmf_unchecked(s: u32, k: u32, p: f64) -> f64 {
    (ln_binomial((k - 1) as u64, (s - 1) as u64) + ln_bernoulli_weight(s, k - s, p)).exp()
}

/// `sum_{k=u}^{K} NB(u, k; p)`: probability of stopping for efficacy by `K`.
pub fn efficacy_probability(u: u32, max_n: u32, p: f64) -> f64 {
    (u..=max_n).map(|k| nb_pmf_unchecked(u, k, p)).sum()
}

pub fn operating_characteristics(u: u32, max_n: u32, hyp: &Hypotheses) -> Result<OperatingCharacteristics> {
    let design = Design::new(u, max_n)?;
    Ok(OperatingCharacteristics {
        alpha_actual: efficacy_probability(u, max_n, hyp.p0),
        power: efficacy_probability(u, max_n, hyp.p1),
        design,
    })
}

/// `l_K = u - 1`, `l_k = l_{k+1} - 1`, i.e. `l_k = u - 1 - (K - k)`.
pub fn futility_boundaries(u: u32, max_n: u32) -> Result<Vec<i32>> {
    if u < 1 || u > max_n {
        return Err(Error::domain(format!("design requires 1 <= u <= K, got u={u}, K={max_n}")));
    }
    Ok((1..=max_n).map(|k| u as i32 - 1 - (max_n - k) as i32).collect())
}

/// Applies the stopping rule at stage `k` with `s` responders.
///
/// For `k < u` efficacy is impossible and, because `l_k < 0` there too
/// whenever `K >= 2u - 1`, the result is usually `Continue`.
pub fn classify_state(design: &Design, k: u32, s: u32) -> Result<StageDecision> {
    if k < 1 || k > design.max_n {
        return Err(Error::domain(format!("stage {k} outside 1..={}", design.max_n)));
    }
    if s > k {
        return Err(Error::domain(format!("responders {s} exceed patients {k}")));
    }
    Ok(if s >= design.u {
        StageDecision::StopEfficacy
    } else if (s as i32) <= design.futility_bound(k) {
        StageDecision::StopFutility
    } else {
        StageDecision::Continue
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Largest efficacy threshold tried before giving up.
    pub u_cap: u32,
    /// Largest `K` tried; defaults to ten times the score-test sample size.
    pub k_cap: Option<u32>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { u_cap: 200, k_cap: None }
    }
}

/// Outcome of the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSearch {
    pub design: Design,
    pub alpha_actual: f64,
    pub power: f64,
    /// Every `K` meeting both error constraints at the chosen `u`.
    pub feasible_k: Vec<u32>,
    /// Largest `K` keeping the type I rate at or below nominal; the
    /// overshoot allowance for enrollment.
    pub k_alpha_max: u32,
}

pub fn search_design(hyp: &Hypotheses) -> Result<DesignSearch> {
    search_design_with(hyp, &SearchOptions::default())
}

/// Smallest `u` admitting some `K` with `alpha <= alpha_nom` and
/// `power >= 1 - beta_nom`; `K` is the smallest such value.
pub fn search_design_with(hyp: &Hypotheses, opts: &SearchOptions) -> Result<DesignSearch> {
    hyp.validate()?;
    let k_cap = opts.k_cap.unwrap_or_else(|| 10 * score_sample_size(hyp).max(1));
    let target = hyp.power_target();
    for u in 1..=opts.u_cap.min(k_cap) {
        // Both sums only grow with K, so the type I constraint bounds K from above.
        let (mut alpha, mut power) = (0.0, 0.0);
        let mut feasible = Vec::new();
        let mut k_alpha_max = None;
        for k in u..=k_cap {
            alpha += nb_pmf_unchecked(u, k, hyp.p0);
            power += nb_pmf_unchecked(u, k, hyp.p1);
            if alpha > hyp.alpha {
                break;
            }
            k_alpha_max = Some(k);
            if power >= target {
                feasible.push(k);
            }
        }
        if let (Some(&k), Some(k_alpha_max)) = (feasible.first(), k_alpha_max) {
            let oc = operating_characteristics(u, k, hyp)?;
            return Ok(DesignSearch {
                design: oc.design,
                alpha_actual: oc.alpha_actual,
                power: oc.power,
                feasible_k: feasible,
                k_alpha_max,
            });
        }
    }
    Err(Error::SearchExhausted(format!(
        "no (u, K) with u <= {} and K <= {k_cap} meets alpha <= {} and power >= {}",
        opts.u_cap, hyp.alpha, target
    )))
}

/// Canonical JSON form of a design together with its hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub p0: f64,
    pub p1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub u: u32,
    #[serde(rename = "K")]
    pub max_n: u32,
    pub l: Vec<i32>,
    pub alpha_actual: f64,
    pub power: f64,
}

impl DesignDocument {
    pub fn new(hyp: &Hypotheses, design: &Design) -> Self {
        DesignDocument {
            p0: hyp.p0,
            p1: hyp.p1,
            alpha: hyp.alpha,
            beta: hyp.beta,
            u: design.u(),
            max_n: design.max_n(),
            l: design.futility_bounds().to_vec(),
            alpha_actual: efficacy_probability(design.u(), design.max_n(), hyp.p0),
            power: efficacy_probability(design.u(), design.max_n(), hyp.p1),
        }
    }

    pub fn hypotheses(&self) -> Result<Hypotheses> {
        Hypotheses::new(self.p0, self.p1, self.alpha, self.beta)
    }

    pub fn design(&self) -> Result<Design> {
        let design = Design::new(self.u, self.max_n)?;
        if design.futility_bounds() != self.l.as_slice() {
            return Err(Error::validation("futility boundaries do not match (u, K)"));
        }
        Ok(design)
    }
}
