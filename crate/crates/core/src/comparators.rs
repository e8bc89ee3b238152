//! Reference designs: the exact single-stage binomial test, Simon's
//! two-stage designs and the asymptotic sample-size formulas.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exact::Hypotheses;
use crate::numeric::binom_pmf_vec;

/// Single-stage exact test: reject `H0` iff responders `>= r` out of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedDesign {
    pub n: u32,
    pub r: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimonCriterion {
    Minimax,
    Optimal,
}

/// Simon two-stage design: stop for futility after `n1` patients when
/// responses `<= r1`; otherwise enroll to `n` and reject `H0` iff total
/// responses `> r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimonDesign {
    pub n1: u32,
    pub r1: u32,
    pub n: u32,
    pub r: u32,
    pub criterion: SimonCriterion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimonCharacteristics {
    /// Probability of early termination after stage one.
    pub pet: f64,
    pub asn: f64,
    pub power: f64,
}

fn z_upper(q: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - q)
}

/// `ceil((z_a + z_b)^2 p1 (1 - p1) / (p1 - p0)^2)`.
pub fn wald_sample_size(hyp: &Hypotheses) -> u32 {
    let z = z_upper(hyp.alpha) + z_upper(hyp.beta);
    let n = z * z * hyp.p1 * (1.0 - hyp.p1) / (hyp.p1 - hyp.p0).powi(2);
    n.ceil() as u32
}

/// `ceil(((z_a sqrt(p0 q0) + z_b sqrt(p1 q1)) / (p1 - p0))^2)`.
pub fn score_sample_size(hyp: &Hypotheses) -> u32 {
    let num =
        z_upper(hyp.alpha) * (hyp.p0 * (1.0 - hyp.p0)).sqrt() + z_upper(hyp.beta) * (hyp.p1 * (1.0 - hyp.p1)).sqrt();
    (num / (hyp.p1 - hyp.p0)).powi(2).ceil() as u32
}

/// One-sample Wald statistic with the Agresti-Coull adjusted proportion,
/// finite even when `s = 0` or `s = k`.
pub fn agresti_coull_z(k: u32, s: u32, p0: f64, z_alpha: f64) -> Result<f64> {
    if k == 0 || s > k {
        return Err(Error::domain(format!("need k >= 1 and s <= k, got k={k}, s={s}")));
    }
    let k_f = k as f64;
    let z2 = z_alpha * z_alpha;
    let adjusted = (s as f64 / k_f + z2 / (2.0 * k_f)) / (1.0 + z2 / k_f);
    Ok(k_f.sqrt() * (adjusted - p0) / (adjusted * (1.0 - adjusted)).sqrt())
}

/// Upper tails `sf[t] = Pr[Bin(n, p) >= t]` for `t = 0..=n+1`.
fn upper_tails(n: u32, p: f64) -> Vec<f64> {
    let pmf = binom_pmf_vec(n, p);
    let mut sf = vec![0.0; n as usize + 2];
    for t in (0..=n as usize).rev() {
        sf[t] = sf[t + 1] + pmf[t];
    }
    sf
}

/// Smallest `r` with `Pr[Bin(n, p0) >= r] <= alpha`, and the power at `r`.
fn fixed_at(n: u32, hyp: &Hypotheses) -> (u32, f64) {
    let sf0 = upper_tails(n, hyp.p0);
    let r = (0..=n + 1).find(|&r| sf0[r as usize] <= hyp.alpha).expect("sf(n+1) = 0");
    let power = if r > n { 0.0 } else { upper_tails(n, hyp.p1)[r as usize] };
    (r, power)
}

/// Smallest `N` from which every larger sample size, up to ten times the
/// score-test size, keeps exact type I `<= alpha` and power `>= 1 - beta`.
///
/// Power of the exact test saw-tooths in `N`; this picks the point past
/// which enrollment overshoot never drops below nominal power.
pub fn fixed_exact_design(hyp: &Hypotheses) -> Result<FixedDesign> {
    hyp.validate()?;
    let cap = 10 * score_sample_size(hyp).max(1);
    let target = hyp.power_target();
    let feasible: Vec<bool> = (1..=cap).into_par_iter().map(|n| fixed_at(n, hyp).1 >= target).collect();
    if !feasible.last().copied().unwrap_or(false) {
        return Err(Error::SearchExhausted(format!("no exact single-stage design with N <= {cap}")));
    }
    let tail_start = feasible.iter().rposition(|&ok| !ok).map_or(1, |i| i as u32 + 2);
    let (r, _) = fixed_at(tail_start, hyp);
    Ok(FixedDesign { n: tail_start, r })
}

/// Binomial tables for one response rate, indexed by sample size.
struct Tables {
    pmf: Vec<Vec<f64>>,
    sf: Vec<Vec<f64>>,
    cdf: Vec<Vec<f64>>,
}

impl Tables {
    fn new(max_n: u32, p: f64) -> Self {
        let pmf: Vec<Vec<f64>> = (0..=max_n).map(|n| binom_pmf_vec(n, p)).collect();
        let sf = (0..=max_n).map(|n| upper_tails(n, p)).collect();
        let cdf = pmf
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, &x| {
                        *acc += x;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Tables { pmf, sf, cdf }
    }

    /// `Pr[X1 > r1, X1 + X2 > r]` with `X1 ~ Bin(n1)`, `X2 ~ Bin(n2)`.
    fn reject(&self, n1: u32, r1: u32, n2: u32, r: u32) -> f64 {
        let sf2 = &self.sf[n2 as usize];
        ((r1 + 1)..=n1)
            .map(|x1| {
                let need = (r + 1).saturating_sub(x1) as usize;
                self.pmf[n1 as usize][x1 as usize] * sf2.get(need).copied().unwrap_or(0.0)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    design: (u32, u32, u32, u32),
    en0: f64,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        let (a, b) = (self.design, other.design);
        (self.en0, a.2, a.0) < (other.en0, b.2, b.0)
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.better_than(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Best design with total size exactly `n`, ignoring anything whose null
/// expected size exceeds `bound`.
fn best_for_n(n: u32, hyp: &Hypotheses, t0: &Tables, t1: &Tables, bound: f64) -> Option<Candidate> {
    let target = hyp.power_target();
    let mut best: Option<Candidate> = None;
    for n1 in 1..n {
        let n2 = n - n1;
        if n1 as f64 > bound {
            break;
        }
        for r1 in 0..n1 {
            // Stage-one futility under p1 caps the attainable power.
            if t1.cdf[n1 as usize][r1 as usize] > hyp.beta {
                break;
            }
            let pet0 = t0.cdf[n1 as usize][r1 as usize];
            let en0 = n1 as f64 + (1.0 - pet0) * n2 as f64;
            let limit = best.map_or(bound, |b| b.en0.min(bound));
            if en0 > limit {
                continue;
            }
            // Type I error falls as r grows; take the smallest admissible r > r1.
            let (mut lo, mut hi) = (r1 + 1, n - 1);
            if lo > hi || t0.reject(n1, r1, n2, hi) > hyp.alpha {
                continue;
            }
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if t0.reject(n1, r1, n2, mid) <= hyp.alpha {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            let r = lo;
            if t1.reject(n1, r1, n2, r) < target {
                continue;
            }
            let cand = Candidate { design: (n1, r1, n, r), en0 };
            best = pick(best, Some(cand));
        }
    }
    best
}

/// Exhaustive search over `(n1, r1, n, r)` with exact two-stage error
/// rates, `n` capped at three times the score-test size.
pub fn simon_search(hyp: &Hypotheses, criterion: SimonCriterion) -> Result<SimonDesign> {
    hyp.validate()?;
    let n_max = 3 * score_sample_size(hyp).max(1);
    let t0 = Tables::new(n_max, hyp.p0);
    let t1 = Tables::new(n_max, hyp.p1);

    let minimax = (2..=n_max).find_map(|n| best_for_n(n, hyp, &t0, &t1, f64::INFINITY));
    let Some(minimax) = minimax else {
        return Err(Error::SearchExhausted(format!("no Simon design with n <= {n_max}")));
    };
    let chosen = match criterion {
        SimonCriterion::Minimax => minimax,
        SimonCriterion::Optimal => {
            let first_n = minimax.design.2;
            (first_n..=n_max)
                .into_par_iter()
                .map(|n| best_for_n(n, hyp, &t0, &t1, minimax.en0))
                .reduce(|| None, pick)
                .unwrap_or(minimax)
        }
    };
    let (n1, r1, n, r) = chosen.design;
    Ok(SimonDesign { n1, r1, n, r, criterion })
}

pub fn simon_characteristics(design: &SimonDesign, p: f64) -> SimonCharacteristics {
    let stage1 = binom_pmf_vec(design.n1, p);
    let pet: f64 = stage1[..=design.r1 as usize].iter().sum::<f64>().min(1.0);
    let n2 = design.n - design.n1;
    let sf2 = upper_tails(n2, p);
    let power = ((design.r1 + 1)..=design.n1)
        .map(|x1| {
            let need = (design.r + 1).saturating_sub(x1) as usize;
            stage1[x1 as usize] * sf2.get(need).copied().unwrap_or(0.0)
        })
        .sum();
    SimonCharacteristics { pet, asn: design.n1 as f64 + (1.0 - pet) * n2 as f64, power }
}
