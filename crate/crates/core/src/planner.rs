//! Failure probabilities and parameter selection.
//!
//! `Y` is the event that one agent's window of `m` states holds more than
//! `alpha1 * m` Byzantine steps; `Z` is the event that more than
//! `alpha2 * N` agents have `Y`. The window starts `m0` steps after a
//! worst-case Byzantine state.

use serde::{Deserialize, Serialize};

use crate::error::{integral_count, Error, Result};
use crate::estimator::c_alpha;

fn check_probs(p_b: f64, p_t: f64) -> Result<()> {
    if !(p_b > 0.0 && p_b < p_t && p_t < 1.0) {
        return Err(Error::InvalidInput(format!(
            "transition probabilities must satisfy 0 < p_b < p_t < 1 (p_b = {p_b}, p_t = {p_t})"
        )));
    }
    Ok(())
}

fn count(alpha: f64, k: usize, name: &str) -> Result<usize> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidInput(format!("{name} must lie in [0, 1/2), got {alpha}")));
    }
    integral_count(alpha, k).ok_or_else(|| {
        Error::InvalidInput(format!("{name} * {k} must be a whole number ({name} = {alpha})"))
    })
}

/// `ln(n!)` for `n = 0..=max`.
fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=max {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

fn ln_choose(lf: &[f64], n: usize, k: usize) -> f64 {
    lf[n] - lf[k] - lf[n - k]
}

/// `sum_{k=lo}^{n} C(n,k) p^k (1-p)^(n-k)`, accumulated in log space.
pub fn binomial_upper_tail(n: usize, lo: usize, p: f64) -> f64 {
    if lo > n {
        return 0.0;
    }
    if lo == 0 {
        return 1.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let lf = ln_factorials(n);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (lo..=n)
        .map(|k| ln_choose(&lf, n, k) + k as f64 * lp + (n - k) as f64 * lq)
        .collect();
    log_sum_exp(&terms).exp().min(1.0)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// A bound that may exceed one before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampedBound {
    pub raw: f64,
    pub value: f64,
    pub vacuous: bool,
}

impl ClampedBound {
    fn new(raw: f64) -> Self {
        let value = raw.clamp(0.0, 1.0);
        Self { raw, value, vacuous: raw >= 1.0 }
    }
}

/// `K(m0) = sqrt(1 + (1 - p_b - p_t)^(2 m0) p_t / p_b)`.
pub fn k_m0(p_b: f64, p_t: f64, m0: usize) -> f64 {
    let lambda = 1.0 - p_b - p_t;
    (1.0 + lambda.powi(2 * m0 as i32) * p_t / p_b).sqrt()
}

/// Chernoff-type bound on `P(Y)` for Markov chains.
pub fn p_y_chernoff(p_b: f64, p_t: f64, m: usize, alpha1: f64, m0: usize) -> Result<ClampedBound> {
    check_probs(p_b, p_t)?;
    let gap = p_b + p_t;
    let pi_b = p_b / gap;
    if alpha1 <= pi_b {
        return Err(Error::Precondition(format!(
            "alpha1 = {alpha1} must exceed the stationary Byzantine fraction {pi_b}"
        )));
    }
    let exponent = -gap * m as f64 * (alpha1 - pi_b).powi(2) / 12.0 + gap / 5.0;
    Ok(ClampedBound::new(k_m0(p_b, p_t, m0) * exponent.exp()))
}

/// Binomial upper tail `P(more than alpha2 * N of N agents fail)` given a
/// per-agent failure probability.
pub fn p_z_from_p_y(p_y: f64, n_agents: usize, alpha2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_y) {
        return Err(Error::InvalidInput(format!("p_y must lie in [0, 1], got {p_y}")));
    }
    let lo = count(alpha2, n_agents, "alpha2")? + 1;
    Ok(binomial_upper_tail(n_agents, lo, p_y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingBound {
    pub bound: f64,
    /// Whether `alpha2 > p_y`, without which the inequality says nothing.
    pub applicable: bool,
    /// Whether the bound is below `1 / (1 + kappa)`.
    pub certified: bool,
}

/// `exp(-2 (alpha2 - p_y)^2 N)` and the strongly convex certification.
pub fn p_z_hoeffding(p_y: f64, n_agents: usize, alpha2: f64, kappa: f64) -> HoeffdingBound {
    if alpha2 <= p_y {
        return HoeffdingBound { bound: 1.0, applicable: false, certified: false };
    }
    let bound = (-2.0 * (alpha2 - p_y).powi(2) * n_agents as f64).exp().min(1.0);
    HoeffdingBound { bound, applicable: true, certified: bound < 1.0 / (1.0 + kappa) }
}

/// Real-valued right-hand side of the minimum window condition.
// negated comparisons so NaN inputs are rejected too
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn min_window_bound(alpha1: f64, alpha2: f64, p_b: f64, p_t: f64, kappa: f64, n_agents: usize) -> Result<f64> {
    check_probs(p_b, p_t)?;
    let gap = p_b + p_t;
    let pi_b = p_b / gap;
    let slack = ((1.0 + kappa).ln() / (2.0 * n_agents as f64)).sqrt();
    if !(alpha2 > slack) {
        return Err(Error::Infeasible(format!(
            "alpha2 = {alpha2} must exceed sqrt(ln(1 + kappa) / (2N)) = {slack:.6} (kappa = {kappa}, N = {n_agents})"
        )));
    }
    if !(alpha1 > pi_b) {
        return Err(Error::Infeasible(format!(
            "alpha1 = {alpha1} must exceed the stationary Byzantine fraction {pi_b:.6}"
        )));
    }
    let arg = gap * (gap / 5.0).exp() / (p_b * (alpha2 - slack));
    Ok(12.0 * arg.ln() / (gap * (alpha1 - pi_b).powi(2)))
}

/// Smallest window strictly above [`min_window_bound`] with `alpha1 * m`
/// integral.
pub fn min_window(alpha1: f64, alpha2: f64, p_b: f64, p_t: f64, kappa: f64, n_agents: usize) -> Result<usize> {
    let rhs = min_window_bound(alpha1, alpha2, p_b, p_t, kappa, n_agents)?;
    if !rhs.is_finite() || rhs > 1e12 {
        return Err(Error::Infeasible(format!("required window {rhs} is too large")));
    }
    let start = if rhs < 1.0 { 1 } else { rhs.floor() as usize + 1 };
    (start..start + 1_000_000)
        .find(|&m| integral_count(alpha1, m).is_some())
        .ok_or_else(|| Error::Infeasible(format!("no window near {start} makes alpha1 * m integral")))
}

/// `P(Y)` without temporal averaging: the single state `m0` steps after a
/// Byzantine start is Byzantine.
pub fn p_y_special_m1(p_b: f64, p_t: f64, m0: usize) -> f64 {
    let lambda = 1.0 - p_b - p_t;
    (p_b + p_t * lambda.powi(m0 as i32)) / (p_b + p_t)
}

/// `P(Y)` when states are i.i.d. Bernoulli(`p_b`) (`p_b + p_t = 1`).
pub fn p_y_independent(p_b: f64, p_t: f64, m: usize, alpha1: f64) -> Result<f64> {
    if (p_b + p_t - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "independent corruption needs p_b + p_t = 1 (got {})",
            p_b + p_t
        )));
    }
    if m == 0 {
        return Err(Error::InvalidInput("window length must be positive".into()));
    }
    let lo = count(alpha1, m, "alpha1")? + 1;
    Ok(binomial_upper_tail(m, lo, p_b))
}

/// Distribution `(P(s = 0), P(s = 1))` of the first window state, `m0`
/// steps after a Byzantine state.
pub fn pi_m0(p_b: f64, p_t: f64, m0: usize) -> (f64, f64) {
    let gap = p_b + p_t;
    let decay = (1.0 - gap).powi(m0 as i32);
    ((p_t - p_t * decay) / gap, (p_b + p_t * decay) / gap)
}

/// `P(exactly k Byzantine states among m | first state s)` for `k = 0..=m`.
///
/// A path with `k` ones is a sequence of alternating runs. With `r1` runs of
/// ones and `r0` runs of zeros there are `C(k-1, r1-1) C(m-k-1, r0-1)` such
/// paths, each with the same transition product.
pub fn window_count_distribution(p_b: f64, p_t: f64, m: usize, first: u8) -> Vec<f64> {
    let lf = ln_factorials(m);
    let (l_stay0, l_stay1) = ((-p_b).ln_1p(), (-p_t).ln_1p());
    let (l_up, l_down) = (p_b.ln(), p_t.ln());
    let mut out = vec![0.0; m + 1];
    for (k, slot) in out.iter_mut().enumerate() {
        let zeros = m - k;
        if (first == 1 && k == 0) || (first == 0 && zeros == 0) {
            continue;
        }
        if k == 0 || zeros == 0 {
            // a single run of the first state
            *slot = if k == 0 { l_stay0 * (m - 1) as f64 } else { l_stay1 * (m - 1) as f64 }.exp();
            continue;
        }
        let mut terms = Vec::new();
        for r1 in 1..=k {
            // runs alternate, so r0 is r1 - 1, r1 or r1 + 1 depending on the ends
            for r0 in r1.saturating_sub(1).max(1)..=(r1 + 1).min(zeros) {
                let (n01, n10) = match first {
                    0 if r0 == r1 || r0 == r1 + 1 => (r1, r0 - 1),
                    1 if r0 == r1 || r0 + 1 == r1 => (r1 - 1, r0),
                    _ => continue,
                };
                terms.push(
                    ln_choose(&lf, k - 1, r1 - 1)
                        + ln_choose(&lf, zeros - 1, r0 - 1)
                        + (zeros - r0) as f64 * l_stay0
                        + (k - r1) as f64 * l_stay1
                        + n01 as f64 * l_up
                        + n10 as f64 * l_down,
                );
            }
        }
        *slot = log_sum_exp(&terms).exp();
    }
    out
}

/// Exact `P(Y)` for the two-state chain.
pub fn p_y_exact_markov(p_b: f64, p_t: f64, m: usize, alpha1: f64, m0: usize) -> Result<f64> {
    check_probs(p_b, p_t)?;
    p_y_exact_unchecked(p_b, p_t, m, alpha1, m0)
}

/// Same as [`p_y_exact_markov`] but accepts any `0 < p_b, p_t < 1`, which
/// covers the independent case `p_b + p_t = 1` with `p_b > p_t`.
pub fn p_y_exact_unchecked(p_b: f64, p_t: f64, m: usize, alpha1: f64, m0: usize) -> Result<f64> {
    if !(p_b > 0.0 && p_b < 1.0 && p_t > 0.0 && p_t < 1.0) {
        return Err(Error::InvalidInput(format!("p_b and p_t must lie in (0, 1) (got {p_b}, {p_t})")));
    }
    if m == 0 {
        return Err(Error::InvalidInput("window length must be positive".into()));
    }
    let lo = count(alpha1, m, "alpha1")? + 1;
    let (pi0, pi1) = pi_m0(p_b, p_t, m0);
    let tail = |s: u8| window_count_distribution(p_b, p_t, m, s)[lo..].iter().sum::<f64>();
    Ok((tail(0) * pi0 + tail(1) * pi1).clamp(0.0, 1.0))
}

/// `P(Y)` by summing the transition-product weight of every one of the
/// `2^m` state paths. Exponential in `m`; used as a cross-check.
pub fn p_y_path_enumeration(p_b: f64, p_t: f64, m: usize, alpha1: f64, m0: usize) -> Result<f64> {
    if m == 0 || m > 20 {
        return Err(Error::InvalidInput(format!("path enumeration needs 1 <= m <= 20, got {m}")));
    }
    let limit = count(alpha1, m, "alpha1")? as u32;
    let (pi0, pi1) = pi_m0(p_b, p_t, m0);
    let trans = |a: u32, b: u32| match (a, b) {
        (0, 0) => 1.0 - p_b,
        (0, _) => p_b,
        (_, 0) => p_t,
        _ => 1.0 - p_t,
    };
    let mut total = 0.0;
    for path in 0u32..(1 << m) {
        if path.count_ones() <= limit {
            continue;
        }
        let bit = |i: usize| (path >> i) & 1;
        let mut w = if bit(0) == 1 { pi1 } else { pi0 };
        for i in 1..m {
            w *= trans(bit(i - 1), bit(i));
        }
        total += w;
    }
    Ok(total)
}

/// Inputs for a full planning report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub m: usize,
    #[serde(default)]
    pub m0: usize,
    pub n_agents: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub p_b: f64,
    pub p_t: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default, rename = "L")]
    pub l: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Per-agent batch size.
    #[serde(default)]
    pub b: Option<usize>,
    /// Problem dimension, used by the trimming constants.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Sub-gamma scale parameter of the gradient noise.
    #[serde(default)]
    pub subgamma_a: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        check_probs(self.p_b, self.p_t)?;
        if self.m == 0 || self.n_agents == 0 {
            return Err(Error::InvalidInput("m and n_agents must be positive".into()));
        }
        count(self.alpha1, self.m, "alpha1")?;
        count(self.alpha2, self.n_agents, "alpha2")?;
        Ok(())
    }

    /// `kappa`, or `L / mu` when both are given.
    pub fn kappa(&self) -> Option<f64> {
        self.kappa.or(match (self.l, self.mu) {
            (Some(l), Some(mu)) if mu > 0.0 => Some(l / mu),
            _ => None,
        })
    }
}

/// Closed-form constants of the convergence theorems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub c_alpha1: f64,
    pub c_alpha2: f64,
    pub c0: Option<f64>,
    pub c_bar_cvx: Option<f64>,
    pub c_bar_noncvx: Option<f64>,
    pub gamma_max_saa: Option<f64>,
    pub gamma_max_sa: Option<f64>,
    /// Advisory size of the limiting neighborhood of `E||x - x*||^2`;
    /// only reported when `c0 > 0`.
    pub neighborhood_estimate: Option<f64>,
}

pub fn theorem_constants(inputs: &BoundInputs, p_z: f64) -> Result<TheoremConstants> {
    let d = inputs.dim.unwrap_or(1);
    let c1 = c_alpha(inputs.alpha1, d)?;
    let c2 = c_alpha(inputs.alpha2, d)?;
    let m = inputs.m as f64;
    let horizon = (inputs.m - 1 + inputs.m0) as f64;
    let trim = 1.0 + c1 + 2.0 * c2 * (c1 + 1.0);
    let kappa = inputs.kappa();
    let n = inputs.n_agents as f64;

    let c0 = match (kappa, inputs.radius) {
        (Some(k), Some(r)) => Some(2.0 / (k * r) * (1.0 - p_z * (1.0 + k))),
        _ => None,
    };
    let c_bar_cvx = kappa.map(|k| 1.0 + 4.0 * p_z * (1.0 + 1.0 / k) * horizon + 4.0 * k * (m - 1.0) * trim);
    let c_bar_noncvx = inputs.l.map(|l| l * (0.5 + 4.0 * horizon * p_z + 2.0 * (m - 1.0) * trim));

    let (mut gamma_max_saa, mut gamma_max_sa, mut neighborhood_estimate) = (None, None, None);
    if let (Some(cb), Some(mu), Some(sigma), Some(b)) = (c_bar_cvx, inputs.mu, inputs.sigma, inputs.b) {
        let b = b as f64;
        let base = (1.0 - inputs.alpha2) * n * b;
        gamma_max_saa = Some(4.0 * sigma / (cb * mu * base.sqrt()));
        gamma_max_sa = Some(4.0 * sigma / (cb * mu * (base * (1.0 - inputs.alpha1) * m).sqrt()));
        if let (Some(c0), Some(gamma)) = (c0, inputs.gamma) {
            if c0 > 0.0 {
                let a = inputs.subgamma_a.unwrap_or(0.0);
                let log_term = (2.0 * (1.0 - inputs.alpha2) * n * d as f64).ln();
                let drift = cb * gamma
                    + 4.0 * sigma / (mu * base.sqrt())
                    + 8.0 * c2 / mu * a / b * log_term
                    + 8.0 * c2 / mu * sigma * (2.0 * log_term).sqrt() / b.sqrt();
                neighborhood_estimate = Some(drift / c0);
            }
        }
    }
    Ok(TheoremConstants {
        c_alpha1: c1,
        c_alpha2: c2,
        c0,
        c_bar_cvx,
        c_bar_noncvx,
        gamma_max_saa,
        gamma_max_sa,
        neighborhood_estimate,
    })
}

/// Everything the planner reports for one parameter choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Exact `P(Y)`; drives `p_z_binomial` and the theorem constants.
    pub p_y: f64,
    /// Chernoff form, absent when `alpha1` does not exceed the stationary
    /// Byzantine fraction.
    pub p_y_chernoff: Option<ClampedBound>,
    pub k_m0: f64,
    pub p_z_binomial: f64,
    pub p_z_hoeffding: f64,
    pub hoeffding_applicable: bool,
    pub satisfies_strongly_convex: Option<bool>,
    pub satisfies_nonconvex: bool,
    pub kappa: Option<f64>,
    pub min_window: Option<usize>,
    pub min_window_note: Option<String>,
    pub constants: TheoremConstants,
}

pub fn plan(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let BoundInputs { m, m0, n_agents, alpha1, alpha2, p_b, p_t, .. } = *inputs;
    let p_y = p_y_exact_markov(p_b, p_t, m, alpha1, m0)?;
    let p_y_chernoff = match p_y_chernoff(p_b, p_t, m, alpha1, m0) {
        Ok(v) => Some(v),
        Err(Error::Precondition(_)) => None,
        Err(e) => return Err(e),
    };
    let p_z = p_z_from_p_y(p_y, n_agents, alpha2)?;
    let kappa = inputs.kappa();
    let hoeffding = p_z_hoeffding(p_y, n_agents, alpha2, kappa.unwrap_or(0.0));
    let (min_window, min_window_note) = match kappa {
        Some(k) => match min_window(alpha1, alpha2, p_b, p_t, k, n_agents) {
            Ok(w) => (Some(w), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, Some("kappa unknown".into())),
    };
    Ok(BoundReport {
        p_y,
        p_y_chernoff,
        k_m0: k_m0(p_b, p_t, m0),
        p_z_binomial: p_z,
        p_z_hoeffding: hoeffding.bound,
        hoeffding_applicable: hoeffding.applicable,
        satisfies_strongly_convex: kappa.map(|k| p_z < 1.0 / (1.0 + k)),
        satisfies_nonconvex: p_z < 0.5,
        kappa,
        min_window,
        min_window_note,
        constants: theorem_constants(inputs, p_z)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn enumerate_agents(p: f64, n: usize, alpha2: f64) -> f64 {
        let limit = (alpha2 * n as f64).round() as u32;
        (0u32..(1 << n))
            .filter(|s| s.count_ones() > limit)
            .map(|s| p.powi(s.count_ones() as i32) * (1.0 - p).powi((n as u32 - s.count_ones()) as i32))
            .sum()
    }

    #[test]
    fn k_examples() {
        assert!((k_m0(0.025, 0.1, 0) - 5f64.sqrt()).abs() < 1e-15);
        assert!((k_m0(0.025, 0.1, 5000) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chernoff_precondition_and_monotonicity() {
        assert!(matches!(p_y_chernoff(0.025, 0.1, 10, 0.2, 0), Err(Error::Precondition(_))));
        let mut prev = f64::INFINITY;
        for m in (10..2000).step_by(10) {
            let v = p_y_chernoff(0.025, 0.1, m, 0.3, 0).unwrap();
            assert!(v.raw < prev);
            assert!(v.value <= 1.0);
            prev = v.raw;
        }
        let small = p_y_chernoff(0.025, 0.1, 10, 0.3, 0).unwrap();
        assert!(small.vacuous && small.value == 1.0 && small.raw > 1.0);
    }

    #[test]
    fn p_z_edges_and_enumeration() {
        assert_eq!(p_z_from_p_y(0.0, 10, 0.1).unwrap(), 0.0);
        assert_eq!(p_z_from_p_y(1.0, 10, 0.4).unwrap(), 1.0);
        let e = enumerate_agents(0.05, 10, 0.1);
        assert!((p_z_from_p_y(0.05, 10, 0.1).unwrap() - e).abs() < 1e-12);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = r.random_range(1..=12usize);
            let trim = r.random_range(0..=(n - 1) / 2);
            let alpha2 = trim as f64 / n as f64;
            let p: f64 = r.random();
            let got = p_z_from_p_y(p, n, alpha2).unwrap();
            assert!((got - enumerate_agents(p, n, alpha2)).abs() < 1e-12, "n {n} trim {trim} p {p}");
        }
        assert!(p_z_from_p_y(0.1, 10, 0.15).is_err());
    }

    #[test]
    fn large_binomial_tail_is_finite() {
        let v = binomial_upper_tail(10_000, 5001, 0.5);
        assert!((v - 0.5).abs() < 0.01);
        assert!(binomial_upper_tail(10_000, 3000, 0.1) < 1e-300);
    }

    #[test]
    fn hoeffding_examples() {
        let h = p_z_hoeffding(0.3, 10, 0.3, 10.0);
        assert_eq!(h.bound, 1.0);
        assert!(!h.certified && !h.applicable);

        let (n, kappa) = (10, 10.0);
        let gap = ((1.0f64 + kappa).ln() / (2.0 * n as f64)).sqrt();
        let h = p_z_hoeffding(0.05, n, 0.05 + gap, kappa);
        assert!((h.bound - 1.0 / 11.0).abs() < 1e-12);

        let h = p_z_hoeffding(0.0, 10, 0.5, 10.0);
        assert!((h.bound - (-5.0f64).exp()).abs() < 1e-15);
        assert!(h.certified);
    }

    #[test]
    fn special_m1_edges() {
        assert!((p_y_special_m1(0.025, 0.1, 0) - 1.0).abs() < 1e-15);
        assert!((p_y_special_m1(0.025, 0.1, 10_000) - 0.2).abs() < 1e-15);
        for m0 in 0..30 {
            let exact = p_y_exact_markov(0.025, 0.1, 1, 0.0, m0).unwrap();
            assert!((exact - p_y_special_m1(0.025, 0.1, m0)).abs() < 1e-14);
        }
    }

    #[test]
    fn special_m1_monte_carlo() {
        let (p_b, p_t, m0) = (0.025, 0.1, 20);
        let mut r = ChaCha8Rng::seed_from_u64(42);
        let chains = 1_000_000;
        let mut byz = 0usize;
        for _ in 0..chains {
            let mut s = true;
            for _ in 0..m0 {
                let u: f64 = r.random();
                s = if s { u >= p_t } else { u < p_b };
            }
            byz += s as usize;
        }
        let p = p_y_special_m1(p_b, p_t, m0);
        let emp = byz as f64 / chains as f64;
        let se = (p * (1.0 - p) / chains as f64).sqrt();
        assert!((emp - p).abs() < 4.0 * se, "{emp} vs {p}");
    }

    #[test]
    fn independent_examples() {
        assert!((p_y_independent(0.3, 0.7, 1, 0.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((p_y_independent(0.5, 0.5, 4, 0.25).unwrap() - 11.0 / 16.0).abs() < 1e-14);
        assert!(matches!(p_y_independent(0.2, 0.7, 4, 0.25), Err(Error::Precondition(_))));
    }

    #[test]
    fn pi_sums_to_one() {
        for m0 in 0..50 {
            let (a, b) = pi_m0(0.03, 0.4, m0);
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn count_distribution_sums_to_one() {
        for m in 1..40 {
            for s in 0..2 {
                let total: f64 = window_count_distribution(0.07, 0.3, m, s).iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "m {m} s {s}: {total}");
            }
        }
    }

    #[test]
    fn exact_matches_path_enumeration() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let p_t = r.random_range(0.05..0.95);
            let p_b = r.random_range(0.01..p_t);
            for m in 1..=12 {
                for m0 in 0..=5 {
                    for trim in 0..=(m - 1) / 2 {
                        let a1 = trim as f64 / m as f64;
                        let exact = p_y_exact_markov(p_b, p_t, m, a1, m0).unwrap();
                        let brute = p_y_path_enumeration(p_b, p_t, m, a1, m0).unwrap();
                        assert!((exact - brute).abs() < 1e-10, "{p_b} {p_t} {m} {m0} {a1}");
                    }
                }
            }
        }
    }

    #[test]
    fn independent_case_agrees_with_binomial() {
        for &(p_b, m, a1) in &[(0.3, 10, 0.2), (0.45, 20, 0.4), (0.1, 7, 0.0), (0.6, 12, 0.25)] {
            let p_t = 1.0 - p_b;
            let indep = p_y_independent(p_b, p_t, m, a1).unwrap();
            for m0 in 1..6 {
                let exact = p_y_exact_unchecked(p_b, p_t, m, a1, m0).unwrap();
                assert!((exact - indep).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn exact_is_below_chernoff() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 100 {
            let p_t = r.random_range(0.05..0.9);
            let p_b = r.random_range(0.005..p_t);
            let m = 10 * r.random_range(1..=40usize);
            let a1 = r.random_range(1..=4usize) as f64 / 10.0;
            let m0 = r.random_range(0..10usize);
            let Ok(ch) = p_y_chernoff(p_b, p_t, m, a1, m0) else { continue };
            let exact = p_y_exact_markov(p_b, p_t, m, a1, m0).unwrap();
            assert!(exact <= ch.value + 1e-15, "{p_b} {p_t} {m} {a1} {m0}");
            checked += 1;
        }
    }

    #[test]
    fn min_window_certifies_the_condition() {
        for &(a1, a2, p_b, p_t, kappa, n) in &[
            (0.3, 0.3, 0.025, 0.1, 3.7, 10),
            (0.3, 0.4, 0.025, 0.1, 3.7, 10),
            (0.1, 0.2, 0.01, 0.1, 5.0, 50),
            (0.25, 0.1, 0.05, 0.3, 2.0, 200),
        ] {
            let m = min_window(a1, a2, p_b, p_t, kappa, n).unwrap();
            assert!(integral_count(a1, m).is_some());
            assert!(m as f64 > min_window_bound(a1, a2, p_b, p_t, kappa, n).unwrap());
            let py = p_y_chernoff(p_b, p_t, m, a1, 0).unwrap().value;
            assert!(p_z_hoeffding(py, n, a2, kappa).bound < 1.0 / (1.0 + kappa));
        }
        assert!(matches!(min_window(0.3, 0.1, 0.025, 0.1, 3.7, 10), Err(Error::Infeasible(_))));
        assert!(matches!(min_window(0.2, 0.4, 0.025, 0.1, 3.7, 10), Err(Error::Infeasible(_))));
    }

    #[test]
    fn min_window_scaling() {
        // diverges as alpha1 approaches the stationary fraction
        let near = min_window_bound(0.2001, 0.4, 0.025, 0.1, 1.0, 100).unwrap();
        let far = min_window_bound(0.3, 0.4, 0.025, 0.1, 1.0, 100).unwrap();
        assert!(near > 1000.0 * far);
        // doubling the spectral gap at a fixed ratio roughly halves the bound
        let a = min_window_bound(0.3, 0.4, 0.02, 0.08, 1.0, 100).unwrap();
        let b = min_window_bound(0.3, 0.4, 0.04, 0.16, 1.0, 100).unwrap();
        assert!((a / b - 2.0).abs() < 0.1, "{}", a / b);
    }

    fn inputs() -> BoundInputs {
        BoundInputs {
            m: 1,
            m0: 0,
            n_agents: 10,
            alpha1: 0.0,
            alpha2: 0.0,
            p_b: 0.025,
            p_t: 0.1,
            kappa: Some(1.0),
            l: Some(1.0),
            mu: Some(1.0),
            radius: Some(1.0),
            sigma: Some(1.0),
            b: Some(100),
            dim: Some(1),
            subgamma_a: None,
            gamma: Some(0.01),
        }
    }

    #[test]
    fn constants_examples() {
        let c = theorem_constants(&inputs(), 0.0).unwrap();
        assert_eq!(c.c0, Some(2.0));
        assert_eq!(c.c_bar_cvx, Some(1.0));
        assert_eq!(c.c_bar_noncvx, Some(0.5));
        // 4 sigma / (mu sqrt(N b))
        assert!((c.gamma_max_saa.unwrap() - 4.0 / 1000f64.sqrt()).abs() < 1e-15);

        let mut i = inputs();
        i.alpha1 = 0.3;
        i.alpha2 = 0.1;
        i.dim = Some(100);
        let mut prev = 0.0;
        for m in (10..200).step_by(10) {
            i.m = m;
            let cb = theorem_constants(&i, 0.01).unwrap().c_bar_cvx.unwrap();
            assert!(cb > prev);
            prev = cb;
        }

        let mut i = inputs();
        i.kappa = Some(3.0);
        let c = theorem_constants(&i, 0.3).unwrap();
        assert!(c.c0.unwrap() < 0.0);
        assert!(c.neighborhood_estimate.is_none());
    }

    #[test]
    fn plan_report_fields() {
        let mut i = inputs();
        i.m = 100;
        i.alpha1 = 0.3;
        i.alpha2 = 0.3;
        i.kappa = Some(3.7);
        let r = plan(&i).unwrap();
        assert!(r.p_y <= r.p_y_chernoff.unwrap().value);
        assert!((0.0..=1.0).contains(&r.p_z_binomial));
        assert!(r.min_window.is_some());
        i.alpha1 = 0.1;
        i.m = 10;
        let r = plan(&i).unwrap();
        assert!(r.p_y_chernoff.is_none());
    }
}
