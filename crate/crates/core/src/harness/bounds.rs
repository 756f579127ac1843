use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{integral_count, Error, Result};
use crate::planner::{
    p_y_chernoff, p_y_exact_unchecked, p_y_independent, p_y_path_enumeration, p_z_from_p_y,
};
use crate::rng::{self, Domain};

use super::config::CONFIG_VERSION;

pub const MIN_SAMPLES: u64 = 10_000;

/// Tolerance, in standard errors, of the Monte Carlo checks.
pub const SIGMA_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundTuple {
    pub p_b: f64,
    pub p_t: f64,
    pub m: usize,
    #[serde(default)]
    pub m0: usize,
    pub alpha1: f64,
    pub n_agents: usize,
    pub alpha2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsGrid {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub tuples: Vec<BoundTuple>,
}

impl BoundsGrid {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: BoundsGrid = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if grid.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported grid version {}", grid.version)));
        }
        if grid.tuples.is_empty() {
            return Err(Error::Config("bounds grid has no tuples".into()));
        }
        Ok(grid)
    }
}

/// Empirical frequency against a predicted probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub predicted: f64,
    pub empirical: f64,
    /// Standard error implied by the predicted probability.
    pub std_error: f64,
    pub pass: bool,
}

impl McCheck {
    fn new(predicted: f64, hits: u64, trials: u64) -> Self {
        let empirical = hits as f64 / trials as f64;
        let std_error = (predicted * (1.0 - predicted) / trials as f64).sqrt();
        let pass = (empirical - predicted).abs() <= SIGMA_TOLERANCE * std_error + 1e-12;
        Self { predicted, empirical, std_error, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleReport {
    pub tuple: BoundTuple,
    pub p_y: McCheck,
    pub p_z: McCheck,
    /// Clamped Chernoff value; `None` when its precondition fails.
    pub p_y_chernoff: Option<f64>,
    pub chernoff_dominates: Option<bool>,
    /// Independent-corruption binomial, for `p_b + p_t = 1` and `m0 >= 1`.
    pub p_y_independent: Option<McCheck>,
    /// Path enumeration, for `m <= 12`.
    pub p_y_enumerated: Option<f64>,
    pub enumeration_agrees: Option<bool>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: u64,
    pub sigma_tolerance: f64,
    pub tuples: Vec<TupleReport>,
    pub all_pass: bool,
}

fn check_tuple(t: &BoundTuple) -> Result<(usize, usize)> {
    if !(t.p_b > 0.0 && t.p_b < 1.0 && t.p_t > 0.0 && t.p_t < 1.0) {
        return Err(Error::Config(format!("p_b and p_t must lie in (0, 1): {t:?}")));
    }
    let independent = (t.p_b + t.p_t - 1.0).abs() <= 1e-12;
    if !independent && t.p_b >= t.p_t {
        return Err(Error::Config(format!("need p_b < p_t unless p_b + p_t = 1: {t:?}")));
    }
    if t.m == 0 || t.n_agents == 0 {
        return Err(Error::Config(format!("m and n_agents must be positive: {t:?}")));
    }
    let trim1 = integral_count(t.alpha1, t.m)
        .filter(|_| (0.0..0.5).contains(&t.alpha1))
        .ok_or_else(|| Error::Config(format!("alpha1 * m must be a whole number below m/2: {t:?}")))?;
    let trim2 = integral_count(t.alpha2, t.n_agents)
        .filter(|_| (0.0..0.5).contains(&t.alpha2))
        .ok_or_else(|| Error::Config(format!("alpha2 * N must be a whole number below N/2: {t:?}")))?;
    Ok((trim1, trim2))
}

/// Simulates `samples` independent draws of `(Y_1..Y_N, Z)`. Every chain
/// starts Byzantine, takes `m0` steps, and its next `m` states form the window.
fn simulate(t: &BoundTuple, trim1: usize, trim2: usize, samples: u64, seed: u64, index: u64) -> (u64, u64) {
    let mut r = rng::stream(seed, Domain::BoundValidation, index);
    let (mut y_hits, mut z_hits) = (0u64, 0u64);
    for _ in 0..samples {
        let mut failed = 0usize;
        for _ in 0..t.n_agents {
            let mut byz = true;
            let step = |byz: bool, u: f64| if byz { u >= t.p_t } else { u < t.p_b };
            for _ in 0..t.m0 {
                byz = step(byz, r.random());
            }
            let mut count = byz as usize;
            for _ in 1..t.m {
                byz = step(byz, r.random());
                count += byz as usize;
            }
            failed += (count > trim1) as usize;
        }
        y_hits += failed as u64;
        z_hits += (failed > trim2) as u64;
    }
    (y_hits, z_hits)
}

pub fn validate_bounds(grid: &BoundsGrid, samples: u64) -> Result<ValidationReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::Config(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    let checked = grid.tuples.iter().map(check_tuple).collect::<Result<Vec<_>>>()?;
    let reports = grid
        .tuples
        .par_iter()
        .zip(checked.par_iter())
        .enumerate()
        .map(|(k, (t, &(trim1, trim2)))| -> Result<TupleReport> {
            let exact = p_y_exact_unchecked(t.p_b, t.p_t, t.m, t.alpha1, t.m0)?;
            let p_z = p_z_from_p_y(exact, t.n_agents, t.alpha2)?;
            let (y_hits, z_hits) = simulate(t, trim1, trim2, samples, grid.seed, k as u64);
            let y_trials = samples * t.n_agents as u64;
            let p_y = McCheck::new(exact, y_hits, y_trials);
            let p_z = McCheck::new(p_z, z_hits, samples);

            let chernoff = if t.p_b < t.p_t {
                p_y_chernoff(t.p_b, t.p_t, t.m, t.alpha1, t.m0).ok().map(|c| c.value)
            } else {
                None
            };
            let independent = if (t.p_b + t.p_t - 1.0).abs() <= 1e-12 && t.m0 >= 1 {
                let v = p_y_independent(t.p_b, t.p_t, t.m, t.alpha1)?;
                Some(McCheck::new(v, y_hits, y_trials))
            } else {
                None
            };
            let enumerated = if t.m <= 12 {
                Some(p_y_path_enumeration(t.p_b, t.p_t, t.m, t.alpha1, t.m0)?)
            } else {
                None
            };
            let enumeration_agrees = enumerated.map(|e| (e - exact).abs() <= 1e-10);
            let chernoff_dominates = chernoff.map(|c| c + 1e-15 >= exact);
            let pass = p_y.pass
                && p_z.pass
                && independent.is_none_or(|c| c.pass)
                && enumeration_agrees.unwrap_or(true)
                && chernoff_dominates.unwrap_or(true);
            Ok(TupleReport {
                tuple: *t,
                p_y,
                p_z,
                p_y_chernoff: chernoff,
                chernoff_dominates,
                p_y_independent: independent,
                p_y_enumerated: enumerated,
                enumeration_agrees,
                pass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_pass = reports.iter().all(|r| r.pass);
    Ok(ValidationReport { samples, sigma_tolerance: SIGMA_TOLERANCE, tuples: reports, all_pass })
}

/// Fixed-width table of a validation report.
pub fn validation_table(report: &ValidationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>3} {:>6} {:>6} {:>4} {:>3} {:>5} {:>3} {:>5} | {:>10} {:>10} {:>5} | {:>10} {:>10} {:>5} | {:>10} {:>10} | {:>4}",
        "#", "p_b", "p_t", "m", "m0", "a1", "N", "a2", "P_Y exact", "P_Y emp", "z", "P_Z pred", "P_Z emp", "z",
        "chernoff", "indep", "pass"
    );
    for (k, r) in report.tuples.iter().enumerate() {
        let t = &r.tuple;
        let z = |c: &McCheck| if c.std_error > 0.0 { (c.empirical - c.predicted) / c.std_error } else { 0.0 };
        let na = |v: Option<f64>| v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.4e}"));
        let _ = writeln!(
            out,
            "{:>3} {:>6.3} {:>6.3} {:>4} {:>3} {:>5.3} {:>3} {:>5.3} | {:>10.4e} {:>10.4e} {:>5.2} | {:>10.4e} {:>10.4e} {:>5.2} | {:>10} {:>10} | {:>4}",
            k,
            t.p_b,
            t.p_t,
            t.m,
            t.m0,
            t.alpha1,
            t.n_agents,
            t.alpha2,
            r.p_y.predicted,
            r.p_y.empirical,
            z(&r.p_y),
            r.p_z.predicted,
            r.p_z.empirical,
            z(&r.p_z),
            na(r.p_y_chernoff),
            na(r.p_y_independent.map(|c| c.predicted)),
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    out
}
