use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corruption::{produce_feedback, AgentState, AgentStateVector, AttackContext};
use crate::error::{integral_count, Error, Result};
use crate::optimizer::{
    baseline_step, norm, normalized_baseline_step, range_step, GradientWindow, ParameterVector,
};
use crate::problems::Reference;
use crate::rng::{self, Domain};

use super::config::{AlgorithmConfig, RunConfig};

/// Share of the final iterations averaged into the tail metrics.
pub const TAIL_FRACTION: f64 = 0.05;

pub const METRICS_HEADER: &str = "t,dist_sq,grad_norm,byz_count,z_fail,warmup";

/// One recorded row. Row `t` describes iteration `t` and the iterate it
/// produced; row 0 holds the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub t: u64,
    pub dist_sq: Option<f64>,
    pub grad_norm: f64,
    pub byz_count: usize,
    pub z_fail: bool,
    pub warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_dist_sq: Option<f64>,
    pub initial_dist_sq: Option<f64>,
    pub tail_mean_dist_sq: Option<f64>,
    pub tail_mean_grad_norm: f64,
    /// Fraction of post-warm-up iterations where the aggregation failed.
    pub z_fail_rate: f64,
    pub iterations_run: u64,
    pub tail_iterations: u64,
    pub config_echo: RunConfig,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricRow>,
    pub summary: RunSummary,
    /// Per-iteration agent states (`t = 1..`), when tracing is on.
    pub states: Option<Vec<Vec<bool>>>,
    pub wall_seconds: f64,
}

/// Sliding record of each agent's last `m` states and the resulting
/// failure indicators.
struct FailureTracker {
    m: usize,
    temporal_trim: usize,
    spatial_trim: usize,
    recent: Vec<VecDeque<bool>>,
    counts: Vec<usize>,
}

impl FailureTracker {
    fn new(n: usize, m: usize, temporal_trim: usize, spatial_trim: usize) -> Self {
        Self {
            m,
            temporal_trim,
            spatial_trim,
            recent: (0..n).map(|_| VecDeque::with_capacity(m)).collect(),
            counts: vec![0; n],
        }
    }

    /// Pushes iteration `t`'s states and returns `Z_t`.
    fn observe(&mut self, states: &[AgentState], warmup: bool) -> bool {
        let mut failed = 0;
        for (i, s) in states.iter().enumerate() {
            let byz = s.is_byzantine();
            if self.recent[i].len() == self.m && self.recent[i].pop_front() == Some(true) {
                self.counts[i] -= 1;
            }
            self.recent[i].push_back(byz);
            self.counts[i] += byz as usize;
            // during warm-up the raw report is used, so Y is the current state
            let y = if warmup { byz } else { self.counts[i] > self.temporal_trim };
            failed += y as usize;
        }
        failed > self.spatial_trim
    }
}

fn dist_sq(x: &[f64], r: &[f64]) -> f64 {
    x.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Executes one configured run.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let problem = cfg.problem.build(cfg.seed)?;
    let (n, d) = (problem.n_agents(), problem.dim());
    let regime = cfg.regime;
    let reference = problem.reference_point(regime, cfg.problem.reference());
    let range = cfg.algorithm.range_config(cfg.iterations)?;
    let total = range.total_iterations();
    let temporal_trim = integral_count(range.alpha1(), range.m()).expect("validated");
    let spatial_trim = integral_count(range.alpha2(), n).expect("validated");
    let is_range = matches!(cfg.algorithm, AlgorithmConfig::Range { .. });

    let model = cfg.corruption.as_ref().map(|c| c.model(n, cfg.seed)).transpose()?;
    let mut streams = model.as_ref().map(|m| m.streams());
    let mut states = match (&model, &mut streams) {
        (Some(m), Some(s)) => m.initial_states(s),
        _ => AgentStateVector { states: vec![AgentState::Trustworthy; n], iteration: 0 },
    };
    let attack = cfg.corruption.as_ref().map(|c| c.attack.clone());
    let mut attack_rng = rng::stream(
        cfg.corruption.as_ref().map_or(0, |c| c.attack_seed(cfg.seed)),
        Domain::Attack,
        0,
    );
    let needs_honest_when_byzantine = attack.as_ref().is_some_and(|a| !a.needs_optimum());

    let mut x = ParameterVector::new(vec![0.0; d], problem.feasible_set())?;
    let mut window = if is_range { Some(GradientWindow::new(n, d, range.m())?) } else { None };
    let mut tracker = FailureTracker::new(n, range.m(), temporal_trim, spatial_trim);

    let tail_len = ((total as f64 * TAIL_FRACTION).ceil() as u64).clamp(1, total);
    let tail_start = total - tail_len + 1;
    let (mut tail_dist, mut tail_grad) = (0.0, 0.0);
    let (mut z_fails, mut z_counted) = (0u64, 0u64);

    let mut grad = problem.true_gradient(x.as_slice(), regime);
    let initial_dist = dist_sq(x.as_slice(), &reference);
    let mut rows = vec![MetricRow {
        t: 0,
        dist_sq: Some(initial_dist),
        grad_norm: norm(&grad),
        byz_count: states.byzantine_count(),
        z_fail: false,
        warmup: is_range && range.is_warmup(0),
    }];
    let mut trace = cfg.trace_states.then(Vec::new);
    let mut honest = vec![0.0; d];
    let mut feedback: Vec<Vec<f64>> = vec![vec![0.0; d]; n];

    for t in 1..=total {
        if let (Some(m), Some(s)) = (&model, &mut streams) {
            states = m.step_states(&states, s)?;
        }
        if let Some(tr) = &mut trace {
            tr.push(states.states.iter().map(|s| s.is_byzantine()).collect());
        }
        let ctx = AttackContext { x: x.as_slice(), optimum: Some(&reference), true_gradient: &grad };
        for (i, &state) in states.states.iter().enumerate() {
            let trusted = state == AgentState::Trustworthy;
            if trusted || needs_honest_when_byzantine {
                problem.honest_gradient_into(i, x.as_slice(), t, regime, &mut honest);
            }
            feedback[i] = match (&attack, trusted) {
                (Some(a), false) => produce_feedback(state, &honest, a, &ctx, &mut attack_rng)?,
                _ => honest.clone(),
            };
        }

        let warmup = is_range && range.is_warmup(t);
        let z = tracker.observe(&states.states, warmup);
        if !warmup {
            z_counted += 1;
            z_fails += z as u64;
        }

        x = match (&cfg.algorithm, &mut window) {
            (AlgorithmConfig::Range { .. }, Some(w)) => {
                w.push_round(&feedback)?;
                range_step(&x, w, &range, t)?.next
            }
            (
                AlgorithmConfig::Mean { normalize, .. }
                | AlgorithmConfig::CoordinateMedian { normalize, .. }
                | AlgorithmConfig::NormClip { normalize, .. },
                _,
            ) => {
                let rule = cfg.algorithm.rule();
                if *normalize {
                    normalized_baseline_step(&x, &feedback, rule, range.gamma())?
                } else {
                    baseline_step(&x, &feedback, rule, range.gamma())?
                }
            }
            _ => return Err(Error::Internal("RANGE run without a gradient window".into())),
        };

        grad = problem.true_gradient(x.as_slice(), regime);
        let dist = dist_sq(x.as_slice(), &reference);
        let gnorm = norm(&grad);
        if t >= tail_start {
            tail_dist += dist;
            tail_grad += gnorm;
        }
        if t % cfg.cadence == 0 || t == total {
            rows.push(MetricRow {
                t,
                dist_sq: Some(dist),
                grad_norm: gnorm,
                byz_count: states.byzantine_count(),
                z_fail: z,
                warmup,
            });
        }
    }

    let reference_note = match (&problem, regime, cfg.problem.reference()) {
        (crate::problems::Problem::LinearRegression(_), crate::problems::SamplingRegime::Saa, Reference::Objective) => {
            "dist_sq is measured to the constrained empirical least-squares minimizer"
        }
        (crate::problems::Problem::LinearRegression(_), _, _) => "dist_sq is measured to the planted solution",
        _ => "dist_sq is measured to the origin, the minimizer of the toy objective",
    };
    let summary = RunSummary {
        final_dist_sq: rows.last().and_then(|r| r.dist_sq),
        initial_dist_sq: Some(initial_dist),
        tail_mean_dist_sq: Some(tail_dist / tail_len as f64),
        tail_mean_grad_norm: tail_grad / tail_len as f64,
        z_fail_rate: if z_counted > 0 { z_fails as f64 / z_counted as f64 } else { 0.0 },
        iterations_run: total,
        tail_iterations: tail_len,
        config_echo: cfg.clone(),
        notes: vec![
            reference_note.to_string(),
            "tail means average every iteration in the final 5% of the run".to_string(),
            "single run; multi-seed means come from the sweep command".to_string(),
            "the run starts from the origin".to_string(),
        ],
    };
    Ok(RunOutput { rows, summary, states: trace, wall_seconds: started.elapsed().as_secs_f64() })
}

/// Shortest round-trip text for a float; exponent form for extreme magnitudes.
pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 48);
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let dist = r.dist_sq.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            dist,
            fmt_f64(r.grad_norm),
            r.byz_count,
            r.z_fail as u8,
            r.warmup as u8
        );
    }
    out
}

pub fn states_csv(states: &[Vec<bool>]) -> String {
    let mut out = String::from("t,states\n");
    for (k, row) in states.iter().enumerate() {
        let bits: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
        let _ = writeln!(out, "{},{}", k + 1, bits);
    }
    out
}

/// Writes `metrics.csv`, `summary.json`, `timing.json` and, when traced,
/// `states.csv` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), metrics_csv(&out.rows))?;
    let mut summary = serde_json::to_string_pretty(&out.summary)?;
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;
    let timing = serde_json::json!({ "wall_seconds": out.wall_seconds });
    std::fs::write(dir.join("timing.json"), format!("{timing:#}\n"))?;
    if let Some(states) = &out.states {
        std::fs::write(dir.join("states.csv"), states_csv(states))?;
    }
    Ok(())
}
