//! RANGE and the baseline update rules.
//!
//! One RANGE iteration takes a robust mean over each agent's last `m`
//! reports, a second robust mean across agents, and a normalized projected
//! step of length `gamma`. Baselines aggregate the current reports once and
//! take a plain SGD step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{integral_count, Error, Result};
use crate::estimator::{self, robust_mean, RobustMeanConfig, VectorBatch};

/// Feasible set: a centered Euclidean ball or the whole space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibleSet {
    Ball(f64),
    Unbounded,
}

impl FeasibleSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            FeasibleSet::Ball(r) => norm(x) <= r,
            FeasibleSet::Unbounded => true,
        }
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        let FeasibleSet::Ball(r) = *self else { return };
        let n = norm(x);
        if n <= r {
            return;
        }
        let s = r / n;
        x.iter_mut().for_each(|a| *a *= s);
        // rounding can leave the scaled point an ulp outside
        while norm(x) > r {
            x.iter_mut().for_each(|a| *a *= 1.0 - f64::EPSILON);
        }
    }
}

pub fn project(x: &[f64], set: FeasibleSet) -> Vec<f64> {
    let mut out = x.to_vec();
    set.project_in_place(&mut out);
    out
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// An iterate together with the set it must stay in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    x: Vec<f64>,
    set: FeasibleSet,
}

impl ParameterVector {
    pub fn new(x: Vec<f64>, set: FeasibleSet) -> Result<Self> {
        if let FeasibleSet::Ball(r) = set {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidInput(format!("ball radius must be positive, got {r}")));
            }
        }
        if !set.contains(&x) {
            return Err(Error::InvalidInput("initial point lies outside the feasible set".into()));
        }
        Ok(Self { x, set })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    pub fn set(&self) -> FeasibleSet {
        self.set
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `Proj(x - step * direction)`.
    fn moved(&self, direction: &[f64], step: f64) -> Self {
        let mut x: Vec<f64> = self.x.iter().zip(direction).map(|(a, g)| a - step * g).collect();
        self.set.project_in_place(&mut x);
        Self { x, set: self.set }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeConfig {
    gamma: f64,
    m: usize,
    m0: usize,
    alpha1: f64,
    alpha2: f64,
    iterations: u64,
    temporal: RobustMeanConfig,
}

impl RangeConfig {
    pub fn new(gamma: f64, m: usize, m0: usize, alpha1: f64, alpha2: f64, iterations: u64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if m == 0 {
            return Err(Error::Config("window length m must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&alpha2) {
            return Err(Error::Config(format!("alpha2 must lie in [0, 1/2), got {alpha2}")));
        }
        if !(0.0..0.5).contains(&alpha1) {
            return Err(Error::Config(format!("alpha1 must lie in [0, 1/2), got {alpha1}")));
        }
        if integral_count(alpha1, m).is_none() {
            return Err(Error::Config(format!(
                "alpha1 * m must be a whole number (alpha1 = {alpha1}, m = {m})"
            )));
        }
        let temporal = RobustMeanConfig::new(alpha1, m)?;
        Ok(Self { gamma, m, m0, alpha1, alpha2, iterations, temporal })
    }

    /// Checks `alpha2 * N` is integral.
    pub fn validate_for(&self, n_agents: usize) -> Result<()> {
        self.spatial(n_agents).map(|_| ())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// `T + m - 1 + m0`, the number of update iterations in a run.
    pub fn total_iterations(&self) -> u64 {
        self.iterations + self.m as u64 - 1 + self.m0 as u64
    }

    /// Iterations `t <= m - 1` use raw reports.
    pub fn is_warmup(&self, t: u64) -> bool {
        t < self.m as u64
    }

    pub fn temporal(&self) -> &RobustMeanConfig {
        &self.temporal
    }

    pub fn spatial(&self, n_agents: usize) -> Result<RobustMeanConfig> {
        if integral_count(self.alpha2, n_agents).is_none() {
            return Err(Error::Config(format!(
                "alpha2 * N must be a whole number (alpha2 = {}, N = {n_agents})",
                self.alpha2
            )));
        }
        RobustMeanConfig::new(self.alpha2, n_agents)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationRule {
    Range,
    Mean,
    CoordinateMedian,
    NormClip {
        #[serde(default = "default_clip")]
        threshold: f64,
    },
}

fn default_clip() -> f64 {
    10.0
}

/// One coordinate column of one agent's window, kept sorted by value.
/// `rank` breaks distance ties: smaller rank means a newer report.
#[derive(Debug, Clone, Default)]
struct SortedColumn {
    values: Vec<f64>,
    rank: Vec<u64>,
}

impl SortedColumn {
    fn insert(&mut self, v: f64, rank: u64) {
        let pos = self.values.partition_point(|a| a.total_cmp(&v).is_lt());
        self.values.insert(pos, v);
        self.rank.insert(pos, rank);
    }

    /// Evicts `(old, old_rank)` and inserts `(v, rank)`, shifting only the
    /// entries between the two positions.
    fn replace(&mut self, old: f64, old_rank: u64, v: f64, rank: u64) {
        let start = self.values.partition_point(|a| a.total_cmp(&old).is_lt());
        let pos = (start..self.values.len())
            .find(|&i| self.rank[i] == old_rank)
            .expect("evicted report is present in its column");
        let ins = self.values.partition_point(|a| a.total_cmp(&v).is_lt());
        let at = if ins > pos {
            self.values[pos..ins].rotate_left(1);
            self.rank[pos..ins].rotate_left(1);
            ins - 1
        } else {
            self.values[ins..=pos].rotate_right(1);
            self.rank[ins..=pos].rotate_right(1);
            ins
        };
        self.values[at] = v;
        self.rank[at] = rank;
    }
}

/// Per-agent ring buffers of the `m` most recent reports.
#[derive(Debug, Clone)]
pub struct GradientWindow {
    m: usize,
    dim: usize,
    rounds: u64,
    ring: Vec<VecDeque<Vec<f64>>>,
    sorted: Vec<SortedColumn>,
}

impl GradientWindow {
    pub fn new(n_agents: usize, dim: usize, m: usize) -> Result<Self> {
        if n_agents == 0 || dim == 0 || m == 0 {
            return Err(Error::InvalidInput("window needs positive agents, dimension and length".into()));
        }
        Ok(Self {
            m,
            dim,
            rounds: 0,
            ring: (0..n_agents).map(|_| VecDeque::with_capacity(m)).collect(),
            sorted: vec![SortedColumn::default(); n_agents * dim],
        })
    }

    pub fn n_agents(&self) -> usize {
        self.ring.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.m
    }

    /// Reports currently held per agent.
    pub fn len(&self) -> usize {
        self.ring[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends one report per agent, evicting the oldest when full.
    pub fn push_round(&mut self, feedback: &[Vec<f64>]) -> Result<()> {
        if feedback.len() != self.ring.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} reports, got {}",
                self.ring.len(),
                feedback.len()
            )));
        }
        if let Some(g) = feedback.iter().find(|g| g.len() != self.dim) {
            return Err(Error::InvalidInput(format!(
                "report has dimension {}, expected {}",
                g.len(),
                self.dim
            )));
        }
        let stamp = self.rounds;
        let full = self.len() == self.m;
        for (i, g) in feedback.iter().enumerate() {
            let cols = &mut self.sorted[i * self.dim..(i + 1) * self.dim];
            if full {
                let mut old = self.ring[i].pop_back().expect("full ring");
                let old_rank = u64::MAX - (stamp - self.m as u64);
                for ((c, &o), &v) in cols.iter_mut().zip(&old).zip(g) {
                    c.replace(o, old_rank, v, u64::MAX - stamp);
                }
                old.copy_from_slice(g);
                self.ring[i].push_front(old);
            } else {
                for (c, &v) in cols.iter_mut().zip(g) {
                    c.insert(v, u64::MAX - stamp);
                }
                self.ring[i].push_front(g.clone());
            }
        }
        self.rounds += 1;
        Ok(())
    }

    /// Agent `i`'s reports, newest first: `g_{i,t}, g_{i,t-1}, ...`.
    pub fn agent_window(&self, agent: usize) -> Vec<&[f64]> {
        self.ring[agent].iter().map(Vec::as_slice).collect()
    }

    pub fn latest(&self, agent: usize) -> Option<&[f64]> {
        self.ring[agent].front().map(Vec::as_slice)
    }

    /// Robust mean of agent `i`'s full window, computed from the sorted
    /// columns. Agrees with `robust_mean` over `agent_window` up to rounding.
    pub fn temporal_estimate_into(&self, agent: usize, cfg: &RobustMeanConfig, out: &mut [f64]) -> Result<()> {
        if self.len() != cfg.k() {
            return Err(Error::Internal(format!(
                "window holds {} reports, estimator expects {}",
                self.len(),
                cfg.k()
            )));
        }
        let cols = &self.sorted[agent * self.dim..(agent + 1) * self.dim];
        for (o, c) in out.iter_mut().zip(cols) {
            *o = estimator::sorted_column_estimate(&c.values, &c.rank, cfg.keep());
        }
        Ok(())
    }
}

/// Result of one RANGE iteration.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: ParameterVector,
    /// The aggregate direction before normalization.
    pub aggregate: Vec<f64>,
    pub warmup: bool,
}

/// One RANGE iteration at (1-based) iteration `t`, reading the reports
/// already pushed into `windows`.
pub fn range_step(
    x: &ParameterVector,
    windows: &GradientWindow,
    cfg: &RangeConfig,
    t: u64,
) -> Result<StepOutcome> {
    let n = windows.n_agents();
    if windows.dim() != x.dim() {
        return Err(Error::InvalidInput("window and iterate dimensions differ".into()));
    }
    if windows.capacity() != cfg.m() {
        return Err(Error::InvalidInput("window length differs from m".into()));
    }
    if windows.is_empty() {
        return Err(Error::Internal(format!("no reports in the window at t = {t}")));
    }
    let warmup = cfg.is_warmup(t);
    if !warmup && windows.len() < cfg.m() {
        return Err(Error::Internal(format!(
            "window underfull at t = {t}: {} of {} reports",
            windows.len(),
            cfg.m()
        )));
    }

    let d = x.dim();
    let per_agent: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if warmup {
                Ok(windows.latest(i).expect("non-empty window").to_vec())
            } else {
                let mut out = vec![0.0; d];
                windows.temporal_estimate_into(i, cfg.temporal(), &mut out)?;
                Ok(out)
            }
        })
        .collect::<Result<_>>()?;
    let aggregate = robust_mean(&VectorBatch::from_vecs(&per_agent)?, &cfg.spatial(n)?)?;
    let next = normalized_step(x, &aggregate, cfg.gamma());
    Ok(StepOutcome { next, aggregate, warmup })
}

/// `Proj(x - gamma g / ||g||)`, or `x` itself when `g` is exactly zero.
pub fn normalized_step(x: &ParameterVector, g: &[f64], gamma: f64) -> ParameterVector {
    let gn = norm(g);
    if gn == 0.0 {
        return x.clone();
    }
    x.moved(g, gamma / gn)
}

/// Aggregate of the current reports under a baseline rule.
pub fn aggregate(gradients: &[Vec<f64>], rule: AggregationRule) -> Result<Vec<f64>> {
    let batch = VectorBatch::from_vecs(gradients)?;
    match rule {
        AggregationRule::Mean => robust_mean(&batch, &RobustMeanConfig::new(0.0, gradients.len())?),
        AggregationRule::CoordinateMedian => Ok(estimator::coordinate_median(&batch)),
        AggregationRule::NormClip { threshold } => {
            if !(threshold.is_finite() && threshold > 0.0) {
                return Err(Error::Config(format!("clip threshold must be positive, got {threshold}")));
            }
            let clipped: Vec<Vec<f64>> = gradients
                .iter()
                .map(|g| {
                    let n = norm(g);
                    let s = if n > threshold { threshold / n } else { 1.0 };
                    g.iter().map(|a| a * s).collect()
                })
                .collect();
            robust_mean(&VectorBatch::from_vecs(&clipped)?, &RobustMeanConfig::new(0.0, gradients.len())?)
        }
        AggregationRule::Range => Err(Error::InvalidInput(
            "the RANGE rule needs a gradient window; use range_step".into(),
        )),
    }
}

/// Unnormalized projected step `Proj(x - gamma * aggregate)`.
pub fn baseline_step(
    x: &ParameterVector,
    gradients: &[Vec<f64>],
    rule: AggregationRule,
    gamma: f64,
) -> Result<ParameterVector> {
    let g = aggregate(gradients, rule)?;
    Ok(x.moved(&g, gamma))
}

/// Baseline aggregate followed by RANGE's normalized step.
pub fn normalized_baseline_step(
    x: &ParameterVector,
    gradients: &[Vec<f64>],
    rule: AggregationRule,
    gamma: f64,
) -> Result<ParameterVector> {
    let g = aggregate(gradients, rule)?;
    Ok(normalized_step(x, &g, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(x: &[f64], r: f64) -> ParameterVector {
        ParameterVector::new(x.to_vec(), FeasibleSet::Ball(r)).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project(&[1.0, 2.0], FeasibleSet::Ball(5.0)), vec![1.0, 2.0]);
        assert_eq!(project(&[6.0, 8.0], FeasibleSet::Ball(5.0)), vec![3.0, 4.0]);
        assert_eq!(project(&[600.0, 8.0], FeasibleSet::Unbounded), vec![600.0, 8.0]);
    }

    #[test]
    fn unit_vector_scaling() {
        let x = pv(&[0.0, 0.0], 10.0);
        let next = normalized_step(&x, &[3.0, 4.0], 0.1);
        let want = [-0.06, -0.08];
        for (a, b) in next.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn step_is_projected() {
        let x = pv(&[9.99, 0.0], 10.0);
        let next = normalized_step(&x, &[-1.0, 0.0], 0.1);
        // pre-projection (10.09, 0) scales radially back to the sphere
        assert!((next.as_slice()[0] - 10.0).abs() < 1e-12);
        assert_eq!(next.as_slice()[1], 0.0);
        assert!(norm(next.as_slice()) <= 10.0);
    }

    #[test]
    fn zero_aggregate_keeps_iterate() {
        let x = pv(&[1.0, 2.0], 10.0);
        assert_eq!(normalized_step(&x, &[0.0, 0.0], 0.5), x);
    }

    #[test]
    fn config_integrality() {
        assert!(RangeConfig::new(0.01, 100, 0, 0.3, 0.1, 10).is_ok());
        assert!(matches!(RangeConfig::new(0.01, 5, 0, 0.3, 0.1, 10), Err(Error::Config(_))));
        let cfg = RangeConfig::new(0.01, 10, 0, 0.3, 0.25, 10).unwrap();
        assert!(cfg.validate_for(10).is_err());
        assert!(cfg.validate_for(8).is_ok());
        assert!(RangeConfig::new(0.0, 1, 0, 0.0, 0.0, 1).is_err());
        assert!(RangeConfig::new(0.1, 2, 0, 0.5, 0.0, 1).is_err());
        assert_eq!(RangeConfig::new(0.1, 100, 7, 0.3, 0.1, 1000).unwrap().total_iterations(), 1106);
    }

    #[test]
    fn baseline_examples() {
        let g = vec![1.0, -2.0];
        let x = pv(&[0.0, 0.0], 100.0);
        let next = baseline_step(&x, &[g.clone(), g.clone(), g.clone()], AggregationRule::Mean, 0.5).unwrap();
        assert_eq!(next.as_slice(), &[-0.5, 1.0]);

        let med = aggregate(
            &[vec![0.0, 0.0], vec![1.0, 10.0], vec![2.0, -10.0]],
            AggregationRule::CoordinateMedian,
        )
        .unwrap();
        assert_eq!(med, vec![1.0, 0.0]);

        let big = vec![30.0, 40.0];
        let clipped = aggregate(&[big], AggregationRule::NormClip { threshold: 10.0 }).unwrap();
        assert!((clipped[0] - 6.0).abs() < 1e-12 && (clipped[1] - 8.0).abs() < 1e-12);
        let small = aggregate(&[vec![3.0, 4.0]], AggregationRule::NormClip { threshold: 10.0 }).unwrap();
        assert_eq!(small, vec![3.0, 4.0]);
        assert!(aggregate(&[vec![1.0]], AggregationRule::Range).is_err());
    }

    #[test]
    fn identical_honest_gradients_give_full_step() {
        let cfg = RangeConfig::new(0.25, 4, 0, 0.25, 0.2, 10).unwrap();
        let mut w = GradientWindow::new(5, 3, 4).unwrap();
        let g = vec![1.0, -2.0, 2.0];
        let x = pv(&[0.0; 3], 100.0);
        for t in 1..=6 {
            w.push_round(&vec![g.clone(); 5]).unwrap();
            let out = range_step(&x, &w, &cfg, t).unwrap();
            assert_eq!(out.aggregate, g);
            let want = [-0.25 / 3.0, 0.5 / 3.0, -0.5 / 3.0];
            for (a, b) in out.next.as_slice().iter().zip(want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn window_holds_last_m_newest_first() {
        let mut w = GradientWindow::new(2, 1, 3).unwrap();
        for s in 0..7 {
            w.push_round(&[vec![s as f64], vec![100.0 + s as f64]]).unwrap();
            assert_eq!(w.len(), (s + 1).min(3));
        }
        let a: Vec<f64> = w.agent_window(0).iter().map(|v| v[0]).collect();
        assert_eq!(a, vec![6.0, 5.0, 4.0]);
        let b: Vec<f64> = w.agent_window(1).iter().map(|v| v[0]).collect();
        assert_eq!(b, vec![106.0, 105.0, 104.0]);
    }

    #[test]
    fn sentinel_reports_reach_the_temporal_estimate() {
        // with alpha1 = 0 the temporal estimate is the window mean, so a
        // sentinel shows up for exactly m iterations
        let m = 4;
        let cfg = RangeConfig::new(0.1, m, 0, 0.0, 0.0, 20).unwrap();
        let mut w = GradientWindow::new(1, 1, m).unwrap();
        let x = pv(&[0.0], 1e9);
        for t in 1..=12u64 {
            let v = if t == 5 { 1000.0 } else { 0.0 };
            w.push_round(&[vec![v]]).unwrap();
            let out = range_step(&x, &w, &cfg, t).unwrap();
            let expect = if (5..5 + m as u64).contains(&t) { 250.0 } else { 0.0 };
            assert_eq!(out.aggregate[0], expect, "t = {t}");
        }
    }

    #[test]
    fn underfull_window_is_an_internal_error() {
        let cfg = RangeConfig::new(0.1, 3, 0, 0.0, 0.0, 5).unwrap();
        let mut w = GradientWindow::new(1, 1, 3).unwrap();
        w.push_round(&[vec![1.0]]).unwrap();
        let x = pv(&[0.0], 10.0);
        assert!(range_step(&x, &w, &cfg, 1).is_ok());
        assert!(matches!(range_step(&x, &w, &cfg, 3), Err(Error::Internal(_))));
    }

    #[test]
    fn warmup_uses_raw_reports() {
        let cfg = RangeConfig::new(0.1, 3, 0, 0.0, 0.0, 5).unwrap();
        let mut w = GradientWindow::new(1, 1, 3).unwrap();
        let x = pv(&[0.0], 10.0);
        w.push_round(&[vec![1.0]]).unwrap();
        w.push_round(&[vec![5.0]]).unwrap();
        let out = range_step(&x, &w, &cfg, 2).unwrap();
        assert!(out.warmup);
        assert_eq!(out.aggregate, vec![5.0]);
        w.push_round(&[vec![6.0]]).unwrap();
        let out = range_step(&x, &w, &cfg, 3).unwrap();
        assert!(!out.warmup);
        assert_eq!(out.aggregate, vec![4.0]);
    }

    #[test]
    fn incremental_window_matches_direct_estimate() {
        let mut r = ChaCha8Rng::seed_from_u64(21);
        let (n, d, m) = (3, 4, 10);
        let cfg = RobustMeanConfig::new(0.3, m).unwrap();
        let mut w = GradientWindow::new(n, d, m).unwrap();
        for step in 0..300 {
            let round: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| (r.random_range(0..6) as f64) * 0.5).collect())
                .collect();
            w.push_round(&round).unwrap();
            if w.len() < m {
                continue;
            }
            for i in 0..n {
                let rows = w.agent_window(i);
                let direct = robust_mean(&VectorBatch::new(rows).unwrap(), &cfg).unwrap();
                let mut inc = vec![0.0; d];
                w.temporal_estimate_into(i, &cfg, &mut inc).unwrap();
                for (a, b) in inc.iter().zip(&direct) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "step {step}: {inc:?} vs {direct:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn step_length_and_feasibility(
            x0 in prop::collection::vec(-3.0f64..3.0, 3),
            gs in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 5),
            gamma in 0.001f64..2.0,
        ) {
            let x = ParameterVector::new(project(&x0, FeasibleSet::Ball(4.0)), FeasibleSet::Ball(4.0)).unwrap();
            let mut w = GradientWindow::new(5, 3, 1).unwrap();
            w.push_round(&gs).unwrap();
            let cfg = RangeConfig::new(gamma, 1, 0, 0.0, 0.2, 1).unwrap();
            let next = range_step(&x, &w, &cfg, 1).unwrap().next;
            let delta: Vec<f64> = next.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&delta) <= gamma * (1.0 + 1e-12));
            prop_assert!(norm(next.as_slice()) <= 4.0);
        }
    }
}
