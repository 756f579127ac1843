//! Objectives and gradient oracles.
//!
//! Two problems are provided: synthetic least squares with a planted
//! solution, and a separable non-convex toy `sum x_k^2 + lambda sin^2 x_k`.
//! Both can be run in the fixed-sample (SAA) or fresh-sample (SA) regime.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::FeasibleSet;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplingRegime {
    /// Each agent keeps one fixed batch for the whole run.
    #[serde(rename = "SAA")]
    Saa,
    /// Each agent draws a fresh batch every iteration.
    #[serde(rename = "SA")]
    Sa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRegressionSpec {
    pub dim: usize,
    /// Total sample count `B`, split evenly across agents.
    pub samples: usize,
    pub agents: usize,
    pub radius: f64,
    pub noise_std: f64,
}

impl LinearRegressionSpec {
    /// The synthetic setup used throughout the experiments.
    pub fn reference_setup() -> Self {
        Self { dim: 100, samples: 1000, agents: 10, radius: 10.0, noise_std: 10.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.agents == 0 || self.samples == 0 {
            return Err(Error::Config("dim, samples and agents must be positive".into()));
        }
        if !self.samples.is_multiple_of(self.agents) {
            return Err(Error::Config(format!(
                "samples ({}) must be divisible by agents ({})",
                self.samples, self.agents
            )));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

/// Least squares `F(x) = (1/B) ||y - v x||^2` on a Euclidean ball.
#[derive(Debug, Clone)]
pub struct LinearRegressionProblem {
    spec: LinearRegressionSpec,
    seed: u64,
    v: DMatrix<f64>,
    y: DVector<f64>,
    x_star: DVector<f64>,
    gram: DMatrix<f64>,
    h: DVector<f64>,
    agent_gram: Vec<DMatrix<f64>>,
    agent_h: Vec<DVector<f64>>,
}

impl LinearRegressionProblem {
    pub fn generate(spec: &LinearRegressionSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (d, big_b, n) = (spec.dim, spec.samples, spec.agents);
        let b = big_b / n;
        let mut r = rng::stream(seed, Domain::ProblemData, 0);

        let dir: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let dir_norm = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
        let u: f64 = r.random();
        let rad = spec.radius * u.powf(1.0 / d as f64);
        let x_star = DVector::from_iterator(d, dir.iter().map(|a| a * rad / dir_norm));

        let v = DMatrix::from_row_iterator(big_b, d, (0..big_b * d).map(|_| r.sample(StandardNormal)));
        let noise: Vec<f64> = (0..big_b).map(|_| spec.noise_std * r.sample::<f64, _>(StandardNormal)).collect();
        let y = &v * &x_star + DVector::from_vec(noise);

        let scale = 2.0 / big_b as f64;
        let gram = v.tr_mul(&v) * scale;
        let h = v.tr_mul(&y) * scale;
        let agent_scale = 2.0 / b as f64;
        let mut agent_gram = Vec::with_capacity(n);
        let mut agent_h = Vec::with_capacity(n);
        for i in 0..n {
            let vi = v.rows(i * b, b);
            let yi = y.rows(i * b, b);
            agent_gram.push(vi.tr_mul(&vi) * agent_scale);
            agent_h.push(vi.tr_mul(&yi) * agent_scale);
        }
        Ok(Self { spec: spec.clone(), seed, v, y, x_star, gram, h, agent_gram, agent_h })
    }

    pub fn spec(&self) -> &LinearRegressionSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn n_agents(&self) -> usize {
        self.spec.agents
    }

    pub fn batch_size(&self) -> usize {
        self.spec.samples / self.spec.agents
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x_star(&self) -> &[f64] {
        self.x_star.as_slice()
    }

    pub fn feasible_set(&self) -> FeasibleSet {
        FeasibleSet::Ball(self.spec.radius)
    }

    /// `(1/B) ||y - v x||^2`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        (&self.y - &self.v * x).norm_squared() / self.spec.samples as f64
    }

    /// `(1/b) ||y_i - v_i x||^2` over agent `i`'s fixed batch.
    pub fn agent_objective(&self, agent: usize, x: &[f64]) -> f64 {
        let b = self.batch_size();
        let x = DVector::from_column_slice(x);
        let r = self.y.rows(agent * b, b) - self.v.rows(agent * b, b) * x;
        r.norm_squared() / b as f64
    }

    /// Full-data gradient `(2/B) v^T (v x - y)`.
    pub fn true_gradient(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.gram * x - &self.h).data.into()
    }

    /// Gradient of the population objective, `2 (x - x*)`.
    pub fn population_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.x_star.iter()).map(|(a, s)| 2.0 * (a - s)).collect()
    }

    /// `(2/b) v_i^T (v_i x - y_i)` for agent `i`'s current batch.
    pub fn honest_gradient_into(
        &self,
        agent: usize,
        x: &[f64],
        t: u64,
        regime: SamplingRegime,
        out: &mut [f64],
    ) {
        let d = self.spec.dim;
        match regime {
            SamplingRegime::Saa => {
                let a = &self.agent_gram[agent];
                let c = &self.agent_h[agent];
                for (k, o) in out.iter_mut().enumerate() {
                    *o = -c[k];
                }
                // column-major: accumulate column j scaled by x_j
                for (col, &xj) in a.as_slice().chunks_exact(d).zip(x) {
                    for (o, aij) in out.iter_mut().zip(col) {
                        *o += aij * xj;
                    }
                }
            }
            SamplingRegime::Sa => {
                let b = self.batch_size();
                let mut r = rng::stream_at(self.seed, Domain::AgentSamples, agent as u64, t);
                let u: Vec<f64> = x.iter().zip(self.x_star.iter()).map(|(a, s)| a - s).collect();
                let mut row = vec![0.0; d];
                out.fill(0.0);
                for _ in 0..b {
                    for e in row.iter_mut() {
                        *e = r.sample(StandardNormal);
                    }
                    let xi: f64 = r.sample(StandardNormal);
                    let resid = row.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - self.spec.noise_std * xi;
                    for (o, a) in out.iter_mut().zip(&row) {
                        *o += a * resid;
                    }
                }
                let s = 2.0 / b as f64;
                out.iter_mut().for_each(|o| *o *= s);
            }
        }
    }

    pub fn honest_gradient(&self, agent: usize, x: &[f64], t: u64, regime: SamplingRegime) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.dim];
        self.honest_gradient_into(agent, x, t, regime, &mut out);
        out
    }

    /// Extreme eigenvalues `(mu, L)` of `(2/B) v^T v`.
    pub fn curvature(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.gram.clone());
        let mu = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let l = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mu, l)
    }

    /// Minimizer of the empirical objective over the feasible ball.
    pub fn constrained_minimizer(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.gram.clone());
        let q = &eig.eigenvectors;
        let lam = &eig.eigenvalues;
        let coef = q.tr_mul(&self.h);
        let tiny = 1e-12 * lam.amax().max(1.0);
        let solve = |nu: f64| -> DVector<f64> {
            let scaled = DVector::from_iterator(
                coef.len(),
                coef.iter().zip(lam.iter()).map(|(c, l)| {
                    let den = l + nu;
                    if den > tiny { c / den } else { 0.0 }
                }),
            );
            q * scaled
        };
        let r = self.spec.radius;
        let free = solve(0.0);
        if free.norm() <= r {
            return free.data.into();
        }
        // ||(G + nu I)^{-1} h|| is decreasing in nu; at nu = ||h|| / R it is <= R
        let (mut lo, mut hi) = (0.0, self.h.norm() / r);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if solve(mid).norm() > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = solve(hi);
        let n = x.norm();
        // land exactly inside the ball
        if n > r { (x * (r / n)).data.into() } else { x.data.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonConvexToySpec {
    pub dim: usize,
    pub agents: usize,
    pub lambda: f64,
    /// Scale of the Gaussian perturbation added to each honest gradient.
    pub noise_std: f64,
    #[serde(default)]
    pub radius: Option<f64>,
}

impl NonConvexToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.agents == 0 {
            return Err(Error::Config("dim and agents must be positive".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if let Some(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// `F(x) = sum_k x_k^2 + lambda sin^2(x_k)`, minimized at the origin.
#[derive(Debug, Clone)]
pub struct NonConvexToyProblem {
    spec: NonConvexToySpec,
    seed: u64,
    fixed_noise: Vec<Vec<f64>>,
}

impl NonConvexToyProblem {
    pub fn new(spec: &NonConvexToySpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let fixed_noise = (0..spec.agents)
            .map(|i| {
                let mut r = rng::stream(seed, Domain::AgentFixedNoise, i as u64);
                (0..spec.dim).map(|_| r.sample(StandardNormal)).collect()
            })
            .collect();
        Ok(Self { spec: spec.clone(), seed, fixed_noise })
    }

    pub fn spec(&self) -> &NonConvexToySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn n_agents(&self) -> usize {
        self.spec.agents
    }

    pub fn feasible_set(&self) -> FeasibleSet {
        self.spec.radius.map_or(FeasibleSet::Unbounded, FeasibleSet::Ball)
    }

    pub fn smoothness(&self) -> f64 {
        2.0 + 2.0 * self.spec.lambda
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter().map(|&a| a * a + self.spec.lambda * a.sin().powi(2)).sum()
    }

    pub fn true_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&a| 2.0 * a + self.spec.lambda * (2.0 * a).sin()).collect()
    }

    pub fn honest_gradient_into(
        &self,
        agent: usize,
        x: &[f64],
        t: u64,
        regime: SamplingRegime,
        out: &mut [f64],
    ) {
        let s = self.spec.noise_std;
        let lambda = self.spec.lambda;
        match regime {
            SamplingRegime::Saa => {
                for ((o, &a), z) in out.iter_mut().zip(x).zip(&self.fixed_noise[agent]) {
                    *o = 2.0 * a + lambda * (2.0 * a).sin() + s * z;
                }
            }
            SamplingRegime::Sa => {
                let mut r = rng::stream_at(self.seed, Domain::AgentSamples, agent as u64, t);
                for (o, &a) in out.iter_mut().zip(x) {
                    let z: f64 = r.sample(StandardNormal);
                    *o = 2.0 * a + lambda * (2.0 * a).sin() + s * z;
                }
            }
        }
    }

    pub fn honest_gradient(&self, agent: usize, x: &[f64], t: u64, regime: SamplingRegime) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.dim];
        self.honest_gradient_into(agent, x, t, regime, &mut out);
        out
    }
}

/// Where the distance metric and the directed attack aim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Minimizer of the objective the regime actually optimizes: the
    /// constrained empirical minimizer under SAA, the planted solution under SA.
    #[default]
    Objective,
    /// Always the planted solution.
    Planted,
}

/// A generated problem instance.
#[derive(Debug, Clone)]
pub enum Problem {
    LinearRegression(LinearRegressionProblem),
    NonConvexToy(NonConvexToyProblem),
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::LinearRegression(p) => p.dim(),
            Problem::NonConvexToy(p) => p.dim(),
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            Problem::LinearRegression(p) => p.n_agents(),
            Problem::NonConvexToy(p) => p.n_agents(),
        }
    }

    pub fn feasible_set(&self) -> FeasibleSet {
        match self {
            Problem::LinearRegression(p) => p.feasible_set(),
            Problem::NonConvexToy(p) => p.feasible_set(),
        }
    }

    pub fn honest_gradient_into(
        &self,
        agent: usize,
        x: &[f64],
        t: u64,
        regime: SamplingRegime,
        out: &mut [f64],
    ) {
        match self {
            Problem::LinearRegression(p) => p.honest_gradient_into(agent, x, t, regime, out),
            Problem::NonConvexToy(p) => p.honest_gradient_into(agent, x, t, regime, out),
        }
    }

    pub fn honest_gradient(&self, agent: usize, x: &[f64], t: u64, regime: SamplingRegime) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.honest_gradient_into(agent, x, t, regime, &mut out);
        out
    }

    /// Gradient of the objective the regime optimizes.
    pub fn true_gradient(&self, x: &[f64], regime: SamplingRegime) -> Vec<f64> {
        match (self, regime) {
            (Problem::LinearRegression(p), SamplingRegime::Saa) => p.true_gradient(x),
            (Problem::LinearRegression(p), SamplingRegime::Sa) => p.population_gradient(x),
            (Problem::NonConvexToy(p), _) => p.true_gradient(x),
        }
    }

    /// Point used for `dist_sq` and by the directed attack.
    pub fn reference_point(&self, regime: SamplingRegime, reference: Reference) -> Vec<f64> {
        match (self, regime, reference) {
            (Problem::LinearRegression(p), SamplingRegime::Saa, Reference::Objective) => {
                p.constrained_minimizer()
            }
            (Problem::LinearRegression(p), _, _) => p.x_star().to_vec(),
            (Problem::NonConvexToy(p), _, _) => vec![0.0; p.dim()],
        }
    }

    /// `(mu, L)` when the problem is strongly convex.
    pub fn curvature(&self) -> Option<(f64, f64)> {
        match self {
            Problem::LinearRegression(p) => Some(p.curvature()),
            Problem::NonConvexToy(p) => {
                let mu = 2.0 - 2.0 * p.spec.lambda;
                (mu > 0.0).then_some((mu, p.smoothness()))
            }
        }
    }
}
