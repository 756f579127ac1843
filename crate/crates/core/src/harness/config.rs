use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::{AttackStrategy, InitialStates, MarkovCorruptionModel, TransitionProbs};
use crate::error::{Error, Result};
use crate::optimizer::{AggregationRule, RangeConfig};
use crate::problems::{
    LinearRegressionProblem, LinearRegressionSpec, NonConvexToyProblem, NonConvexToySpec, Problem,
    Reference, SamplingRegime,
};
use crate::rng::derive_seed;

pub const CONFIG_VERSION: u32 = 1;

fn default_cadence() -> u64 {
    10
}

fn default_clip() -> f64 {
    10.0
}

/// One experiment, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub problem: ProblemConfig,
    pub regime: SamplingRegime,
    /// `null` or absent: every agent is always trustworthy.
    #[serde(default)]
    pub corruption: Option<CorruptionConfig>,
    pub algorithm: AlgorithmConfig,
    /// Iteration budget `T`. RANGE runs `T + m - 1 + m0` iterations.
    pub iterations: u64,
    #[serde(default)]
    pub seed: u64,
    /// Record every `cadence` iterations plus the last one.
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Also write every iteration's agent states to `states.csv`.
    #[serde(default)]
    pub trace_states: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    LinearRegression {
        dim: usize,
        samples: usize,
        agents: usize,
        radius: f64,
        noise_std: f64,
        /// Data seed; derived from the run seed when absent.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        reference: Reference,
    },
    NonConvexToy {
        dim: usize,
        agents: usize,
        lambda: f64,
        noise_std: f64,
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl ProblemConfig {
    pub fn agents(&self) -> usize {
        match self {
            ProblemConfig::LinearRegression { agents, .. } | ProblemConfig::NonConvexToy { agents, .. } => *agents,
        }
    }

    pub fn reference(&self) -> Reference {
        match self {
            ProblemConfig::LinearRegression { reference, .. } => *reference,
            ProblemConfig::NonConvexToy { .. } => Reference::Objective,
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            ProblemConfig::LinearRegression { seed, .. } | ProblemConfig::NonConvexToy { seed, .. } => *seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemConfig::LinearRegression { .. } => self.linear_spec().expect("linear").validate(),
            ProblemConfig::NonConvexToy { .. } => self.toy_spec().expect("toy").validate(),
        }
    }

    fn linear_spec(&self) -> Option<LinearRegressionSpec> {
        match *self {
            ProblemConfig::LinearRegression { dim, samples, agents, radius, noise_std, .. } => {
                Some(LinearRegressionSpec { dim, samples, agents, radius, noise_std })
            }
            _ => None,
        }
    }

    fn toy_spec(&self) -> Option<NonConvexToySpec> {
        match *self {
            ProblemConfig::NonConvexToy { dim, agents, lambda, noise_std, radius, .. } => {
                Some(NonConvexToySpec { dim, agents, lambda, noise_std, radius })
            }
            _ => None,
        }
    }

    /// Generates the instance for a run with master seed `run_seed`.
    pub fn build(&self, run_seed: u64) -> Result<Problem> {
        let seed = self.seed().unwrap_or_else(|| derive_seed(run_seed, 1));
        match self {
            ProblemConfig::LinearRegression { .. } => Ok(Problem::LinearRegression(
                LinearRegressionProblem::generate(&self.linear_spec().expect("linear"), seed)?,
            )),
            ProblemConfig::NonConvexToy { .. } => Ok(Problem::NonConvexToy(NonConvexToyProblem::new(
                &self.toy_spec().expect("toy"),
                seed,
            )?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    pub p_b: f64,
    pub p_t: f64,
    pub attack: AttackStrategy,
    #[serde(default)]
    pub initial: InitialStates,
    /// Seed of the attack randomness; derived from the run seed when absent.
    #[serde(default)]
    pub attack_seed: Option<u64>,
}

impl CorruptionConfig {
    pub fn model(&self, n_agents: usize, run_seed: u64) -> Result<MarkovCorruptionModel> {
        let probs = TransitionProbs::new(self.p_b, self.p_t).map_err(|e| Error::Config(e.to_string()))?;
        Ok(MarkovCorruptionModel::new(probs, n_agents, derive_seed(run_seed, 2))?.with_initial(self.initial))
    }

    pub fn attack_seed(&self, run_seed: u64) -> u64 {
        self.attack_seed.unwrap_or_else(|| derive_seed(run_seed, 3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Range {
        gamma: f64,
        /// Window length `m`.
        window: usize,
        #[serde(default)]
        m0: usize,
        alpha1: f64,
        alpha2: f64,
    },
    Mean {
        gamma: f64,
        #[serde(default)]
        normalize: bool,
    },
    CoordinateMedian {
        gamma: f64,
        #[serde(default)]
        normalize: bool,
    },
    NormClip {
        gamma: f64,
        #[serde(default = "default_clip")]
        threshold: f64,
        #[serde(default)]
        normalize: bool,
    },
}

impl AlgorithmConfig {
    pub fn rule(&self) -> AggregationRule {
        match *self {
            AlgorithmConfig::Range { .. } => AggregationRule::Range,
            AlgorithmConfig::Mean { .. } => AggregationRule::Mean,
            AlgorithmConfig::CoordinateMedian { .. } => AggregationRule::CoordinateMedian,
            AlgorithmConfig::NormClip { threshold, .. } => AggregationRule::NormClip { threshold },
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            AlgorithmConfig::Range { gamma, .. }
            | AlgorithmConfig::Mean { gamma, .. }
            | AlgorithmConfig::CoordinateMedian { gamma, .. }
            | AlgorithmConfig::NormClip { gamma, .. } => gamma,
        }
    }

    /// RANGE parameters; baselines behave like a window of one with no
    /// trimming for the failure bookkeeping.
    pub fn range_config(&self, iterations: u64) -> Result<RangeConfig> {
        match *self {
            AlgorithmConfig::Range { gamma, window, m0, alpha1, alpha2 } => {
                RangeConfig::new(gamma, window, m0, alpha1, alpha2, iterations)
            }
            _ => RangeConfig::new(self.gamma(), 1, 0, 0.0, 0.0, iterations),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Re-checks every invariant the run relies on.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.problem.validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be at least 1".into()));
        }
        let n = self.problem.agents();
        let range = self.algorithm.range_config(self.iterations)?;
        range.validate_for(n)?;
        if let AlgorithmConfig::NormClip { threshold, .. } = self.algorithm {
            if !(threshold.is_finite() && threshold > 0.0) {
                return Err(Error::Config(format!("clip threshold must be positive, got {threshold}")));
            }
        }
        if let Some(c) = &self.corruption {
            TransitionProbs::new(c.p_b, c.p_t).map_err(|e| Error::Config(e.to_string()))?;
            c.attack.validate()?;
        }
        Ok(())
    }

    /// Number of update iterations the run executes.
    pub fn total_iterations(&self) -> Result<u64> {
        Ok(self.algorithm.range_config(self.iterations)?.total_iterations())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "version": 1,
        "problem": {"kind": "linear_regression", "dim": 4, "samples": 40, "agents": 10,
                    "radius": 10.0, "noise_std": 1.0},
        "regime": "SAA",
        "corruption": {"p_b": 0.025, "p_t": 0.1, "attack": {"kind": "directed_to_optimum"}},
        "algorithm": {"kind": "range", "gamma": 0.01, "window": 10, "alpha1": 0.3, "alpha2": 0.1},
        "iterations": 50
    }"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = RunConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.cadence, 10);
        assert_eq!(cfg.total_iterations().unwrap(), 59);
        assert_eq!(cfg.problem.reference(), Reference::Objective);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BASE.replace("\"iterations\": 50", "\"iterations\": 50, \"iteratoins\": 3");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))));
        let text = BASE.replace("\"gamma\": 0.01,", "\"gamma\": 0.01, \"beta\": 1,");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn integrality_errors_are_explicit() {
        let text = BASE.replace("\"window\": 10", "\"window\": 7");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("alpha1 * m"), "{err}");
        let text = BASE.replace("\"alpha2\": 0.1", "\"alpha2\": 0.15");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("alpha2 * N"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn version_and_probabilities_checked() {
        let text = BASE.replace("\"version\": 1", "\"version\": 2");
        assert!(RunConfig::from_json(&text).is_err());
        let text = BASE.replace("\"p_b\": 0.025", "\"p_b\": 0.5");
        assert_eq!(RunConfig::from_json(&text).unwrap_err().exit_code(), 2);
        let text = BASE.replace("\"samples\": 40", "\"samples\": 41");
        assert!(RunConfig::from_json(&text).is_err());
    }
}
