//! Markovian agent corruption.
//!
//! Each agent flips between a trustworthy and a Byzantine state according to
//! an independent two-state Markov chain with transition matrix
//!
//! ```text
//!     [ 1 - p_b   p_b     ]
//!     [ p_t       1 - p_t ]
//! ```
//!
//! Trustworthy agents report their honest minibatch gradient, Byzantine
//! agents report whatever the configured [`AttackStrategy`] produces.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentState {
    Trustworthy,
    Byzantine,
}

impl AgentState {
    pub fn is_byzantine(self) -> bool {
        self == AgentState::Byzantine
    }
}

/// Validated transition probabilities, `0 < p_b < p_t < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionProbs {
    p_b: f64,
    p_t: f64,
}

impl TransitionProbs {
    pub fn new(p_b: f64, p_t: f64) -> Result<Self> {
        if !(p_b > 0.0 && p_b < p_t && p_t < 1.0) {
            return Err(Error::InvalidInput(format!(
                "transition probabilities must satisfy 0 < p_b < p_t < 1 (p_b = {p_b}, p_t = {p_t})"
            )));
        }
        Ok(Self { p_b, p_t })
    }

    /// Probability of turning Byzantine from the trustworthy state.
    pub fn p_b(&self) -> f64 {
        self.p_b
    }

    /// Probability of recovering from the Byzantine state.
    pub fn p_t(&self) -> f64 {
        self.p_t
    }

    /// Spectral gap `p_b + p_t` of the chain.
    pub fn gap(&self) -> f64 {
        self.p_b + self.p_t
    }

    /// Second eigenvalue `1 - p_b - p_t`.
    pub fn lambda(&self) -> f64 {
        1.0 - self.p_b - self.p_t
    }

    /// Rows are the current state (trustworthy, Byzantine).
    pub fn transition_matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.p_b, self.p_b], [self.p_t, 1.0 - self.p_t]]
    }

    /// `(pi_trustworthy, pi_byzantine)`.
    pub fn stationary_distribution(&self) -> (f64, f64) {
        let gap = self.gap();
        (self.p_t / gap, self.p_b / gap)
    }

    /// Stationary Byzantine mass `p_b / (p_b + p_t)`.
    pub fn byzantine_fraction(&self) -> f64 {
        self.p_b / self.gap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStates {
    #[default]
    AllTrustworthy,
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovCorruptionModel {
    p_b: f64,
    p_t: f64,
    n_agents: usize,
    seed: u64,
    initial: InitialStates,
}

impl MarkovCorruptionModel {
    pub fn new(probs: TransitionProbs, n_agents: usize, seed: u64) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidInput("need at least one agent".into()));
        }
        Ok(Self {
            p_b: probs.p_b(),
            p_t: probs.p_t(),
            n_agents,
            seed,
            initial: InitialStates::AllTrustworthy,
        })
    }

    pub fn with_initial(mut self, initial: InitialStates) -> Self {
        self.initial = initial;
        self
    }

    /// Degenerate chains (e.g. `p_b = 0`) for boundary tests.
    #[cfg(test)]
    pub(crate) fn unchecked(p_b: f64, p_t: f64, n_agents: usize, seed: u64) -> Self {
        Self { p_b, p_t, n_agents, seed, initial: InitialStates::AllTrustworthy }
    }

    pub fn p_b(&self) -> f64 {
        self.p_b
    }

    pub fn p_t(&self) -> f64 {
        self.p_t
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stationary_distribution(&self) -> (f64, f64) {
        let gap = self.p_b + self.p_t;
        (self.p_t / gap, self.p_b / gap)
    }

    /// One independent random stream per agent.
    pub fn streams(&self) -> StateStreams {
        StateStreams {
            rngs: (0..self.n_agents)
                .map(|i| rng::stream(self.seed, Domain::AgentState, i as u64))
                .collect(),
        }
    }

    /// Iteration-zero states. Stationary initialization consumes one draw per
    /// agent from that agent's stream.
    pub fn initial_states(&self, streams: &mut StateStreams) -> AgentStateVector {
        let states = match self.initial {
            InitialStates::AllTrustworthy => vec![AgentState::Trustworthy; self.n_agents],
            InitialStates::Stationary => {
                let (_, pi_byz) = self.stationary_distribution();
                streams
                    .rngs
                    .iter_mut()
                    .map(|r| {
                        if r.random::<f64>() < pi_byz {
                            AgentState::Byzantine
                        } else {
                            AgentState::Trustworthy
                        }
                    })
                    .collect()
            }
        };
        AgentStateVector { states, iteration: 0 }
    }

    /// Advances every agent's chain by one step.
    pub fn step_states(
        &self,
        current: &AgentStateVector,
        streams: &mut StateStreams,
    ) -> Result<AgentStateVector> {
        if current.states.len() != self.n_agents || streams.rngs.len() != self.n_agents {
            return Err(Error::InvalidInput(format!(
                "state vector has {} agents, model has {}",
                current.states.len(),
                self.n_agents
            )));
        }
        let states = current
            .states
            .iter()
            .zip(streams.rngs.iter_mut())
            .map(|(&s, r)| self.transition(s, r.random::<f64>()))
            .collect();
        Ok(AgentStateVector { states, iteration: current.iteration + 1 })
    }

    #[inline]
    pub(crate) fn transition(&self, state: AgentState, u: f64) -> AgentState {
        match state {
            AgentState::Trustworthy if u < self.p_b => AgentState::Byzantine,
            AgentState::Byzantine if u < self.p_t => AgentState::Trustworthy,
            s => s,
        }
    }
}

/// Per-agent random streams driving the state chains.
#[derive(Debug, Clone)]
pub struct StateStreams {
    rngs: Vec<ChaCha8Rng>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentStateVector {
    pub states: Vec<AgentState>,
    pub iteration: u64,
}

impl AgentStateVector {
    pub fn byzantine_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_byzantine()).count()
    }
}

/// How a Byzantine agent forms its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackStrategy {
    /// `2 ||grad F(x)|| (x* - x) / ||x* - x||`: a vector pointing at the
    /// optimum, so the descent step moves away from it.
    DirectedToOptimum,
    /// `-c * honest` with `c ~ Uniform[c_min, c_max]` drawn per report.
    InvertAndBoost { c_min: f64, c_max: f64 },
    /// `scale * N(0, I)`.
    LargeRandom { scale: f64 },
}

impl AttackStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackStrategy::DirectedToOptimum => Ok(()),
            AttackStrategy::InvertAndBoost { c_min, c_max } => {
                if c_min.is_finite() && c_max.is_finite() && c_min <= c_max {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "invert_and_boost needs finite c_min <= c_max (got {c_min}, {c_max})"
                    )))
                }
            }
            AttackStrategy::LargeRandom { scale } => {
                if scale.is_finite() && scale >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("large_random scale must be >= 0, got {scale}")))
                }
            }
        }
    }

    pub fn needs_optimum(&self) -> bool {
        matches!(self, AttackStrategy::DirectedToOptimum)
    }
}

/// What the adversary may look at when forging a report.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub x: &'a [f64],
    pub optimum: Option<&'a [f64]>,
    pub true_gradient: &'a [f64],
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// The report `g_{i,t}` of one agent.
pub fn produce_feedback(
    state: AgentState,
    honest: &[f64],
    attack: &AttackStrategy,
    ctx: &AttackContext<'_>,
    attack_rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if state == AgentState::Trustworthy {
        return Ok(honest.to_vec());
    }
    match *attack {
        AttackStrategy::DirectedToOptimum => {
            let opt = ctx.optimum.ok_or_else(|| {
                Error::Config("directed_to_optimum attack requires a known optimum".into())
            })?;
            let diff: Vec<f64> = opt.iter().zip(ctx.x).map(|(o, x)| o - x).collect();
            let dist = norm(&diff);
            if dist == 0.0 {
                return Ok(vec![0.0; honest.len()]);
            }
            let scale = 2.0 * norm(ctx.true_gradient) / dist;
            Ok(diff.into_iter().map(|d| scale * d).collect())
        }
        AttackStrategy::InvertAndBoost { c_min, c_max } => {
            let c = if c_min == c_max { c_min } else { attack_rng.random_range(c_min..=c_max) };
            Ok(honest.iter().map(|g| -c * g).collect())
        }
        AttackStrategy::LargeRandom { scale } => Ok((0..honest.len())
            .map(|_| scale * attack_rng.sample::<f64, _>(StandardNormal))
            .collect()),
    }
}
