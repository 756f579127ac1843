use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{plan, BoundInputs, BoundReport};
use crate::problems::Problem;

use super::config::{ProblemConfig, CONFIG_VERSION};

/// Planner input. Curvature, radius, batch size and dimension missing from
/// `bounds` are filled in from `problem` when one is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub version: u32,
    pub bounds: BoundInputs,
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl PlanConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PlanConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {}", cfg.version)));
        }
        Ok(cfg)
    }

    /// Bound inputs with problem-derived fields filled in.
    pub fn resolved_inputs(&self) -> Result<BoundInputs> {
        let mut inputs = self.bounds.clone();
        let Some(pc) = &self.problem else { return Ok(inputs) };
        pc.validate()?;
        if pc.agents() != inputs.n_agents {
            return Err(Error::Config(format!(
                "problem has {} agents but bounds use n_agents = {}",
                pc.agents(),
                inputs.n_agents
            )));
        }
        let problem = pc.build(self.seed)?;
        inputs.dim.get_or_insert(problem.dim());
        if let Some((mu, l)) = problem.curvature() {
            inputs.mu.get_or_insert(mu);
            inputs.l.get_or_insert(l);
        }
        if let Problem::LinearRegression(p) = &problem {
            inputs.radius.get_or_insert(p.spec().radius);
            inputs.b.get_or_insert(p.batch_size());
        }
        if let Problem::NonConvexToy(p) = &problem {
            if let Some(r) = p.spec().radius {
                inputs.radius.get_or_insert(r);
            }
        }
        Ok(inputs)
    }

    pub fn report(&self) -> Result<(BoundInputs, BoundReport)> {
        let inputs = self.resolved_inputs()?;
        let report = plan(&inputs)?;
        Ok((inputs, report))
    }
}

/// Human-readable two-column rendering of a report.
pub fn plan_table(inputs: &BoundInputs, r: &BoundReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"));
    let flag = |v: Option<bool>| v.map_or_else(|| "n/a".to_string(), |b| b.to_string());
    let mut rows: Vec<(&str, String)> = vec![
        ("m / m0", format!("{} / {}", inputs.m, inputs.m0)),
        ("N", inputs.n_agents.to_string()),
        ("alpha1 / alpha2", format!("{} / {}", inputs.alpha1, inputs.alpha2)),
        ("p_b / p_t", format!("{} / {}", inputs.p_b, inputs.p_t)),
        ("kappa", opt(r.kappa)),
        ("P_Y (exact)", format!("{:.6e}", r.p_y)),
        (
            "P_Y (Chernoff)",
            r.p_y_chernoff.map_or_else(
                || "n/a (alpha1 <= stationary Byzantine fraction)".to_string(),
                |c| format!("{:.6e}{}", c.value, if c.vacuous { " (vacuous)" } else { "" }),
            ),
        ),
        ("K(m0)", format!("{:.6}", r.k_m0)),
        ("P_Z (binomial)", format!("{:.6e}", r.p_z_binomial)),
        ("P_Z (Hoeffding)", format!("{:.6e}", r.p_z_hoeffding)),
        ("P_Z < 1/(1+kappa)", flag(r.satisfies_strongly_convex)),
        ("P_Z < 1/2", r.satisfies_nonconvex.to_string()),
        (
            "min window",
            r.min_window
                .map(|m| m.to_string())
                .unwrap_or_else(|| r.min_window_note.clone().unwrap_or_default()),
        ),
        ("C_alpha1 / C_alpha2", format!("{:.6} / {:.6}", r.constants.c_alpha1, r.constants.c_alpha2)),
        ("c0", opt(r.constants.c0)),
        ("C_bar (convex)", opt(r.constants.c_bar_cvx)),
        ("C_bar (non-convex)", opt(r.constants.c_bar_noncvx)),
        ("gamma max (SAA)", opt(r.constants.gamma_max_saa)),
        ("gamma max (SA)", opt(r.constants.gamma_max_sa)),
        ("neighborhood (advisory)", opt(r.constants.neighborhood_estimate)),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows.drain(..) {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}
