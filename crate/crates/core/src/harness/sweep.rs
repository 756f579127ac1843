use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::config::{RunConfig, CONFIG_VERSION};
use super::run::{fmt_f64, run_experiment, RunSummary};

/// A grid of runs: a base config, labelled JSON merge patches, and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub version: u32,
    pub base: Value,
    /// Cartesian product of the axes' values.
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
    /// Applied on top of every axis combination.
    #[serde(default)]
    pub variants: Vec<SweepVariant>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for seeds `0..replicates`.
    #[serde(default)]
    pub replicates: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<SweepVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepVariant {
    pub label: String,
    #[serde(default)]
    pub patch: Value,
}

/// JSON merge patch: objects merge key by key, `null` deletes, anything
/// else replaces.
pub fn merge_patch(target: &mut Value, patch: &Value) {
    let Value::Object(p) = patch else {
        *target = patch.clone();
        return;
    };
    if !target.is_object() {
        *target = Value::Object(Default::default());
    }
    let t = target.as_object_mut().expect("object");
    for (k, v) in p {
        if v.is_null() {
            t.remove(k);
        } else {
            merge_patch(t.entry(k.clone()).or_insert(Value::Null), v);
        }
    }
}

/// A labelled config before seeding.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub label: String,
    pub config: Value,
}

impl SweepGrid {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: SweepGrid = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if grid.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported grid version {}", grid.version)));
        }
        Ok(grid)
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.seeds, self.replicates) {
            (Some(s), _) => s.clone(),
            (None, Some(r)) => (0..r).collect(),
            (None, None) => vec![self.base.get("seed").and_then(Value::as_u64).unwrap_or(0)],
        }
    }

    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        if self.axes.is_empty() && self.variants.is_empty() {
            return Err(Error::Config("sweep grid has no axes and no variants".into()));
        }
        if let Some(a) = self.axes.iter().find(|a| a.values.is_empty()) {
            return Err(Error::Config(format!("sweep axis '{}' has no values", a.name)));
        }
        if self.seeds().is_empty() {
            return Err(Error::Config("sweep grid has no seeds".into()));
        }
        let mut cells = vec![SweepCell { label: String::new(), config: self.base.clone() }];
        let variant_axis;
        let mut all_axes: Vec<&[SweepVariant]> = self.axes.iter().map(|a| a.values.as_slice()).collect();
        if !self.variants.is_empty() {
            variant_axis = self.variants.clone();
            all_axes.push(&variant_axis);
        }
        for values in all_axes {
            cells = cells
                .iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut config = c.config.clone();
                        merge_patch(&mut config, &v.patch);
                        let label =
                            if c.label.is_empty() { v.label.clone() } else { format!("{}/{}", c.label, v.label) };
                        SweepCell { label, config }
                    })
                })
                .collect();
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub label: String,
    pub seed: u64,
    pub result: std::result::Result<RunSummary, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub replicates: usize,
    pub ok: usize,
    pub failed: usize,
    pub mean_final_dist_sq: Option<f64>,
    pub std_final_dist_sq: Option<f64>,
    pub mean_tail_dist_sq: Option<f64>,
    pub std_tail_dist_sq: Option<f64>,
    pub mean_initial_dist_sq: Option<f64>,
    pub mean_tail_grad_norm: Option<f64>,
    pub mean_z_fail_rate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<SweepRun>,
}

fn seeded(cell: &SweepCell, seed: u64) -> Result<RunConfig> {
    let mut v = cell.config.clone();
    merge_patch(&mut v, &serde_json::json!({ "seed": seed }));
    if let Value::Object(o) = &mut v {
        o.remove("output");
    }
    let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `(mean, sample standard deviation)`; the deviation needs two values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Runs every cell for every seed (in parallel) and aggregates per cell.
pub fn run_sweep(grid: &SweepGrid) -> Result<SweepReport> {
    let cells = grid.cells()?;
    let seeds = grid.seeds();
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cell = &cells[c];
            let result = seeded(cell, seed)
                .and_then(|cfg| run_experiment(&cfg))
                .map(|o| o.summary)
                .map_err(|e| e.to_string());
            SweepRun { label: cell.label.clone(), seed, result }
        })
        .collect();

    let rows = cells
        .iter()
        .map(|cell| {
            let mine: Vec<&SweepRun> = runs.iter().filter(|r| r.label == cell.label).collect();
            let ok: Vec<&RunSummary> = mine.iter().filter_map(|r| r.result.as_ref().ok()).collect();
            let pick = |f: &dyn Fn(&RunSummary) -> Option<f64>| ok.iter().filter_map(|s| f(s)).collect::<Vec<_>>();
            let (mean_final, std_final) = mean_std(&pick(&|s| s.final_dist_sq));
            let (mean_tail, std_tail) = mean_std(&pick(&|s| s.tail_mean_dist_sq));
            let error = mine.iter().find_map(|r| r.result.as_ref().err().cloned());
            SweepRow {
                label: cell.label.clone(),
                replicates: mine.len(),
                ok: ok.len(),
                failed: mine.len() - ok.len(),
                mean_final_dist_sq: mean_final,
                std_final_dist_sq: std_final,
                mean_tail_dist_sq: mean_tail,
                std_tail_dist_sq: std_tail,
                mean_initial_dist_sq: mean_std(&pick(&|s| s.initial_dist_sq)).0,
                mean_tail_grad_norm: mean_std(&pick(&|s| Some(s.tail_mean_grad_norm))).0,
                mean_z_fail_rate: mean_std(&pick(&|s| Some(s.z_fail_rate))).0,
                error,
            }
        })
        .collect();
    Ok(SweepReport { rows, runs })
}

pub const SWEEP_HEADER: &str = "label,replicates,ok,failed,mean_final_dist_sq,std_final_dist_sq,mean_tail_dist_sq,std_tail_dist_sq,mean_initial_dist_sq,mean_tail_grad_norm,mean_z_fail_rate,error";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.label),
            r.replicates,
            r.ok,
            r.failed,
            opt(r.mean_final_dist_sq),
            opt(r.std_final_dist_sq),
            opt(r.mean_tail_dist_sq),
            opt(r.std_tail_dist_sq),
            opt(r.mean_initial_dist_sq),
            opt(r.mean_tail_grad_norm),
            opt(r.mean_z_fail_rate),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}
