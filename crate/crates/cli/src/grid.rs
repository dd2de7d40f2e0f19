//! Experiment grids: settings crossed with reservation variants and seeds,
//! aggregated into a tidy table of per-setting means and deviations.
//!
//! ```toml
//! scenario = "desk.toml"
//! seeds = [1, 2, 3]
//! variants = ["jpr", "spr"]
//!
//! [[cells]]
//! label = "a0"
//! alpha = 0.0
//!
//! [[cells]]
//! label = "jit"
//! just_in_time = true
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use netslice::engine::{run, Variant};
use netslice::report;
use netslice::scenario::{load_scenario, Overrides, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{solver_for, CliError};

/// One row of the grid: a labelled set of overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub label: String,
    pub alpha: Option<f64>,
    pub delta_p: Option<f64>,
    /// Runs the just-in-time form of each variant.
    #[serde(default)]
    pub just_in_time: bool,
    pub horizon: Option<u32>,
    pub max_requests: Option<usize>,
    pub adaptation_cost: Option<f64>,
    pub node_limit: Option<u64>,
    pub mip_gap: Option<f64>,
    pub time_limit: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    /// Base scenario, relative to the grid file.
    pub scenario: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    pub cells: Vec<GridCell>,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Jpr]
}

/// A single run of the grid.
#[derive(Debug, Clone)]
pub struct Member {
    pub label: String,
    pub variant: Variant,
    pub seed: u64,
    pub scenario: Scenario,
}

fn jit_form(v: Variant) -> Variant {
    match v {
        Variant::Jpr | Variant::Jit => Variant::Jit,
        Variant::Spr | Variant::JitSpr => Variant::JitSpr,
    }
}

/// Parses a grid and expands it into members, cell-major.
pub fn load_grid(path: &Path) -> Result<Vec<Member>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let doc: GridDoc =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if doc.seeds.is_empty() {
        return Err(CliError::Config("grid needs at least one seed".into()));
    }
    if doc.cells.is_empty() || doc.variants.is_empty() {
        return Err(CliError::Config("grid needs at least one cell and one variant".into()));
    }
    let mut labels = BTreeSet::new();
    for c in &doc.cells {
        if !labels.insert(c.label.as_str()) {
            return Err(CliError::Config(format!("duplicate grid label `{}`", c.label)));
        }
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = load_scenario(&base.join(&doc.scenario))?;
    let mut members = Vec::new();
    for c in &doc.cells {
        let mut variants: Vec<Variant> = Vec::new();
        for &v in &doc.variants {
            let v = if c.just_in_time { jit_form(v) } else { v };
            if !variants.contains(&v) {
                variants.push(v);
            }
        }
        for v in variants {
            for &seed in &doc.seeds {
                let mut s = scenario.clone();
                Overrides {
                    label: Some(c.label.clone()),
                    seed: Some(seed),
                    variant: Some(v),
                    alpha: c.alpha,
                    delta_p: c.delta_p,
                    horizon: c.horizon,
                    max_requests: c.max_requests,
                    solver: None,
                    time_limit: c.time_limit,
                    node_limit: c.node_limit,
                    mip_gap: c.mip_gap,
                    adaptation_cost: c.adaptation_cost,
                }
                .apply(&mut s)?;
                members.push(Member {
                    label: c.label.clone(),
                    variant: v,
                    seed,
                    scenario: s,
                });
            }
        }
    }
    Ok(members)
}

/// Per-run values of the compared metrics.
#[derive(Debug, Clone)]
pub struct MemberResult {
    pub values: Vec<(&'static str, f64)>,
}

/// One line of `compare.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub variant: String,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

pub const COMPARE: &str = "compare";

fn member_dir(out: &Path, m: &Member) -> PathBuf {
    out.join(&m.label).join(m.variant.name()).join(format!("seed-{}", m.seed))
}

fn run_member(out: &Path, m: &Member) -> Result<MemberResult, CliError> {
    let s = &m.scenario;
    let solver = solver_for(s.backend)?;
    let output = run(&s.config, &s.network, &s.catalog, solver.as_ref())?;
    report::write_run(&member_dir(out, m), &m.label, s, &output)?;
    if !output.violations.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} {} seed {}: {} safety violations",
            m.label,
            m.variant,
            m.seed,
            output.violations.len()
        )));
    }
    let x = &output.metrics;
    let per_request = if x.requests() == 0 {
        0.0
    } else {
        x.solver_time.as_secs_f64() / x.requests() as f64
    };
    eprintln!("done {} {} seed {}", m.label, m.variant, m.seed);
    Ok(MemberResult {
        values: vec![
            ("premium_acceptance", x.premium.acceptance_rate()),
            ("standard_acceptance", x.standard.acceptance_rate()),
            ("premium_delay", x.premium.mean_delay()),
            ("standard_delay", x.standard.mean_delay()),
            ("adjustments_per_slice_slot", x.adjustments_per_slice_slot()),
            ("cost_per_slice", x.cost_per_slice()),
            ("solver_seconds_per_request", per_request),
        ],
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates member results by label and variant, in member order.
pub fn aggregate(members: &[Member], results: &[MemberResult]) -> Vec<CompareRow> {
    let mut groups: Vec<(String, Variant, Vec<&MemberResult>)> = Vec::new();
    for (m, r) in members.iter().zip(results) {
        match groups.iter_mut().find(|(l, v, _)| *l == m.label && *v == m.variant) {
            Some(g) => g.2.push(r),
            None => groups.push((m.label.clone(), m.variant, vec![r])),
        }
    }
    let mut rows = Vec::new();
    for (label, variant, rs) in groups {
        for (k, (metric, _)) in rs[0].values.iter().enumerate() {
            let xs: Vec<f64> = rs.iter().map(|r| r.values[k].1).collect();
            let (mean, std) = mean_std(&xs);
            rows.push(CompareRow {
                label: label.clone(),
                variant: variant.name().into(),
                metric: metric.to_string(),
                runs: xs.len(),
                mean,
                std,
            });
        }
    }
    rows
}

pub fn cmd_compare(grid: &Path, out: &Path, jobs: Option<usize>) -> Result<(), CliError> {
    let members = load_grid(grid)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<MemberResult> =
        pool.install(|| members.par_iter().map(|m| run_member(out, m)).collect::<Result<_, _>>())?;
    let rows = aggregate(&members, &results);
    report::write_table(out, COMPARE, &rows)?;
    let mut current = (String::new(), String::new());
    for r in &rows {
        if (r.label.as_str(), r.variant.as_str()) != (current.0.as_str(), current.1.as_str()) {
            current = (r.label.clone(), r.variant.clone());
            println!("{} / {}", r.label, r.variant);
        }
        println!("  {:<28} {:>12.4} ± {:.4}", r.metric, r.mean, r.std);
    }
    Ok(())
}
