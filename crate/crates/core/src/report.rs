//! CSV artifacts of a run and their replay validation.
//!
//! Every file starts with a `#schema=<name>/<version>` line followed by a
//! regular CSV header. Deterministic outputs (`decisions.csv`,
//! `assignments.csv`, `utilization.csv`, `metrics_summary.csv`) depend only on
//! the scenario and seed; wall-clock measurements go to `timing.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::metrics::DecisionRecord;
use crate::engine::{generate_requests, EngineError, GammaCache, RunOutput, SimulationMetrics};
use crate::infra::{InfrastructureNetwork, Resource};
use crate::milp::{cost_breakdown, validate_assignment, validate_capacity, CommittedLoad, SliceAssignment, Violation};
use crate::scenario::Scenario;
use crate::slice::{PriorityClass, SliceRequest};
use crate::uncertainty::background_targets;

pub const SCHEMA_VERSION: u32 = 1;
pub const DECISIONS: &str = "decisions";
pub const ASSIGNMENTS: &str = "assignments";
pub const UTILIZATION: &str = "utilization";
pub const SUMMARY: &str = "metrics_summary";
pub const TIMING: &str = "timing";

/// Tolerance when comparing logged costs against recomputed ones.
const COST_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: expected schema `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("log does not match the scenario: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn schema_line(name: &str) -> String {
    format!("#schema={name}/{SCHEMA_VERSION}")
}

/// File name of an artifact, e.g. `decisions.csv`.
pub fn file_name(name: &str) -> String {
    format!("{name}.csv")
}

fn class_name(c: PriorityClass) -> &'static str {
    match c {
        PriorityClass::Premium => "premium",
        PriorityClass::Standard => "standard",
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// One line of `decisions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub label: String,
    pub seed: u64,
    pub variant: String,
    pub request_id: u64,
    pub slice_type: u8,
    pub class: String,
    pub pattern: u8,
    pub arrival: f64,
    pub k_on: u32,
    pub k_off: u32,
    pub decision_slot: u32,
    pub decision_time: f64,
    pub response_delay: f64,
    pub order: usize,
    pub priority: f64,
    pub granted: bool,
    pub cost_resource: f64,
    pub cost_fixed: f64,
    pub cost_adaptation: f64,
    pub cost_total: f64,
    /// Positive instance changes per active slot, `;`-separated.
    pub adjustments: String,
    /// SSP relaxation parameter per active slot, `;`-separated.
    pub gammas: String,
}

impl DecisionRow {
    fn new(label: &str, seed: u64, variant: &str, d: &DecisionRecord) -> Self {
        DecisionRow {
            label: label.to_string(),
            seed,
            variant: variant.to_string(),
            request_id: d.request_id,
            slice_type: d.slice_type,
            class: class_name(d.class).into(),
            pattern: d.pattern.number(),
            arrival: d.arrival,
            k_on: d.k_on,
            k_off: d.k_off,
            decision_slot: d.decision_slot,
            decision_time: d.decision_time,
            response_delay: d.response_delay(),
            order: d.order,
            priority: d.priority,
            granted: d.granted,
            cost_resource: d.cost.resource,
            cost_fixed: d.cost.fixed,
            cost_adaptation: d.cost.adaptation,
            cost_total: d.cost.total(),
            adjustments: join(&d.adjustments),
            gammas: join(&d.gammas),
        }
    }
}

/// One reserved instance count of `assignments.csv`. `element` is a node id
/// or `from>to` for a link; `item` indexes the VNF or virtual link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub request_id: u64,
    pub slot: u32,
    pub kind: String,
    pub element: String,
    pub item: usize,
    pub count: u32,
}

/// Reserved versus available capacity of one element and resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationRow {
    pub label: String,
    pub seed: u64,
    pub slot: u32,
    pub kind: String,
    pub element: String,
    pub resource: String,
    pub reserved: f64,
    pub background: f64,
    pub capacity: f64,
    pub utilization: f64,
}

/// Per-class aggregates of one run; `class` is `premium`, `standard` or `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub seed: u64,
    pub variant: String,
    pub alpha: f64,
    pub delta_p: f64,
    pub class: String,
    pub requests: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub mean_delay: f64,
    pub cost_per_slice: f64,
    pub adjustments_per_slice_slot: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub label: String,
    pub seed: u64,
    pub slot: u32,
    pub batch_size: usize,
    pub granted: usize,
    pub solves: usize,
    pub limit_stops: usize,
    pub nodes: u64,
    pub solver_seconds: f64,
}

pub fn decision_rows(label: &str, scenario: &Scenario, out: &RunOutput) -> Vec<DecisionRow> {
    let c = &scenario.config;
    out.decisions
        .iter()
        .map(|d| DecisionRow::new(label, c.seed, c.variant.name(), d))
        .collect()
}

pub fn link_label(net: &InfrastructureNetwork, link: usize) -> String {
    let l = net.link(link);
    format!("{}>{}", net.node(l.from).id, net.node(l.to).id)
}

pub fn assignment_rows(net: &InfrastructureNetwork, assignments: &[SliceAssignment]) -> Vec<AssignmentRow> {
    let mut rows = Vec::new();
    for a in assignments.iter().filter(|a| a.granted) {
        for (&(slot, i, v), &count) in a.node.iter().filter(|(_, &c)| c > 0) {
            rows.push(AssignmentRow {
                request_id: a.request_id,
                slot,
                kind: "vnf".into(),
                element: net.node(i).id.clone(),
                item: v,
                count,
            });
        }
        for (&(slot, l, e), &count) in a.link.iter().filter(|(_, &c)| c > 0) {
            rows.push(AssignmentRow {
                request_id: a.request_id,
                slot,
                kind: "vlink".into(),
                element: link_label(net, l),
                item: e,
                count,
            });
        }
    }
    rows
}

/// Reserved load of all granted requests, per slot.
pub fn total_load(net: &InfrastructureNetwork, requests: &[SliceRequest], assignments: &[SliceAssignment]) -> CommittedLoad {
    let by_id: BTreeMap<u64, &SliceRequest> = requests.iter().map(|r| (r.id, r)).collect();
    let mut load = CommittedLoad::new(net);
    for a in assignments.iter().filter(|a| a.granted) {
        if let Some(r) = by_id.get(&a.request_id) {
            load.add(a, &r.template);
        }
    }
    load
}

pub fn utilization_rows(label: &str, scenario: &Scenario, out: &RunOutput) -> Vec<UtilizationRow> {
    let net = &scenario.network;
    let load = total_load(net, &out.requests, &out.assignments);
    let bg = &out.background;
    let mut rows = Vec::new();
    let mut push = |slot, kind: &str, element: String, resource: &str, reserved: f64, background: f64, capacity: f64| {
        rows.push(UtilizationRow {
            label: label.to_string(),
            seed: scenario.config.seed,
            slot,
            kind: kind.into(),
            element,
            resource: resource.into(),
            reserved,
            background,
            capacity,
            utilization: if capacity > 0.0 { (reserved + background) / capacity } else { 0.0 },
        })
    };
    for (slot, l) in load.slots() {
        for (i, node) in net.nodes().iter().enumerate() {
            for r in Resource::ALL {
                if node.capacity[r] > 0.0 {
                    push(slot, "node", node.id.clone(), r.tag(), l.node[i][r], bg.node[i][r], node.capacity[r]);
                }
            }
        }
        for (k, link) in net.links().iter().enumerate() {
            push(slot, "link", link_label(net, k), "bandwidth", l.link[k], bg.link[k], link.bandwidth);
        }
    }
    rows
}

pub fn summary_rows(label: &str, scenario: &Scenario, out: &RunOutput) -> Vec<SummaryRow> {
    let c = &scenario.config;
    let policy = c.effective_policy();
    let row = |class: &str, m: &SimulationMetrics| SummaryRow {
        label: label.to_string(),
        seed: c.seed,
        variant: c.variant.name().into(),
        alpha: policy.alpha,
        delta_p: policy.delta_p,
        class: class.into(),
        requests: m.requests(),
        accepted: m.accepted(),
        acceptance_rate: if m.requests() == 0 { 0.0 } else { m.accepted() as f64 / m.requests() as f64 },
        mean_delay: m.mean_delay(),
        cost_per_slice: m.cost_per_slice(),
        adjustments_per_slice_slot: m.adjustments_per_slice_slot(),
        violations: out.violations.len(),
    };
    let of_class = |class| {
        let ds: Vec<DecisionRecord> = out.decisions.iter().filter(|d| d.class == class).cloned().collect();
        SimulationMetrics::from_records(&ds, &[])
    };
    vec![
        row("premium", &of_class(PriorityClass::Premium)),
        row("standard", &of_class(PriorityClass::Standard)),
        row("all", &out.metrics),
    ]
}

pub fn timing_rows(label: &str, scenario: &Scenario, out: &RunOutput) -> Vec<TimingRow> {
    out.batches
        .iter()
        .map(|b| TimingRow {
            label: label.to_string(),
            seed: scenario.config.seed,
            slot: b.slot,
            batch_size: b.size,
            granted: b.granted,
            solves: b.solves,
            limit_stops: b.timeouts,
            nodes: b.nodes,
            solver_seconds: b.solver_time.as_secs_f64(),
        })
        .collect()
}

/// Serializes rows under a schema line.
pub fn to_csv<T: Serialize>(name: &str, rows: &[T]) -> Result<Vec<u8>, csv::Error> {
    let mut buf = schema_line(name).into_bytes();
    buf.push(b'\n');
    let mut w = csv::Writer::from_writer(buf);
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf, ReportError> {
    let path = dir.join(file_name(name));
    let bytes = to_csv(name, rows).map_err(|source| ReportError::Csv {
        path: path.clone(),
        source,
    })?;
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Writes all artifacts of a run into `dir`, creating it if needed.
pub fn write_run(dir: &Path, label: &str, scenario: &Scenario, out: &RunOutput) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(vec![
        write_table(dir, DECISIONS, &decision_rows(label, scenario, out))?,
        write_table(dir, ASSIGNMENTS, &assignment_rows(&scenario.network, &out.assignments))?,
        write_table(dir, UTILIZATION, &utilization_rows(label, scenario, out))?,
        write_table(dir, SUMMARY, &summary_rows(label, scenario, out))?,
        write_table(dir, TIMING, &timing_rows(label, scenario, out))?,
    ])
}

/// Parses rows written by [`to_csv`], checking the schema line.
pub fn from_csv<T: for<'de> Deserialize<'de>, R: Read>(name: &str, path: &Path, reader: R) -> Result<Vec<T>, ReportError> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = schema_line(name);
    if first.trim_end() != expected {
        return Err(ReportError::Schema {
            path: path.to_path_buf(),
            expected,
            found: first.trim_end().to_string(),
        });
    }
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| ReportError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_table<T: for<'de> Deserialize<'de>>(path: &Path, name: &str) -> Result<Vec<T>, ReportError> {
    let f = fs::File::open(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_csv(name, path, f)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';').map(|x| x.parse().ok()).collect()
}

/// Rebuilds per-request assignments from `assignments.csv` rows.
pub fn rebuild_assignments(
    net: &InfrastructureNetwork,
    requests: &BTreeMap<u64, &SliceRequest>,
    decisions: &[DecisionRow],
    rows: &[AssignmentRow],
) -> Result<BTreeMap<u64, SliceAssignment>, ReportError> {
    let mut out: BTreeMap<u64, SliceAssignment> = decisions
        .iter()
        .map(|d| (d.request_id, SliceAssignment::empty(requests[&d.request_id], d.granted)))
        .collect();
    let links: BTreeMap<String, usize> = (0..net.links().len()).map(|l| (link_label(net, l), l)).collect();
    for r in rows {
        let a = out
            .get_mut(&r.request_id)
            .ok_or_else(|| ReportError::Mismatch(format!("assignment for unknown request {}", r.request_id)))?;
        let t = &requests[&r.request_id].template;
        match r.kind.as_str() {
            "vnf" => {
                let i = net
                    .node_index(&r.element)
                    .ok_or_else(|| ReportError::Mismatch(format!("unknown node `{}`", r.element)))?;
                if r.item >= t.vnfs().len() {
                    return Err(ReportError::Mismatch(format!("request {} has no VNF {}", r.request_id, r.item)));
                }
                a.node.insert((r.slot, i, r.item), r.count);
            }
            "vlink" => {
                let l = *links
                    .get(&r.element)
                    .ok_or_else(|| ReportError::Mismatch(format!("unknown link `{}`", r.element)))?;
                if r.item >= t.vlinks().len() {
                    return Err(ReportError::Mismatch(format!(
                        "request {} has no virtual link {}",
                        r.request_id, r.item
                    )));
                }
                a.link.insert((r.slot, l, r.item), r.count);
            }
            other => return Err(ReportError::Mismatch(format!("unknown assignment kind `{other}`"))),
        }
    }
    Ok(out)
}

/// Replays a logged run against its scenario: regenerates the workload,
/// checks that the log describes it, and re-validates every assignment,
/// every logged cost, the decision deadlines and the per-slot capacities.
/// Returns the violations found; an empty list means the log is consistent.
pub fn validate_logs(
    scenario: &Scenario,
    decisions: &[DecisionRow],
    assignments: &[AssignmentRow],
) -> Result<Vec<Violation>, ReportError> {
    let config = &scenario.config;
    let net = &scenario.network;
    let generated = generate_requests(config, &scenario.catalog)?;
    let requests: BTreeMap<u64, &SliceRequest> = generated.iter().map(|r| (r.id, r)).collect();
    let mismatch = |m: String| Err(ReportError::Mismatch(m));
    if decisions.len() != requests.len() {
        return mismatch(format!(
            "{} decisions logged, scenario generates {} requests",
            decisions.len(),
            requests.len()
        ));
    }
    for d in decisions {
        if d.seed != config.seed || d.variant != config.variant.name() {
            return mismatch(format!(
                "request {} logged with seed {} and variant {}, scenario has seed {} and variant {}",
                d.request_id,
                d.seed,
                d.variant,
                config.seed,
                config.variant.name()
            ));
        }
        let Some(r) = requests.get(&d.request_id) else {
            return mismatch(format!("request {} is not generated by the scenario", d.request_id));
        };
        if r.slice_type != d.slice_type
            || class_name(r.class) != d.class
            || r.arrival != d.arrival
            || r.k_on != d.k_on
            || r.k_off != d.k_off
            || r.pattern.number() != d.pattern
        {
            return mismatch(format!("request {} differs from the generated workload", d.request_id));
        }
    }

    let rebuilt = rebuild_assignments(net, &requests, decisions, assignments)?;
    let mut cache = GammaCache::new(config.ssp);
    let mut out = Vec::new();
    for d in decisions {
        let r = requests[&d.request_id];
        let a = &rebuilt[&d.request_id];
        if d.decision_slot >= r.k_on {
            out.push(Violation {
                request_id: Some(r.id),
                row: format!("deadline_s{}", r.id),
                amount: (d.decision_slot + 1 - r.k_on) as f64,
            });
        }
        let targets = cache.slice_targets(r)?;
        out.extend(validate_assignment(r, &targets, a, net));
        let cost = if d.granted {
            cost_breakdown(a, &r.template, net).total()
        } else {
            0.0
        };
        if (cost - d.cost_total).abs() > COST_TOL * cost.abs().max(1.0) {
            out.push(Violation {
                request_id: Some(r.id),
                row: format!("cost_s{}", r.id),
                amount: (cost - d.cost_total).abs(),
            });
        }
        let logged_adj: Option<Vec<u32>> = parse_list(&d.adjustments);
        let adj: Vec<u32> = if d.granted {
            r.active_slots().map(|s| a.adjustments(s)).collect()
        } else {
            Vec::new()
        };
        if logged_adj.as_ref() != Some(&adj) {
            out.push(Violation {
                request_id: Some(r.id),
                row: format!("adjustments_s{}", r.id),
                amount: f64::NAN,
            });
        }
    }
    let bg = background_targets(net, &config.background).map_err(EngineError::from)?;
    let reservations: Vec<_> = rebuilt
        .values()
        .filter(|a| a.granted)
        .map(|a| (requests[&a.request_id].template.as_ref(), a))
        .collect();
    out.extend(validate_capacity(net, &bg, &reservations));
    Ok(out)
}

/// Reads `decisions.csv` and `assignments.csv` from `dir` and replays them.
pub fn validate_dir(scenario: &Scenario, dir: &Path) -> Result<Vec<Violation>, ReportError> {
    let decisions: Vec<DecisionRow> = read_table(&dir.join(file_name(DECISIONS)), DECISIONS)?;
    let assignments: Vec<AssignmentRow> = read_table(&dir.join(file_name(ASSIGNMENTS)), ASSIGNMENTS)?;
    validate_logs(scenario, &decisions, &assignments)
}
