//! Slotted simulation of prioritized slice admission.
//!
//! Requests received before the processing instant `(k+1) - epsilon` of
//! slot `k` join the pending set. At that instant the policy selects a
//! batch, which is reserved either jointly (one model for the whole batch,
//! dropping the lowest-priority request while it does not fit) or
//! sequentially (one model per request, in processing order). Granted
//! reservations are never modified afterwards.

pub mod metrics;
pub mod workload;

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infra::{InfrastructureNetwork, Resource};
use crate::milp::{
    build_problem2, build_problem3, cost_breakdown, extract_assignments, validate_assignment,
    validate_capacity_with, BatchEntry, BuildError, BuildOptions, CommittedLoad, MilpSolution, MilpSolver,
    SliceAssignment, SliceTargets, SolveOptions, SolveStatus, SolverError, CAPACITY_TOL,
};
use crate::policy::{
    age_priority, assign_priority, deny_candidate, select_batch, PendingRequest, PolicyError, PolicyParams,
};
use crate::slice::{aggregate_moments, user_count_moments, SliceCatalog, SliceError, SliceRequest};
use crate::uncertainty::{background_targets, gamma_ssp, BackgroundModel, BackgroundTargets, SspOptions, SspTargets, UncertaintyError};

pub use metrics::{BatchRecord, ClassStats, DecisionRecord, SimulationMetrics, SlotViolation};
pub use workload::{generate_requests, processing_slot};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("internal: {0}")]
    Internal(String),
}

/// Reservation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Joint reservation of each batch.
    Jpr,
    /// Sequential reservation in processing order.
    Spr,
    /// Joint reservation with every request deferred to the slot before
    /// its activation.
    Jit,
    /// Sequential reservation with just-in-time processing.
    JitSpr,
}

impl Variant {
    pub fn joint(self) -> bool {
        matches!(self, Variant::Jpr | Variant::Jit)
    }

    pub fn just_in_time(self) -> bool {
        matches!(self, Variant::Jit | Variant::JitSpr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Jpr => "jpr",
            Variant::Spr => "spr",
            Variant::Jit => "jit",
            Variant::JitSpr => "jit-spr",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jpr" => Ok(Variant::Jpr),
            "spr" => Ok(Variant::Spr),
            "jit" => Ok(Variant::Jit),
            "jit-spr" => Ok(Variant::JitSpr),
            _ => Err(format!("unknown variant `{s}` (expected jpr, spr, jit or jit-spr)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How many generated requests are tagged Premium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PremiumTagging {
    /// `round(fraction * total)` requests, chosen uniformly.
    Fraction(f64),
    /// Exactly this many (capped at the total), chosen uniformly.
    Count(usize),
}

/// What to do when a solve stops on a node or time limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeoutPolicy {
    /// Keep the best assignment found; deny if there is none.
    #[default]
    UseIncumbent,
    /// Treat any limit stop as infeasible.
    Deny,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Length of the processing window at the end of each slot, as a
    /// fraction of the slot.
    pub epsilon: f64,
    /// Number of slots with arrivals.
    pub horizon: u32,
    /// Stops generating once this many requests exist.
    pub max_requests: Option<usize>,
    /// Mean Poisson arrivals per slot.
    pub arrival_rate: f64,
    pub premium: PremiumTagging,
    /// Inclusive bounds of the slots between processing and activation.
    pub activation_delay: (u32, u32),
    /// Inclusive bounds of the number of active slots.
    pub lifetime: (u32, u32),
    /// Slice types drawn uniformly.
    pub slice_types: Vec<u8>,
    /// Probability that a request of a type allowing it follows the
    /// varying demand pattern.
    pub varying_probability: f64,
    pub policy: PolicyParams,
    pub variant: Variant,
    pub seed: u64,
    pub background: BackgroundModel,
    pub ssp: SspOptions,
    pub solve: SolveOptions,
    pub timeout_policy: TimeoutPolicy,
    pub build: BuildOptions,
}

/// Solver settings used by the engine unless overridden: stop at a 5%
/// relative gap or after 100 branch-and-bound nodes, keeping the incumbent
/// found by the rounding dive.
pub fn default_solve_options() -> SolveOptions {
    SolveOptions {
        mip_gap: 0.05,
        node_limit: Some(100),
        ..Default::default()
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            epsilon: 0.1,
            horizon: 500,
            max_requests: None,
            arrival_rate: 2.0,
            premium: PremiumTagging::Fraction(0.25),
            activation_delay: (1, 6),
            lifetime: (1, 3),
            slice_types: vec![1, 2, 3],
            varying_probability: 0.5,
            policy: PolicyParams::default(),
            variant: Variant::Jpr,
            seed: 1,
            background: BackgroundModel::default(),
            ssp: SspOptions::default(),
            solve: default_solve_options(),
            timeout_policy: TimeoutPolicy::default(),
            build: BuildOptions::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon {} must lie in (0, 1)", self.epsilon));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return bad(format!("arrival_rate {} must be positive", self.arrival_rate));
        }
        if self.activation_delay.0 < 1 || self.activation_delay.0 > self.activation_delay.1 {
            return bad(format!("activation_delay {:?} must satisfy 1 <= lo <= hi", self.activation_delay));
        }
        if self.lifetime.0 < 1 || self.lifetime.0 > self.lifetime.1 {
            return bad(format!("lifetime {:?} must satisfy 1 <= lo <= hi", self.lifetime));
        }
        if !(0.0..=1.0).contains(&self.varying_probability) {
            return bad(format!("varying_probability {} must lie in [0, 1]", self.varying_probability));
        }
        if self.slice_types.is_empty() {
            return bad("slice_types must not be empty".into());
        }
        if let PremiumTagging::Fraction(f) = self.premium {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("premium fraction {f} must lie in [0, 1]"));
            }
        }
        self.policy.validate()?;
        Ok(())
    }

    /// Policy parameters after applying the variant.
    pub fn effective_policy(&self) -> PolicyParams {
        if self.variant.just_in_time() {
            self.policy.just_in_time()
        } else {
            self.policy
        }
    }
}

/// Memoizes relaxation factors by slice type, user-count distribution and
/// target, which is all they depend on within one catalog.
#[derive(Debug, Clone)]
pub struct GammaCache {
    opts: SspOptions,
    map: HashMap<(u8, u32, u64, u64), SspTargets>,
}

impl GammaCache {
    pub fn new(opts: SspOptions) -> Self {
        GammaCache {
            opts,
            map: HashMap::new(),
        }
    }

    pub fn slice_targets(&mut self, request: &SliceRequest) -> Result<SliceTargets, EngineError> {
        let mut per_slot = Vec::with_capacity(request.lifetime() as usize);
        for offset in 0..request.lifetime() as usize {
            let p = request.user_count.prob(offset)?;
            let key = (
                request.slice_type,
                request.user_count.trials,
                p.to_bits(),
                request.target_ssp.to_bits(),
            );
            let t = match self.map.get(&key) {
                Some(t) => t.clone(),
                None => {
                    let (mean, var) = user_count_moments(&request.user_count, offset)?;
                    let moments = aggregate_moments(&request.user_stats, mean, var)?;
                    let t = gamma_ssp(
                        &moments,
                        &request.user_stats,
                        &request.user_count,
                        offset,
                        request.target_ssp,
                        &self.opts,
                    )?;
                    self.map.insert(key, t.clone());
                    t
                }
            };
            per_slot.push(t);
        }
        Ok(SliceTargets::from_relaxed(request, &per_slot)?)
    }
}

/// Everything a run produced. Decisions and assignments are in processing
/// order and parallel to each other.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub requests: Vec<SliceRequest>,
    pub decisions: Vec<DecisionRecord>,
    pub assignments: Vec<SliceAssignment>,
    pub batches: Vec<BatchRecord>,
    pub violations: Vec<SlotViolation>,
    pub committed: CommittedLoad,
    pub background: BackgroundTargets,
    pub metrics: SimulationMetrics,
}

/// Generates the workload of `config` and runs it.
pub fn run(
    config: &ScenarioConfig,
    net: &InfrastructureNetwork,
    catalog: &SliceCatalog,
    solver: &dyn MilpSolver,
) -> Result<RunOutput, EngineError> {
    let requests = generate_requests(config, catalog)?;
    run_requests(config, net, requests, solver)
}

fn check_background(net: &InfrastructureNetwork, bg: &BackgroundTargets) -> Result<(), BuildError> {
    for (i, n) in net.nodes().iter().enumerate() {
        for r in Resource::ALL {
            if bg.node[i][r] > n.capacity[r] + CAPACITY_TOL {
                return Err(BuildError::BackgroundExceedsCapacity {
                    element: n.id.clone(),
                    resource: r.to_string(),
                });
            }
        }
    }
    for (l, link) in net.links().iter().enumerate() {
        if bg.link[l] > link.bandwidth + CAPACITY_TOL {
            return Err(BuildError::BackgroundExceedsCapacity {
                element: net.link_name(l),
                resource: "bandwidth".into(),
            });
        }
    }
    Ok(())
}

fn usable(sol: &MilpSolution, policy: TimeoutPolicy) -> Option<&[f64]> {
    match (sol.status, policy) {
        (SolveStatus::Optimal | SolveStatus::Feasible, _) | (SolveStatus::Timeout, TimeoutPolicy::UseIncumbent) => {
            sol.values.as_deref()
        }
        _ => None,
    }
}

struct Runner<'a> {
    config: &'a ScenarioConfig,
    net: &'a InfrastructureNetwork,
    solver: &'a dyn MilpSolver,
    bg: BackgroundTargets,
    cache: GammaCache,
    committed: CommittedLoad,
    out_decisions: Vec<DecisionRecord>,
    out_assignments: Vec<SliceAssignment>,
    batches: Vec<BatchRecord>,
    violations: Vec<SlotViolation>,
    /// Granted requests still holding resources after the current slot.
    active: Vec<(SliceRequest, SliceAssignment)>,
}

impl Runner<'_> {
    fn solve(&self, model: &crate::milp::MilpModel, rec: &mut BatchRecord) -> Result<MilpSolution, EngineError> {
        let sol = self.solver.solve(model, &self.config.solve)?;
        rec.solves += 1;
        rec.nodes += sol.nodes;
        rec.solver_time += sol.elapsed;
        if sol.status == SolveStatus::Timeout {
            rec.timeouts += 1;
        }
        Ok(sol)
    }

    fn process(&mut self, slot: u32, pending: &[PendingRequest], batch: &[usize]) -> Result<(), EngineError> {
        let targets: Vec<SliceTargets> = batch
            .iter()
            .map(|&i| self.cache.slice_targets(&pending[i].request))
            .collect::<Result<_, _>>()?;
        let mut rec = BatchRecord {
            slot,
            size: batch.len(),
            granted: 0,
            solves: 0,
            timeouts: 0,
            nodes: 0,
            solver_time: Default::default(),
        };
        let mut result: Vec<Option<SliceAssignment>> = vec![None; batch.len()];
        if self.config.variant.joint() {
            let mut granted: Vec<usize> = (0..batch.len()).collect();
            while !granted.is_empty() {
                let entries: Vec<BatchEntry> = granted
                    .iter()
                    .map(|&p| BatchEntry {
                        request: &pending[batch[p]].request,
                        targets: &targets[p],
                    })
                    .collect();
                let model = build_problem2(&entries, &self.committed, self.net, &self.bg, &self.config.build)?;
                let sol = self.solve(&model, &mut rec)?;
                if let Some(values) = usable(&sol, self.config.timeout_policy) {
                    for (&p, a) in granted.iter().zip(extract_assignments(&model, values, &entries)) {
                        result[p] = Some(a);
                    }
                    break;
                }
                let members: Vec<usize> = granted.iter().map(|&p| batch[p]).collect();
                let pos = deny_candidate(pending, &members).expect("non-empty batch");
                granted.remove(pos);
            }
            for (p, a) in result.iter().enumerate() {
                if let Some(a) = a {
                    self.committed.add(a, &pending[batch[p]].request.template);
                }
            }
        } else {
            for (p, &i) in batch.iter().enumerate() {
                let entry = BatchEntry {
                    request: &pending[i].request,
                    targets: &targets[p],
                };
                let model = build_problem3(entry, &self.committed, self.net, &self.bg, &self.config.build)?;
                let sol = self.solve(&model, &mut rec)?;
                if let Some(values) = usable(&sol, self.config.timeout_policy) {
                    let a = extract_assignments(&model, values, &[entry]).remove(0);
                    self.committed.add(&a, &entry.request.template);
                    result[p] = Some(a);
                }
            }
        }

        let decision_time = (slot + 1) as f64 - self.config.epsilon;
        for (p, &i) in batch.iter().enumerate() {
            let req = &pending[i].request;
            let granted = result[p].is_some();
            let a = result[p].take().unwrap_or_else(|| SliceAssignment::empty(req, false));
            for v in validate_assignment(req, &targets[p], &a, self.net) {
                self.violations.push(SlotViolation { slot, violation: v });
            }
            let (cost, adjustments) = if granted {
                rec.granted += 1;
                (
                    cost_breakdown(&a, &req.template, self.net),
                    req.active_slots().map(|s| a.adjustments(s)).collect(),
                )
            } else {
                (Default::default(), Vec::new())
            };
            self.out_decisions.push(DecisionRecord {
                request_id: req.id,
                slice_type: req.slice_type,
                class: req.class,
                pattern: req.pattern,
                arrival: req.arrival,
                k_on: req.k_on,
                k_off: req.k_off,
                decision_slot: slot,
                decision_time,
                order: self.out_decisions.len(),
                priority: pending[i].priority,
                granted,
                cost,
                adjustments,
                gammas: targets[p].slots.iter().map(|s| s.gamma).collect(),
            });
            if granted {
                self.active.push((req.clone(), a.clone()));
            }
            self.out_assignments.push(a);
        }
        self.batches.push(rec);
        Ok(())
    }

    /// Independent end-of-slot check: the future load of all granted
    /// requests, recomputed from their stored assignments, must fit next to
    /// the background targets and match the incrementally committed load.
    fn validate_slot(&mut self, slot: u32) {
        self.active.retain(|(r, _)| r.k_off > slot);
        let reservations: Vec<_> = self
            .active
            .iter()
            .map(|(r, a)| (r.template.as_ref(), a))
            .collect();
        for v in validate_capacity_with(self.net, &self.bg, &CommittedLoad::new(self.net), &reservations) {
            self.violations.push(SlotViolation { slot, violation: v });
        }
        let mut recomputed = CommittedLoad::new(self.net);
        for (t, a) in &reservations {
            recomputed.add(a, t);
        }
        let diff = recomputed.max_difference(&self.committed, slot + 1);
        if diff > CAPACITY_TOL {
            self.violations.push(SlotViolation {
                slot,
                violation: crate::milp::Violation {
                    request_id: None,
                    row: format!("committed_l{}", slot + 1),
                    amount: diff,
                },
            });
        }
    }
}

/// Runs the slot loop over a given request list.
pub fn run_requests(
    config: &ScenarioConfig,
    net: &InfrastructureNetwork,
    mut requests: Vec<SliceRequest>,
    solver: &dyn MilpSolver,
) -> Result<RunOutput, EngineError> {
    config.validate()?;
    let policy = config.effective_policy();
    let bg = background_targets(net, &config.background)?;
    check_background(net, &bg)?;
    requests.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));

    let mut runner = Runner {
        config,
        net,
        solver,
        bg,
        cache: GammaCache::new(config.ssp),
        committed: CommittedLoad::new(net),
        out_decisions: Vec::new(),
        out_assignments: Vec::new(),
        batches: Vec::new(),
        violations: Vec::new(),
        active: Vec::new(),
    };
    let mut pending: Vec<PendingRequest> = Vec::new();
    let mut next = 0;
    let mut slot: u32 = 0;
    while next < requests.len() || !pending.is_empty() {
        let cutoff = (slot + 1) as f64 - config.epsilon;
        while next < requests.len() && requests[next].arrival < cutoff {
            let request = requests[next].clone();
            let priority = assign_priority(&request, slot, &policy)?;
            pending.push(PendingRequest {
                request,
                priority,
                processed: false,
                arrival_slot: slot,
            });
            next += 1;
        }
        let batch = select_batch(&pending, &policy);
        if !batch.is_empty() {
            runner.process(slot, &pending, &batch)?;
            for &i in &batch {
                pending[i].processed = true;
            }
        }
        runner.validate_slot(slot);
        if let Some(p) = pending.iter().find(|p| !p.processed && p.request.k_on <= slot + 1) {
            return Err(EngineError::Internal(format!(
                "request {} missed its last processing slot {}",
                p.request.id, slot
            )));
        }
        pending.retain(|p| !p.processed);
        for p in &mut pending {
            p.priority = age_priority(p.priority, &p.request, slot + 1, &policy);
        }
        slot += 1;
    }

    let metrics = SimulationMetrics::from_records(&runner.out_decisions, &runner.batches);
    Ok(RunOutput {
        requests,
        decisions: runner.out_decisions,
        assignments: runner.out_assignments,
        batches: runner.batches,
        violations: runner.violations,
        committed: runner.committed,
        background: runner.bg,
        metrics,
    })
}
