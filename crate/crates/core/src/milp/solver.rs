//! Solver interface and the built-in branch-and-bound backend.

use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolutionStatus, SolveOutcome, TerminationReason, Variable};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::milp::model::{MilpModel, Row, Sense, VarKind};

/// Tolerance for accepting a returned assignment against the original rows.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("model is unbounded")]
    Unbounded,
    #[error("LP engine failure: {0}")]
    Engine(String),
    #[error("solver returned an assignment violating {row} by {amount:.3e}")]
    BadSolution { row: String, amount: f64 },
    #[error("external solver: {0}")]
    External(String),
    #[error("brute force limit: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    /// Deterministic alternative to `time_limit`.
    pub node_limit: Option<u64>,
    /// Relative gap at which the search may stop early.
    pub mip_gap: f64,
    /// Permutes the column order handed to the LP engine, which changes how
    /// ties between equally good assignments are broken. `0` keeps the
    /// model's order.
    pub seed: u64,
    /// Runs an LP-guided rounding dive first and hands its result to the
    /// search as the initial incumbent.
    pub dive: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: None,
            node_limit: None,
            mip_gap: 0.0,
            seed: 0,
            dive: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    /// Stopped at the requested gap with an incumbent.
    Feasible,
    Infeasible,
    /// A time or node limit was hit; the incumbent, if any, is returned.
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Best proven lower bound, when the backend reports one.
    pub bound: Option<f64>,
    pub nodes: u64,
    pub elapsed: Duration,
}

impl MilpSolution {
    pub fn infeasible(elapsed: Duration) -> Self {
        MilpSolution {
            status: SolveStatus::Infeasible,
            values: None,
            objective: None,
            bound: None,
            nodes: 0,
            elapsed,
        }
    }

    pub fn has_incumbent(&self) -> bool {
        self.values.is_some()
    }
}

pub trait MilpSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<MilpSolution, SolverError>;
}

/// Rounds integer variables, lowers slack auxiliaries and checks every row
/// of the original model.
pub(crate) fn finish_values(model: &MilpModel, mut values: Vec<f64>) -> Result<(Vec<f64>, f64), SolverError> {
    for (v, x) in model.vars.iter().zip(values.iter_mut()) {
        if v.kind != VarKind::Continuous {
            *x = x.round();
        }
    }
    lower_auxiliaries(model, &mut values);
    if let Some((row, amount)) = model
        .violations(&values, FEASIBILITY_TOL)
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
    {
        return Err(SolverError::BadSolution { row, amount });
    }
    let obj = model.objective(&values);
    Ok((values, obj))
}

/// Moves every variable that only bounds other variables from above (no
/// negative cost, and only `>=` rows with a positive coefficient or `<=` rows
/// with a negative one) down to the smallest value its rows allow. Such a
/// variable is an indicator or a positive-part auxiliary; a solver stopped
/// at a gap, or one whose cost is zero, may leave it above that value. The
/// move keeps every row satisfied and never raises the objective.
fn lower_auxiliaries(model: &MilpModel, values: &mut [f64]) {
    let n = model.vars.len();
    let mut rows_of: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut lowerable = vec![true; n];
    for (r, row) in model.rows.iter().enumerate() {
        for &(j, a) in &row.terms {
            rows_of[j].push((r, a));
            let pushes_up = match row.sense {
                Sense::Ge => a > 0.0,
                Sense::Le => a < 0.0,
                Sense::Eq => false,
            };
            lowerable[j] &= pushes_up;
        }
    }
    let mut activity: Vec<f64> = model
        .rows
        .iter()
        .map(|row| row.terms.iter().map(|&(j, a)| a * values[j]).sum())
        .collect();
    for (j, v) in model.vars.iter().enumerate() {
        if !lowerable[j] || v.obj < 0.0 {
            continue;
        }
        let mut least = v.lb;
        for &(r, a) in &rows_of[j] {
            let rest = activity[r] - a * values[j];
            least = least.max((model.rows[r].rhs - rest) / a);
        }
        if v.kind != VarKind::Continuous {
            least = (least - FEASIBILITY_TOL).ceil();
        }
        if least < values[j] {
            let delta = least - values[j];
            for &(r, a) in &rows_of[j] {
                activity[r] += a * delta;
            }
            values[j] = least;
        }
    }
}

/// Result of [`presolve`]: tightened rows, or proof of infeasibility.
pub(crate) enum Presolved {
    Rows(Vec<Row>),
    Infeasible,
}

/// Drops empty rows (checking them for constant infeasibility) and rounds
/// the right-hand side of all-integer rows with a single common coefficient.
pub(crate) fn presolve(model: &MilpModel) -> Presolved {
    let mut rows = Vec::with_capacity(model.rows.len());
    for r in &model.rows {
        if r.terms.is_empty() {
            let ok = match r.sense {
                Sense::Le => 0.0 <= r.rhs + FEASIBILITY_TOL,
                Sense::Ge => 0.0 >= r.rhs - FEASIBILITY_TOL,
                Sense::Eq => r.rhs.abs() <= FEASIBILITY_TOL,
            };
            if !ok {
                return Presolved::Infeasible;
            }
            continue;
        }
        let mut row = r.clone();
        let a = row.terms[0].1;
        let uniform = row.terms.iter().all(|&(j, c)| c == a && model.vars[j].kind != VarKind::Continuous);
        if uniform && a > 0.0 {
            let k = row.rhs / a;
            match row.sense {
                Sense::Ge => row.rhs = (k - 1e-9).ceil() * a,
                Sense::Le => row.rhs = (k + 1e-9).floor() * a,
                Sense::Eq => {
                    if (k - k.round()).abs() > 1e-9 {
                        return Presolved::Infeasible;
                    }
                }
            }
        }
        rows.push(row);
    }
    Presolved::Rows(rows)
}

/// Hands the model to `microlp`, adding columns in `order`. With `relax` set
/// every variable is continuous. Returns `None` for empty integer domains.
fn make_problem(
    model: &MilpModel,
    rows: &[Row],
    order: &[usize],
    relax: bool,
) -> Option<(Problem, Vec<Variable>)> {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let mut handle = vec![None; model.vars.len()];
    for &j in order {
        let v = &model.vars[j];
        handle[j] = Some(match v.kind {
            VarKind::Continuous => problem.add_var(v.obj, (v.lb, v.ub)),
            _ if relax => problem.add_var(v.obj, (v.lb.ceil(), v.ub.floor())),
            VarKind::Binary if v.lb == 0.0 && v.ub >= 1.0 => problem.add_binary_var(v.obj),
            VarKind::Binary | VarKind::Integer => {
                let lb = v.lb.ceil().max(i32::MIN as f64) as i32;
                let ub = v.ub.floor().min(i32::MAX as f64) as i32;
                if lb > ub {
                    return None;
                }
                problem.add_integer_var(v.obj, (lb, ub))
            }
        });
    }
    let handle: Vec<Variable> = handle.into_iter().map(|h| h.expect("every variable added")).collect();
    for r in rows {
        let expr: Vec<_> = r.terms.iter().map(|&(j, a)| (handle[j], a)).collect();
        let op = match r.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(expr.as_slice(), op, r.rhs);
    }
    Some((problem, handle))
}

/// Rounding dive: solves the LP relaxation, then repeatedly fixes the
/// fractional integer variable closest to its ceiling, rounding up (or down
/// if up is infeasible) and re-solving from the previous basis.
fn dive(model: &MilpModel, rows: &[Row], order: &[usize]) -> Option<Vec<f64>> {
    let (problem, handle) = make_problem(model, rows, order, true)?;
    let SolveOutcome::Solution(mut sol) = problem.solve().ok()? else {
        return None;
    };
    let ints: Vec<usize> = (0..model.vars.len())
        .filter(|&j| model.vars[j].kind != VarKind::Continuous)
        .collect();
    for _ in 0..=2 * ints.len() {
        let mut pick: Option<(usize, f64, f64)> = None;
        for &j in &ints {
            let x = sol.var_value_raw(handle[j]);
            let f = x - x.floor();
            if f > 1e-6 && f < 1.0 - 1e-6 && pick.is_none_or(|(_, _, best)| f > best) {
                pick = Some((j, x, f));
            }
        }
        let Some((j, x, _)) = pick else {
            let raw: Vec<f64> = handle.iter().map(|&h| sol.var_value_raw(h)).collect();
            return finish_values(model, raw).ok().map(|(v, _)| v);
        };
        sol = match sol.clone().fix_var(handle[j], x.ceil()) {
            Ok(SolveOutcome::Solution(s)) => s,
            _ => match sol.fix_var(handle[j], x.floor()) {
                Ok(SolveOutcome::Solution(s)) => s,
                _ => return None,
            },
        };
    }
    None
}

/// Branch and bound over LP relaxations solved by the `microlp` simplex.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSolver;

impl MilpSolver for BuiltinSolver {
    fn name(&self) -> &'static str {
        "builtin"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<MilpSolution, SolverError> {
        let start = Instant::now();
        let rows = match presolve(model) {
            Presolved::Rows(r) => r,
            Presolved::Infeasible => return Ok(MilpSolution::infeasible(start.elapsed())),
        };
        for v in &model.vars {
            if v.lb > v.ub + FEASIBILITY_TOL {
                return Ok(MilpSolution::infeasible(start.elapsed()));
            }
        }

        let mut order: Vec<usize> = (0..model.vars.len()).collect();
        if opts.seed != 0 {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
        }
        let Some((problem, handle)) = make_problem(model, &rows, &order, false) else {
            return Ok(MilpSolution::infeasible(start.elapsed()));
        };

        let mut options = microlp::SolveOptions::default();
        options.time_limit = opts.time_limit;
        options.node_limit = opts.node_limit;
        options.mip_gap = opts.mip_gap;
        if opts.dive && model.vars.iter().any(|v| v.kind != VarKind::Continuous) {
            if let Some(values) = dive(model, &rows, &order) {
                options.warm_start = Some(handle.iter().copied().zip(values).collect());
            }
        }
        let outcome = match problem.solve_with(options) {
            Ok(o) => o,
            Err(microlp::Error::Infeasible) => return Ok(MilpSolution::infeasible(start.elapsed())),
            Err(microlp::Error::Unbounded) => return Err(SolverError::Unbounded),
            Err(e) => return Err(SolverError::Engine(e.to_string())),
        };
        match outcome {
            SolveOutcome::Solution(sol) => {
                let raw: Vec<f64> = handle.iter().map(|&h| sol.var_value_raw(h)).collect();
                let (values, objective) = finish_values(model, raw)?;
                let status = match (sol.status(), sol.termination_reason()) {
                    (SolutionStatus::Optimal, _) => SolveStatus::Optimal,
                    (_, TerminationReason::MipGap) => SolveStatus::Feasible,
                    _ => SolveStatus::Timeout,
                };
                Ok(MilpSolution {
                    status,
                    values: Some(values),
                    objective: Some(objective),
                    bound: sol.stats().best_bound,
                    nodes: sol.stats().nodes_solved,
                    elapsed: start.elapsed(),
                })
            }
            SolveOutcome::Interrupted(i) => Ok(MilpSolution {
                status: SolveStatus::Timeout,
                values: None,
                objective: None,
                bound: i.stats().best_bound,
                nodes: i.stats().nodes_solved,
                elapsed: start.elapsed(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{RowFamily, VarDesc, VarRole};

    fn int_var(obj: f64, ub: f64) -> VarDesc {
        VarDesc {
            name: format!("x{obj}"),
            kind: VarKind::Integer,
            lb: 0.0,
            ub,
            obj,
            role: VarRole::NodeUsed { slice: 0, slot: 0, node: 0 },
        }
    }

    /// min 3a + 2b  s.t.  2a + 2b >= 3, a - b = 0  ->  a = b = 1
    fn small() -> MilpModel {
        let mut m = MilpModel::default();
        let a = m.add_var(int_var(3.0, 5.0));
        let b = m.add_var(int_var(2.0, 5.0));
        m.add_row("cover".into(), RowFamily::Cover, vec![(a, 2.0), (b, 2.0)], Sense::Ge, 3.0);
        m.add_row("bal".into(), RowFamily::Flow, vec![(a, 1.0), (b, -1.0)], Sense::Eq, 0.0);
        m
    }

    #[test]
    fn slack_auxiliaries_are_lowered() {
        // y >= k - 1 with free y, and k pinned by cover and capacity
        let mut m = MilpModel::default();
        let k = m.add_var(int_var(1.0, 5.0));
        let y = m.add_var(int_var(0.0, 5.0));
        m.add_row("cover".into(), RowFamily::Cover, vec![(k, 1.0)], Sense::Ge, 3.0);
        m.add_row("adapt".into(), RowFamily::Adaptation, vec![(y, 1.0), (k, -1.0)], Sense::Ge, -1.0);
        let (values, obj) = finish_values(&m, vec![3.0, 4.0]).unwrap();
        assert_eq!(values, vec![3.0, 2.0]);
        assert_eq!(obj, 3.0);
        // k also sits in a `>=` row with a negative coefficient, so it stays
        let (values, _) = finish_values(&m, vec![5.0, 4.0]).unwrap();
        assert_eq!(values, vec![5.0, 4.0]);
    }

    #[test]
    fn presolve_rounds_uniform_rows() {
        let Presolved::Rows(rows) = presolve(&small()) else { panic!() };
        assert_eq!(rows[0].rhs, 4.0);
        assert_eq!(rows[1].rhs, 0.0);
    }

    #[test]
    fn presolve_detects_empty_infeasible_row() {
        let mut m = small();
        m.add_row("empty".into(), RowFamily::Cover, vec![], Sense::Ge, 0.5);
        assert!(matches!(presolve(&m), Presolved::Infeasible));
        let s = BuiltinSolver.solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn solves_small_model() {
        for seed in [0, 1, 99] {
            let s = BuiltinSolver
                .solve(&small(), &SolveOptions { seed, ..Default::default() })
                .unwrap();
            assert_eq!(s.status, SolveStatus::Optimal);
            assert_eq!(s.values.unwrap(), vec![1.0, 1.0]);
            assert_eq!(s.objective, Some(5.0));
        }
    }

    #[test]
    fn infeasible_model() {
        let mut m = small();
        m.add_row("cap".into(), RowFamily::NodeCapacity, vec![(0, 1.0)], Sense::Le, 0.0);
        let s = BuiltinSolver.solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(!s.has_incumbent());
    }
}
