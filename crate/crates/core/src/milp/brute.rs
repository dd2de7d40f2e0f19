//! Exhaustive reference solvers for tiny instances.
//!
//! [`brute_force_model`] enumerates the integer variables of a built model.
//! [`brute_force_instance`] never looks at a model: it enumerates raw VNF and
//! link instance counts, checks them with the assignment validator and
//! prices them with [`cost_breakdown`], so it is independent of the model
//! builder.

use crate::infra::InfrastructureNetwork;
use crate::milp::assignment::{cost_breakdown, validate_assignment, validate_capacity_with, CommittedLoad, SliceAssignment};
use crate::milp::build::{BatchEntry, SliceTargets};
use crate::milp::model::{MilpModel, VarKind};
use crate::milp::solver::{SolverError, FEASIBILITY_TOL};
use crate::uncertainty::BackgroundTargets;

/// Largest number of enumerated variables accepted by the brute-force oracles.
pub const MAX_ENUMERATED: usize = 12;

fn odometer(digits: &mut [u32], radix: &[u32]) -> bool {
    for (d, &r) in digits.iter_mut().zip(radix) {
        if *d < r {
            *d += 1;
            return true;
        }
        *d = 0;
    }
    false
}

/// Best assignment of an all-integer model by enumeration. Returns `None`
/// when no assignment is feasible.
pub fn brute_force_model(model: &MilpModel) -> Result<Option<(Vec<f64>, f64)>, SolverError> {
    if model.vars.len() > MAX_ENUMERATED {
        return Err(SolverError::TooLarge(format!("{} variables", model.vars.len())));
    }
    if model.vars.iter().any(|v| v.kind == VarKind::Continuous || !v.ub.is_finite()) {
        return Err(SolverError::TooLarge("continuous or unbounded variable".into()));
    }
    let lb: Vec<i64> = model.vars.iter().map(|v| v.lb.ceil() as i64).collect();
    let radix: Vec<u32> = model
        .vars
        .iter()
        .zip(&lb)
        .map(|(v, &l)| (v.ub.floor() as i64 - l).max(0) as u32)
        .collect();
    let mut digits = vec![0u32; radix.len()];
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let x: Vec<f64> = digits.iter().zip(&lb).map(|(&d, &l)| (l + d as i64) as f64).collect();
        if model.rows.iter().all(|r| r.violation(&x) <= FEASIBILITY_TOL) {
            let obj = model.objective(&x);
            if best.as_ref().is_none_or(|(_, b)| obj < b - 1e-9) {
                best = Some((x, obj));
            }
        }
        if !odometer(&mut digits, &radix) {
            break;
        }
    }
    Ok(best)
}

/// Optimal reservations found by [`brute_force_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct BruteResult {
    pub objective: f64,
    pub assignments: Vec<SliceAssignment>,
}

/// Enumerates every VNF and link instance count in `0..=cap` for all
/// granted requests and returns the cheapest assignment that passes the
/// validator, or `None` if none does.
pub fn brute_force_instance(
    entries: &[BatchEntry],
    committed: &CommittedLoad,
    net: &InfrastructureNetwork,
    bg: &BackgroundTargets,
    cap: u32,
) -> Result<Option<BruteResult>, SolverError> {
    let n_nodes = net.nodes().len();
    let n_links = net.links().len();
    let total: usize = entries
        .iter()
        .map(|e| {
            let t = &e.request.template;
            e.request.lifetime() as usize * (n_nodes * t.vnfs().len() + n_links * t.vlinks().len())
        })
        .sum();
    if total > MAX_ENUMERATED {
        return Err(SolverError::TooLarge(format!("{total} enumerated counts")));
    }

    // locally feasible single-slot assignments per (request, slot)
    let mut groups: Vec<(usize, Vec<SliceAssignment>)> = Vec::new();
    for (s, e) in entries.iter().enumerate() {
        let t = &e.request.template;
        for slot in e.request.active_slots() {
            let mut one_slot = e.request.clone();
            one_slot.k_on = slot;
            one_slot.k_off = slot;
            let targets = SliceTargets {
                k_on: slot,
                slots: vec![e.targets.slot(slot).cloned().ok_or_else(|| {
                    SolverError::TooLarge(format!("missing targets for slot {slot}"))
                })?],
            };
            let mut positions = Vec::new();
            for i in 0..n_nodes {
                for v in 0..t.vnfs().len() {
                    positions.push((true, i, v));
                }
            }
            for l in 0..n_links {
                for f in 0..t.vlinks().len() {
                    positions.push((false, l, f));
                }
            }
            let radix = vec![cap; positions.len()];
            let mut digits = vec![0u32; positions.len()];
            let mut feasible = Vec::new();
            loop {
                let mut a = SliceAssignment::empty(&one_slot, true);
                for (&(is_node, x, y), &d) in positions.iter().zip(&digits) {
                    if d > 0 {
                        if is_node {
                            a.node.insert((slot, x, y), d);
                        } else {
                            a.link.insert((slot, x, y), d);
                        }
                    }
                }
                if validate_assignment(&one_slot, &targets, &a, net).is_empty()
                    && validate_capacity_with(net, bg, committed, &[(t, &a)]).is_empty()
                {
                    feasible.push(a);
                }
                if !odometer(&mut digits, &radix) {
                    break;
                }
            }
            if feasible.is_empty() {
                return Ok(None);
            }
            groups.push((s, feasible));
        }
    }

    let mut best: Option<BruteResult> = None;
    let mut pick = vec![0usize; groups.len()];
    let radix: Vec<u32> = groups.iter().map(|(_, g)| g.len() as u32 - 1).collect();
    loop {
        let mut assignments: Vec<SliceAssignment> = entries
            .iter()
            .map(|e| SliceAssignment::empty(e.request, true))
            .collect();
        for ((s, g), &k) in groups.iter().zip(&pick) {
            let a = &g[k];
            assignments[*s].node.extend(a.node.iter().map(|(k, v)| (*k, *v)));
            assignments[*s].link.extend(a.link.iter().map(|(k, v)| (*k, *v)));
        }
        let reservations: Vec<_> = entries
            .iter()
            .zip(&assignments)
            .map(|(e, a)| (e.request.template.as_ref(), a))
            .collect();
        if validate_capacity_with(net, bg, committed, &reservations).is_empty() {
            let objective: f64 = entries
                .iter()
                .zip(&assignments)
                .map(|(e, a)| cost_breakdown(a, &e.request.template, net).total())
                .sum();
            if best.as_ref().is_none_or(|b| objective < b.objective - 1e-9) {
                best = Some(BruteResult { objective, assignments });
            }
        }
        let mut digits: Vec<u32> = pick.iter().map(|&p| p as u32).collect();
        if !odometer(&mut digits, &radix) {
            break;
        }
        pick = digits.into_iter().map(|d| d as usize).collect();
    }
    Ok(best)
}
