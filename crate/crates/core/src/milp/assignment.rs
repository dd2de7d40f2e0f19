//! Reservation assignments, their cost, and an independent feasibility
//! checker that works directly on instance counts rather than on a model.

use std::collections::BTreeMap;

use crate::infra::{InfrastructureNetwork, Resource, ResourceVec};
use crate::milp::build::{names, SliceTargets, CAPACITY_TOL};
use crate::slice::{SfcTemplate, SliceRequest};
use crate::uncertainty::BackgroundTargets;

/// Instance counts of one request. Only non-zero entries are stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SliceAssignment {
    pub request_id: u64,
    pub granted: bool,
    pub k_on: u32,
    pub k_off: u32,
    /// `(slot, node, vnf) -> instances`
    pub node: BTreeMap<(u32, usize, usize), u32>,
    /// `(slot, link, vlink) -> instances`
    pub link: BTreeMap<(u32, usize, usize), u32>,
}

impl SliceAssignment {
    pub fn empty(request: &SliceRequest, granted: bool) -> Self {
        SliceAssignment {
            request_id: request.id,
            granted,
            k_on: request.k_on,
            k_off: request.k_off,
            node: BTreeMap::new(),
            link: BTreeMap::new(),
        }
    }

    pub fn vnf_count(&self, slot: u32, node: usize, vnf: usize) -> u32 {
        self.node.get(&(slot, node, vnf)).copied().unwrap_or(0)
    }

    pub fn link_count(&self, slot: u32, link: usize, vlink: usize) -> u32 {
        self.link.get(&(slot, link, vlink)).copied().unwrap_or(0)
    }

    pub fn node_used(&self, slot: u32, node: usize) -> bool {
        self.node
            .range((slot, node, 0)..=(slot, node, usize::MAX))
            .any(|(_, &c)| c > 0)
    }

    pub fn is_empty(&self) -> bool {
        self.node.values().all(|&c| c == 0) && self.link.values().all(|&c| c == 0)
    }

    /// Newly deployed instances in `slot`, summed over nodes and VNFs.
    pub fn adjustments(&self, slot: u32) -> u32 {
        self.node
            .range((slot, 0, 0)..=(slot, usize::MAX, usize::MAX))
            .map(|(&(_, i, v), &c)| {
                let prev = if slot > self.k_on {
                    self.vnf_count(slot - 1, i, v)
                } else {
                    0
                };
                c.saturating_sub(prev)
            })
            .sum()
    }
}

/// Resources held by committed reservations in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLoad {
    pub node: Vec<ResourceVec>,
    pub link: Vec<f64>,
}

/// Resources held by committed reservations, per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CommittedLoad {
    n_nodes: usize,
    n_links: usize,
    slots: BTreeMap<u32, SlotLoad>,
}

impl CommittedLoad {
    pub fn new(net: &InfrastructureNetwork) -> Self {
        CommittedLoad {
            n_nodes: net.nodes().len(),
            n_links: net.links().len(),
            slots: BTreeMap::new(),
        }
    }

    pub fn slot(&self, slot: u32) -> Option<&SlotLoad> {
        self.slots.get(&slot)
    }

    fn slot_mut(&mut self, slot: u32) -> &mut SlotLoad {
        let (n, l) = (self.n_nodes, self.n_links);
        self.slots.entry(slot).or_insert_with(|| SlotLoad {
            node: vec![ResourceVec::ZERO; n],
            link: vec![0.0; l],
        })
    }

    pub fn add(&mut self, assignment: &SliceAssignment, template: &SfcTemplate) {
        for (&(slot, i, v), &c) in &assignment.node {
            let d = template.vnfs()[v].demand;
            let load = self.slot_mut(slot);
            for r in Resource::ALL {
                load.node[i][r] += c as f64 * d[r];
            }
        }
        for (&(slot, l, e), &c) in &assignment.link {
            let bw = template.vlinks()[e].bandwidth;
            self.slot_mut(slot).link[l] += c as f64 * bw;
        }
    }

    pub fn slots(&self) -> impl Iterator<Item = (u32, &SlotLoad)> + '_ {
        self.slots.iter().map(|(&k, l)| (k, l))
    }

    /// Largest absolute difference to `other` over slots `from..`.
    pub fn max_difference(&self, other: &CommittedLoad, from: u32) -> f64 {
        let empty = SlotLoad {
            node: vec![ResourceVec::ZERO; self.n_nodes],
            link: vec![0.0; self.n_links],
        };
        let keys: std::collections::BTreeSet<u32> = self
            .slots
            .range(from..)
            .chain(other.slots.range(from..))
            .map(|(&k, _)| k)
            .collect();
        let mut worst: f64 = 0.0;
        for k in keys {
            let a = self.slots.get(&k).unwrap_or(&empty);
            let b = other.slots.get(&k).unwrap_or(&empty);
            for (x, y) in a.node.iter().zip(&b.node) {
                for r in Resource::ALL {
                    worst = worst.max((x[r] - y[r]).abs());
                }
            }
            for (x, y) in a.link.iter().zip(&b.link) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    /// Drops slots before `slot`.
    pub fn forget_before(&mut self, slot: u32) {
        self.slots = self.slots.split_off(&slot);
    }
}

/// Cost components of one request's reservation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub resource: f64,
    pub fixed: f64,
    pub adaptation: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.resource + self.fixed + self.adaptation
    }
}

/// Cost of an assignment in `slot`, computed from instance counts alone.
pub fn cost_breakdown_slot(
    assignment: &SliceAssignment,
    template: &SfcTemplate,
    net: &InfrastructureNetwork,
    slot: u32,
) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    for (i, node) in net.nodes().iter().enumerate() {
        let mut used = false;
        for (v, spec) in template.vnfs().iter().enumerate() {
            let k = assignment.vnf_count(slot, i, v);
            if k == 0 {
                continue;
            }
            used = true;
            let unit: f64 = Resource::ALL.iter().map(|&r| spec.demand[r] * node.unit_cost[r]).sum();
            c.resource += k as f64 * unit;
            let prev = if slot > assignment.k_on {
                assignment.vnf_count(slot - 1, i, v)
            } else {
                0
            };
            c.adaptation += k.saturating_sub(prev) as f64 * node.adaptation_cost;
        }
        if used {
            c.fixed += node.fixed_cost;
        }
    }
    for (l, link) in net.links().iter().enumerate() {
        for (e, spec) in template.vlinks().iter().enumerate() {
            c.resource += assignment.link_count(slot, l, e) as f64 * spec.bandwidth * link.unit_cost;
        }
    }
    c
}

/// Cost of an assignment summed over its activity window.
pub fn cost_breakdown(
    assignment: &SliceAssignment,
    template: &SfcTemplate,
    net: &InfrastructureNetwork,
) -> CostBreakdown {
    let mut total = CostBreakdown::default();
    for slot in assignment.k_on..=assignment.k_off {
        let c = cost_breakdown_slot(assignment, template, net, slot);
        total.resource += c.resource;
        total.fixed += c.fixed;
        total.adaptation += c.adaptation;
    }
    total
}

/// A constraint broken by an assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub request_id: Option<u64>,
    /// Name of the violated row, matching the model's row names.
    pub row: String,
    pub amount: f64,
}

/// Checks a single request's assignment: activity window, demand cover and
/// flow conservation. Denied requests must hold nothing.
pub fn validate_assignment(
    request: &SliceRequest,
    targets: &SliceTargets,
    assignment: &SliceAssignment,
    net: &InfrastructureNetwork,
) -> Vec<Violation> {
    let id = request.id;
    let mut out = Vec::new();
    let mut push = |row: String, amount: f64| {
        out.push(Violation {
            request_id: Some(id),
            row,
            amount,
        })
    };
    let t = &request.template;
    for (&(slot, i, v), &c) in &assignment.node {
        if c > 0 && (!assignment.granted || !request.is_active(slot)) {
            push(names::vnf(id, slot, i, v), c as f64);
        }
    }
    for (&(slot, l, e), &c) in &assignment.link {
        if c > 0 && (!assignment.granted || !request.is_active(slot)) {
            push(names::link(id, slot, l, e), c as f64);
        }
    }
    if !assignment.granted {
        return out;
    }
    for slot in request.active_slots() {
        let Some(target) = targets.slot(slot) else {
            push(format!("targets_s{id}_l{slot}"), f64::NAN);
            continue;
        };
        for (v, spec) in t.vnfs().iter().enumerate() {
            let total: u32 = (0..net.nodes().len()).map(|i| assignment.vnf_count(slot, i, v)).sum();
            for r in Resource::ALL {
                let short = target.node[v][r] - total as f64 * spec.demand[r];
                if short > CAPACITY_TOL {
                    push(names::cover(r, id, slot, v), short);
                }
            }
        }
        for (e, spec) in t.vlinks().iter().enumerate() {
            let total: u32 = (0..net.links().len()).map(|l| assignment.link_count(slot, l, e)).sum();
            let short = target.link[e] - total as f64 * spec.bandwidth;
            if short > CAPACITY_TOL {
                push(names::link_cover(id, slot, e), short);
            }
        }
        for i in 0..net.nodes().len() {
            for (e, spec) in t.vlinks().iter().enumerate() {
                let (out_f, in_f) = t.flow_fractions(e);
                let mut net_out = 0.0;
                for (l, link) in net.links().iter().enumerate() {
                    let c = assignment.link_count(slot, l, e) as f64;
                    if link.from == i && link.to != i {
                        net_out += c;
                    } else if link.to == i && link.from != i {
                        net_out -= c;
                    }
                }
                let balance = net_out - out_f * assignment.vnf_count(slot, i, spec.from) as f64
                    + in_f * assignment.vnf_count(slot, i, spec.to) as f64;
                if balance.abs() > CAPACITY_TOL {
                    push(names::flow(id, slot, i, e), balance.abs());
                }
            }
        }
    }
    out
}

/// Checks that the combined reservations plus background targets fit every
/// node resource and link in every slot.
pub fn validate_capacity(
    net: &InfrastructureNetwork,
    bg: &BackgroundTargets,
    reservations: &[(&SfcTemplate, &SliceAssignment)],
) -> Vec<Violation> {
    validate_capacity_with(net, bg, &CommittedLoad::new(net), reservations)
}

/// Like [`validate_capacity`], on top of an existing committed load.
pub fn validate_capacity_with(
    net: &InfrastructureNetwork,
    bg: &BackgroundTargets,
    base: &CommittedLoad,
    reservations: &[(&SfcTemplate, &SliceAssignment)],
) -> Vec<Violation> {
    let mut load = base.clone();
    for (t, a) in reservations {
        load.add(a, t);
    }
    let mut out = Vec::new();
    for (&slot, l) in &load.slots {
        for (i, node) in net.nodes().iter().enumerate() {
            for r in Resource::ALL {
                let excess = l.node[i][r] + bg.node[i][r] - node.capacity[r];
                if excess > CAPACITY_TOL {
                    out.push(Violation {
                        request_id: None,
                        row: names::node_cap(r, slot, i),
                        amount: excess,
                    });
                }
            }
        }
        for (k, link) in net.links().iter().enumerate() {
            let excess = l.link[k] + bg.link[k] - link.bandwidth;
            if excess > CAPACITY_TOL {
                out.push(Violation {
                    request_id: None,
                    row: names::link_cap(slot, k),
                    amount: excess,
                });
            }
        }
    }
    out
}
