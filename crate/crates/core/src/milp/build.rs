//! Builds the per-batch reservation MILP.
//!
//! For every granted slice and every slot of its activity window the model
//! holds node-usage indicators, VNF instance counts, adaptation counts and
//! virtual-link instance counts. Rows enforce demand cover, flow
//! conservation along each virtual link, adaptation lower bounds, indicator
//! linking and, per slot, the residual node and link capacities left by
//! background traffic and already committed reservations.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::infra::{InfrastructureNetwork, Resource, ResourceVec};
use crate::milp::assignment::{CommittedLoad, SliceAssignment};
use crate::milp::model::{MilpModel, RowFamily, Sense, VarDesc, VarKind, VarRole};
use crate::slice::{DemandKey, SliceRequest};
use crate::uncertainty::{BackgroundTargets, SspTargets};

/// Capacity slack tolerated before a committed load counts as a violation.
pub const CAPACITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("request {request}: no demand targets for slot {slot}")]
    MissingTargets { request: u64, slot: u32 },
    #[error("request {request}: demand targets do not match the request's demand keys")]
    TargetShape { request: u64 },
    #[error("background target exceeds capacity of {resource} on {element}")]
    BackgroundExceedsCapacity { element: String, resource: String },
    #[error("committed reservations exceed residual capacity of {resource} on {element} in slot {slot}")]
    CommittedExceedsCapacity {
        element: String,
        resource: String,
        slot: u32,
    },
}

/// Relaxed demand targets of one slot: per VNF and resource, and per
/// virtual link.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTargets {
    pub gamma: f64,
    pub node: Vec<ResourceVec>,
    pub link: Vec<f64>,
}

/// Relaxed demand targets over a request's activity window.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTargets {
    pub k_on: u32,
    pub slots: Vec<SlotTargets>,
}

impl SliceTargets {
    /// Maps per-key targets (one entry per active slot, in order) onto the
    /// request's VNFs and virtual links. Undeclared keys get a zero target.
    pub fn from_relaxed(request: &SliceRequest, per_slot: &[SspTargets]) -> Result<Self, BuildError> {
        if per_slot.len() != request.lifetime() as usize {
            return Err(BuildError::MissingTargets {
                request: request.id,
                slot: request.k_on + per_slot.len() as u32,
            });
        }
        let t = &request.template;
        let keys = request.user_stats.keys();
        let mut slots = Vec::with_capacity(per_slot.len());
        for s in per_slot {
            if s.targets.len() != keys.len() {
                return Err(BuildError::TargetShape { request: request.id });
            }
            let mut node = vec![ResourceVec::ZERO; t.vnfs().len()];
            let mut link = vec![0.0; t.vlinks().len()];
            for (k, &value) in keys.iter().zip(&s.targets) {
                match *k {
                    DemandKey::Node { vnf, resource } if vnf < node.len() => node[vnf][resource] = value,
                    DemandKey::Link { vlink } if vlink < link.len() => link[vlink] = value,
                    _ => return Err(BuildError::TargetShape { request: request.id }),
                }
            }
            slots.push(SlotTargets {
                gamma: s.gamma,
                node,
                link,
            });
        }
        Ok(SliceTargets {
            k_on: request.k_on,
            slots,
        })
    }

    pub fn slot(&self, slot: u32) -> Option<&SlotTargets> {
        slot.checked_sub(self.k_on)
            .and_then(|o| self.slots.get(o as usize))
    }
}

/// A granted request together with its demand targets.
#[derive(Debug, Clone, Copy)]
pub struct BatchEntry<'a> {
    pub request: &'a SliceRequest,
    pub targets: &'a SliceTargets,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuildOptions {
    /// Hard upper bound on every instance count. When set, only capacity
    /// bounds are applied besides it (no demand-derived bounds).
    pub kappa_cap: Option<u32>,
}

pub(crate) mod names {
    use crate::infra::Resource;

    pub fn used(id: u64, slot: u32, node: usize) -> String {
        format!("kt_s{id}_l{slot}_n{node}")
    }
    pub fn vnf(id: u64, slot: u32, node: usize, vnf: usize) -> String {
        format!("k_s{id}_l{slot}_n{node}_v{vnf}")
    }
    pub fn adapt(id: u64, slot: u32, node: usize, vnf: usize) -> String {
        format!("y_s{id}_l{slot}_n{node}_v{vnf}")
    }
    pub fn link(id: u64, slot: u32, link: usize, vlink: usize) -> String {
        format!("ke_s{id}_l{slot}_e{link}_f{vlink}")
    }
    pub fn cover(r: Resource, id: u64, slot: u32, vnf: usize) -> String {
        format!("cover_{}_s{id}_l{slot}_v{vnf}", r.tag())
    }
    pub fn link_cover(id: u64, slot: u32, vlink: usize) -> String {
        format!("lcover_s{id}_l{slot}_f{vlink}")
    }
    pub fn flow(id: u64, slot: u32, node: usize, vlink: usize) -> String {
        format!("flow_s{id}_l{slot}_n{node}_f{vlink}")
    }
    pub fn adaptation(id: u64, slot: u32, node: usize, vnf: usize) -> String {
        format!("adapt_s{id}_l{slot}_n{node}_v{vnf}")
    }
    pub fn linking(id: u64, slot: u32, node: usize, vnf: usize) -> String {
        format!("use_s{id}_l{slot}_n{node}_v{vnf}")
    }
    pub fn node_cap(r: Resource, slot: u32, node: usize) -> String {
        format!("cap_{}_l{slot}_n{node}", r.tag())
    }
    pub fn link_cap(slot: u32, link: usize) -> String {
        format!("bw_l{slot}_e{link}")
    }
}

/// Residual capacity per node resource and link for one slot.
struct Residual {
    node: Vec<ResourceVec>,
    link: Vec<f64>,
}

fn residual(
    net: &InfrastructureNetwork,
    bg: &BackgroundTargets,
    committed: &CommittedLoad,
    slot: u32,
) -> Result<Residual, BuildError> {
    let load = committed.slot(slot);
    let mut node = Vec::with_capacity(net.nodes().len());
    for (i, n) in net.nodes().iter().enumerate() {
        let mut r = ResourceVec::ZERO;
        for res in Resource::ALL {
            let free = n.capacity[res] - bg.node[i][res];
            if free < -CAPACITY_TOL {
                return Err(BuildError::BackgroundExceedsCapacity {
                    element: n.id.clone(),
                    resource: res.to_string(),
                });
            }
            let used = load.map_or(0.0, |l| l.node[i][res]);
            if free - used < -CAPACITY_TOL {
                return Err(BuildError::CommittedExceedsCapacity {
                    element: n.id.clone(),
                    resource: res.to_string(),
                    slot,
                });
            }
            r[res] = (free - used).max(0.0);
        }
        node.push(r);
    }
    let mut link = Vec::with_capacity(net.links().len());
    for (l, spec) in net.links().iter().enumerate() {
        let free = spec.bandwidth - bg.link[l];
        if free < -CAPACITY_TOL {
            return Err(BuildError::BackgroundExceedsCapacity {
                element: net.link_name(l),
                resource: "bandwidth".into(),
            });
        }
        let used = load.map_or(0.0, |x| x.link[l]);
        if free - used < -CAPACITY_TOL {
            return Err(BuildError::CommittedExceedsCapacity {
                element: net.link_name(l),
                resource: "bandwidth".into(),
                slot,
            });
        }
        link.push((free - used).max(0.0));
    }
    Ok(Residual { node, link })
}

fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9).ceil().max(0.0)
}

fn floor_tol(x: f64) -> f64 {
    (x + 1e-9).floor().max(0.0)
}

/// Demand-derived bounds on per-node VNF counts and per-link counts of one
/// request, valid over its whole window. Flow conservation ties the total
/// instance counts of all VNFs to the chain's instance ratios, so the bound
/// is normalised by them.
fn demand_bounds(entry: &BatchEntry) -> (Vec<f64>, Vec<f64>) {
    let t = &entry.request.template;
    let ratio = t.instance_ratios();
    let mut base: f64 = 0.0;
    let mut link_need = vec![0.0f64; t.vlinks().len()];
    for st in &entry.targets.slots {
        for (v, spec) in t.vnfs().iter().enumerate() {
            for res in Resource::ALL {
                let r = spec.demand[res];
                if r > 0.0 {
                    base = base.max(ceil_tol(st.node[v][res] / r) / ratio[v]);
                }
            }
        }
        for (e, spec) in t.vlinks().iter().enumerate() {
            link_need[e] = link_need[e].max(ceil_tol(st.link[e] / spec.bandwidth));
        }
    }
    let vnf: Vec<f64> = ratio.iter().map(|r| ceil_tol(base * r) + 1.0).collect();
    let link = t
        .vlinks()
        .iter()
        .enumerate()
        .map(|(e, spec)| {
            let (out_f, _) = t.flow_fractions(e);
            ceil_tol(out_f * vnf[spec.from]).max(link_need[e]) + 1.0
        })
        .collect();
    (vnf, link)
}

/// Joint model for a batch of granted requests.
pub fn build_problem2(
    entries: &[BatchEntry],
    committed: &CommittedLoad,
    net: &InfrastructureNetwork,
    bg: &BackgroundTargets,
    opts: &BuildOptions,
) -> Result<MilpModel, BuildError> {
    let slots: BTreeSet<u32> = entries
        .iter()
        .flat_map(|e| e.request.active_slots())
        .collect();
    let mut residuals = BTreeMap::new();
    for &slot in &slots {
        residuals.insert(slot, residual(net, bg, committed, slot)?);
    }
    for e in entries {
        for slot in e.request.active_slots() {
            if e.targets.slot(slot).is_none() {
                return Err(BuildError::MissingTargets {
                    request: e.request.id,
                    slot,
                });
            }
        }
    }

    let n_nodes = net.nodes().len();
    let n_links = net.links().len();
    let mut m = MilpModel::default();
    // node capacity terms per (slot, node, resource) and link terms per (slot, link)
    let mut cap_terms: BTreeMap<(u32, usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    let mut bw_terms: BTreeMap<(u32, usize), Vec<(usize, f64)>> = BTreeMap::new();

    for (s, entry) in entries.iter().enumerate() {
        let req = entry.request;
        let id = req.id;
        let t = &req.template;
        let n_vnf = t.vnfs().len();
        let n_vlink = t.vlinks().len();
        let (vnf_bound, link_bound) = demand_bounds(entry);
        let mut prev_kappa: Option<Vec<usize>> = None;

        for slot in req.active_slots() {
            let res = &residuals[&slot];
            let targets = entry.targets.slot(slot).expect("checked above");

            let mut ub = vec![0.0; n_nodes * n_vnf];
            for i in 0..n_nodes {
                for (v, spec) in t.vnfs().iter().enumerate() {
                    let mut b = f64::INFINITY;
                    for r in Resource::ALL {
                        if spec.demand[r] > 0.0 {
                            b = b.min(floor_tol(res.node[i][r] / spec.demand[r]));
                        }
                    }
                    b = match opts.kappa_cap {
                        Some(cap) => b.min(cap as f64),
                        None => b.min(vnf_bound[v]),
                    };
                    ub[i * n_vnf + v] = b;
                }
            }

            let used: Vec<usize> = (0..n_nodes)
                .map(|i| {
                    let node = &net.nodes()[i];
                    m.add_var(VarDesc {
                        name: names::used(id, slot, i),
                        kind: VarKind::Binary,
                        lb: 0.0,
                        ub: 1.0,
                        obj: node.fixed_cost,
                        role: VarRole::NodeUsed { slice: s, slot, node: i },
                    })
                })
                .collect();
            let mut kappa = vec![0; n_nodes * n_vnf];
            for i in 0..n_nodes {
                let node = &net.nodes()[i];
                for (v, spec) in t.vnfs().iter().enumerate() {
                    let obj: f64 = Resource::ALL
                        .iter()
                        .map(|&r| spec.demand[r] * node.unit_cost[r])
                        .sum();
                    kappa[i * n_vnf + v] = m.add_var(VarDesc {
                        name: names::vnf(id, slot, i, v),
                        kind: VarKind::Integer,
                        lb: 0.0,
                        ub: ub[i * n_vnf + v],
                        obj,
                        role: VarRole::Vnf { slice: s, slot, node: i, vnf: v },
                    });
                }
            }
            let mut adapt = vec![0; n_nodes * n_vnf];
            for i in 0..n_nodes {
                for v in 0..n_vnf {
                    adapt[i * n_vnf + v] = m.add_var(VarDesc {
                        name: names::adapt(id, slot, i, v),
                        kind: VarKind::Integer,
                        lb: 0.0,
                        ub: ub[i * n_vnf + v],
                        obj: net.nodes()[i].adaptation_cost,
                        role: VarRole::Adapt { slice: s, slot, node: i, vnf: v },
                    });
                }
            }
            let mut link = vec![0; n_links * n_vlink];
            for (l, lspec) in net.links().iter().enumerate() {
                for (e, espec) in t.vlinks().iter().enumerate() {
                    let mut b = floor_tol(res.link[l] / espec.bandwidth);
                    b = match opts.kappa_cap {
                        Some(cap) => b.min(cap as f64),
                        None => b.min(link_bound[e]),
                    };
                    link[l * n_vlink + e] = m.add_var(VarDesc {
                        name: names::link(id, slot, l, e),
                        kind: VarKind::Integer,
                        lb: 0.0,
                        ub: b,
                        obj: espec.bandwidth * lspec.unit_cost,
                        role: VarRole::Link { slice: s, slot, link: l, vlink: e },
                    });
                }
            }

            // demand cover
            for (v, spec) in t.vnfs().iter().enumerate() {
                for r in Resource::ALL {
                    let terms = (0..n_nodes)
                        .map(|i| (kappa[i * n_vnf + v], spec.demand[r]))
                        .collect();
                    m.add_row(
                        names::cover(r, id, slot, v),
                        RowFamily::Cover,
                        terms,
                        Sense::Ge,
                        targets.node[v][r],
                    );
                }
            }
            for (e, espec) in t.vlinks().iter().enumerate() {
                let terms = (0..n_links)
                    .map(|l| (link[l * n_vlink + e], espec.bandwidth))
                    .collect();
                m.add_row(
                    names::link_cover(id, slot, e),
                    RowFamily::LinkCover,
                    terms,
                    Sense::Ge,
                    targets.link[e],
                );
            }
            // flow conservation; loop-back instances cancel out
            for i in 0..n_nodes {
                for (e, espec) in t.vlinks().iter().enumerate() {
                    let (out_f, in_f) = t.flow_fractions(e);
                    let mut terms = Vec::new();
                    for (l, lspec) in net.links().iter().enumerate() {
                        if lspec.is_loopback() {
                            continue;
                        }
                        if lspec.from == i {
                            terms.push((link[l * n_vlink + e], 1.0));
                        } else if lspec.to == i {
                            terms.push((link[l * n_vlink + e], -1.0));
                        }
                    }
                    terms.push((kappa[i * n_vnf + espec.from], -out_f));
                    terms.push((kappa[i * n_vnf + espec.to], in_f));
                    m.add_row(names::flow(id, slot, i, e), RowFamily::Flow, terms, Sense::Eq, 0.0);
                }
            }
            // adaptation: y >= kappa - kappa_prev, with kappa_prev = 0 before activation
            for i in 0..n_nodes {
                for v in 0..n_vnf {
                    let k = i * n_vnf + v;
                    let mut terms = vec![(adapt[k], 1.0), (kappa[k], -1.0)];
                    if let Some(prev) = &prev_kappa {
                        terms.push((prev[k], 1.0));
                    }
                    m.add_row(
                        names::adaptation(id, slot, i, v),
                        RowFamily::Adaptation,
                        terms,
                        Sense::Ge,
                        0.0,
                    );
                }
            }
            // node-usage indicator, one row per VNF
            for i in 0..n_nodes {
                for v in 0..n_vnf {
                    let k = i * n_vnf + v;
                    m.add_row(
                        names::linking(id, slot, i, v),
                        RowFamily::Linking,
                        vec![(used[i], ub[k]), (kappa[k], -1.0)],
                        Sense::Ge,
                        0.0,
                    );
                }
            }
            // capacity contributions
            for i in 0..n_nodes {
                for r in Resource::ALL {
                    let terms = cap_terms.entry((slot, i, r.index())).or_default();
                    for (v, spec) in t.vnfs().iter().enumerate() {
                        terms.push((kappa[i * n_vnf + v], spec.demand[r]));
                    }
                }
            }
            for l in 0..n_links {
                let terms = bw_terms.entry((slot, l)).or_default();
                for (e, espec) in t.vlinks().iter().enumerate() {
                    terms.push((link[l * n_vlink + e], espec.bandwidth));
                }
            }
            prev_kappa = Some(kappa);
        }
    }

    for &slot in &slots {
        let res = &residuals[&slot];
        for i in 0..n_nodes {
            for r in Resource::ALL {
                let terms = cap_terms.remove(&(slot, i, r.index())).unwrap_or_default();
                m.add_row(
                    names::node_cap(r, slot, i),
                    RowFamily::NodeCapacity,
                    terms,
                    Sense::Le,
                    res.node[i][r],
                );
            }
        }
        for l in 0..n_links {
            let terms = bw_terms.remove(&(slot, l)).unwrap_or_default();
            m.add_row(names::link_cap(slot, l), RowFamily::LinkCapacity, terms, Sense::Le, res.link[l]);
        }
    }
    Ok(m)
}

/// Model for a single request against all other committed reservations.
pub fn build_problem3(
    entry: BatchEntry,
    committed: &CommittedLoad,
    net: &InfrastructureNetwork,
    bg: &BackgroundTargets,
    opts: &BuildOptions,
) -> Result<MilpModel, BuildError> {
    build_problem2(&[entry], committed, net, bg, opts)
}

/// Reads integer instance counts back out of a solved model.
pub fn extract_assignments(
    model: &MilpModel,
    values: &[f64],
    entries: &[BatchEntry],
) -> Vec<SliceAssignment> {
    let mut out: Vec<SliceAssignment> = entries
        .iter()
        .map(|e| SliceAssignment::empty(e.request, true))
        .collect();
    for (v, &x) in model.vars.iter().zip(values) {
        let count = x.round().max(0.0) as u32;
        if count == 0 {
            continue;
        }
        match v.role {
            VarRole::Vnf { slice, slot, node, vnf } => {
                out[slice].node.insert((slot, node, vnf), count);
            }
            VarRole::Link { slice, slot, link, vlink } => {
                out[slice].link.insert((slot, link, vlink), count);
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::builtin_topology;
    use crate::slice::{builtin_slice_catalog, DemandPattern, PriorityClass};

    fn unit_targets(req: &SliceRequest, value: f64) -> SliceTargets {
        SliceTargets {
            k_on: req.k_on,
            slots: (0..req.lifetime())
                .map(|_| SlotTargets {
                    gamma: 0.0,
                    node: vec![ResourceVec::splat(value); req.template.vnfs().len()],
                    link: vec![value; req.template.vlinks().len()],
                })
                .collect(),
        }
    }

    #[test]
    fn variable_and_row_counts() {
        let net = builtin_topology("fat-tree-15").unwrap();
        let cat = builtin_slice_catalog();
        let req = cat
            .make_request(1, 1, PriorityClass::Premium, DemandPattern::Constant, 0.2, 2, 4)
            .unwrap();
        let targets = unit_targets(&req, 0.1);
        let bg = BackgroundTargets::zero(&net);
        let m = build_problem2(
            &[BatchEntry { request: &req, targets: &targets }],
            &CommittedLoad::new(&net),
            &net,
            &bg,
            &BuildOptions::default(),
        )
        .unwrap();
        let (n, e, ns, es) = (15, 43, 3, 2);
        let slots = 3;
        assert_eq!(m.vars.len(), slots * (n + 2 * n * ns + e * es));
        let per_slot_rows = 3 * ns + es + n * es + 2 * n * ns;
        assert_eq!(m.rows.len(), slots * (per_slot_rows + 3 * n + e));
        // every variable name is unique
        let names: BTreeSet<_> = m.vars.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names.len(), m.vars.len());
    }

    #[test]
    fn wireless_vnf_bounded_to_radio_nodes() {
        let net = builtin_topology("fat-tree-7").unwrap();
        let cat = builtin_slice_catalog();
        let req = cat
            .make_request(5, 1, PriorityClass::Standard, DemandPattern::Constant, 0.0, 1, 1)
            .unwrap();
        let targets = unit_targets(&req, 0.5);
        let m = build_problem3(
            BatchEntry { request: &req, targets: &targets },
            &CommittedLoad::new(&net),
            &net,
            &BackgroundTargets::zero(&net),
            &BuildOptions::default(),
        )
        .unwrap();
        for v in &m.vars {
            if let VarRole::Vnf { node, vnf: 2, .. } = v.role {
                let leaf = net.node(node).layer == "leaf";
                assert_eq!(v.ub > 0.0, leaf, "{}", v.name);
            }
        }
    }

    #[test]
    fn background_over_capacity_is_reported() {
        let net = builtin_topology("fat-tree-7").unwrap();
        let cat = builtin_slice_catalog();
        let req = cat
            .make_request(5, 1, PriorityClass::Standard, DemandPattern::Constant, 0.0, 1, 1)
            .unwrap();
        let targets = unit_targets(&req, 0.5);
        let mut bg = BackgroundTargets::zero(&net);
        bg.node[3][Resource::Mem] = 1e6;
        let err = build_problem2(
            &[BatchEntry { request: &req, targets: &targets }],
            &CommittedLoad::new(&net),
            &net,
            &bg,
            &BuildOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::BackgroundExceedsCapacity { .. }));
    }

    #[test]
    fn missing_slot_targets() {
        let net = builtin_topology("fat-tree-7").unwrap();
        let cat = builtin_slice_catalog();
        let req = cat
            .make_request(5, 1, PriorityClass::Standard, DemandPattern::Constant, 0.0, 1, 3)
            .unwrap();
        let mut targets = unit_targets(&req, 0.5);
        targets.slots.pop();
        let err = build_problem2(
            &[BatchEntry { request: &req, targets: &targets }],
            &CommittedLoad::new(&net),
            &net,
            &BackgroundTargets::zero(&net),
            &BuildOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, BuildError::MissingTargets { request: 5, slot: 3 });
    }
}
