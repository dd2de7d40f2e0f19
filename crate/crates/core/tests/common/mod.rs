//! Shared fixtures: random tiny reservation instances small enough for the
//! brute-force oracle, and checks that apply to every solved model.

#![allow(dead_code)]

use std::sync::Arc;

use netslice::infra::{LinkDoc, NodeDoc, TopologyDoc};
use netslice::milp::{
    BatchEntry, CommittedLoad, MilpModel, SliceAssignment, SliceTargets, SlotTargets, VarRole,
};
use netslice::slice::{DemandPattern, SliceRequest, UserCountModel, UserDemandStats, VlinkSpec, VnfSpec};
use netslice::uncertainty::BackgroundTargets;
use netslice::{InfrastructureNetwork, PriorityClass, ResourceVec, SfcTemplate};
use rand::Rng;

/// Largest instance count the tiny instances allow.
pub const CAP: u32 = 3;

pub struct TinyInstance {
    pub net: InfrastructureNetwork,
    pub requests: Vec<SliceRequest>,
    pub targets: Vec<SliceTargets>,
    pub committed: CommittedLoad,
    pub bg: BackgroundTargets,
}

impl TinyInstance {
    pub fn entries(&self) -> Vec<BatchEntry<'_>> {
        self.requests
            .iter()
            .zip(&self.targets)
            .map(|(request, targets)| BatchEntry { request, targets })
            .collect()
    }
}

fn half<R: Rng>(rng: &mut R, lo: u32, hi: u32) -> f64 {
    rng.random_range(2 * lo..=2 * hi) as f64 / 2.0
}

fn node<R: Rng>(rng: &mut R, id: &str) -> NodeDoc {
    NodeDoc {
        id: id.into(),
        layer: "tiny".into(),
        cpu: half(rng, 1, 6),
        mem: half(rng, 1, 6),
        wireless: 0.0,
        unit_cost_c: half(rng, 0, 3),
        unit_cost_m: half(rng, 0, 3),
        unit_cost_w: 0.0,
        fixed_cost: half(rng, 0, 8),
        adaptation_cost: half(rng, 1, 10),
    }
}

fn link<R: Rng>(rng: &mut R, from: &str, to: &str, bidirectional: bool) -> LinkDoc {
    LinkDoc {
        from: from.into(),
        to: to.into(),
        bandwidth: half(rng, 1, 6),
        unit_cost: half(rng, 0, 3),
        bidirectional,
    }
}

fn template<R: Rng>(rng: &mut R, chain: bool) -> SfcTemplate {
    let vnf = |rng: &mut R, name: &str| VnfSpec {
        name: name.into(),
        demand: ResourceVec::new(half(rng, 1, 3), half(rng, 0, 3), 0.0),
    };
    if chain {
        let vnfs = vec![vnf(rng, "a"), vnf(rng, "b")];
        let bandwidth = half(rng, 1, 3);
        SfcTemplate::new(vnfs, vec![VlinkSpec { from: 0, to: 1, bandwidth }]).unwrap()
    } else {
        SfcTemplate::new(vec![vnf(rng, "a")], vec![]).unwrap()
    }
}

fn targets<R: Rng>(rng: &mut R, req: &SliceRequest) -> SliceTargets {
    let t = &req.template;
    SliceTargets {
        k_on: req.k_on,
        slots: (0..req.lifetime())
            .map(|_| SlotTargets {
                gamma: 0.0,
                node: t
                    .vnfs()
                    .iter()
                    .map(|v| {
                        let frac = |rng: &mut R| rng.random_range(0.0..2.5);
                        ResourceVec::new(frac(rng) * v.demand.0[0], frac(rng) * v.demand.0[1], 0.0)
                    })
                    .collect(),
                link: t.vlinks().iter().map(|l| rng.random_range(0.0..2.5) * l.bandwidth).collect(),
            })
            .collect(),
    }
}

/// A random instance with at most 2 slices, 3 nodes and 2 slots, within the
/// brute-force enumeration limit. Counts above [`CAP`] are never needed for
/// cover; capacities may still make the instance infeasible.
pub fn tiny_instance<R: Rng>(rng: &mut R) -> TinyInstance {
    // (nodes, chain template, slices, max lifetime)
    let shapes: [(usize, bool, usize, u32); 6] = [
        (1, false, 2, 2),
        (2, false, 2, 2),
        (3, false, 2, 2),
        (3, false, 1, 2),
        (1, true, 2, 2),
        (2, true, 1, 1),
    ];
    let (n, chain, slices, max_life) = shapes[rng.random_range(0..shapes.len())];
    let ids = ["n0", "n1", "n2"];
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for id in &ids[..n] {
        nodes.push(node(rng, id));
        if chain {
            links.push(link(rng, id, id, false));
        }
    }
    for w in ids[..n].windows(2) {
        links.push(link(rng, w[0], w[1], true));
    }
    let net = TopologyDoc { nodes, links }.into_network().unwrap();
    let mut requests = Vec::new();
    let mut all_targets = Vec::new();
    for s in 0..slices {
        let k_on = rng.random_range(1..=max_life);
        let k_off = rng.random_range(k_on..=max_life);
        let lifetime = (k_off - k_on + 1) as usize;
        let req = SliceRequest {
            id: s as u64 + 1,
            slice_type: 9,
            class: PriorityClass::Standard,
            pattern: DemandPattern::Constant,
            arrival: 0.5 + s as f64 * 0.1,
            k_on,
            k_off,
            target_ssp: 0.9,
            template: Arc::new(template(rng, chain)),
            user_stats: Arc::new(UserDemandStats::diagonal(vec![], vec![], vec![]).unwrap()),
            user_count: UserCountModel::new(1, vec![1.0; lifetime]).unwrap(),
        };
        all_targets.push(targets(rng, &req));
        requests.push(req);
    }
    let committed = CommittedLoad::new(&net);
    let bg = BackgroundTargets::zero(&net);
    TinyInstance {
        net,
        requests,
        targets: all_targets,
        committed,
        bg,
    }
}

/// Checks that every adaptation variable equals the positive part of the
/// instance-count change against the previous slot (zero before `k_on`).
/// Returns the first mismatch as `(name, value, expected)`.
pub fn adaptation_mismatch(model: &MilpModel, values: &[f64], requests: &[&SliceRequest]) -> Option<(String, f64, f64)> {
    let kappa = |slice: usize, slot: u32, node: usize, vnf: usize| -> f64 {
        model
            .vars
            .iter()
            .zip(values)
            .find(|(v, _)| matches!(v.role, VarRole::Vnf { slice: s, slot: k, node: i, vnf: f } if (s, k, i, f) == (slice, slot, node, vnf)))
            .map(|(_, &x)| x)
            .unwrap_or(0.0)
    };
    for (v, &y) in model.vars.iter().zip(values) {
        if let VarRole::Adapt { slice, slot, node, vnf } = v.role {
            let prev = if slot == requests[slice].k_on {
                0.0
            } else {
                kappa(slice, slot - 1, node, vnf)
            };
            let expected = (kappa(slice, slot, node, vnf) - prev).max(0.0);
            if (y - expected).abs() > 1e-6 {
                return Some((v.name.clone(), y, expected));
            }
        }
    }
    None
}

/// Total cost of a set of assignments by the independent cost function.
pub fn summed_cost(net: &InfrastructureNetwork, requests: &[&SliceRequest], assignments: &[SliceAssignment]) -> f64 {
    requests
        .iter()
        .zip(assignments)
        .map(|(r, a)| netslice::milp::cost_breakdown(a, &r.template, net).total())
        .sum()
}
