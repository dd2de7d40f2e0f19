//! Infrastructure network model: nodes with per-resource capacities and
//! costs, directed links (including loop-backs), topology documents and the
//! binary fat-tree generator used by the evaluation scenario.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node resource types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Cpu,
    Mem,
    Wireless,
}

impl Resource {
    pub const ALL: [Resource; 3] = [Resource::Cpu, Resource::Mem, Resource::Wireless];

    pub fn index(self) -> usize {
        match self {
            Resource::Cpu => 0,
            Resource::Mem => 1,
            Resource::Wireless => 2,
        }
    }

    /// Single-letter tag used in row and variable names.
    pub fn tag(self) -> &'static str {
        match self {
            Resource::Cpu => "c",
            Resource::Mem => "m",
            Resource::Wireless => "w",
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Cpu => "cpu",
            Resource::Mem => "mem",
            Resource::Wireless => "wireless",
        })
    }
}

/// One value per node resource type, indexed by [`Resource`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceVec(pub [f64; 3]);

impl ResourceVec {
    pub const ZERO: ResourceVec = ResourceVec([0.0; 3]);

    pub fn new(cpu: f64, mem: f64, wireless: f64) -> Self {
        ResourceVec([cpu, mem, wireless])
    }

    pub fn splat(v: f64) -> Self {
        ResourceVec([v; 3])
    }

    pub fn scale(&self, k: f64) -> Self {
        ResourceVec(self.0.map(|x| x * k))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Resource, f64)> + '_ {
        Resource::ALL.iter().map(move |&r| (r, self[r]))
    }
}

impl Index<Resource> for ResourceVec {
    type Output = f64;
    fn index(&self, r: Resource) -> &f64 {
        &self.0[r.index()]
    }
}

impl IndexMut<Resource> for ResourceVec {
    fn index_mut(&mut self, r: Resource) -> &mut f64 {
        &mut self.0[r.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    /// Free-form layer label (`leaf`, `edge`, ...). Informational only.
    pub layer: String,
    pub capacity: ResourceVec,
    pub unit_cost: ResourceVec,
    pub fixed_cost: f64,
    pub adaptation_cost: f64,
}

/// A directed link between two nodes, referenced by index into the node list.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub from: usize,
    pub to: usize,
    pub bandwidth: f64,
    pub unit_cost: f64,
}

impl LinkSpec {
    pub fn is_loopback(&self) -> bool {
        self.from == self.to
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InfraError {
    #[error("topology parse error: {0}")]
    Parse(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("link references unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate link {0} -> {1}")]
    DuplicateLink(String, String),
    #[error("invalid value for {field} of {element}: {value}")]
    InvalidValue {
        element: String,
        field: &'static str,
        value: f64,
    },
    #[error("invalid node id `{0}`: ids may only contain letters, digits, `_`, `-` and `.`")]
    InvalidId(String),
    #[error("network has no nodes")]
    Empty,
    #[error("network is not weakly connected (node `{0}` unreachable)")]
    Disconnected(String),
    #[error("fat tree needs a power-of-two leaf count >= 2, got {0}")]
    BadLeafCount(usize),
    #[error("unknown builtin topology `{0}`")]
    UnknownBuiltin(String),
}

/// Directed infrastructure graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct InfrastructureNetwork {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    by_id: HashMap<String, usize>,
}

impl InfrastructureNetwork {
    pub fn new(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>) -> Result<Self, InfraError> {
        if nodes.is_empty() {
            return Err(InfraError::Empty);
        }
        let mut by_id = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.id.is_empty()
                || !n
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            {
                return Err(InfraError::InvalidId(n.id.clone()));
            }
            if by_id.insert(n.id.clone(), i).is_some() {
                return Err(InfraError::DuplicateNode(n.id.clone()));
            }
            let checks = [
                ("cpu", n.capacity[Resource::Cpu]),
                ("mem", n.capacity[Resource::Mem]),
                ("wireless", n.capacity[Resource::Wireless]),
                ("unit_cost_c", n.unit_cost[Resource::Cpu]),
                ("unit_cost_m", n.unit_cost[Resource::Mem]),
                ("unit_cost_w", n.unit_cost[Resource::Wireless]),
                ("fixed_cost", n.fixed_cost),
                ("adaptation_cost", n.adaptation_cost),
            ];
            for (field, value) in checks {
                if !value.is_finite() || value < 0.0 {
                    return Err(InfraError::InvalidValue {
                        element: n.id.clone(),
                        field,
                        value,
                    });
                }
            }
        }
        let mut seen = BTreeMap::new();
        for l in &links {
            for end in [l.from, l.to] {
                if end >= nodes.len() {
                    return Err(InfraError::UnknownNode(format!("#{end}")));
                }
            }
            let name = format!("{}->{}", nodes[l.from].id, nodes[l.to].id);
            for (field, value) in [("bandwidth", l.bandwidth), ("unit_cost", l.unit_cost)] {
                if !value.is_finite() || value < 0.0 {
                    return Err(InfraError::InvalidValue {
                        element: name,
                        field,
                        value,
                    });
                }
            }
            if seen.insert((l.from, l.to), ()).is_some() {
                return Err(InfraError::DuplicateLink(
                    nodes[l.from].id.clone(),
                    nodes[l.to].id.clone(),
                ));
            }
        }

        // weak connectivity
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for l in &links {
            let (a, b) = (find(&mut parent, l.from), find(&mut parent, l.to));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        for i in 1..nodes.len() {
            if find(&mut parent, i) != root {
                return Err(InfraError::Disconnected(nodes[i].id.clone()));
            }
        }

        Ok(InfrastructureNetwork {
            nodes,
            links,
            by_id,
        })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn node(&self, idx: usize) -> &NodeSpec {
        &self.nodes[idx]
    }

    pub fn link(&self, idx: usize) -> &LinkSpec {
        &self.links[idx]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn link_index(&self, from: usize, to: usize) -> Option<usize> {
        self.links.iter().position(|l| l.from == from && l.to == to)
    }

    pub fn link_name(&self, idx: usize) -> String {
        let l = &self.links[idx];
        format!("{}>{}", self.nodes[l.from].id, self.nodes[l.to].id)
    }

    /// Returns a copy with every node's adaptation cost replaced.
    pub fn with_adaptation_cost(&self, cost: f64) -> Result<Self, InfraError> {
        let mut nodes = self.nodes.clone();
        for n in &mut nodes {
            n.adaptation_cost = cost;
        }
        Self::new(nodes, self.links.clone())
    }
}

// ---------------------------------------------------------------------------
// Topology documents

fn default_unit_cost() -> f64 {
    1.0
}
fn default_fixed_cost() -> f64 {
    10.0
}
fn default_adaptation_cost() -> f64 {
    20.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    #[serde(default)]
    pub layer: String,
    pub cpu: f64,
    pub mem: f64,
    #[serde(default)]
    pub wireless: f64,
    #[serde(default = "default_unit_cost")]
    pub unit_cost_c: f64,
    #[serde(default = "default_unit_cost")]
    pub unit_cost_m: f64,
    #[serde(default = "default_unit_cost")]
    pub unit_cost_w: f64,
    #[serde(default = "default_fixed_cost")]
    pub fixed_cost: f64,
    #[serde(default = "default_adaptation_cost")]
    pub adaptation_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub from: String,
    pub to: String,
    pub bandwidth: f64,
    #[serde(default = "default_unit_cost")]
    pub unit_cost: f64,
    #[serde(default)]
    pub bidirectional: bool,
}

/// Serializable topology description (`nodes` + `links`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub links: Vec<LinkDoc>,
}

impl TopologyDoc {
    pub fn into_network(self) -> Result<InfrastructureNetwork, InfraError> {
        let nodes: Vec<NodeSpec> = self
            .nodes
            .into_iter()
            .map(|n| NodeSpec {
                id: n.id,
                layer: n.layer,
                capacity: ResourceVec::new(n.cpu, n.mem, n.wireless),
                unit_cost: ResourceVec::new(n.unit_cost_c, n.unit_cost_m, n.unit_cost_w),
                fixed_cost: n.fixed_cost,
                adaptation_cost: n.adaptation_cost,
            })
            .collect();
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(InfraError::DuplicateNode(n.id.clone()));
            }
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| InfraError::UnknownNode(id.to_string()))
        };
        let mut links = Vec::new();
        for l in self.links {
            let (from, to) = (lookup(&l.from)?, lookup(&l.to)?);
            links.push(LinkSpec {
                from,
                to,
                bandwidth: l.bandwidth,
                unit_cost: l.unit_cost,
            });
            if l.bidirectional && from != to {
                links.push(LinkSpec {
                    from: to,
                    to: from,
                    bandwidth: l.bandwidth,
                    unit_cost: l.unit_cost,
                });
            }
        }
        InfrastructureNetwork::new(nodes, links)
    }

    pub fn from_network(net: &InfrastructureNetwork) -> Self {
        TopologyDoc {
            nodes: net
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.clone(),
                    layer: n.layer.clone(),
                    cpu: n.capacity[Resource::Cpu],
                    mem: n.capacity[Resource::Mem],
                    wireless: n.capacity[Resource::Wireless],
                    unit_cost_c: n.unit_cost[Resource::Cpu],
                    unit_cost_m: n.unit_cost[Resource::Mem],
                    unit_cost_w: n.unit_cost[Resource::Wireless],
                    fixed_cost: n.fixed_cost,
                    adaptation_cost: n.adaptation_cost,
                })
                .collect(),
            links: net
                .links
                .iter()
                .map(|l| LinkDoc {
                    from: net.nodes[l.from].id.clone(),
                    to: net.nodes[l.to].id.clone(),
                    bandwidth: l.bandwidth,
                    unit_cost: l.unit_cost,
                    bidirectional: false,
                })
                .collect(),
        }
    }
}

/// Parses a TOML topology document, or resolves a `builtin:` name such as
/// `builtin:fat-tree-15`.
pub fn load_topology(source: &str) -> Result<InfrastructureNetwork, InfraError> {
    if let Some(name) = source.trim().strip_prefix("builtin:") {
        return builtin_topology(name.trim());
    }
    let doc: TopologyDoc = toml::from_str(source).map_err(|e| InfraError::Parse(e.to_string()))?;
    doc.into_network()
}

pub fn serialize_topology(net: &InfrastructureNetwork) -> String {
    toml::to_string(&TopologyDoc::from_network(net)).expect("topology document serializes")
}

/// Named topologies shipped with the crate. `fat-tree-N` builds a binary fat
/// tree with `N` nodes (so `(N + 1) / 2` leaves) using the default profile.
pub fn builtin_topology(name: &str) -> Result<InfrastructureNetwork, InfraError> {
    let unknown = || InfraError::UnknownBuiltin(name.to_string());
    let count: usize = name
        .strip_prefix("fat-tree-")
        .and_then(|n| n.parse().ok())
        .ok_or_else(unknown)?;
    if count < 3 || count.is_multiple_of(2) {
        return Err(unknown());
    }
    build_fat_tree(count.div_ceil(2), &CapacityProfile::default())
}

// ---------------------------------------------------------------------------
// Fat tree

/// Per-layer node capacities for the fat-tree generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerProfile {
    pub name: String,
    pub cpu: f64,
    pub mem: f64,
    pub wireless: f64,
    /// Bandwidth of the links between a node of this layer and its parent.
    pub uplink_bandwidth: f64,
}

/// Capacities by layer, listed from the leaves upward. Trees deeper than the
/// profile reuse the last (top-most) entry for the remaining layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityProfile {
    pub layers: Vec<LayerProfile>,
    pub loopback_bandwidth: f64,
    pub unit_cost: f64,
    pub fixed_cost: f64,
    pub adaptation_cost: f64,
}

impl Default for CapacityProfile {
    fn default() -> Self {
        let layer = |name: &str, cpu, mem, wireless, uplink| LayerProfile {
            name: name.to_string(),
            cpu,
            mem,
            wireless,
            uplink_bandwidth: uplink,
        };
        CapacityProfile {
            layers: vec![
                layer("leaf", 10.0, 32.0, 4.0, 10.0),
                layer("edge", 50.0, 128.0, 0.0, 20.0),
                layer("regional", 200.0, 512.0, 0.0, 40.0),
                layer("central", 400.0, 1024.0, 0.0, 0.0),
            ],
            loopback_bandwidth: 100.0,
            unit_cost: 1.0,
            fixed_cost: 10.0,
            adaptation_cost: 20.0,
        }
    }
}

/// Builds a binary tree with `leaves` leaves: bidirectional links between each
/// node and its parent plus a loop-back link at every node. Nodes are listed
/// root first in heap order.
pub fn build_fat_tree(
    leaves: usize,
    profile: &CapacityProfile,
) -> Result<InfrastructureNetwork, InfraError> {
    if leaves < 2 || !leaves.is_power_of_two() {
        return Err(InfraError::BadLeafCount(leaves));
    }
    if profile.layers.is_empty() {
        return Err(InfraError::Parse("capacity profile has no layers".into()));
    }
    let depth = leaves.trailing_zeros() as usize + 1;
    let total = 2 * leaves - 1;
    let layer_of = |heap_idx: usize| {
        let d = (usize::BITS - (heap_idx + 1).leading_zeros() - 1) as usize;
        depth - 1 - d
    };
    let profile_for = |from_leaf: usize| &profile.layers[from_leaf.min(profile.layers.len() - 1)];
    let layer_name = |from_leaf: usize| {
        if from_leaf < profile.layers.len() {
            profile.layers[from_leaf].name.clone()
        } else {
            format!("{}{}", profile.layers[profile.layers.len() - 1].name, from_leaf)
        }
    };

    let mut counters: BTreeMap<usize, usize> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(total);
    for i in 0..total {
        let l = layer_of(i);
        let p = profile_for(l);
        let c = counters.entry(l).or_default();
        let name = layer_name(l);
        nodes.push(NodeSpec {
            id: format!("{name}{c}"),
            layer: name,
            capacity: ResourceVec::new(p.cpu, p.mem, p.wireless),
            unit_cost: ResourceVec::splat(profile.unit_cost),
            fixed_cost: profile.fixed_cost,
            adaptation_cost: profile.adaptation_cost,
        });
        *c += 1;
    }

    let mut links = Vec::with_capacity(3 * total - 2);
    for i in 0..total {
        links.push(LinkSpec {
            from: i,
            to: i,
            bandwidth: profile.loopback_bandwidth,
            unit_cost: profile.unit_cost,
        });
    }
    for child in 1..total {
        let parent = (child - 1) / 2;
        let bw = profile_for(layer_of(child)).uplink_bandwidth;
        for (from, to) in [(child, parent), (parent, child)] {
            links.push(LinkSpec {
                from,
                to,
                bandwidth: bw,
                unit_cost: profile.unit_cost,
            });
        }
    }
    InfrastructureNetwork::new(nodes, links)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODES: &str = r#"
        [[nodes]]
        id = "a"
        cpu = 4
        mem = 8
        [[nodes]]
        id = "b"
        cpu = 2.5
        mem = 4
        wireless = 1
        [[links]]
        from = "a"
        to = "b"
        bandwidth = 10
    "#;

    #[test]
    fn minimal_document() {
        let net = load_topology(TWO_NODES).unwrap();
        assert_eq!(net.nodes().len(), 2);
        assert_eq!(net.links().len(), 1);
        assert_eq!(net.node(0).fixed_cost, 10.0);
        assert_eq!(net.node(1).capacity[Resource::Wireless], 1.0);
    }

    #[test]
    fn dangling_link_names_node() {
        let doc = TWO_NODES.replace("to = \"b\"", "to = \"zz\"");
        let err = load_topology(&doc).unwrap_err();
        assert_eq!(err, InfraError::UnknownNode("zz".into()));
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn rejects_negative_and_duplicates() {
        let neg = TWO_NODES.replace("cpu = 4", "cpu = -4");
        assert!(matches!(
            load_topology(&neg),
            Err(InfraError::InvalidValue { field: "cpu", .. })
        ));
        let dup = TWO_NODES.replace("id = \"b\"", "id = \"a\"");
        assert_eq!(
            load_topology(&dup).unwrap_err(),
            InfraError::DuplicateNode("a".into())
        );
        let unknown_key = TWO_NODES.replace("mem = 8", "mem = 8\ncolour = 3");
        assert!(matches!(load_topology(&unknown_key), Err(InfraError::Parse(_))));
    }

    #[test]
    fn parse_error_carries_location() {
        let err = load_topology("[[nodes]]\nid = \"a\"\ncpu = \"x\"\nmem = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn bidirectional_expands() {
        let doc = TWO_NODES.replace("bandwidth = 10", "bandwidth = 10\nbidirectional = true");
        let net = load_topology(&doc).unwrap();
        assert_eq!(net.links().len(), 2);
        assert_eq!(net.link(1).from, 1);
        assert_eq!(net.link(1).bandwidth, 10.0);
    }

    #[test]
    fn disconnected_rejected() {
        let doc = TWO_NODES.split("[[links]]").next().unwrap().to_string();
        assert_eq!(
            load_topology(&doc).unwrap_err(),
            InfraError::Disconnected("b".into())
        );
    }

    #[test]
    fn fat_tree_15() {
        let net = builtin_topology("fat-tree-15").unwrap();
        assert_eq!(net.nodes().len(), 15);
        let count = |layer: &str| net.nodes().iter().filter(|n| n.layer == layer).count();
        assert_eq!(
            (count("leaf"), count("edge"), count("regional"), count("central")),
            (8, 4, 2, 1)
        );
        assert_eq!(net.links().len(), 15 + 2 * 14);
        for n in net.nodes() {
            let w = n.capacity[Resource::Wireless];
            assert_eq!(w > 0.0, n.layer == "leaf", "{}", n.id);
        }
        // leaf uplinks 10, edge uplinks 20, regional uplinks 40
        let l = net.link_index(net.node_index("leaf0").unwrap(), net.node_index("edge0").unwrap());
        assert_eq!(net.link(l.unwrap()).bandwidth, 10.0);
        let l = net.link_index(
            net.node_index("central0").unwrap(),
            net.node_index("regional1").unwrap(),
        );
        assert_eq!(net.link(l.unwrap()).bandwidth, 40.0);
    }

    #[test]
    fn fat_tree_two_leaves() {
        let net = build_fat_tree(2, &CapacityProfile::default()).unwrap();
        assert_eq!(net.nodes().len(), 3);
        assert_eq!(net.links().iter().filter(|l| l.is_loopback()).count(), 3);
        assert_eq!(net.links().iter().filter(|l| !l.is_loopback()).count(), 4);
    }

    #[test]
    fn fat_tree_rejects_bad_leaves() {
        for n in [0, 1, 3, 6, 12] {
            assert_eq!(
                build_fat_tree(n, &CapacityProfile::default()).unwrap_err(),
                InfraError::BadLeafCount(n)
            );
        }
    }

    #[test]
    fn profile_wireless_on_inner_layer() {
        let mut profile = CapacityProfile::default();
        profile.layers[1].wireless = 2.0;
        let net = build_fat_tree(4, &profile).unwrap();
        let edge = net.node(net.node_index("edge0").unwrap());
        assert_eq!(edge.capacity[Resource::Wireless], 2.0);
    }

    #[test]
    fn serialize_round_trip() {
        let net = builtin_topology("fat-tree-7").unwrap();
        let again = load_topology(&serialize_topology(&net)).unwrap();
        assert_eq!(net, again);
    }
}
