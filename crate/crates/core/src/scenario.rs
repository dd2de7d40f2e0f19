//! Scenario files: one TOML document describing the topology, catalog
//! overrides, arrivals, policy, variant, background load and solver
//! settings of an experiment.
//!
//! ```toml
//! label = "desk"
//! seed = 1
//! variant = "jpr"
//!
//! [topology]
//! builtin = "fat-tree-15"
//!
//! [arrivals]
//! rate = 2.0
//! horizon = 1000
//! max_requests = 200
//! premium_fraction = 0.25
//!
//! [policy]
//! alpha = 0.5
//! delta_p = 0.5
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{default_solve_options, EngineError, PremiumTagging, ScenarioConfig, TimeoutPolicy, Variant};
use crate::infra::{
    build_fat_tree, builtin_topology, load_topology, CapacityProfile, InfraError, InfrastructureNetwork, LinkDoc,
    NodeDoc, Resource, ResourceVec, TopologyDoc,
};
use crate::milp::BuildOptions;
use crate::policy::PolicyParams;
use crate::slice::{
    builtin_slice_catalog, DemandKey, SfcTemplate, SliceCatalog, SliceError, SliceType, UserDemandStats, VlinkSpec,
    VnfSpec,
};
use crate::uncertainty::{BackgroundModel, QmcOptions, SspOptions};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("topology: {0}")]
    Infra(#[from] InfraError),
    #[error("catalog: {0}")]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

/// Which solver backend a scenario asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Builtin,
    External,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(Backend::Builtin),
            "external" => Ok(Backend::External),
            _ => Err(format!("unknown solver `{s}` (expected builtin or external)")),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// Name of a built-in topology such as `fat-tree-15`.
    pub builtin: Option<String>,
    /// Path of a topology document, relative to the scenario file.
    pub path: Option<PathBuf>,
    /// Leaf count of a generated fat tree; combine with `profile`.
    pub fat_tree_leaves: Option<usize>,
    pub profile: Option<CapacityProfile>,
    pub nodes: Option<Vec<NodeDoc>>,
    pub links: Option<Vec<LinkDoc>>,
    /// Overrides the adaptation cost of every node.
    pub adaptation_cost: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrivalsSection {
    pub rate: f64,
    pub horizon: u32,
    pub max_requests: Option<usize>,
    pub premium_fraction: Option<f64>,
    pub premium_count: Option<usize>,
    pub activation_delay: [u32; 2],
    pub lifetime: [u32; 2],
    pub epsilon: f64,
    pub slice_types: Vec<u8>,
    pub varying_probability: f64,
}

impl Default for ArrivalsSection {
    fn default() -> Self {
        let c = ScenarioConfig::default();
        ArrivalsSection {
            rate: c.arrival_rate,
            horizon: c.horizon,
            max_requests: None,
            premium_fraction: None,
            premium_count: None,
            activation_delay: [c.activation_delay.0, c.activation_delay.1],
            lifetime: [c.lifetime.0, c.lifetime.1],
            epsilon: c.epsilon,
            slice_types: c.slice_types,
            varying_probability: c.varying_probability,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundSection {
    pub mean_fraction: f64,
    pub std_fraction: f64,
    pub impact_threshold: f64,
}

impl Default for BackgroundSection {
    fn default() -> Self {
        let b = BackgroundModel::default();
        BackgroundSection {
            mean_fraction: b.mean_fraction,
            std_fraction: b.std_fraction,
            impact_threshold: b.violation_prob,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub backend: Backend,
    pub mip_gap: f64,
    pub node_limit: Option<u64>,
    /// Seconds per solve.
    pub time_limit: Option<f64>,
    pub seed: u64,
    pub dive: bool,
    pub on_timeout: TimeoutPolicy,
    /// Hard cap on every instance count.
    pub kappa_cap: Option<u32>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = default_solve_options();
        SolverSection {
            backend: Backend::Builtin,
            mip_gap: o.mip_gap,
            node_limit: o.node_limit,
            time_limit: None,
            seed: o.seed,
            dive: o.dive,
            on_timeout: TimeoutPolicy::default(),
            kappa_cap: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SspSection {
    pub truncation: f64,
    pub gamma_tol: f64,
    pub qmc_seed: u64,
    pub qmc_shifts: usize,
    pub qmc_max_points: usize,
    pub qmc_abs_tol: f64,
}

impl Default for SspSection {
    fn default() -> Self {
        let s = SspOptions::default();
        SspSection {
            truncation: s.truncation,
            gamma_tol: s.gamma_tol,
            qmc_seed: s.qmc.seed,
            qmc_shifts: s.qmc.shifts,
            qmc_max_points: s.qmc.max_points,
            qmc_abs_tol: s.qmc.abs_tol,
        }
    }
}

/// One VNF of an overridden chain. Demand components whose mean and
/// standard deviation are both zero are left out of the demand vector.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfDoc {
    pub name: String,
    /// Per-instance demand (cpu, memory, wireless).
    pub r: [f64; 3],
    pub u_mean: [f64; 3],
    pub u_std: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlinkDoc {
    pub from: String,
    pub to: String,
    pub r_b: f64,
    pub u_mean: f64,
    pub u_std: f64,
}

/// Correlation between two demand components, named `VNF.c`, `VNF.m`,
/// `VNF.w` or `FROM>TO` for a virtual link.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationDoc {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeOverride {
    pub name: Option<String>,
    pub target_ssp: Option<f64>,
    pub trials: Option<u32>,
    pub allows_varying: Option<bool>,
    pub vnfs: Option<Vec<VnfDoc>>,
    pub vlinks: Option<Vec<VlinkDoc>>,
    #[serde(default)]
    pub correlations: Vec<CorrelationDoc>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSection {
    pub varying_pattern: Option<Vec<f64>>,
    /// Overrides keyed by slice type id.
    #[serde(default)]
    pub types: BTreeMap<String, TypeOverride>,
}

/// Policy keys; missing ones keep their defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub p_max: Option<f64>,
    pub alpha: Option<f64>,
    pub delta_p: Option<f64>,
}

/// The raw scenario document.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub label: Option<String>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub topology: Option<TopologySection>,
    #[serde(default)]
    pub arrivals: ArrivalsSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub background: BackgroundSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub ssp: SspSection,
    #[serde(default)]
    pub catalog: CatalogSection,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub config: ScenarioConfig,
    pub network: InfrastructureNetwork,
    pub catalog: SliceCatalog,
    pub backend: Backend,
}

/// Command-line or grid-cell adjustments applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub label: Option<String>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
    pub delta_p: Option<f64>,
    pub horizon: Option<u32>,
    pub max_requests: Option<usize>,
    pub solver: Option<Backend>,
    pub time_limit: Option<f64>,
    pub node_limit: Option<u64>,
    pub mip_gap: Option<f64>,
    pub adaptation_cost: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) -> Result<(), ScenarioError> {
        let c = &mut s.config;
        if let Some(v) = &self.label {
            s.label = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.variant {
            c.variant = v;
        }
        if let Some(v) = self.alpha {
            c.policy.alpha = v;
        }
        if let Some(v) = self.delta_p {
            c.policy.delta_p = v;
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        if let Some(v) = self.max_requests {
            c.max_requests = Some(v);
        }
        if let Some(v) = self.solver {
            s.backend = v;
        }
        if let Some(v) = self.time_limit {
            c.solve.time_limit = Some(seconds("time_limit", v)?);
        }
        if let Some(v) = self.node_limit {
            c.solve.node_limit = Some(v);
        }
        if let Some(v) = self.mip_gap {
            c.solve.mip_gap = v;
        }
        if let Some(v) = self.adaptation_cost {
            s.network = s.network.with_adaptation_cost(v)?;
        }
        c.validate()?;
        Ok(())
    }
}

fn seconds(key: &str, v: f64) -> Result<Duration, ScenarioError> {
    Duration::try_from_secs_f64(v).map_err(|e| invalid(key, e.to_string()))
}

fn resolve_topology(t: &TopologySection, base: &Path) -> Result<InfrastructureNetwork, ScenarioError> {
    let given = [t.builtin.is_some(), t.path.is_some(), t.fat_tree_leaves.is_some(), t.nodes.is_some()];
    match given.iter().filter(|&&g| g).count() {
        0 => return Err(ScenarioError::Missing("topology.builtin")),
        1 => {}
        _ => {
            return Err(invalid(
                "topology",
                "give exactly one of builtin, path, fat_tree_leaves or nodes",
            ))
        }
    }
    if t.profile.is_some() && t.fat_tree_leaves.is_none() {
        return Err(invalid("topology.profile", "only valid together with fat_tree_leaves"));
    }
    let mut net = if let Some(name) = &t.builtin {
        builtin_topology(name)?
    } else if let Some(p) = &t.path {
        let path = base.join(p);
        let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
        load_topology(&text)?
    } else if let Some(leaves) = t.fat_tree_leaves {
        build_fat_tree(leaves, &t.profile.clone().unwrap_or_default())?
    } else {
        TopologyDoc {
            nodes: t.nodes.clone().unwrap_or_default(),
            links: t.links.clone().unwrap_or_default(),
        }
        .into_network()?
    };
    if let Some(c) = t.adaptation_cost {
        net = net.with_adaptation_cost(c)?;
    }
    Ok(net)
}

fn parse_key(template: &SfcTemplate, name: &str) -> Result<DemandKey, ScenarioError> {
    let vnf = |n: &str| {
        template
            .vnfs()
            .iter()
            .position(|v| v.name == n)
            .ok_or_else(|| invalid("correlations", format!("unknown VNF `{n}`")))
    };
    if let Some((a, b)) = name.split_once('>') {
        let (a, b) = (vnf(a)?, vnf(b)?);
        let vlink = template
            .vlinks()
            .iter()
            .position(|l| l.from == a && l.to == b)
            .ok_or_else(|| invalid("correlations", format!("unknown virtual link `{name}`")))?;
        return Ok(DemandKey::Link { vlink });
    }
    let (v, r) = name
        .rsplit_once('.')
        .ok_or_else(|| invalid("correlations", format!("bad component `{name}`")))?;
    let resource = match r {
        "c" => Resource::Cpu,
        "m" => Resource::Mem,
        "w" => Resource::Wireless,
        _ => return Err(invalid("correlations", format!("bad resource in `{name}`"))),
    };
    Ok(DemandKey::Node { vnf: vnf(v)?, resource })
}

fn apply_type_override(t: &mut SliceType, o: &TypeOverride) -> Result<(), ScenarioError> {
    if let Some(v) = &o.name {
        t.name = v.clone();
    }
    if let Some(v) = o.target_ssp {
        t.target_ssp = v;
    }
    if let Some(v) = o.trials {
        t.trials = v;
    }
    if let Some(v) = o.allows_varying {
        t.allows_varying = v;
    }
    match (&o.vnfs, &o.vlinks) {
        (None, Some(_)) => return Err(invalid("catalog.types.vlinks", "requires vnfs")),
        (None, None) => {}
        (Some(vnfs), vlinks) => {
            let vlinks = vlinks.clone().unwrap_or_default();
            let index = |n: &str| {
                vnfs.iter()
                    .position(|v| v.name == n)
                    .ok_or_else(|| invalid("catalog.types.vlinks", format!("unknown VNF `{n}`")))
            };
            let mut links = Vec::new();
            for l in &vlinks {
                links.push(VlinkSpec {
                    from: index(&l.from)?,
                    to: index(&l.to)?,
                    bandwidth: l.r_b,
                });
            }
            let template = SfcTemplate::new(
                vnfs.iter()
                    .map(|v| VnfSpec {
                        name: v.name.clone(),
                        demand: ResourceVec(v.r),
                    })
                    .collect(),
                links,
            )?;
            let (mut keys, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
            for (i, v) in vnfs.iter().enumerate() {
                for r in Resource::ALL {
                    let (m, s) = (v.u_mean[r.index()], v.u_std[r.index()]);
                    if m != 0.0 || s != 0.0 {
                        keys.push(DemandKey::Node { vnf: i, resource: r });
                        mean.push(m);
                        std.push(s);
                    }
                }
            }
            for (e, l) in vlinks.iter().enumerate() {
                if l.u_mean != 0.0 || l.u_std != 0.0 {
                    keys.push(DemandKey::Link { vlink: e });
                    mean.push(l.u_mean);
                    std.push(l.u_std);
                }
            }
            t.user_stats = Arc::new(UserDemandStats::diagonal(keys, mean, std)?);
            t.template = Arc::new(template);
        }
    }
    if !o.correlations.is_empty() {
        let mut stats = (*t.user_stats).clone();
        for c in &o.correlations {
            let a = parse_key(&t.template, &c.a)?;
            let b = parse_key(&t.template, &c.b)?;
            stats = stats.with_correlation(a, b, c.rho)?;
        }
        t.user_stats = Arc::new(stats);
    }
    if !(t.target_ssp > 0.0 && t.target_ssp < 1.0) {
        return Err(invalid("catalog.types.target_ssp", format!("{} must lie in (0, 1)", t.target_ssp)));
    }
    Ok(())
}

fn resolve_catalog(c: &CatalogSection) -> Result<SliceCatalog, ScenarioError> {
    let mut catalog = builtin_slice_catalog();
    if let Some(p) = &c.varying_pattern {
        if p.is_empty() || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("catalog.varying_pattern", "probabilities in [0, 1], at least one"));
        }
        catalog.varying_pattern = p.clone();
    }
    for (key, o) in &c.types {
        let id: u8 = key
            .parse()
            .map_err(|_| invalid("catalog.types", format!("type id `{key}` is not a small integer")))?;
        match catalog.types.get_mut(&id) {
            Some(t) => apply_type_override(t, o)?,
            None => {
                if o.vnfs.is_none() || o.target_ssp.is_none() || o.trials.is_none() {
                    return Err(invalid(
                        format!("catalog.types.{id}"),
                        "a new slice type needs vnfs, target_ssp and trials",
                    ));
                }
                let builtin = builtin_slice_catalog();
                let base = builtin.types.values().next().expect("builtin types exist");
                let mut t = SliceType {
                    id,
                    name: format!("type-{id}"),
                    allows_varying: false,
                    ..base.clone()
                };
                apply_type_override(&mut t, o)?;
                catalog.types.insert(id, t);
            }
        }
    }
    Ok(catalog)
}

/// Parses a scenario document. Relative paths resolve against `base`.
pub fn parse_scenario(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let topology = doc.topology.as_ref().ok_or(ScenarioError::Missing("topology"))?;
    let network = resolve_topology(topology, base)?;
    let catalog = resolve_catalog(&doc.catalog)?;

    let a = &doc.arrivals;
    let premium = match (a.premium_fraction, a.premium_count) {
        (Some(_), Some(_)) => {
            return Err(invalid("arrivals", "give premium_fraction or premium_count, not both"))
        }
        (_, Some(c)) => PremiumTagging::Count(c),
        (Some(f), None) => PremiumTagging::Fraction(f),
        (None, None) => PremiumTagging::Fraction(0.25),
    };
    let defaults = PolicyParams::default();
    let s = &doc.solver;
    let solve = crate::milp::SolveOptions {
        time_limit: s.time_limit.map(|t| seconds("solver.time_limit", t)).transpose()?,
        node_limit: s.node_limit,
        mip_gap: s.mip_gap,
        seed: s.seed,
        dive: s.dive,
    };
    if !(solve.mip_gap.is_finite() && solve.mip_gap >= 0.0) {
        return Err(invalid("solver.mip_gap", "must be finite and non-negative"));
    }
    let q = &doc.ssp;
    let config = ScenarioConfig {
        epsilon: a.epsilon,
        horizon: a.horizon,
        max_requests: a.max_requests,
        arrival_rate: a.rate,
        premium,
        activation_delay: (a.activation_delay[0], a.activation_delay[1]),
        lifetime: (a.lifetime[0], a.lifetime[1]),
        slice_types: a.slice_types.clone(),
        varying_probability: a.varying_probability,
        policy: PolicyParams {
            p_max: doc.policy.p_max.unwrap_or(defaults.p_max),
            alpha: doc.policy.alpha.unwrap_or(defaults.alpha),
            delta_p: doc.policy.delta_p.unwrap_or(defaults.delta_p),
            just_in_time: false,
        },
        variant: doc.variant.unwrap_or(Variant::Jpr),
        seed: doc.seed.unwrap_or(1),
        background: BackgroundModel {
            mean_fraction: doc.background.mean_fraction,
            std_fraction: doc.background.std_fraction,
            violation_prob: doc.background.impact_threshold,
        },
        ssp: SspOptions {
            truncation: q.truncation,
            gamma_tol: q.gamma_tol,
            qmc: QmcOptions {
                seed: q.qmc_seed,
                shifts: q.qmc_shifts,
                max_points: q.qmc_max_points,
                abs_tol: q.qmc_abs_tol,
            },
        },
        solve,
        timeout_policy: s.on_timeout,
        build: BuildOptions { kappa_cap: s.kappa_cap },
    };
    config.validate()?;
    for t in &config.slice_types {
        catalog.get(*t)?;
    }
    Ok(Scenario {
        label: doc.label.unwrap_or_else(|| "scenario".into()),
        config,
        network,
        catalog,
        backend: s.backend,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path.parent().unwrap_or(Path::new(".")))
}
