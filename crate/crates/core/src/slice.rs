//! Slice requests: service function chain templates, per-user demand
//! statistics, the time-varying user-count model, aggregate demand moments
//! and the built-in slice catalog.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infra::{Resource, ResourceVec};

#[derive(Debug, Error, PartialEq)]
pub enum SliceError {
    #[error("invalid SFC template: {0}")]
    Template(String),
    #[error("invalid demand statistics: {0}")]
    Demand(String),
    #[error("invalid user-count model: {0}")]
    UserCount(String),
    #[error("slot offset {offset} outside the activity window of {len} slots")]
    SlotOutOfRange { offset: usize, len: usize },
    #[error("unknown slice type {0}")]
    UnknownType(u8),
    #[error("slice type {slice_type} does not support demand pattern {pattern}")]
    PatternNotAllowed { slice_type: u8, pattern: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VnfSpec {
    pub name: String,
    /// Resources consumed by one instance (r_c, r_m, r_w).
    pub demand: ResourceVec,
}

/// Directed virtual link between two VNFs of the same chain.
#[derive(Debug, Clone, PartialEq)]
pub struct VlinkSpec {
    pub from: usize,
    pub to: usize,
    /// Bandwidth consumed by one link instance.
    pub bandwidth: f64,
}

/// Service function chain: VNFs plus virtual links between them.
#[derive(Debug, Clone, PartialEq)]
pub struct SfcTemplate {
    vnfs: Vec<VnfSpec>,
    vlinks: Vec<VlinkSpec>,
}

impl SfcTemplate {
    pub fn new(vnfs: Vec<VnfSpec>, vlinks: Vec<VlinkSpec>) -> Result<Self, SliceError> {
        let bad = |m: String| Err(SliceError::Template(m));
        if vnfs.is_empty() {
            return bad("no VNFs".into());
        }
        for v in &vnfs {
            if v.demand.0.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad(format!("VNF `{}` has a negative or non-finite demand", v.name));
            }
            if v.demand.0.iter().all(|x| *x == 0.0) {
                return bad(format!("VNF `{}` consumes no resources", v.name));
            }
        }
        for (i, e) in vlinks.iter().enumerate() {
            if e.from >= vnfs.len() || e.to >= vnfs.len() {
                return bad(format!("virtual link {i} references a missing VNF"));
            }
            if e.from == e.to {
                return bad(format!("virtual link {i} is a self loop"));
            }
            if !(e.bandwidth.is_finite() && e.bandwidth > 0.0) {
                return bad(format!("virtual link {i} needs a positive bandwidth"));
            }
            if vlinks[..i].iter().any(|f| f.from == e.from && f.to == e.to) {
                return bad(format!("virtual link {i} is duplicated"));
            }
        }
        let t = SfcTemplate { vnfs, vlinks };
        let reach = t.bfs_order();
        if reach.len() != t.vnfs.len() {
            return bad("chain is not connected".into());
        }
        let ratio = t.instance_ratios();
        for (k, e) in t.vlinks.iter().enumerate() {
            let (out_f, in_f) = t.flow_fractions(k);
            let (a, b) = (out_f * ratio[e.from], in_f * ratio[e.to]);
            if (a - b).abs() > 1e-9 * a.max(b) {
                return bad(format!("virtual link bandwidths are not flow-consistent at link {k}"));
            }
        }
        Ok(t)
    }

    pub fn vnfs(&self) -> &[VnfSpec] {
        &self.vnfs
    }

    pub fn vlinks(&self) -> &[VlinkSpec] {
        &self.vlinks
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.vlinks.iter().filter(|e| e.from == v).count()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.vlinks.iter().filter(|e| e.to == v).count()
    }

    /// Flow fractions of a virtual link: the share of its source's outgoing
    /// bandwidth and the share of its destination's incoming bandwidth.
    pub fn flow_fractions(&self, vlink: usize) -> (f64, f64) {
        let e = &self.vlinks[vlink];
        let out: f64 = self
            .vlinks
            .iter()
            .filter(|f| f.from == e.from)
            .map(|f| f.bandwidth)
            .sum();
        let inc: f64 = self
            .vlinks
            .iter()
            .filter(|f| f.to == e.to)
            .map(|f| f.bandwidth)
            .sum();
        (e.bandwidth / out, e.bandwidth / inc)
    }

    fn bfs_order(&self) -> Vec<usize> {
        let mut seen = vec![false; self.vnfs.len()];
        let mut order = vec![0];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            for e in &self.vlinks {
                let next = if e.from == v {
                    e.to
                } else if e.to == v {
                    e.from
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    order.push(next);
                    queue.push_back(next);
                }
            }
        }
        order
    }

    /// Relative total instance counts implied by flow conservation, with VNF 0
    /// normalised to 1. For a linear chain every entry is 1.
    pub fn instance_ratios(&self) -> Vec<f64> {
        let mut ratio = vec![f64::NAN; self.vnfs.len()];
        ratio[0] = 1.0;
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            for (k, e) in self.vlinks.iter().enumerate() {
                let (out_f, in_f) = self.flow_fractions(k);
                // link instances = out_f * total(from) = in_f * total(to)
                if e.from == v && ratio[e.to].is_nan() {
                    ratio[e.to] = out_f * ratio[v] / in_f;
                    queue.push_back(e.to);
                } else if e.to == v && ratio[e.from].is_nan() {
                    ratio[e.from] = in_f * ratio[v] / out_f;
                    queue.push_back(e.from);
                }
            }
        }
        ratio
    }
}

/// Identifies one component of the per-user demand vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DemandKey {
    Node { vnf: usize, resource: Resource },
    Link { vlink: usize },
}

impl fmt::Display for DemandKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemandKey::Node { vnf, resource } => write!(f, "v{vnf}.{}", resource.tag()),
            DemandKey::Link { vlink } => write!(f, "e{vlink}.b"),
        }
    }
}

/// Mean and covariance of the demand generated by a single user. Keys that
/// are not listed carry no demand.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDemandStats {
    keys: Vec<DemandKey>,
    mean: Vec<f64>,
    /// Row-major `d x d` covariance.
    cov: Vec<f64>,
}

impl UserDemandStats {
    /// Independent components with the given standard deviations.
    pub fn diagonal(
        keys: Vec<DemandKey>,
        mean: Vec<f64>,
        std: Vec<f64>,
    ) -> Result<Self, SliceError> {
        let d = keys.len();
        if mean.len() != d || std.len() != d {
            return Err(SliceError::Demand("length mismatch".into()));
        }
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = std[i] * std[i];
        }
        Self::with_covariance(keys, mean, cov)
    }

    pub fn with_covariance(
        keys: Vec<DemandKey>,
        mean: Vec<f64>,
        cov: Vec<f64>,
    ) -> Result<Self, SliceError> {
        let d = keys.len();
        let bad = |m: String| Err(SliceError::Demand(m));
        if mean.len() != d || cov.len() != d * d {
            return bad("length mismatch".into());
        }
        for (i, k) in keys.iter().enumerate() {
            if keys[..i].contains(k) {
                return bad(format!("duplicate key {k}"));
            }
            if !(mean[i].is_finite() && mean[i] >= 0.0) {
                return bad(format!("mean of {k} must be finite and non-negative"));
            }
            if !(cov[i * d + i].is_finite() && cov[i * d + i] >= 0.0) {
                return bad(format!("variance of {k} must be finite and non-negative"));
            }
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (cov[i * d + j], cov[j * d + i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return bad("covariance is not symmetric".into());
                }
            }
        }
        if crate::uncertainty::cholesky_psd(&cov, d).is_none() {
            return bad("covariance is not positive semidefinite".into());
        }
        Ok(UserDemandStats { keys, mean, cov })
    }

    /// Sets the correlation coefficient between two components.
    pub fn with_correlation(mut self, a: DemandKey, b: DemandKey, rho: f64) -> Result<Self, SliceError> {
        let d = self.keys.len();
        let ia = self.position(a).ok_or_else(|| SliceError::Demand(format!("unknown key {a}")))?;
        let ib = self.position(b).ok_or_else(|| SliceError::Demand(format!("unknown key {b}")))?;
        if !(-1.0..=1.0).contains(&rho) || ia == ib {
            return Err(SliceError::Demand(format!("invalid correlation {rho} for {a}/{b}")));
        }
        let c = rho * self.std(ia) * self.std(ib);
        self.cov[ia * d + ib] = c;
        self.cov[ib * d + ia] = c;
        Self::with_covariance(self.keys, self.mean, self.cov)
    }

    pub fn keys(&self) -> &[DemandKey] {
        &self.keys
    }

    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    pub fn std(&self, i: usize) -> f64 {
        self.cov[i * self.keys.len() + i].sqrt()
    }

    pub fn position(&self, key: DemandKey) -> Option<usize> {
        self.keys.iter().position(|k| *k == key)
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.keys.len();
        (0..d).all(|i| (0..d).all(|j| i == j || self.cov[i * d + j] == 0.0))
    }
}

/// Binomial number of active users, with a per-slot success probability
/// over the activity window (`probs[0]` is the activation slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCountModel {
    pub trials: u32,
    pub probs: Vec<f64>,
}

impl UserCountModel {
    pub fn new(trials: u32, probs: Vec<f64>) -> Result<Self, SliceError> {
        if probs.is_empty() {
            return Err(SliceError::UserCount("empty probability pattern".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SliceError::UserCount(format!("probability {p} outside [0, 1]")));
        }
        Ok(UserCountModel { trials, probs })
    }

    pub fn prob(&self, offset: usize) -> Result<f64, SliceError> {
        self.probs.get(offset).copied().ok_or(SliceError::SlotOutOfRange {
            offset,
            len: self.probs.len(),
        })
    }
}

/// Mean and variance of the user count at a slot offset.
pub fn user_count_moments(model: &UserCountModel, offset: usize) -> Result<(f64, f64), SliceError> {
    let p = model.prob(offset)?;
    let n = model.trials as f64;
    Ok((n * p, n * p * (1.0 - p)))
}

/// Mean and standard deviation of the aggregate demand, per demand key.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateDemandMoments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Moments of the product of the user count and the per-user demand
/// (independent factors): mean `N U`, variance
/// `N^2 var(U) + U^2 var(N) + var(N) var(U)` with barred quantities as means.
pub fn aggregate_moments(
    user: &UserDemandStats,
    count_mean: f64,
    count_var: f64,
) -> Result<AggregateDemandMoments, SliceError> {
    if !(count_mean.is_finite() && count_mean >= 0.0 && count_var.is_finite() && count_var >= 0.0) {
        return Err(SliceError::UserCount(format!(
            "invalid count moments ({count_mean}, {count_var})"
        )));
    }
    let mut mean = Vec::with_capacity(user.dim());
    let mut std = Vec::with_capacity(user.dim());
    for i in 0..user.dim() {
        let (u, uv) = (user.mean[i], user.std(i).powi(2));
        mean.push(count_mean * u);
        let var = count_mean * count_mean * uv + u * u * count_var + count_var * uv;
        std.push(var.max(0.0).sqrt());
    }
    Ok(AggregateDemandMoments { mean, std })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PriorityClass {
    Premium,
    Standard,
}

impl fmt::Display for PriorityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorityClass::Premium => "premium",
            PriorityClass::Standard => "standard",
        })
    }
}

/// Temporal demand pattern of a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DemandPattern {
    /// Success probability 1 in every active slot.
    Constant,
    /// Catalog-defined time-varying probabilities, tiled over the lifetime.
    Varying,
}

impl DemandPattern {
    pub fn number(self) -> u8 {
        match self {
            DemandPattern::Constant => 1,
            DemandPattern::Varying => 2,
        }
    }
}

/// A single slice request.
#[derive(Debug, Clone)]
pub struct SliceRequest {
    pub id: u64,
    pub slice_type: u8,
    pub class: PriorityClass,
    pub pattern: DemandPattern,
    /// Arrival instant in slot units.
    pub arrival: f64,
    /// First and last active slots (inclusive).
    pub k_on: u32,
    pub k_off: u32,
    /// Target service-satisfaction probability.
    pub target_ssp: f64,
    pub template: Arc<SfcTemplate>,
    pub user_stats: Arc<UserDemandStats>,
    pub user_count: UserCountModel,
}

impl SliceRequest {
    pub fn active_slots(&self) -> std::ops::RangeInclusive<u32> {
        self.k_on..=self.k_off
    }

    pub fn lifetime(&self) -> u32 {
        self.k_off - self.k_on + 1
    }

    pub fn is_active(&self, slot: u32) -> bool {
        self.active_slots().contains(&slot)
    }
}

/// One catalog entry.
#[derive(Debug, Clone)]
pub struct SliceType {
    pub id: u8,
    pub name: String,
    pub template: Arc<SfcTemplate>,
    pub user_stats: Arc<UserDemandStats>,
    pub trials: u32,
    pub target_ssp: f64,
    /// Whether the time-varying pattern may be drawn for this type.
    pub allows_varying: bool,
}

/// Slice types by id plus the time-varying success-probability pattern.
#[derive(Debug, Clone)]
pub struct SliceCatalog {
    pub types: BTreeMap<u8, SliceType>,
    pub varying_pattern: Vec<f64>,
}

impl SliceCatalog {
    pub fn get(&self, id: u8) -> Result<&SliceType, SliceError> {
        self.types.get(&id).ok_or(SliceError::UnknownType(id))
    }

    /// User-count model of a request of `slice_type` with `lifetime` slots.
    pub fn user_count(
        &self,
        slice_type: u8,
        pattern: DemandPattern,
        lifetime: u32,
    ) -> Result<UserCountModel, SliceError> {
        let t = self.get(slice_type)?;
        let probs = match pattern {
            DemandPattern::Constant => vec![1.0; lifetime as usize],
            DemandPattern::Varying => {
                if !t.allows_varying {
                    return Err(SliceError::PatternNotAllowed {
                        slice_type,
                        pattern: pattern.number(),
                    });
                }
                if self.varying_pattern.is_empty() {
                    return Err(SliceError::UserCount("empty varying pattern".into()));
                }
                self.varying_pattern
                    .iter()
                    .copied()
                    .cycle()
                    .take(lifetime as usize)
                    .collect()
            }
        };
        UserCountModel::new(t.trials, probs)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn make_request(
        &self,
        id: u64,
        slice_type: u8,
        class: PriorityClass,
        pattern: DemandPattern,
        arrival: f64,
        k_on: u32,
        k_off: u32,
    ) -> Result<SliceRequest, SliceError> {
        let t = self.get(slice_type)?;
        if k_off < k_on {
            return Err(SliceError::UserCount(format!("k_off {k_off} < k_on {k_on}")));
        }
        Ok(SliceRequest {
            id,
            slice_type,
            class,
            pattern,
            arrival,
            k_on,
            k_off,
            target_ssp: t.target_ssp,
            template: t.template.clone(),
            user_stats: t.user_stats.clone(),
            user_count: self.user_count(slice_type, pattern, k_off - k_on + 1)?,
        })
    }
}

/// Per-VNF table row: name, per-instance demand (c, m, w), and per-user
/// mean demand for cpu, memory and (optionally) wireless.
struct VnfRow(&'static str, [f64; 3], [Option<f64>; 3]);

#[allow(clippy::too_many_arguments)]
fn catalog_entry(
    id: u8,
    name: &str,
    trials: u32,
    target_ssp: f64,
    allows_varying: bool,
    rows: &[VnfRow],
    link_user_mean: f64,
    link_bandwidth: f64,
) -> SliceType {
    let vnfs = rows
        .iter()
        .map(|r| VnfSpec {
            name: r.0.to_string(),
            demand: ResourceVec(r.1),
        })
        .collect();
    let vlinks: Vec<VlinkSpec> = (1..rows.len())
        .map(|i| VlinkSpec {
            from: i - 1,
            to: i,
            bandwidth: link_bandwidth,
        })
        .collect();
    let mut keys = Vec::new();
    let mut mean = Vec::new();
    for (v, r) in rows.iter().enumerate() {
        for res in Resource::ALL {
            if let Some(u) = r.2[res.index()] {
                keys.push(DemandKey::Node { vnf: v, resource: res });
                mean.push(u);
            }
        }
    }
    for e in 0..vlinks.len() {
        keys.push(DemandKey::Link { vlink: e });
        mean.push(link_user_mean);
    }
    // standard deviations are 10% of the means
    let std = mean.iter().map(|m| 0.1 * m).collect();
    SliceType {
        id,
        name: name.to_string(),
        template: Arc::new(SfcTemplate::new(vnfs, vlinks).expect("builtin template is valid")),
        user_stats: Arc::new(
            UserDemandStats::diagonal(keys, mean, std).expect("builtin demand stats are valid"),
        ),
        trials,
        target_ssp,
        allows_varying,
    }
}

/// The three built-in slice types (eMBB-like, high-rate eMBB-like and
/// video surveillance) with the (0.5, 1.0, 0.5) varying pattern.
pub fn builtin_slice_catalog() -> SliceCatalog {
    let t1 = catalog_entry(
        1,
        "voice-and-data",
        500,
        0.99,
        true,
        &[
            VnfRow("vVOC", [0.29, 0.81, 0.0], [Some(5.4e-3), Some(1.5e-2), None]),
            VnfRow("vGW", [0.05, 0.03, 0.0], [Some(9.0e-4), Some(5.0e-4), None]),
            VnfRow("vBBU", [0.04, 0.03, 0.2], [Some(8.0e-4), Some(5.0e-4), Some(4e-3)]),
        ],
        4e-3,
        0.22,
    );
    let t2 = catalog_entry(
        2,
        "mobile-broadband",
        2000,
        0.95,
        true,
        &[
            VnfRow("vVOC", [0.17, 1.20, 0.0], [Some(1.1e-3), Some(7.5e-3), None]),
            VnfRow("vGW", [0.03, 0.04, 0.0], [Some(1.8e-4), Some(2.5e-4), None]),
            VnfRow("vBBU", [0.01, 0.04, 0.3], [Some(0.8e-4), Some(2.5e-4), Some(2e-3)]),
        ],
        2e-3,
        0.32,
    );
    let t3 = catalog_entry(
        3,
        "video-surveillance",
        200,
        0.9,
        false,
        &[
            VnfRow("vBBU", [0.004, 0.0025, 0.02], [Some(2.0e-4), Some(1.3e-4), Some(1e-3)]),
            VnfRow("vGW", [0.018, 0.003, 0.0], [Some(9.0e-4), Some(1.3e-4), None]),
            VnfRow("vTM", [0.266, 0.003, 0.0], [Some(1.1e-3), Some(1.3e-4), None]),
            VnfRow("vVOC", [0.108, 0.080, 0.0], [Some(5.4e-3), Some(3.8e-3), None]),
            VnfRow("vIDPS", [0.214, 0.003, 0.0], [Some(1.1e-2), Some(1.3e-4), None]),
        ],
        1e-3,
        0.02,
    );
    SliceCatalog {
        types: [(1, t1), (2, t2), (3, t3)].into_iter().collect(),
        varying_pattern: vec![0.5, 1.0, 0.5],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> SfcTemplate {
        let vnfs = (0..n)
            .map(|i| VnfSpec {
                name: format!("f{i}"),
                demand: ResourceVec::new(1.0, 1.0, 0.0),
            })
            .collect();
        let vlinks = (1..n)
            .map(|i| VlinkSpec {
                from: i - 1,
                to: i,
                bandwidth: 1.0,
            })
            .collect();
        SfcTemplate::new(vnfs, vlinks).unwrap()
    }

    #[test]
    fn catalog_shapes() {
        let cat = builtin_slice_catalog();
        let t1 = cat.get(1).unwrap();
        assert_eq!(t1.template.vnfs().len(), 3);
        assert_eq!(t1.template.vlinks().len(), 2);
        assert_eq!(t1.user_stats.dim(), 7 + 2);
        let t3 = cat.get(3).unwrap();
        assert_eq!(t3.template.vnfs().len(), 5);
        assert_eq!(t3.trials, 200);
        assert_eq!(t3.target_ssp, 0.9);
        assert!(matches!(cat.get(9), Err(SliceError::UnknownType(9))));
        let vbbu = t1.user_stats.position(DemandKey::Node { vnf: 2, resource: Resource::Wireless });
        assert!(vbbu.is_some());
        assert!(t1
            .user_stats
            .position(DemandKey::Node { vnf: 0, resource: Resource::Wireless })
            .is_none());
    }

    #[test]
    fn type_three_is_constant_only() {
        let cat = builtin_slice_catalog();
        assert!(matches!(
            cat.user_count(3, DemandPattern::Varying, 3),
            Err(SliceError::PatternNotAllowed { .. })
        ));
        let m = cat.user_count(1, DemandPattern::Varying, 5).unwrap();
        assert_eq!(m.probs, vec![0.5, 1.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn count_moments() {
        let m = UserCountModel::new(500, vec![1.0, 0.5]).unwrap();
        assert_eq!(user_count_moments(&m, 0).unwrap(), (500.0, 0.0));
        assert_eq!(user_count_moments(&m, 1).unwrap(), (250.0, 125.0));
        assert_eq!(
            user_count_moments(&m, 2),
            Err(SliceError::SlotOutOfRange { offset: 2, len: 2 })
        );
        assert!(UserCountModel::new(5, vec![1.2]).is_err());
    }

    #[test]
    fn degenerate_count_gives_pure_user_variance() {
        let u = UserDemandStats::diagonal(
            vec![DemandKey::Link { vlink: 0 }],
            vec![2.0],
            vec![0.5],
        )
        .unwrap();
        let m = aggregate_moments(&u, 10.0, 0.0).unwrap();
        assert_eq!(m.mean, vec![20.0]);
        assert!((m.std[0] - 5.0).abs() < 1e-12);
        let z = aggregate_moments(&u, 0.0, 0.0).unwrap();
        assert_eq!((z.mean[0], z.std[0]), (0.0, 0.0));
    }

    #[test]
    fn flow_fractions_on_branch() {
        // 0 -> 1 (bw 1), 0 -> 2 (bw 3), 1 -> 3 (bw 1), 2 -> 3 (bw 3)
        let vnfs = (0..4)
            .map(|i| VnfSpec {
                name: format!("f{i}"),
                demand: ResourceVec::new(1.0, 0.0, 0.0),
            })
            .collect();
        let link = |from, to, bandwidth| VlinkSpec { from, to, bandwidth };
        let t = SfcTemplate::new(
            vnfs,
            vec![link(0, 1, 1.0), link(0, 2, 3.0), link(1, 3, 1.0), link(2, 3, 3.0)],
        )
        .unwrap();
        assert_eq!(t.flow_fractions(0), (0.25, 1.0));
        assert_eq!(t.flow_fractions(1), (0.75, 1.0));
        assert_eq!(t.flow_fractions(2), (1.0, 0.25));
        assert_eq!(t.flow_fractions(3), (1.0, 0.75));
        let r = t.instance_ratios();
        assert_eq!(r, vec![1.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn chain_ratios_are_one() {
        assert_eq!(chain(4).instance_ratios(), vec![1.0; 4]);
    }

    #[test]
    fn template_validation() {
        let v = |n: &str| VnfSpec {
            name: n.into(),
            demand: ResourceVec::new(1.0, 0.0, 0.0),
        };
        assert!(SfcTemplate::new(vec![v("a"), v("b")], vec![]).is_err());
        assert!(SfcTemplate::new(
            vec![v("a")],
            vec![VlinkSpec { from: 0, to: 0, bandwidth: 1.0 }]
        )
        .is_err());
        assert!(SfcTemplate::new(vec![v("a")], vec![]).is_ok());
        let link = |from, to, bandwidth| VlinkSpec { from, to, bandwidth };
        let diamond = |b3| {
            SfcTemplate::new(
                vec![v("a"), v("b"), v("c"), v("d")],
                vec![link(0, 1, 1.0), link(0, 2, 3.0), link(1, 3, 2.0), link(2, 3, b3)],
            )
        };
        assert!(diamond(2.0).is_err());
        assert!(diamond(6.0).is_ok());
    }

    #[test]
    fn correlation_requires_psd() {
        let keys = vec![DemandKey::Link { vlink: 0 }, DemandKey::Link { vlink: 1 }];
        let u = UserDemandStats::diagonal(keys.clone(), vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let c = u.clone().with_correlation(keys[0], keys[1], 0.5).unwrap();
        assert!(!c.is_diagonal());
        assert_eq!(c.cov()[1], 0.5);
        let bad = UserDemandStats::with_covariance(keys, vec![1.0, 1.0], vec![1.0, 2.0, 2.0, 1.0]);
        assert!(bad.is_err());
    }
}
