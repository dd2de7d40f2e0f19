//! Prioritized admission control and chance-constrained resource reservation
//! for network slices.
//!
//! Slice requests arrive over time and are processed in batches at fixed
//! instants. Each accepted request reserves, for every slot of its activity
//! window, integer numbers of VNF and virtual-link instances on a physical
//! network, sized so that its random user demand is served with a target
//! probability while background traffic keeps its own probabilistic margin.

pub mod engine;
pub mod infra;
pub mod milp;
pub mod policy;
pub mod report;
pub mod scenario;
pub mod slice;
pub mod uncertainty;

pub use engine::{RunOutput, ScenarioConfig, SimulationMetrics, Variant};
pub use infra::{InfrastructureNetwork, LinkSpec, NodeSpec, Resource, ResourceVec};
pub use slice::{PriorityClass, SfcTemplate, SliceRequest, UserCountModel, UserDemandStats};
pub use milp::{CostBreakdown, SliceAssignment};
pub use policy::PolicyParams;
pub use scenario::{load_scenario, parse_scenario, Backend, Overrides, Scenario, ScenarioError};
