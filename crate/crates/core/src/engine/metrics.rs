//! Per-request decision records and run-level aggregates.

use std::time::Duration;

use crate::milp::{CostBreakdown, Violation};
use crate::slice::{DemandPattern, PriorityClass};

/// Outcome of one request.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub request_id: u64,
    pub slice_type: u8,
    pub class: PriorityClass,
    pub pattern: DemandPattern,
    pub arrival: f64,
    pub k_on: u32,
    pub k_off: u32,
    pub decision_slot: u32,
    pub decision_time: f64,
    /// Position in the global processing order, starting at 0.
    pub order: usize,
    pub priority: f64,
    pub granted: bool,
    pub cost: CostBreakdown,
    /// Newly deployed VNF instances per active slot (empty if denied).
    pub adjustments: Vec<u32>,
    /// Relaxation factor per active slot.
    pub gammas: Vec<f64>,
}

impl DecisionRecord {
    pub fn response_delay(&self) -> f64 {
        self.decision_time - self.arrival
    }
}

/// Solver effort spent on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub slot: u32,
    pub size: usize,
    pub granted: usize,
    pub solves: usize,
    /// Solves that stopped on a limit.
    pub timeouts: usize,
    pub nodes: u64,
    pub solver_time: Duration,
}

/// A violation found by the per-slot validator.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotViolation {
    pub slot: u32,
    pub violation: Violation,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassStats {
    pub requests: usize,
    pub accepted: usize,
    pub delay_sum: f64,
}

impl ClassStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.accepted as f64 / self.requests as f64
        }
    }

    pub fn mean_delay(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.delay_sum / self.requests as f64
        }
    }
}

/// Aggregates over one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationMetrics {
    pub premium: ClassStats,
    pub standard: ClassStats,
    /// Summed cost of granted requests.
    pub cost: CostBreakdown,
    /// Summed adjustments of granted requests.
    pub adjustments: u64,
    /// Summed lifetimes of granted requests, in slots.
    pub granted_slots: u64,
    pub solves: usize,
    pub solver_time: Duration,
}

impl SimulationMetrics {
    pub fn from_records(decisions: &[DecisionRecord], batches: &[BatchRecord]) -> Self {
        let mut m = SimulationMetrics::default();
        for d in decisions {
            let c = match d.class {
                PriorityClass::Premium => &mut m.premium,
                PriorityClass::Standard => &mut m.standard,
            };
            c.requests += 1;
            c.delay_sum += d.response_delay();
            if d.granted {
                c.accepted += 1;
                m.cost.resource += d.cost.resource;
                m.cost.fixed += d.cost.fixed;
                m.cost.adaptation += d.cost.adaptation;
                m.adjustments += d.adjustments.iter().map(|&a| a as u64).sum::<u64>();
                m.granted_slots += (d.k_off - d.k_on + 1) as u64;
            }
        }
        for b in batches {
            m.solves += b.solves;
            m.solver_time += b.solver_time;
        }
        m
    }

    pub fn class(&self, class: PriorityClass) -> &ClassStats {
        match class {
            PriorityClass::Premium => &self.premium,
            PriorityClass::Standard => &self.standard,
        }
    }

    pub fn accepted(&self) -> usize {
        self.premium.accepted + self.standard.accepted
    }

    pub fn requests(&self) -> usize {
        self.premium.requests + self.standard.requests
    }

    pub fn mean_delay(&self) -> f64 {
        let n = self.requests();
        if n == 0 {
            0.0
        } else {
            (self.premium.delay_sum + self.standard.delay_sum) / n as f64
        }
    }

    /// Mean total cost of a granted request.
    pub fn cost_per_slice(&self) -> f64 {
        match self.accepted() {
            0 => 0.0,
            n => self.cost.total() / n as f64,
        }
    }

    /// Newly deployed instances per granted slice and active slot.
    pub fn adjustments_per_slice_slot(&self) -> f64 {
        if self.granted_slots == 0 {
            0.0
        } else {
            self.adjustments as f64 / self.granted_slots as f64
        }
    }
}
