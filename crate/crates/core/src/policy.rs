//! Prioritized processing of pending requests: initial priorities, aging at
//! slot boundaries, batch selection against a threshold, and the choice of
//! which request to drop when a joint batch does not fit.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slice::{PriorityClass, SliceRequest};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("request {id} received in slot {slot} but activates in slot {k_on}")]
    TooLate { id: u64, slot: u32, k_on: u32 },
    #[error("invalid policy parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
}

/// Priority scale, threshold fraction and aging step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub p_max: f64,
    pub alpha: f64,
    pub delta_p: f64,
    /// Defers every request, Premium included, to the slot before its
    /// activation. Premium requests still come first within that batch.
    #[serde(default)]
    pub just_in_time: bool,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            p_max: 3.0,
            alpha: 0.5,
            delta_p: 0.5,
            just_in_time: false,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |name, value| Err(PolicyError::InvalidParam { name, value });
        if !(self.p_max.is_finite() && self.p_max >= 1.0) {
            return bad("p_max", self.p_max);
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", self.alpha);
        }
        if !(self.delta_p.is_finite() && self.delta_p >= 0.0) {
            return bad("delta_p", self.delta_p);
        }
        Ok(())
    }

    /// Just-in-time processing: threshold at `p_max - 1`, no aging.
    pub fn just_in_time(self) -> Self {
        PolicyParams {
            alpha: 1.0,
            delta_p: 0.0,
            just_in_time: true,
            ..self
        }
    }

    /// Minimum priority a request needs to be processed.
    pub fn threshold(&self) -> f64 {
        self.alpha * (self.p_max - 1.0)
    }

    fn due_priority(&self, class: PriorityClass) -> f64 {
        match class {
            PriorityClass::Premium => self.p_max,
            PriorityClass::Standard => self.p_max - 1.0,
        }
    }
}

/// Priority of a request first received during slot `slot`.
pub fn assign_priority(request: &SliceRequest, slot: u32, params: &PolicyParams) -> Result<f64, PolicyError> {
    if request.k_on <= slot {
        return Err(PolicyError::TooLate {
            id: request.id,
            slot,
            k_on: request.k_on,
        });
    }
    let due = request.k_on == slot + 1;
    Ok(match (request.class, params.just_in_time) {
        (_, true) if !due => 0.0,
        (class, true) => params.due_priority(class),
        (PriorityClass::Premium, false) => params.p_max,
        (PriorityClass::Standard, false) if due => params.p_max - 1.0,
        (PriorityClass::Standard, false) => 0.0,
    })
}

/// Priority of a deferred request at the start of slot `next_slot`.
pub fn age_priority(
    priority: f64,
    request: &SliceRequest,
    next_slot: u32,
    params: &PolicyParams,
) -> f64 {
    if request.k_on == next_slot + 1 {
        if params.just_in_time {
            return params.due_priority(request.class);
        }
        return params.p_max - 1.0;
    }
    if params.just_in_time {
        return priority;
    }
    (priority + params.delta_p).min(params.p_max - 1.0)
}

/// A received request awaiting its decision.
#[derive(Debug, Clone)]
pub struct PendingRequest {
    pub request: SliceRequest,
    pub priority: f64,
    pub processed: bool,
    /// Slot in which the request was first received.
    pub arrival_slot: u32,
}

/// Processing order: priority descending, then earlier activation, earlier
/// arrival, lower id.
pub fn processing_order(a: &PendingRequest, b: &PendingRequest) -> Ordering {
    b.priority
        .total_cmp(&a.priority)
        .then(a.request.k_on.cmp(&b.request.k_on))
        .then(a.request.arrival.total_cmp(&b.request.arrival))
        .then(a.request.id.cmp(&b.request.id))
}

/// Indices of the unprocessed requests at or above the threshold, in
/// processing order.
pub fn select_batch(pending: &[PendingRequest], params: &PolicyParams) -> Vec<usize> {
    let threshold = params.threshold();
    let mut idx: Vec<usize> = (0..pending.len())
        .filter(|&i| !pending[i].processed && pending[i].priority >= threshold - 1e-12)
        .collect();
    idx.sort_by(|&a, &b| processing_order(&pending[a], &pending[b]));
    idx
}

/// Which of the still-granted batch members a joint reservation drops next:
/// the lowest priority, and among equals the last arrived. Returns a
/// position into `granted`.
pub fn deny_candidate(pending: &[PendingRequest], granted: &[usize]) -> Option<usize> {
    granted
        .iter()
        .enumerate()
        .max_by(|(_, &a), (_, &b)| {
            let (a, b) = (&pending[a], &pending[b]);
            b.priority
                .total_cmp(&a.priority)
                .then(a.request.arrival.total_cmp(&b.request.arrival))
                .then(a.request.id.cmp(&b.request.id))
        })
        .map(|(pos, _)| pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slice::{builtin_slice_catalog, DemandPattern};

    fn req(id: u64, class: PriorityClass, arrival: f64, k_on: u32) -> SliceRequest {
        builtin_slice_catalog()
            .make_request(id, 1, class, DemandPattern::Constant, arrival, k_on, k_on)
            .unwrap()
    }

    fn pending(r: SliceRequest, priority: f64) -> PendingRequest {
        let arrival_slot = r.arrival.floor() as u32;
        PendingRequest {
            request: r,
            priority,
            processed: false,
            arrival_slot,
        }
    }

    #[test]
    fn initial_priorities() {
        let p = PolicyParams::default();
        assert_eq!(assign_priority(&req(1, PriorityClass::Premium, 0.3, 6), 0, &p), Ok(3.0));
        assert_eq!(assign_priority(&req(1, PriorityClass::Standard, 0.3, 1), 0, &p), Ok(2.0));
        assert_eq!(assign_priority(&req(1, PriorityClass::Standard, 0.3, 4), 0, &p), Ok(0.0));
        assert!(matches!(
            assign_priority(&req(1, PriorityClass::Standard, 2.3, 2), 2, &p),
            Err(PolicyError::TooLate { .. })
        ));
    }

    #[test]
    fn aging() {
        let p = PolicyParams {
            delta_p: 0.5,
            ..Default::default()
        };
        let far = req(1, PriorityClass::Standard, 0.2, 9);
        assert_eq!(age_priority(0.0, &far, 1, &p), 0.5);
        let p1 = PolicyParams { delta_p: 1.0, ..p };
        assert_eq!(age_priority(1.8, &far, 1, &p1), 2.0);
        let near = req(2, PriorityClass::Standard, 0.2, 3);
        assert_eq!(age_priority(0.0, &near, 2, &PolicyParams { delta_p: 0.0, ..p }), 2.0);
    }

    #[test]
    fn threshold_selection() {
        let k = 0;
        let strict = PolicyParams {
            alpha: 1.0,
            delta_p: 0.0,
            ..Default::default()
        };
        let reqs = vec![
            req(1, PriorityClass::Standard, 0.1, 3),
            req(2, PriorityClass::Premium, 0.2, 5),
            req(3, PriorityClass::Standard, 0.3, 1),
        ];
        let pend: Vec<_> = reqs
            .iter()
            .map(|r| pending(r.clone(), assign_priority(r, k, &strict).unwrap()))
            .collect();
        assert_eq!(select_batch(&pend, &strict), vec![1, 2]);
        let open = PolicyParams {
            alpha: 0.0,
            ..strict
        };
        assert_eq!(select_batch(&pend, &open), vec![1, 2, 0]);
    }

    #[test]
    fn equal_priority_orders_by_activation() {
        let p = PolicyParams::default();
        let pend = vec![
            pending(req(1, PriorityClass::Standard, 0.1, 5), 1.0),
            pending(req(2, PriorityClass::Standard, 0.5, 4), 1.0),
        ];
        assert_eq!(select_batch(&pend, &p), vec![1, 0]);
    }

    #[test]
    fn just_in_time_defers_premium() {
        let p = PolicyParams::default().just_in_time();
        let r = req(1, PriorityClass::Premium, 0.4, 5);
        let mut prio = assign_priority(&r, 0, &p).unwrap();
        assert_eq!(prio, 0.0);
        for next in 1..4 {
            prio = age_priority(prio, &r, next, &p);
            assert!(prio < p.threshold());
        }
        prio = age_priority(prio, &r, 4, &p);
        assert_eq!(prio, 3.0);
        let s = req(2, PriorityClass::Standard, 0.1, 5);
        assert_eq!(age_priority(0.0, &s, 4, &p), 2.0);
    }

    #[test]
    fn denies_lowest_then_last_arrived() {
        let pend = vec![
            pending(req(1, PriorityClass::Premium, 0.1, 2), 3.0),
            pending(req(2, PriorityClass::Standard, 0.2, 1), 2.0),
            pending(req(3, PriorityClass::Standard, 0.6, 1), 2.0),
        ];
        assert_eq!(deny_candidate(&pend, &[0, 1, 2]), Some(2));
        assert_eq!(deny_candidate(&pend, &[0, 1]), Some(1));
        assert_eq!(deny_candidate(&pend, &[]), None);
    }
}
