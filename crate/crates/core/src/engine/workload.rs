//! Seeded request generation. Every random choice draws from its own ChaCha
//! stream derived from the master seed, so variants and policy settings
//! that share a seed see the same workload.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::engine::{EngineError, PremiumTagging, ScenarioConfig};
use crate::slice::{DemandPattern, PriorityClass, SliceCatalog, SliceRequest};

/// Purpose of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Arrivals = 1,
    Types = 2,
    Patterns = 3,
    Delays = 4,
    Lifetimes = 5,
    Premium = 6,
}

pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Slot in which a request arriving at `arrival` is first processed: its
/// arrival slot, or the next one if it arrives inside the processing window.
pub fn processing_slot(arrival: f64, epsilon: f64) -> u32 {
    let k = arrival.floor();
    if arrival >= k + 1.0 - epsilon {
        k as u32 + 1
    } else {
        k as u32
    }
}

/// Poisson arrivals per slot, uniform within the slot, with uniformly drawn
/// slice type, demand pattern, activation delay and lifetime. Ids follow
/// arrival order starting at 1.
pub fn generate_requests(config: &ScenarioConfig, catalog: &SliceCatalog) -> Result<Vec<SliceRequest>, EngineError> {
    config.validate()?;
    for &t in &config.slice_types {
        catalog.get(t)?;
    }
    let poisson = Poisson::new(config.arrival_rate)
        .map_err(|e| EngineError::Config(format!("arrival_rate: {e}")))?;
    let mut arrivals = stream(config.seed, Stream::Arrivals);
    let mut types = stream(config.seed, Stream::Types);
    let mut patterns = stream(config.seed, Stream::Patterns);
    let mut delays = stream(config.seed, Stream::Delays);
    let mut lifetimes = stream(config.seed, Stream::Lifetimes);
    let cap = config.max_requests.unwrap_or(usize::MAX);

    let mut out: Vec<SliceRequest> = Vec::new();
    'slots: for k in 0..config.horizon {
        let n = poisson.sample(&mut arrivals) as usize;
        let mut times: Vec<f64> = (0..n).map(|_| k as f64 + arrivals.random::<f64>()).collect();
        times.sort_by(f64::total_cmp);
        for arrival in times {
            if out.len() >= cap {
                break 'slots;
            }
            let slice_type = config.slice_types[types.random_range(0..config.slice_types.len())];
            let varying = patterns.random_bool(config.varying_probability);
            let pattern = if varying && catalog.get(slice_type)?.allows_varying {
                DemandPattern::Varying
            } else {
                DemandPattern::Constant
            };
            let delay = delays.random_range(config.activation_delay.0..=config.activation_delay.1);
            let lifetime = lifetimes.random_range(config.lifetime.0..=config.lifetime.1);
            let k_on = processing_slot(arrival, config.epsilon) + delay;
            let id = out.len() as u64 + 1;
            out.push(catalog.make_request(
                id,
                slice_type,
                PriorityClass::Standard,
                pattern,
                arrival,
                k_on,
                k_on + lifetime - 1,
            )?);
        }
    }

    let premium = match config.premium {
        PremiumTagging::Count(c) => c.min(out.len()),
        PremiumTagging::Fraction(f) => (f * out.len() as f64).round() as usize,
    };
    let mut rng = stream(config.seed, Stream::Premium);
    for i in sample(&mut rng, out.len(), premium) {
        out[i].class = PriorityClass::Premium;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slice::builtin_slice_catalog;

    #[test]
    fn processing_window_moves_to_next_slot() {
        assert_eq!(processing_slot(3.2, 0.1), 3);
        assert_eq!(processing_slot(3.95, 0.1), 4);
    }

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = ScenarioConfig {
            horizon: 50,
            ..Default::default()
        };
        let cat = builtin_slice_catalog();
        let a = generate_requests(&cfg, &cat).unwrap();
        let b = generate_requests(&cfg, &cat).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.id, x.arrival, x.k_on, x.k_off, x.class), (y.id, y.arrival, y.k_on, y.k_off, y.class));
        }
        let premium = a.iter().filter(|r| r.class == PriorityClass::Premium).count();
        assert_eq!(premium, (0.25 * a.len() as f64).round() as usize);
        for r in &a {
            let kp = processing_slot(r.arrival, cfg.epsilon);
            assert!((1..=6).contains(&(r.k_on - kp)));
            assert!((1..=3).contains(&r.lifetime()));
            if r.slice_type == 3 {
                assert_eq!(r.pattern, DemandPattern::Constant);
            }
        }
        assert!(a.windows(2).all(|w| w[0].arrival <= w[1].arrival));
    }

    #[test]
    fn premium_count_and_cap() {
        let cfg = ScenarioConfig {
            horizon: 1000,
            max_requests: Some(40),
            premium: PremiumTagging::Count(10),
            ..Default::default()
        };
        let a = generate_requests(&cfg, &builtin_slice_catalog()).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a.iter().filter(|r| r.class == PriorityClass::Premium).count(), 10);
    }
}
