//! Uncertainty handling: Gaussian relaxation of background traffic, the
//! service-satisfaction probability (SSP) of a slice under a binomial user
//! count, and the search for the smallest relaxation factor meeting a target.
//!
//! Correlated per-user demand is handled with a randomized-lattice Genz
//! estimator of the multivariate normal orthant probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ContinuousCDF, Discrete, Normal};
use thiserror::Error;

use crate::infra::{InfrastructureNetwork, ResourceVec};
use crate::slice::{AggregateDemandMoments, UserCountModel, UserDemandStats};

#[derive(Debug, Error, PartialEq)]
pub enum UncertaintyError {
    #[error("probability {0} must lie strictly between 0 and 1")]
    BadProbability(f64),
    #[error("SSP target {target} unreachable (p = {reached} at gamma = {gamma})")]
    Unreachable { target: f64, reached: f64, gamma: f64 },
    #[error("moments and demand statistics disagree in dimension ({0} vs {1})")]
    Dimension(usize, usize),
    #[error(transparent)]
    Slice(#[from] crate::slice::SliceError),
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        std_normal().cdf(x)
    }
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Relaxation factor for background traffic: `Phi^-1(1 - p)`.
pub fn gamma_background(violation_prob: f64) -> Result<f64, UncertaintyError> {
    if !(violation_prob > 0.0 && violation_prob < 1.0) {
        return Err(UncertaintyError::BadProbability(violation_prob));
    }
    Ok(phi_inv(1.0 - violation_prob))
}

/// Background traffic as fractions of capacity on every element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundModel {
    pub mean_fraction: f64,
    pub std_fraction: f64,
    pub violation_prob: f64,
}

impl Default for BackgroundModel {
    fn default() -> Self {
        BackgroundModel {
            mean_fraction: 0.2,
            std_fraction: 0.05,
            violation_prob: 0.1,
        }
    }
}

/// Relaxed background demand on every node resource and link.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundTargets {
    pub gamma: f64,
    pub node: Vec<ResourceVec>,
    pub link: Vec<f64>,
}

impl BackgroundTargets {
    /// No background traffic at all.
    pub fn zero(net: &InfrastructureNetwork) -> Self {
        BackgroundTargets {
            gamma: 0.0,
            node: vec![ResourceVec::ZERO; net.nodes().len()],
            link: vec![0.0; net.links().len()],
        }
    }
}

pub fn background_targets(
    net: &InfrastructureNetwork,
    model: &BackgroundModel,
) -> Result<BackgroundTargets, UncertaintyError> {
    let gamma = gamma_background(model.violation_prob)?;
    let k = model.mean_fraction + gamma * model.std_fraction;
    Ok(BackgroundTargets {
        gamma,
        node: net.nodes().iter().map(|n| n.capacity.scale(k)).collect(),
        link: net.links().iter().map(|l| l.bandwidth * k).collect(),
    })
}

// ---------------------------------------------------------------------------
// Multivariate normal orthant probabilities

/// Lower Cholesky factor of a positive semidefinite matrix. Zero pivots
/// (degenerate directions) are allowed; returns `None` if the matrix is not
/// PSD within a relative tolerance.
pub fn cholesky_psd(cov: &[f64], d: usize) -> Option<Vec<f64>> {
    let scale = (0..d).map(|i| cov[i * d + i]).fold(0.0f64, f64::max).max(1e-300);
    let tol = 1e-10 * scale;
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let s: f64 = (0..j).map(|k| l[j * d + k] * l[j * d + k]).sum();
        let pivot = cov[j * d + j] - s;
        if pivot < -tol {
            return None;
        }
        if pivot <= tol {
            // degenerate column: remaining entries must vanish
            for i in j + 1..d {
                let r: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
                if (cov[i * d + j] - r).abs() > 1e-6 * scale.sqrt() * scale.sqrt() {
                    return None;
                }
            }
            continue;
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let r: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            l[i * d + j] = (cov[i * d + j] - r) / ljj;
        }
    }
    Some(l)
}

/// Options for the randomized lattice estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcOptions {
    pub seed: u64,
    pub shifts: usize,
    pub max_points: usize,
    pub abs_tol: f64,
}

impl Default for QmcOptions {
    fn default() -> Self {
        QmcOptions {
            seed: 0x5eed,
            shifts: 16,
            max_points: 1 << 17,
            abs_tol: 1e-5,
        }
    }
}

const PRIMES: [f64; 32] = [
    2., 3., 5., 7., 11., 13., 17., 19., 23., 29., 31., 37., 41., 43., 47., 53., 59., 61., 67.,
    71., 73., 79., 83., 89., 97., 101., 103., 107., 109., 113., 127., 131.,
];

/// `P(X <= b)` for `X ~ N(0, L L^T)` with `L` from [`cholesky_psd`].
/// Returns the estimate and its standard error.
pub fn mvn_orthant(b: &[f64], chol: &[f64], opts: &QmcOptions) -> (f64, f64) {
    let d = b.len();
    if d == 0 {
        return (1.0, 0.0);
    }
    let pivot = |i: usize| chol[i * d + i];
    let integrand = |w: &[f64], y: &mut [f64]| -> f64 {
        let mut f = 1.0;
        for i in 0..d {
            let s: f64 = (0..i).map(|j| chol[i * d + j] * y[j]).sum();
            let e = if pivot(i) > 0.0 {
                phi((b[i] - s) / pivot(i))
            } else if b[i] - s >= 0.0 {
                1.0
            } else {
                0.0
            };
            f *= e;
            if f == 0.0 {
                return 0.0;
            }
            if i + 1 < d {
                let u = (w[i] * e).clamp(1e-300, 1.0 - 1e-16);
                y[i] = phi_inv(u);
            }
        }
        f
    };
    if d == 1 {
        return (integrand(&[], &mut [0.0]), 0.0);
    }
    let dim = d - 1;
    let gen: Vec<f64> = (0..dim).map(|j| PRIMES[j % PRIMES.len()].sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shifts: Vec<Vec<f64>> = (0..opts.shifts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut w = vec![0.0; dim];
    let mut y = vec![0.0; d];
    let mut n = 256usize;
    let mut sums = vec![0.0; opts.shifts];
    let mut done = 0usize;
    loop {
        for (s, shift) in shifts.iter().enumerate() {
            for k in done..n {
                for j in 0..dim {
                    let x = ((k + 1) as f64 * gen[j] + shift[j]).fract();
                    w[j] = (2.0 * x - 1.0).abs();
                }
                sums[s] += integrand(&w, &mut y);
            }
        }
        done = n;
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>()
            / (means.len().max(2) - 1) as f64;
        let err = (var / means.len() as f64).sqrt();
        if 3.0 * err <= opts.abs_tol || 2 * n * opts.shifts > opts.max_points {
            return (m.clamp(0.0, 1.0), err);
        }
        n *= 2;
    }
}

// ---------------------------------------------------------------------------
// Service satisfaction probability

/// Options for SSP evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SspOptions {
    /// Binomial mass left out of the sum (treated as unsatisfied).
    pub truncation: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub gamma_tol: f64,
    pub qmc: QmcOptions,
}

impl Default for SspOptions {
    fn default() -> Self {
        SspOptions {
            truncation: 1e-9,
            gamma_tol: 1e-4,
            qmc: QmcOptions::default(),
        }
    }
}

/// Relaxation factor, resulting satisfaction probability and the relaxed
/// targets `mean + gamma * std` per demand key.
#[derive(Debug, Clone, PartialEq)]
pub struct SspTargets {
    pub gamma: f64,
    pub probability: f64,
    pub targets: Vec<f64>,
}

pub fn relaxed_targets(moments: &AggregateDemandMoments, gamma: f64) -> Vec<f64> {
    moments
        .mean
        .iter()
        .zip(&moments.std)
        .map(|(m, s)| m + gamma * s)
        .collect()
}

/// Probability that a fixed user-demand vector `U` stays within `limit`.
fn box_probability(user: &UserDemandStats, chol: Option<&[f64]>, limit: &[f64], qmc: &QmcOptions) -> f64 {
    let b: Vec<f64> = limit.iter().zip(user.mean()).map(|(l, m)| l - m).collect();
    match chol {
        None => {
            let mut p = 1.0;
            for (i, bi) in b.iter().enumerate() {
                let s = user.std(i);
                p *= if s > 0.0 {
                    phi(bi / s)
                } else if *bi >= 0.0 {
                    1.0
                } else {
                    0.0
                };
                if p == 0.0 {
                    break;
                }
            }
            p
        }
        Some(l) => mvn_orthant(&b, l, qmc).0,
    }
}

/// Satisfaction probability of the relaxed targets at factor `gamma` for the
/// slot at `offset` within the activity window.
pub fn ssp_probability(
    gamma: f64,
    moments: &AggregateDemandMoments,
    user: &UserDemandStats,
    count: &UserCountModel,
    offset: usize,
    opts: &SspOptions,
) -> Result<f64, UncertaintyError> {
    SspEvaluator::new(moments, user, count, offset, opts)?.probability(gamma)
}

struct SspEvaluator<'a> {
    moments: &'a AggregateDemandMoments,
    user: &'a UserDemandStats,
    chol: Option<Vec<f64>>,
    /// (eta, pmf) pairs covering all but `truncation` of the mass.
    support: Vec<(u64, f64)>,
    opts: SspOptions,
}

impl<'a> SspEvaluator<'a> {
    fn new(
        moments: &'a AggregateDemandMoments,
        user: &'a UserDemandStats,
        count: &UserCountModel,
        offset: usize,
        opts: &SspOptions,
    ) -> Result<Self, UncertaintyError> {
        if moments.mean.len() != user.dim() {
            return Err(UncertaintyError::Dimension(moments.mean.len(), user.dim()));
        }
        let p = count.prob(offset)?;
        let n = count.trials as u64;
        let support = if p == 0.0 || n == 0 {
            vec![(0, 1.0)]
        } else if p == 1.0 {
            vec![(n, 1.0)]
        } else {
            let dist = Binomial::new(p, n).expect("validated binomial");
            let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;
            let mut support = vec![(mode, dist.pmf(mode))];
            let mut mass = support[0].1;
            let (mut lo, mut hi) = (mode, mode);
            while 1.0 - mass > opts.truncation && (lo > 0 || hi < n) {
                let down = if lo > 0 { dist.pmf(lo - 1) } else { -1.0 };
                let up = if hi < n { dist.pmf(hi + 1) } else { -1.0 };
                if up >= down {
                    hi += 1;
                    support.push((hi, up));
                    mass += up;
                } else {
                    lo -= 1;
                    support.push((lo, down));
                    mass += down;
                }
            }
            support
        };
        let chol = if user.is_diagonal() {
            None
        } else {
            Some(cholesky_psd(user.cov(), user.dim()).ok_or_else(|| {
                UncertaintyError::Slice(crate::slice::SliceError::Demand(
                    "covariance is not positive semidefinite".into(),
                ))
            })?)
        };
        Ok(SspEvaluator {
            moments,
            user,
            chol,
            support,
            opts: *opts,
        })
    }

    fn probability(&self, gamma: f64) -> Result<f64, UncertaintyError> {
        let targets = relaxed_targets(self.moments, gamma);
        let mut limit = vec![0.0; targets.len()];
        let mut total = 0.0;
        for &(eta, w) in &self.support {
            if eta == 0 {
                total += w;
                continue;
            }
            for (l, t) in limit.iter_mut().zip(&targets) {
                *l = t / eta as f64;
            }
            total += w * box_probability(self.user, self.chol.as_deref(), &limit, &self.opts.qmc);
        }
        Ok(total.min(1.0))
    }
}

/// Smallest relaxation factor (to within `opts.gamma_tol`, rounded up) whose
/// satisfaction probability reaches `target`.
pub fn gamma_ssp(
    moments: &AggregateDemandMoments,
    user: &UserDemandStats,
    count: &UserCountModel,
    offset: usize,
    target: f64,
    opts: &SspOptions,
) -> Result<SspTargets, UncertaintyError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(UncertaintyError::BadProbability(target));
    }
    let eval = SspEvaluator::new(moments, user, count, offset, opts)?;
    let done = |gamma: f64, probability: f64| SspTargets {
        gamma,
        probability,
        targets: relaxed_targets(moments, gamma),
    };
    let p0 = eval.probability(0.0)?;
    if p0 >= target {
        return Ok(done(0.0, p0));
    }
    let (mut lo, mut hi) = (0.0, 4.0);
    let mut p_hi = eval.probability(hi)?;
    while p_hi < target {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Err(UncertaintyError::Unreachable {
                target,
                reached: p_hi,
                gamma: lo,
            });
        }
        p_hi = eval.probability(hi)?;
    }
    while hi - lo > opts.gamma_tol {
        let mid = 0.5 * (lo + hi);
        let p = eval.probability(mid)?;
        if p >= target {
            hi = mid;
            p_hi = p;
        } else {
            lo = mid;
        }
    }
    Ok(done(hi, p_hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::Resource;
    use crate::slice::{aggregate_moments, user_count_moments, DemandKey};

    /// Series expansion of erf, adequate for |x| < 4.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    fn phi_oracle(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
    }

    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-6.0, 6.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi_oracle(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_helpers_match_series() {
        for x in [-3.0, -1.2, 0.0, 0.4, 2.5] {
            assert!((phi(x) - phi_oracle(x)).abs() < 1e-10, "{x}: {} vs {}", phi(x), phi_oracle(x));
        }
        for p in [0.01, 0.1, 0.5, 0.9, 0.999] {
            assert!((phi_inv(p) - quantile_oracle(p)).abs() < 1e-8, "{p}");
        }
    }

    #[test]
    fn background_gamma() {
        assert!((gamma_background(0.1).unwrap() - quantile_oracle(0.9)).abs() < 1e-9);
        assert!((gamma_background(0.5).unwrap()).abs() < 1e-12);
        assert!(gamma_background(0.01).unwrap() > gamma_background(0.1).unwrap());
        for bad in [0.0, 1.0, -0.1, 1.5] {
            assert_eq!(
                gamma_background(bad),
                Err(UncertaintyError::BadProbability(bad))
            );
        }
    }

    #[test]
    fn background_targets_scale_capacity() {
        let net = crate::infra::builtin_topology("fat-tree-7").unwrap();
        let bg = background_targets(&net, &BackgroundModel::default()).unwrap();
        let k = 0.2 + 0.05 * quantile_oracle(0.9);
        assert!((bg.node[0][Resource::Cpu] - k * net.node(0).capacity[Resource::Cpu]).abs() < 1e-9);
        assert!((bg.link[0] - k * net.link(0).bandwidth).abs() < 1e-9);
    }

    #[test]
    fn cholesky_handles_degenerate() {
        // rank one: [[1, 1], [1, 1]]
        let l = cholesky_psd(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(l, vec![1.0, 0.0, 1.0, 0.0]);
        assert!(cholesky_psd(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn orthant_independent_matches_product() {
        let l = [1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.5];
        let b = [0.3, -0.5, 0.1];
        let exact = phi(0.3) * phi(-0.25) * phi(0.2);
        let (est, _) = mvn_orthant(&b, &l, &QmcOptions::default());
        assert!((est - exact).abs() < 1e-6, "{est} vs {exact}");
    }

    #[test]
    fn orthant_bivariate_known_value() {
        // P(X <= 0, Y <= 0) with correlation rho is 1/4 + asin(rho) / (2 pi)
        let rho: f64 = 0.6;
        let l = [1.0, 0.0, rho, (1.0 - rho * rho).sqrt()];
        let (est, err) = mvn_orthant(&[0.0, 0.0], &l, &QmcOptions::default());
        let exact = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        assert!((est - exact).abs() < 1e-4 + 3.0 * err, "{est} vs {exact}");
    }

    #[test]
    fn orthant_fully_correlated() {
        let l = cholesky_psd(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        let (est, err) = mvn_orthant(&[0.5, -0.2], &l, &QmcOptions::default());
        assert!((est - phi(-0.2)).abs() < 1e-3 + 3.0 * err, "{est}");
    }

    fn one_dim(mean: f64, std: f64) -> UserDemandStats {
        UserDemandStats::diagonal(vec![DemandKey::Link { vlink: 0 }], vec![mean], vec![std]).unwrap()
    }

    #[test]
    fn deterministic_count_reduces_to_normal() {
        // eta fixed at 10: P(10 U <= 10 Ubar + gamma * 10 sigma) = Phi(gamma)
        let user = one_dim(1.0, 0.2);
        let count = UserCountModel::new(10, vec![1.0]).unwrap();
        let (m, v) = user_count_moments(&count, 0).unwrap();
        let mom = aggregate_moments(&user, m, v).unwrap();
        let opts = SspOptions::default();
        for g in [0.0, 0.5, 1.7] {
            let p = ssp_probability(g, &mom, &user, &count, 0, &opts).unwrap();
            assert!((p - phi(g)).abs() < 1e-12);
        }
        let t = gamma_ssp(&mom, &user, &count, 0, 0.9, &opts).unwrap();
        assert!(t.gamma >= quantile_oracle(0.9) - 1e-12);
        assert!(t.gamma - quantile_oracle(0.9) <= 1e-4);
        assert!((t.targets[0] - (10.0 + t.gamma * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_users_always_satisfied() {
        let user = one_dim(1.0, 0.2);
        let count = UserCountModel::new(10, vec![0.0]).unwrap();
        let mom = aggregate_moments(&user, 0.0, 0.0).unwrap();
        let t = gamma_ssp(&mom, &user, &count, 0, 0.99, &SspOptions::default()).unwrap();
        assert_eq!(t.gamma, 0.0);
        assert_eq!(t.probability, 1.0);
    }

    #[test]
    fn unreachable_target_is_error() {
        let user = one_dim(1.0, 0.0);
        let count = UserCountModel::new(10, vec![1.0]).unwrap();
        let mom = aggregate_moments(&user, 10.0, 0.0).unwrap();
        // zero variance: satisfied with probability one at gamma 0
        let t = gamma_ssp(&mom, &user, &count, 0, 0.999, &SspOptions::default()).unwrap();
        assert_eq!(t.gamma, 0.0);
        assert!(matches!(
            gamma_ssp(&mom, &user, &count, 0, 1.5, &SspOptions::default()),
            Err(UncertaintyError::BadProbability(_))
        ));
    }

    #[test]
    fn binomial_mixture_matches_monte_carlo() {
        use rand_distr::{Binomial as Bin, Distribution, Normal as N};
        let user = one_dim(2.0, 0.4);
        let count = UserCountModel::new(40, vec![0.3]).unwrap();
        let (m, v) = user_count_moments(&count, 0).unwrap();
        let mom = aggregate_moments(&user, m, v).unwrap();
        let opts = SspOptions::default();
        let gamma = 1.0;
        let p = ssp_probability(gamma, &mom, &user, &count, 0, &opts).unwrap();
        let target = relaxed_targets(&mom, gamma)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (bin, nrm) = (Bin::new(40, 0.3).unwrap(), N::new(2.0, 0.4).unwrap());
        let trials = 200_000;
        let hits = (0..trials)
            .filter(|_| {
                let eta = bin.sample(&mut rng) as f64;
                eta * nrm.sample(&mut rng) <= target
            })
            .count();
        let freq = hits as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * sigma, "{freq} vs {p}");
    }

    #[test]
    fn correlated_probability_below_independent_upper() {
        let keys = vec![DemandKey::Link { vlink: 0 }, DemandKey::Link { vlink: 1 }];
        let indep = UserDemandStats::diagonal(keys.clone(), vec![1.0, 1.0], vec![0.3, 0.3]).unwrap();
        let corr = indep.clone().with_correlation(keys[0], keys[1], 0.8).unwrap();
        let count = UserCountModel::new(20, vec![0.5]).unwrap();
        let (m, v) = user_count_moments(&count, 0).unwrap();
        let opts = SspOptions::default();
        let mom = aggregate_moments(&indep, m, v).unwrap();
        let pi = ssp_probability(1.0, &mom, &indep, &count, 0, &opts).unwrap();
        let pc = ssp_probability(1.0, &mom, &corr, &count, 0, &opts).unwrap();
        // positive correlation raises joint satisfaction
        assert!(pc > pi);
        let g = gamma_ssp(&mom, &corr, &count, 0, 0.9, &opts).unwrap();
        let gi = gamma_ssp(&mom, &indep, &count, 0, 0.9, &opts).unwrap();
        assert!(g.gamma < gi.gamma);
    }
}
