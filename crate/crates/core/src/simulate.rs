//! Exact continuous-time simulation of both chains and the Monte Carlo
//! statistical harnesses built on it.
//!
//! Paths are generated by the direct (Gillespie) method: exponential
//! holding time at the current state's total rate, jump target drawn from
//! the normalized row. Rows are built lazily from the same row assembly as
//! the truncated generators, so there is no global truncation; a hard cap
//! on the visited state guards explosive excursions.
//!
//! Replicas are reproducible independently of scheduling: every replica
//! derives its generator from `(seed, replica)` through a counter-based
//! stream, so parallel and serial runs agree byte for byte.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bernstein::BernsteinTriplet;
use crate::error::{Error, Result};
use crate::generator::{interior_row, ChainKind};
use crate::invariant::InvariantLaw;
use crate::moments;
use crate::stats::{self, Chi2Result};

/// Hard cap on the maximum visited state.
pub const STATE_CAP: u64 = 1_000_000;

/// A simulated trajectory: `states` has one more entry than `jump_times`.
#[derive(Debug, Clone, Serialize)]
pub struct PathSample {
    pub jump_times: Vec<f64>,
    pub states: Vec<u64>,
    pub seed: u64,
    pub chain_kind: ChainKind,
    pub horizon: f64,
}

impl PathSample {
    pub fn endpoint(&self) -> u64 {
        *self.states.last().unwrap()
    }

    /// Every upward move is exactly `+1`; downward moves are arbitrary.
    pub fn is_skip_free(&self) -> bool {
        self.states
            .windows(2)
            .all(|w| w[1] == w[0] + 1 || w[1] < w[0])
    }

    /// CSV rows `(replica, jump_time, state)`; the initial state appears
    /// with time zero.
    pub fn csv_rows(&self, replica: u64, out: &mut String) {
        out.push_str(&format!("{replica},0,{}\n", self.states[0]));
        for (t, s) in self.jump_times.iter().zip(self.states.iter().skip(1)) {
            out.push_str(&format!("{replica},{t:.16e},{s}\n"));
        }
    }
}

/// Alias sampler over a row's off-diagonal rates (Vose construction).
struct RowSampler {
    targets: Vec<u64>,
    prob: Vec<f64>,
    alias: Vec<usize>,
    total_rate: f64,
}

impl RowSampler {
    fn new(targets: Vec<u64>, rates: &[f64]) -> Self {
        let n = rates.len();
        let total: f64 = rates.iter().sum();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0usize; n];
        let scaled: Vec<f64> = rates.iter().map(|r| r * n as f64 / total).collect();
        let mut small: Vec<usize> = (0..n).filter(|&i| scaled[i] < 1.0).collect();
        let mut large: Vec<usize> = (0..n).filter(|&i| scaled[i] >= 1.0).collect();
        let mut scaled = scaled;
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for &i in small.iter().chain(large.iter()) {
            prob[i] = 1.0;
        }
        RowSampler {
            targets,
            prob,
            alias,
            total_rate: total,
        }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> u64 {
        let n = self.prob.len();
        let i = rng.gen_range(0..n);
        if rng.gen::<f64>() < self.prob[i] {
            self.targets[i]
        } else {
            self.targets[self.alias[i]]
        }
    }
}

/// Memoized per-state row samplers, with an optional injected rate fault
/// for negative-control tests.
pub struct RowCache {
    triplet: BernsteinTriplet,
    kind: ChainKind,
    rows: HashMap<u64, Arc<RowSampler>>,
    fault: Option<RateFault>,
}

/// Multiply the rate of one transition by a factor; the holding time at
/// `from` changes accordingly (the perturbed matrix is a genuine
/// generator).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFault {
    pub from: u64,
    pub to: u64,
    pub factor: f64,
}

impl RowCache {
    pub fn new(triplet: &BernsteinTriplet, kind: ChainKind) -> Self {
        RowCache {
            triplet: triplet.clone(),
            kind,
            rows: HashMap::new(),
            fault: None,
        }
    }

    pub fn with_fault(triplet: &BernsteinTriplet, kind: ChainKind, fault: RateFault) -> Self {
        let mut c = Self::new(triplet, kind);
        c.fault = Some(fault);
        c
    }

    fn row(&mut self, n: u64) -> Result<Arc<RowSampler>> {
        if let Some(r) = self.rows.get(&n) {
            return Ok(r.clone());
        }
        let raw = interior_row(&self.triplet, self.kind, n as usize)?;
        let mut targets = Vec::new();
        let mut rates = Vec::new();
        for (l, &rate) in raw.iter().enumerate() {
            if l as u64 != n && rate > 0.0 {
                let mut rate = rate;
                if let Some(f) = self.fault {
                    if f.from == n && f.to == l as u64 {
                        rate *= f.factor;
                    }
                }
                targets.push(l as u64);
                rates.push(rate);
            }
        }
        let sampler = Arc::new(RowSampler::new(targets, &rates));
        self.rows.insert(n, sampler.clone());
        Ok(sampler)
    }
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

fn exp_variate(rng: &mut ChaCha12Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    -u.ln() / rate
}

fn run_path(
    cache: &mut RowCache,
    rng: &mut ChaCha12Rng,
    n0: u64,
    horizon: f64,
    seed: u64,
) -> Result<PathSample> {
    run_path_capped(cache, rng, n0, horizon, seed, STATE_CAP)
}

fn run_path_capped(
    cache: &mut RowCache,
    rng: &mut ChaCha12Rng,
    n0: u64,
    horizon: f64,
    seed: u64,
    cap: u64,
) -> Result<PathSample> {
    let mut t = 0.0;
    let mut state = n0;
    let mut jump_times = Vec::new();
    let mut states = vec![n0];
    loop {
        let row = cache.row(state)?;
        if row.total_rate <= 0.0 {
            break; // absorbing (cannot happen for valid triplets)
        }
        t += exp_variate(rng, row.total_rate);
        if t > horizon {
            break;
        }
        state = row.sample(rng);
        jump_times.push(t);
        states.push(state);
        if state > cap {
            return Err(Error::StateCap {
                cap,
                time: t,
                partial: Box::new(PathSample {
                    jump_times,
                    states,
                    seed,
                    chain_kind: cache.kind,
                    horizon,
                }),
            });
        }
    }
    Ok(PathSample {
        jump_times,
        states,
        seed,
        chain_kind: cache.kind,
        horizon,
    })
}

/// Simulate one exact path.
pub fn gillespie(
    triplet: &BernsteinTriplet,
    kind: ChainKind,
    n0: u64,
    horizon: f64,
    seed: u64,
) -> Result<PathSample> {
    assert!(horizon >= 0.0);
    let mut cache = RowCache::new(triplet, kind);
    let mut rng = replica_rng(seed, 0);
    run_path(&mut cache, &mut rng, n0, horizon, seed)
}

/// Simulate `replicas` endpoint values in parallel; replica `i` uses the
/// RNG stream `(seed, i)`, so the result does not depend on scheduling.
pub fn endpoints(
    triplet: &BernsteinTriplet,
    kind: ChainKind,
    n0: u64,
    horizon: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    endpoints_with(triplet, kind, n0, horizon, replicas, seed, None)
}

fn endpoints_with(
    triplet: &BernsteinTriplet,
    kind: ChainKind,
    n0: u64,
    horizon: f64,
    replicas: u64,
    seed: u64,
    fault: Option<RateFault>,
) -> Result<Vec<u64>> {
    (0..replicas)
        .into_par_iter()
        .map_init(
            || match fault {
                Some(f) => RowCache::with_fault(triplet, kind, f),
                None => RowCache::new(triplet, kind),
            },
            |cache, i| {
                let mut rng = replica_rng(seed, i);
                run_path(cache, &mut rng, n0, horizon, seed).map(|p| p.endpoint())
            },
        )
        .collect()
}

/// Endpoints of the self-similarity identity's two sides:
/// thin the endpoint of a `t`-run, versus start from a thinned initial
/// state and run to `αt`.
fn selfsim_sides(
    triplet: &BernsteinTriplet,
    n0: u64,
    t: f64,
    alpha: f64,
    replicas: u64,
    seed: u64,
    fault: Option<RateFault>,
) -> Result<(Vec<u64>, Vec<u64>)> {
    let side_a: Result<Vec<u64>> = (0..replicas)
        .into_par_iter()
        .map_init(
            || RowCache::new(triplet, ChainKind::SelfSimilar),
            |cache, i| {
                let mut rng = replica_rng(seed, 2 * i);
                let end = run_path(cache, &mut rng, n0, t, seed)?.endpoint();
                // binomial thinning of the endpoint
                let mut thinned = 0u64;
                for _ in 0..end {
                    if rng.gen::<f64>() < alpha {
                        thinned += 1;
                    }
                }
                Ok(thinned)
            },
        )
        .collect();
    let side_b: Result<Vec<u64>> = (0..replicas)
        .into_par_iter()
        .map_init(
            || match fault {
                Some(f) => RowCache::with_fault(triplet, ChainKind::SelfSimilar, f),
                None => RowCache::new(triplet, ChainKind::SelfSimilar),
            },
            |cache, i| {
                let mut rng = replica_rng(seed, 2 * i + 1);
                let mut start = 0u64;
                for _ in 0..n0 {
                    if rng.gen::<f64>() < alpha {
                        start += 1;
                    }
                }
                run_path(cache, &mut rng, start, alpha * t, seed).map(|p| p.endpoint())
            },
        )
        .collect();
    Ok((side_a?, side_b?))
}

fn histogram(values: &[u64]) -> Vec<u64> {
    let max = values.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0u64; max + 1];
    for &v in values {
        h[v as usize] += 1;
    }
    h
}

fn falling_factorial_u(n: u64, k: usize) -> f64 {
    let mut v = 1.0;
    for j in 0..k as u64 {
        if n < j + 1 {
            return 0.0;
        }
        v *= (n - j) as f64;
    }
    v
}

/// Sample mean and standard error of `p_k` over endpoint values.
pub fn factorial_moment_estimate(values: &[u64], k: usize) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for &v in values {
        let x = falling_factorial_u(v, k);
        sum += x;
        sum2 += x * x;
    }
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo report of the distributional self-similarity identity.
#[derive(Debug, Clone, Serialize)]
pub struct SelfSimReport {
    pub chi2: Chi2Result,
    /// `(k, z_between, z_side_a, z_side_b)`: two-sample and vs closed form.
    pub moment_z: Vec<(usize, f64, f64, f64)>,
    pub replicas: u64,
    pub seed: u64,
    pub level: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<RateFault>,
}

/// Two-sample test of the self-similarity identity, optionally with an
/// injected rate fault on the second side (negative control).
pub fn selfsimilarity_mc_test(
    triplet: &BernsteinTriplet,
    n0: u64,
    t: f64,
    alpha: f64,
    replicas: u64,
    seed: u64,
    fault: Option<RateFault>,
) -> Result<SelfSimReport> {
    assert!((0.0..=1.0).contains(&alpha));
    let (side_a, side_b) = selfsim_sides(triplet, n0, t, alpha, replicas, seed, fault)?;
    let chi2 = stats::two_sample_test(&histogram(&side_a), &histogram(&side_b), 10);
    let mut moment_z = Vec::new();
    for k in 1..=3usize {
        let (ma, sa) = factorial_moment_estimate(&side_a, k);
        let (mb, sb) = factorial_moment_estimate(&side_b, k);
        let z_ab = (ma - mb) / (sa * sa + sb * sb).sqrt().max(1e-300);
        // closed form: both sides have moment α^k E[p_k(X(t, n0))]
        let exact = alpha.powi(k as i32) * moments::ssm_moments(triplet, k, n0, t)?;
        let z_a = (ma - exact) / sa.max(1e-300);
        let z_b = (mb - exact) / sb.max(1e-300);
        moment_z.push((k, z_ab, z_a, z_b));
    }
    let level = 0.01;
    let passed = chi2.p_value >= level
        && moment_z
            .iter()
            .all(|(_, z_ab, z_a, z_b)| z_ab.abs() <= 4.0 && z_a.abs() <= 4.0 && z_b.abs() <= 4.0);
    Ok(SelfSimReport {
        chi2,
        moment_z,
        replicas,
        seed,
        level,
        passed,
        fault,
    })
}

/// Goodness-of-fit report of the equilibrated Laguerre endpoint law.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibrationReport {
    pub chi2: Chi2Result,
    pub replicas: u64,
    pub seed: u64,
    pub t: f64,
    pub passed: bool,
}

/// Chi-square fit of the Laguerre endpoint distribution at `t_large`
/// against a computed invariant law.
pub fn laguerre_equilibration_test(
    triplet: &BernsteinTriplet,
    n0: u64,
    t_large: f64,
    replicas: u64,
    seed: u64,
    law: &InvariantLaw,
) -> Result<EquilibrationReport> {
    let ends = endpoints(triplet, ChainKind::Laguerre, n0, t_large, replicas, seed)?;
    let hist = histogram(&ends);
    let probs: Vec<f64> = (0..hist.len())
        .map(|n| {
            if n <= law.n_max() {
                law.weight(n)
            } else {
                0.0
            }
        })
        .collect();
    let chi2 = stats::gof_test(&hist, &probs, 5.0);
    Ok(EquilibrationReport {
        chi2,
        replicas,
        seed,
        t: t_large,
        passed: chi2.p_value >= 0.01,
    })
}

/// One draw of the subordination delay `τ_β`: the deterministic shift
/// `log(1 + σ^{-2})` plus `-log B` with `B ~ Beta(1, β)`, whose Laplace
/// transform is `(σ²/(1+σ²))^u Γ(1+β)Γ(u+1)/Γ(u+β+1)`.
pub fn sample_tau_beta(triplet: &BernsteinTriplet, beta: f64, seed: u64) -> Result<f64> {
    let mut rng = replica_rng(seed, 0);
    tau_beta_draw(triplet, beta, &mut rng)
}

fn tau_beta_draw(triplet: &BernsteinTriplet, beta: f64, rng: &mut ChaCha12Rng) -> Result<f64> {
    if triplet.sigma2 == 0.0 {
        return Err(Error::Unsupported("tau_beta requires sigma2 > 0".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Unsupported("tau_beta requires beta > 0".into()));
    }
    let shift = (1.0 + 1.0 / triplet.sigma2).ln();
    // inverse CDF of Beta(1, beta): B = 1 - (1-U)^{1/beta}
    let u: f64 = rng.gen();
    let b = (1.0 - (1.0 - u).powf(1.0 / beta)).max(1e-300);
    Ok(shift - b.ln())
}

/// Parallel batch of `τ_β` draws, one RNG stream per draw.
pub fn sample_tau_beta_batch(
    triplet: &BernsteinTriplet,
    beta: f64,
    count: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            tau_beta_draw(triplet, beta, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;
    use crate::generator::BoundaryPolicy;
    use crate::invariant;
    use statrs::function::gamma::ln_gamma;

    #[test]
    fn zero_horizon_path() {
        let t = families::meixner_chain(1.0, 1.0).unwrap();
        let p = gillespie(&t, ChainKind::SelfSimilar, 7, 0.0, 1).unwrap();
        assert_eq!(p.states, vec![7]);
        assert!(p.jump_times.is_empty());
    }

    #[test]
    fn determinism_under_seed() {
        let t = families::perturbed_chain(3.0).unwrap();
        let a = gillespie(&t, ChainKind::Laguerre, 4, 2.0, 42).unwrap();
        let b = gillespie(&t, ChainKind::Laguerre, 4, 2.0, 42).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.jump_times, b.jump_times);
        let c = gillespie(&t, ChainKind::Laguerre, 4, 2.0, 43).unwrap();
        assert!(a.states != c.states || a.jump_times != c.jump_times);
    }

    #[test]
    fn paths_are_skip_free() {
        let t = families::beta_chain(2.0).unwrap();
        for seed in 0..50u64 {
            let p = gillespie(&t, ChainKind::SelfSimilar, 3, 1.0, seed).unwrap();
            assert!(p.is_skip_free());
            assert!(p.jump_times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn selfsimilar_mean_matches_moment_formula() {
        // phi(u) = u from n = 5 at t = 1: E[X] = 6
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let ends = endpoints(&t, ChainKind::SelfSimilar, 5, 1.0, 20_000, 9).unwrap();
        let (mean, se) = factorial_moment_estimate(&ends, 1);
        assert!((mean - 6.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn laguerre_relaxes_toward_phi_one() {
        // birth rate n+1, death rate 2n: stationary mean phi(1) = 1
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let ends = endpoints(&t, ChainKind::Laguerre, 8, 12.0, 20_000, 77).unwrap();
        let (mean, se) = factorial_moment_estimate(&ends, 1);
        assert!((mean - 1.0).abs() < 3.0 * se + 1e-3, "mean {mean} se {se}");
    }

    #[test]
    fn selfsim_two_sample_passes_and_fault_fails() {
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let rep = selfsimilarity_mc_test(&t, 5, 1.0, 0.5, 30_000, 2024, None).unwrap();
        assert!(rep.passed, "{rep:?}");
        let fault = RateFault {
            from: 5,
            to: 6,
            factor: 1.6,
        };
        let rep = selfsimilarity_mc_test(&t, 5, 1.0, 0.5, 30_000, 2024, Some(fault)).unwrap();
        assert!(!rep.passed, "fault went undetected: {rep:?}");
    }

    #[test]
    fn equilibration_against_invariant_law() {
        let t = families::meixner_chain(1.0, 1.0).unwrap();
        let gen = crate::generator::build_lphi(&t, 200, BoundaryPolicy::Reflecting).unwrap();
        let law = invariant::nphi_solve(&gen).unwrap();
        let rep = laguerre_equilibration_test(&t, 3, 15.0, 20_000, 5, &law).unwrap();
        assert!(rep.passed, "{rep:?}");
        // negative control: t = 0 is concentrated at the start
        let rep = laguerre_equilibration_test(&t, 3, 0.0, 20_000, 5, &law).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn tau_beta_support_and_laplace() {
        let t = families::meixner_chain(1.0, 1.0).unwrap();
        let beta = 2.0;
        let shift = (2.0f64).ln();
        let draws = sample_tau_beta_batch(&t, beta, 200_000, 31).unwrap();
        assert!(draws.iter().all(|&x| x >= shift));
        // E[e^{-tau}] = (1/2) Gamma(1+beta)Gamma(2)/Gamma(beta+2) = 1/(2(1+beta))
        let mean: f64 = draws.iter().map(|&x| (-x).exp()).sum::<f64>() / draws.len() as f64;
        let var: f64 = draws
            .iter()
            .map(|&x| ((-x).exp() - mean).powi(2))
            .sum::<f64>()
            / draws.len() as f64;
        let se = (var / draws.len() as f64).sqrt();
        let expect = 0.5 / (1.0 + beta);
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect}");
        // and at u = 1/2 against the log-gamma expression
        let u = 0.5;
        let lt: f64 = draws.iter().map(|&x| (-u * x).exp()).sum::<f64>() / draws.len() as f64;
        let expect = (u * (0.5f64).ln() + ln_gamma(1.0 + beta) + ln_gamma(u + 1.0)
            - ln_gamma(u + beta + 1.0))
        .exp();
        assert!((lt - expect).abs() < 5e-4, "{lt} vs {expect}");
    }

    #[test]
    fn tau_beta_median_grows_with_beta() {
        let t = families::meixner_chain(1.0, 1.0).unwrap();
        let mut last_median = 0.0;
        for beta in [0.5, 2.0, 8.0, 32.0] {
            let mut draws = sample_tau_beta_batch(&t, beta, 4001, 7).unwrap();
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = draws[2000];
            assert!(median > last_median, "beta = {beta}");
            last_median = median;
        }
    }

    #[test]
    fn state_cap_reports_partial_path() {
        let t = BernsteinTriplet::linear(10.0, 5.0).unwrap();
        let mut cache = RowCache::new(&t, ChainKind::SelfSimilar);
        let mut rng = replica_rng(3, 0);
        match run_path_capped(&mut cache, &mut rng, 0, 50.0, 3, 10) {
            Err(Error::StateCap { cap, partial, .. }) => {
                assert_eq!(cap, 10);
                assert!(partial.endpoint() > 10);
                assert!(partial.is_skip_free());
            }
            other => panic!("expected a state-cap error, got {other:?}"),
        }
    }
}
