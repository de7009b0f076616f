//! Closed-form factorial moments of both semigroups and the exact
//! moment-level identity checks.
//!
//! For the self-similar chain started at `n`,
//!
//! ```text
//! E[p_k(X(t, n))] = Σ_{l=0}^k C(k, l) (W_φ(k+1)/W_φ(l+1)) p_l(n) t^{k-l},
//! ```
//!
//! and the Laguerre chain replaces `t^{k-l}` by `e^{-tl}(1-e^{-t})^{k-l}`.
//! All terms are nonnegative, so the sums are evaluated directly; raw
//! moments come from the factorial ones through the exact Stirling
//! transform, never by recursion.

use crate::bernstein::BernsteinTriplet;
use crate::dd::{self, Sdd};
use crate::error::Result;
use crate::kernels::{self, binomial_pmf};

/// `E[p_k(X_φ(t, n))]` for the discrete self-similar chain.
pub fn ssm_moments(triplet: &BernsteinTriplet, k: usize, n: u64, t: f64) -> Result<f64> {
    assert!(t >= 0.0);
    let w = triplet.gamma_table(k)?;
    let mut acc = Sdd::ZERO;
    for l in 0..=k {
        let term = dd::binomial(k, l)
            .mul(w.w(k + 1).div(w.w(l + 1)))
            .mul(dd::falling(n as usize, l))
            .mul(Sdd::from_f64(t).powi((k - l) as u32));
        acc = acc.add(term);
    }
    Ok(acc.to_f64())
}

/// `E[X_φ(t, x)^k]` for the continuous self-similar process.
pub fn continuous_moments(triplet: &BernsteinTriplet, k: usize, x: f64, t: f64) -> Result<f64> {
    assert!(x >= 0.0 && t >= 0.0);
    let w = triplet.gamma_table(k)?;
    let mut acc = Sdd::ZERO;
    for l in 0..=k {
        let term = dd::binomial(k, l)
            .mul(w.w(k + 1).div(w.w(l + 1)))
            .mul(Sdd::from_f64(x).powi(l as u32))
            .mul(Sdd::from_f64(t).powi((k - l) as u32));
        acc = acc.add(term);
    }
    Ok(acc.to_f64())
}

/// `E[p_k]` of the Laguerre chain at time `t` started at `n`.
pub fn laguerre_moments(triplet: &BernsteinTriplet, k: usize, n: u64, t: f64) -> Result<f64> {
    assert!(t >= 0.0);
    let w = triplet.gamma_table(k)?;
    let e = (-t).exp();
    let one_me = -(-t).exp_m1();
    let mut acc = Sdd::ZERO;
    for l in 0..=k {
        let term = dd::binomial(k, l)
            .mul(w.w(k + 1).div(w.w(l + 1)))
            .mul(dd::falling(n as usize, l))
            .mul(Sdd::from_f64(e).powi(l as u32))
            .mul(Sdd::from_f64(one_me).powi((k - l) as u32));
        acc = acc.add(term);
    }
    Ok(acc.to_f64())
}

/// Raw moment `E[X_φ^k(t, n)]`, assembled from the factorial moments by the
/// exact Stirling transform.
pub fn raw_ssm_moment(triplet: &BernsteinTriplet, k: usize, n: u64, t: f64) -> Result<f64> {
    let fp = kernels::monomial_to_factorial(&monomial_unit(k))?;
    let mut acc = 0.0;
    for (j, &c) in fp.coeffs.iter().enumerate() {
        if c != 0.0 {
            acc += c * ssm_moments(triplet, j, n, t)?;
        }
    }
    Ok(acc)
}

fn monomial_unit(k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k + 1];
    m[k] = 1.0;
    m
}

/// Both sides of the distributional self-similarity identity at moment
/// level: thinning the endpoint versus thinning the start and shrinking
/// time.
///
/// Returns `(lhs, rhs)` where `lhs = α^k E[p_k(X(t, n))]` and
/// `rhs = Σ_r P[Bin(n, α) = r] E[p_k(X(αt, r))]`.
pub fn selfsimilarity_identity(
    triplet: &BernsteinTriplet,
    k: usize,
    n: u64,
    t: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    assert!((0.0..=1.0).contains(&alpha));
    let lhs = alpha.powi(k as i32) * ssm_moments(triplet, k, n, t)?;
    let pmf = binomial_pmf(n as usize, alpha);
    let mut rhs = 0.0;
    for (r, &w) in pmf.iter().enumerate() {
        if w != 0.0 {
            rhs += w * ssm_moments(triplet, k, r as u64, alpha * t)?;
        }
    }
    Ok((lhs, rhs))
}

/// Both sides of the gateway identity at moment level: the Poisson-mixed
/// factorial moment of the chain against the raw moment of the continuous
/// process.
pub fn gateway_moment_identity(
    triplet: &BernsteinTriplet,
    k: usize,
    x: f64,
    t: f64,
) -> Result<(f64, f64)> {
    assert!(x >= 0.0);
    let rhs = continuous_moments(triplet, k, x, t)?;
    let cutoff = if x == 0.0 {
        k + 1
    } else {
        kernels::poisson_truncation(x, 1e-20) + 8 * k + 8
    };
    let (pmf, _) = kernels::poisson_pmf(x, cutoff);
    let mut lhs = 0.0;
    for (n, &w) in pmf.iter().enumerate() {
        if w != 0.0 {
            lhs += w * ssm_moments(triplet, k, n as u64, t)?;
        }
    }
    Ok((lhs, rhs))
}

/// Scaling-limit gaps `|n^{-k} E[X_φ^k(nt, ⌊nx⌋)] - E[X_φ(t,x)^k]|` along a
/// grid of scaling factors.
pub fn scaling_limit_check(
    triplet: &BernsteinTriplet,
    k: usize,
    x: f64,
    t: f64,
    n_grid: &[u64],
) -> Result<Vec<f64>> {
    assert!(k >= 1 && x > 0.0);
    let target = continuous_moments(triplet, k, x, t)?;
    n_grid
        .iter()
        .map(|&n| {
            let start = (n as f64 * x).floor() as u64;
            let raw = raw_ssm_moment(triplet, k, start, n as f64 * t)?;
            Ok((raw / (n as f64).powi(k as i32) - target).abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;
    use rand::{Rng, SeedableRng};

    #[test]
    fn first_factorial_moment_is_linear_drift() {
        let t = families::perturbed_chain(3.0).unwrap();
        for (n, tt) in [(0u64, 0.5), (5, 1.25), (17, 2.0)] {
            let got = ssm_moments(&t, 1, n, tt).unwrap();
            let expect = n as f64 + t.phi(1.0) * tt;
            assert!((got - expect).abs() < 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn time_zero_reduces_to_falling_factorial() {
        let t = families::beta_chain(2.0).unwrap();
        for k in 0..6usize {
            for n in [0u64, 3, 10] {
                let got = ssm_moments(&t, k, n, 0.0).unwrap();
                assert_eq!(got, dd::falling(n as usize, k).to_f64());
            }
        }
    }

    #[test]
    fn pure_birth_second_moment_from_zero() {
        // phi(u) = u, k = 2, n = 0, t = 1: only l = 0 survives, W(3) = 2
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let got = ssm_moments(&t, 2, 0, 1.0).unwrap();
        assert!((got - 2.0).abs() < 1e-14);
    }

    #[test]
    fn continuous_moment_examples() {
        let t = families::perturbed_chain(2.0).unwrap();
        assert_eq!(continuous_moments(&t, 0, 1.3, 0.7).unwrap(), 1.0);
        let got = continuous_moments(&t, 1, 1.3, 0.7).unwrap();
        assert!((got - (1.3 + t.phi(1.0) * 0.7)).abs() < 1e-13);
        // entrance law: x = 0 leaves only W(k+1) t^k
        let w = t.gamma_table(4).unwrap();
        for k in 1..=4usize {
            let got = continuous_moments(&t, k, 0.0, 0.8).unwrap();
            let expect = w.w_f64(k + 1) * 0.8f64.powi(k as i32);
            assert!((got - expect).abs() < 1e-13 * expect.max(1.0));
        }
    }

    #[test]
    fn laguerre_moment_limits() {
        let tr = families::meixner_chain(1.0, 1.0).unwrap();
        let w = tr.gamma_table(5).unwrap();
        for k in 0..=5usize {
            // t = 0 is the falling factorial
            assert_eq!(
                laguerre_moments(&tr, k, 7, 0.0).unwrap(),
                dd::falling(7, k).to_f64()
            );
            // t -> infinity converges to W(k+1)
            let got = laguerre_moments(&tr, k, 7, 60.0).unwrap();
            assert!((got - w.w_f64(k + 1)).abs() < 1e-10 * w.w_f64(k + 1));
        }
    }

    #[test]
    fn laguerre_consistency_with_time_changed_selfsimilar() {
        // K_t p_k = e^{-kt}-weighted dilation of Q_{e^t - 1}: checked as the
        // exact algebraic identity between the two closed forms
        let tr = families::perturbed_chain(3.0).unwrap();
        for (k, n, t) in [(1usize, 4u64, 0.3), (3, 2, 0.9), (5, 11, 1.7)] {
            let lhs = laguerre_moments(&tr, k, n, t).unwrap();
            // D_{e^{-t}} p_k = e^{-kt} p_k, then Q_{e^t-1}
            let rhs = (-(k as f64) * t).exp() * ssm_moments(&tr, k, n, t.exp() - 1.0).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0),
                "k={k} n={n} t={t}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn selfsimilarity_trivial_alphas() {
        let tr = families::beta_chain(2.0).unwrap();
        let (l, r) = selfsimilarity_identity(&tr, 2, 5, 0.7, 1.0).unwrap();
        assert_eq!(l, r);
        let (l, r) = selfsimilarity_identity(&tr, 2, 5, 0.7, 0.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn selfsimilarity_exactness_pure_birth() {
        let tr = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let (l, r) = selfsimilarity_identity(&tr, 2, 3, 0.7, 0.5).unwrap();
        assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0), "{l} vs {r}");
    }

    #[test]
    fn selfsimilarity_randomized_sweep() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let triplets = [
            BernsteinTriplet::linear(1.0, 0.0).unwrap(),
            families::perturbed_chain(3.0).unwrap(),
            families::beta_chain(2.0).unwrap(),
        ];
        for _ in 0..60 {
            let tr = &triplets[rng.gen_range(0..3)];
            let k = rng.gen_range(0..=6);
            let n = rng.gen_range(0..=20u64);
            let t = rng.gen_range(0.0..2.0);
            let alpha = rng.gen_range(0.0..=1.0);
            let (l, r) = selfsimilarity_identity(tr, k, n, t, alpha).unwrap();
            assert!(
                (l - r).abs() <= 1e-11 * l.abs().max(r.abs()).max(1e-3),
                "k={k} n={n} t={t} alpha={alpha}: {l} vs {r}"
            );
        }
    }

    #[test]
    fn gateway_identity_cases() {
        let tr = families::perturbed_chain(3.0).unwrap();
        // k = 1: both sides x + phi(1) t
        let (l, r) = gateway_moment_identity(&tr, 1, 1.7, 0.6).unwrap();
        let expect = 1.7 + tr.phi(1.0) * 0.6;
        assert!((l - expect).abs() < 1e-11 && (r - expect).abs() < 1e-13);
        // x = 0 entrance law
        let w = tr.gamma_table(3).unwrap();
        let (l, r) = gateway_moment_identity(&tr, 3, 0.0, 0.9).unwrap();
        let expect = w.w_f64(4) * 0.9f64.powi(3);
        assert!((l - expect).abs() < 1e-12 * expect && (r - expect).abs() < 1e-12 * expect);
        // t = 0: both sides x^k
        let (l, r) = gateway_moment_identity(&tr, 4, 2.0, 0.0).unwrap();
        assert!((l - 16.0).abs() < 1e-10 && (r - 16.0).abs() < 1e-12);
    }

    #[test]
    fn moments_nondecreasing_in_time() {
        let tr = families::beta_chain(3.0).unwrap();
        for k in 1..5usize {
            let mut last = 0.0;
            for i in 0..20 {
                let v = ssm_moments(&tr, k, 4, i as f64 * 0.1).unwrap();
                assert!(v >= last - 1e-12);
                last = v;
            }
        }
    }

    #[test]
    fn scaling_gaps_shrink() {
        let tr = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let gaps = scaling_limit_check(&tr, 2, 1.0, 1.0, &[10, 100, 1000]).unwrap();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        // k = 1 gap is exactly |floor(nx)/n - x| <= 1/n
        let gaps = scaling_limit_check(&tr, 1, 1.0 / 3.0, 1.0, &[10, 100, 1000]).unwrap();
        for (g, n) in gaps.iter().zip([10u64, 100, 1000]) {
            let floor_gap = (1.0 / 3.0) - (n as f64 / 3.0).floor() / n as f64;
            assert!((g - floor_gap).abs() < 1e-12);
            assert!(*g <= 1.0 / n as f64 + 1e-15);
        }
    }
}
