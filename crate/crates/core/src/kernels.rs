//! Discrete dilation, Poissonization, and the falling-factorial polynomial
//! basis with its exact Stirling conversions.
//!
//! The binomial-thinning kernel
//!
//! ```text
//! D_α f(n) = Σ_r C(n, r) α^r (1-α)^{n-r} f(r)
//! ```
//!
//! is the lattice analogue of `f(x) ↦ f(αx)`. Its eigenfunctions are the
//! falling factorials `p_k(n) = n(n-1)⋯(n-k+1)` with eigenvalue `α^k`, and
//! Poissonization `Λf(x) = E[f(Pois(x))]` maps `p_k` to the monomial `x^k`
//! exactly. Polynomials are therefore carried in the factorial basis
//! internally: dilation, Poissonization and the moment intertwiner all act
//! diagonally there, with no cancellation at high degree.

use num_bigint::BigInt;
use num_traits::cast::ToPrimitive;
use num_traits::{One, Zero};
use statrs::function::gamma::ln_gamma;

use crate::bernstein::BernsteinTriplet;
use crate::dd::{self, Sdd};
use crate::error::{Error, Result};

/// Exact integer Stirling matrices are refused beyond this degree.
pub const DEGREE_CAP: usize = 60;

/// A polynomial in the falling-factorial basis: `f = Σ_k c_k p_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialPoly {
    pub coeffs: Vec<f64>,
}

impl FactorialPoly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        FactorialPoly { coeffs }
    }

    /// The basis polynomial `p_k` itself.
    pub fn basis(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        FactorialPoly { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, n: usize) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .fold(Sdd::ZERO, |acc, (k, &c)| {
                acc.add(dd::falling(n, k).mul_f64(c))
            })
            .to_f64()
    }

    /// Values on `[0..=n_max]`.
    pub fn sample(&self, n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|n| self.eval(n)).collect()
    }

    /// Dilation acts diagonally: `c_k ↦ α^k c_k`.
    pub fn dilate(&self, alpha: f64) -> Self {
        FactorialPoly {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * alpha.powi(k as i32))
                .collect(),
        }
    }

    /// Poissonization is exact on the basis: `Λ p_k (x) = x^k`.
    pub fn poissonize(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Falling factorial `p_k(n)` as `f64`.
pub fn falling_factorial(n: usize, k: usize) -> f64 {
    dd::falling(n, k).to_f64()
}

/// Binomial probabilities `C(n, r) α^r (1-α)^{n-r}`, `r = 0..=n`, built by
/// the two-sided recurrence from the mode and renormalized. Stable for all
/// `α ∈ [0, 1]` and `n` in the supported truncation range.
pub(crate) fn binomial_pmf(n: usize, alpha: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&alpha));
    let mut p = vec![0.0; n + 1];
    if alpha == 0.0 {
        p[0] = 1.0;
        return p;
    }
    if alpha == 1.0 {
        p[n] = 1.0;
        return p;
    }
    let nf = n as f64;
    let mode = ((nf + 1.0) * alpha).floor().min(nf) as usize;
    let ln_mode = ln_gamma(nf + 1.0)
        - ln_gamma(mode as f64 + 1.0)
        - ln_gamma(nf - mode as f64 + 1.0)
        + mode as f64 * alpha.ln()
        + (nf - mode as f64) * (1.0 - alpha).ln();
    p[mode] = ln_mode.exp();
    let odds = alpha / (1.0 - alpha);
    for r in mode..n {
        p[r + 1] = p[r] * odds * (nf - r as f64) / (r as f64 + 1.0);
    }
    for r in (0..mode).rev() {
        p[r] = p[r + 1] / odds * (r as f64 + 1.0) / (nf - r as f64);
    }
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    p
}

/// Poisson probabilities `e^{-x} x^n / n!` for `n = 0..=n_max`, plus the
/// truncated tail mass.
pub(crate) fn poisson_pmf(x: f64, n_max: usize) -> (Vec<f64>, f64) {
    assert!(x >= 0.0);
    let mut p = vec![0.0; n_max + 1];
    if x == 0.0 {
        p[0] = 1.0;
        return (p, 0.0);
    }
    let mode = x.floor().min(n_max as f64) as usize;
    let ln_mode = -x + mode as f64 * x.ln() - ln_gamma(mode as f64 + 1.0);
    p[mode] = ln_mode.exp();
    for n in mode..n_max {
        p[n + 1] = p[n] * x / (n as f64 + 1.0);
    }
    for n in (0..mode).rev() {
        p[n] = p[n + 1] * (n as f64 + 1.0) / x;
    }
    let tail = (1.0 - p.iter().sum::<f64>()).max(0.0);
    (p, tail)
}

/// How many Poisson terms keep the tail below `tol` of the total mass.
pub(crate) fn poisson_truncation(x: f64, tol: f64) -> usize {
    let mut n = x.ceil() as usize + 1;
    let mut ln_term = -x + (n as f64) * x.ln() - ln_gamma(n as f64 + 1.0);
    loop {
        let r = x / (n as f64 + 1.0);
        if r < 1.0 && ln_term.exp() * r / (1.0 - r) < tol {
            return n;
        }
        n += 1;
        ln_term += x.ln() - (n as f64).ln();
    }
}

/// Binomial thinning of a vector on `[0..N]`: exact on that range since the
/// kernel only looks downward.
///
/// For `α ∈ [0, 1]` this is a Markov kernel. It stays well defined for
/// `α > 1`, but the output can grow like `|2α-1|^n`; those signed sums are
/// accumulated in scaled double-double form.
pub fn dilation_apply(f: &[f64], alpha: f64) -> Vec<f64> {
    assert!(alpha > 0.0 || alpha == 0.0, "alpha must be nonnegative");
    if alpha == 1.0 {
        return f.to_vec();
    }
    if alpha <= 1.0 {
        (0..f.len())
            .map(|n| {
                let pmf = binomial_pmf(n, alpha);
                pmf.iter().zip(f).map(|(w, v)| w * v).sum()
            })
            .collect()
    } else {
        (0..f.len())
            .map(|n| {
                let mut terms: Vec<Sdd> = (0..=n)
                    .map(|r| {
                        let mag = dd::binomial(n, r)
                            .mul(Sdd::from_f64(alpha).powi(r as u32))
                            .mul(Sdd::from_f64(alpha - 1.0).powi((n - r) as u32))
                            .mul_f64(f[r]);
                        // (1-α)^{n-r} = (-1)^{n-r} (α-1)^{n-r}
                        if (n - r) % 2 == 1 {
                            mag.neg()
                        } else {
                            mag
                        }
                    })
                    .collect();
                dd::sum_sorted(&mut terms).to_f64()
            })
            .collect()
    }
}

/// `Λf(x) = E[f(Pois(x))]` for a vector of values `f(0), f(1), ...`.
///
/// The sum is truncated where the Poisson tail falls below `1e-14` of the
/// partial sum; if the vector ends before that point the truncation is
/// reported as an error.
pub fn poissonize(f: &[f64], x: f64) -> Result<f64> {
    assert!(x >= 0.0);
    let needed = poisson_truncation(x, 1e-14);
    if needed >= f.len() {
        return Err(Error::NonConvergence(format!(
            "poissonization at x = {x} needs {needed} values, vector has {}",
            f.len()
        )));
    }
    let (pmf, _) = poisson_pmf(x, needed);
    Ok(pmf.iter().zip(f).map(|(w, v)| w * v).sum())
}

fn stirling2(deg: usize) -> Vec<Vec<BigInt>> {
    let mut s = vec![vec![BigInt::zero(); deg + 1]; deg + 1];
    s[0][0] = BigInt::one();
    for n in 1..=deg {
        for k in 1..=n {
            let a = &s[n - 1][k] * k;
            s[n][k] = a + &s[n - 1][k - 1];
        }
    }
    s
}

fn stirling1_signed(deg: usize) -> Vec<Vec<BigInt>> {
    // p_n(x) = Σ_k s(n, k) x^k with s(n+1, k) = s(n, k-1) - n s(n, k)
    let mut s = vec![vec![BigInt::zero(); deg + 1]; deg + 1];
    s[0][0] = BigInt::one();
    for n in 1..=deg {
        for k in 1..=n {
            let a = &s[n - 1][k] * (n - 1);
            s[n][k] = &s[n - 1][k - 1] - a;
        }
    }
    s
}

fn check_degree(deg: usize) -> Result<()> {
    if deg > DEGREE_CAP {
        Err(Error::DegreeCap {
            degree: deg,
            cap: DEGREE_CAP,
        })
    } else {
        Ok(())
    }
}

/// Monomial coefficients `a_k` (of `n^k`) to the factorial basis, through
/// Stirling numbers of the second kind.
pub fn monomial_to_factorial(monomial: &[f64]) -> Result<FactorialPoly> {
    let deg = monomial.len().saturating_sub(1);
    check_degree(deg)?;
    let s2 = stirling2(deg);
    let coeffs = (0..=deg)
        .map(|j| {
            (j..=deg)
                .map(|k| monomial[k] * s2[k][j].to_f64().unwrap())
                .sum()
        })
        .collect();
    Ok(FactorialPoly { coeffs })
}

/// Factorial-basis coefficients back to monomial coefficients, through
/// signed Stirling numbers of the first kind.
pub fn factorial_to_monomial(poly: &FactorialPoly) -> Result<Vec<f64>> {
    let deg = poly.degree();
    check_degree(deg)?;
    let s1 = stirling1_signed(deg);
    Ok((0..=deg)
        .map(|i| {
            (i..=deg)
                .map(|j| poly.coeffs[j] * s1[j][i].to_f64().unwrap())
                .sum()
        })
        .collect())
}

/// Exact integer-coefficient version of [`monomial_to_factorial`].
pub fn monomial_to_factorial_exact(monomial: &[BigInt]) -> Result<Vec<BigInt>> {
    let deg = monomial.len().saturating_sub(1);
    check_degree(deg)?;
    let s2 = stirling2(deg);
    Ok((0..=deg)
        .map(|j| (j..=deg).map(|k| &monomial[k] * &s2[k][j]).sum())
        .collect())
}

/// Exact integer-coefficient version of [`factorial_to_monomial`].
pub fn factorial_to_monomial_exact(factorial: &[BigInt]) -> Result<Vec<BigInt>> {
    let deg = factorial.len().saturating_sub(1);
    check_degree(deg)?;
    let s1 = stirling1_signed(deg);
    Ok((0..=deg)
        .map(|i| (i..=deg).map(|j| &factorial[j] * &s1[j][i]).sum())
        .collect())
}

/// The moment intertwiner acts diagonally on the factorial basis:
/// `c_k ↦ c_k σ₁^k k! / W_φ(k+1)`.
pub fn iphi_apply_poly(triplet: &BernsteinTriplet, poly: &FactorialPoly) -> Result<FactorialPoly> {
    let deg = poly.degree();
    let w = triplet.gamma_table(deg)?;
    let s1 = triplet.sigma1();
    let coeffs = poly
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let factor = Sdd::from_f64(s1)
                .powi(k as u32)
                .mul(dd::factorial(k))
                .div(w.w(k + 1));
            c * factor.to_f64()
        })
        .collect();
    Ok(FactorialPoly { coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;

    #[test]
    fn dilation_at_one_is_identity() {
        let f: Vec<f64> = (0..50).map(|n| (n as f64).sin()).collect();
        assert_eq!(dilation_apply(&f, 1.0), f);
    }

    #[test]
    fn dilation_eigenrelation_on_factorial_basis() {
        for k in [0usize, 1, 3, 7] {
            let pk = FactorialPoly::basis(k).sample(40);
            for alpha in [0.3, 0.9, 1.7] {
                let lhs = dilation_apply(&pk, alpha);
                for (n, (&got, &want)) in lhs.iter().zip(pk.iter()).enumerate() {
                    let expect = alpha.powi(k as i32) * want;
                    assert!(
                        (got - expect).abs() <= 1e-11 * expect.abs().max(1.0),
                        "k={k} alpha={alpha} n={n}: {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn dilation_alternating_function_contracts() {
        // f(n) = (-1)^n maps to (1-2α)^n
        let f: Vec<f64> = (0..30).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let g = dilation_apply(&f, 0.9);
        for (n, &v) in g.iter().enumerate() {
            let expect = (-0.8f64).powi(n as i32);
            assert!((v - expect).abs() < 1e-12, "n={n}: {v} vs {expect}");
        }
    }

    #[test]
    fn dilation_markov_for_unit_range() {
        let ones = vec![1.0; 80];
        let g = dilation_apply(&ones, 0.37);
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let f: Vec<f64> = (0..80).map(|n| ((n * 13) % 5) as f64).collect();
        assert!(dilation_apply(&f, 0.37).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn poissonize_basis_and_constants() {
        for k in [0usize, 1, 2, 5] {
            let pk = FactorialPoly::basis(k);
            for x in [0.0, 0.5, 2.0] {
                assert!((pk.poissonize(x) - x.powi(k as i32)).abs() < 1e-14);
            }
        }
        let ones = vec![1.0; 200];
        assert!((poissonize(&ones, 3.0).unwrap() - 1.0).abs() < 1e-13);
        // delta at zero: Λδ_0(1) = e^{-1}
        let mut delta = vec![0.0; 200];
        delta[0] = 1.0;
        assert!((poissonize(&delta, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-14);
        // vector too short for the requested x
        assert!(poissonize(&ones[..3], 10.0).is_err());
    }

    #[test]
    fn poissonize_agrees_with_direct_sum_on_polynomials() {
        // Λ(D_α f)(x) = (Λf)(αx) exactly in the factorial basis
        let f = FactorialPoly::new(vec![0.5, -1.0, 2.0, 0.25]);
        for (alpha, x) in [(0.4, 1.3), (0.9, 3.0), (1.5, 0.7)] {
            let lhs = f.dilate(alpha).poissonize(x);
            let rhs = f.poissonize(alpha * x);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
        }
        // and against the series route for a sampled polynomial
        let sampled = f.sample(400);
        let series = poissonize(&sampled, 2.0).unwrap();
        assert!((series - f.poissonize(2.0)).abs() < 1e-10);
    }

    #[test]
    fn stirling_small_cases() {
        // n^2 = p_2 + p_1, n^3 = p_3 + 3 p_2 + p_1
        let sq = monomial_to_factorial(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(sq.coeffs, vec![0.0, 1.0, 1.0]);
        let lin = monomial_to_factorial(&[0.0, 1.0]).unwrap();
        assert_eq!(lin.coeffs, vec![0.0, 1.0]);
        let cube = monomial_to_factorial(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(cube.coeffs, vec![0.0, 1.0, 3.0, 1.0]);
        // brute-force check by evaluation
        for n in 0..6usize {
            assert_eq!(cube.eval(n), (n * n * n) as f64);
        }
    }

    #[test]
    fn stirling_exact_roundtrip() {
        let coeffs: Vec<BigInt> = (0..=DEGREE_CAP)
            .map(|k| BigInt::from((k as i64 % 11) - 5) * BigInt::from(k as i64 + 1))
            .collect();
        let fac = monomial_to_factorial_exact(&coeffs).unwrap();
        let back = factorial_to_monomial_exact(&fac).unwrap();
        assert_eq!(coeffs, back);
    }

    #[test]
    fn stirling_degree_cap() {
        let coeffs = vec![1.0; DEGREE_CAP + 2];
        assert!(matches!(
            monomial_to_factorial(&coeffs),
            Err(Error::DegreeCap { .. })
        ));
    }

    #[test]
    fn iphi_examples() {
        // k = 0 coefficient untouched
        let t = families::beta_chain(2.0).unwrap();
        let out = iphi_apply_poly(&t, &FactorialPoly::basis(0)).unwrap();
        assert_eq!(out.coeffs, vec![1.0]);

        // phi(u) = σ²u makes the intertwiner the identity on polynomials
        let lin = BernsteinTriplet::linear(1.7, 0.0).unwrap();
        let p = FactorialPoly::new(vec![1.0, -2.0, 0.5, 3.0]);
        let out = iphi_apply_poly(&lin, &p).unwrap();
        for (a, b) in out.coeffs.iter().zip(p.coeffs.iter()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }

        // beta family, k = 1: factor = 1/phi(1) = m(1+m)
        let mm = 2.0;
        let out = iphi_apply_poly(&t, &FactorialPoly::basis(1)).unwrap();
        assert!((out.coeffs[1] - mm * (1.0 + mm)).abs() < 1e-12);
    }

    #[test]
    fn binomial_pmf_mass_and_mean() {
        for (n, a) in [(0usize, 0.5), (7, 0.2), (200, 0.97), (153, 0.01)] {
            let p = binomial_pmf(n, a);
            let mass: f64 = p.iter().sum();
            assert!((mass - 1.0).abs() < 1e-13);
            let mean: f64 = p.iter().enumerate().map(|(r, w)| r as f64 * w).sum();
            assert!((mean - a * n as f64).abs() < 1e-10 * (n as f64).max(1.0));
        }
    }
}
