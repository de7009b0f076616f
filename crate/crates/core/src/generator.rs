//! Truncated rate matrices for the discrete self-similar chain and its
//! skip-free Laguerre perturbation.
//!
//! Row `n` of the self-similar generator has the off-diagonal entries
//!
//! ```text
//! rate(n → n+1) = σ²(n+1) + m + I_up(n)/(n+1)
//! rate(n → n-1) = σ²n + C(n+1, n-1) I_low(n, n-1)/(n+1)
//! rate(n → l)   = C(n+1, l) I_low(n, l)/(n+1),        l ∈ [0, n-2]
//! ```
//!
//! with the Lévy tail integrals of
//! [`BernsteinTriplet::levy_generator_integrals`], and a diagonal assembled
//! from the closed-form integral `I_diag(n)` so that the untruncated row
//! sums to zero. The Laguerre generator adds `n` to the `n → n-1` rate and
//! subtracts `n` on the diagonal. Every row is lower-Hessenberg: nothing is
//! ever written above `l = n+1`, which is the upward skip-free property the
//! structural validator re-checks.
//!
//! Truncation at `N` either drops the up-jump of the last row
//! ([`BoundaryPolicy::SubStochastic`], leaving an honest mass leak for
//! transient oracles) or folds it into the diagonal
//! ([`BoundaryPolicy::Reflecting`], giving the conservative matrix that
//! stationary solves need).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bernstein::{BernsteinTriplet, LevyMeasure};
use crate::dd::Sdd;
use crate::error::{Error, Result};

/// Which chain a generator (or a simulated path) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    SelfSimilar,
    Laguerre,
}

/// How the last row of the truncated matrix is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Drop the up-jump out of `[0..N]`; row `N` keeps its untruncated
    /// diagonal and therefore sums to minus the dropped rate.
    SubStochastic,
    /// Fold the up-rate into the diagonal so the matrix is conservative.
    Reflecting,
}

/// A truncated lower-Hessenberg rate matrix.
#[derive(Debug, Clone)]
pub struct SkipFreeGenerator {
    pub kind: ChainKind,
    pub n_max: usize,
    pub boundary: BoundaryPolicy,
    pub triplet: BernsteinTriplet,
    /// `rows[n][l]`; row `n < N` has `n+2` entries (`l ∈ [0, n+1]`), row `N`
    /// has `N+1`.
    rows: Vec<Vec<f64>>,
}

/// `ln(1 - e^{-y})`, accurate for small `y`.
fn ln_one_minus_exp(y: f64) -> f64 {
    (-(-y).exp_m1()).ln()
}

/// Down-rates `C(n+1, l) I_low(n, l) / (n+1)` for `l ∈ [0, n-1]` of row
/// `n`, returned indexed by `l`.
///
/// For the exponential family the Beta-function closed form telescopes:
/// the rate at `l = n-1` is `c n / ((n-1+b)(n+b)(n+b+1))` and each step
/// down multiplies by `l / (l-1+b)`, which is evaluated as an exact
/// scaled product (log-space assembly through `ln Γ` would cap the row
/// accuracy near `1e-13` and that noise propagates into everything the
/// invariant law feeds). Atoms assemble in log space per entry; tabulated
/// densities go through quadrature.
fn down_rates(triplet: &BernsteinTriplet, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let nf = n as f64;
    match &triplet.levy {
        LevyMeasure::Zero => Ok(vec![0.0; n]),
        LevyMeasure::Exp { c, b } => {
            let mut rates = vec![0.0; n];
            let mut cur = Sdd::from_f64(*c)
                .mul_f64(nf)
                .div(
                    Sdd::from_f64(nf - 1.0 + b)
                        .mul_f64(nf + b)
                        .mul_f64(nf + 1.0 + b),
                );
            rates[n - 1] = cur.to_f64();
            for l in (1..n).rev() {
                // entry(l-1) = entry(l) * l / (l-1+b)
                cur = cur.mul_f64(l as f64).div(Sdd::from_f64(l as f64 - 1.0 + b));
                rates[l - 1] = cur.to_f64();
            }
            Ok(rates)
        }
        LevyMeasure::Atoms { atoms } => {
            let mut rates = vec![0.0; n];
            for (l, r) in rates.iter_mut().enumerate() {
                let lf = l as f64;
                let ln_binom_over_np1 =
                    ln_gamma(nf + 1.0) - ln_gamma(lf + 1.0) - ln_gamma(nf - lf + 2.0);
                *r = atoms
                    .iter()
                    .map(|a| {
                        let ln_term =
                            a.w.ln() - lf * a.y + (nf - lf + 1.0) * ln_one_minus_exp(a.y);
                        (ln_binom_over_np1 + ln_term).exp()
                    })
                    .sum();
            }
            Ok(rates)
        }
        LevyMeasure::Tabulated { .. } => {
            let ints = triplet.levy_generator_integrals(n)?;
            let rates = (0..n)
                .map(|l| {
                    let lf = l as f64;
                    let ln_binom_over_np1 =
                        ln_gamma(nf + 1.0) - ln_gamma(lf + 1.0) - ln_gamma(nf - lf + 2.0);
                    ln_binom_over_np1.exp() * ints.low[l]
                })
                .collect();
            Ok(rates)
        }
    }
}

/// Untruncated row `n` in scaled double-double form with a conservative
/// diagonal (`-Σ` of the off-diagonal rates).
///
/// The stationary solver consumes these instead of the `f64` rows: for the
/// zero and exponential families every rate is an exact scaled product, so
/// the solved law is accurate to far better than `f64` rate rounding
/// would allow, which in turn is what keeps the co-eigenfunction sums
/// resolvable deep into their cancellation range.
pub(crate) fn interior_row_sdd(
    triplet: &BernsteinTriplet,
    kind: ChainKind,
    n: usize,
) -> Result<Vec<Sdd>> {
    let nf = n as f64;
    let s2 = triplet.sigma2;
    let mut row = vec![Sdd::ZERO; n + 2];
    match &triplet.levy {
        LevyMeasure::Zero => {}
        LevyMeasure::Exp { c, b } => {
            if n >= 1 {
                let mut cur = Sdd::from_f64(*c).mul_f64(nf).div(
                    Sdd::from_f64(nf - 1.0 + b)
                        .mul_f64(nf + b)
                        .mul_f64(nf + 1.0 + b),
                );
                row[n - 1] = cur;
                for l in (1..n).rev() {
                    cur = cur.mul_f64(l as f64).div(Sdd::from_f64(l as f64 - 1.0 + b));
                    row[l - 1] = cur;
                }
            }
        }
        _ => {
            for (l, &r) in down_rates(triplet, n)?.iter().enumerate() {
                row[l] = Sdd::from_f64(r);
            }
        }
    }
    if n >= 1 {
        row[n - 1] = row[n - 1].add(Sdd::from_f64(s2).mul_f64(nf));
    }
    let i_up = match &triplet.levy {
        LevyMeasure::Zero => 0.0,
        LevyMeasure::Exp { c, b } => {
            c * (1.0 / (b + nf + 1.0) - 1.0 / b + (nf + 1.0) / (b * b))
        }
        _ => triplet.levy_generator_integrals(n)?.up,
    };
    row[n + 1] = Sdd::from_f64(s2)
        .mul_f64(nf + 1.0)
        .add(Sdd::from_f64(triplet.m))
        .add(Sdd::from_f64(i_up).div(Sdd::from_f64(nf + 1.0)));
    if kind == ChainKind::Laguerre && n >= 1 {
        row[n - 1] = row[n - 1].add(Sdd::from_f64(nf));
    }
    // conservative diagonal; interior rows of both generators sum to
    // zero, so taking -Σ after the Laguerre correction is exact
    let mut diag = Sdd::ZERO;
    for (l, &v) in row.iter().enumerate() {
        if l != n {
            diag = diag.add(v);
        }
    }
    row[n] = diag.neg();
    Ok(row)
}

/// Untruncated row `n` of the requested generator, entries `l ∈ [0, n+1]`.
///
/// Shared by the truncated builder and the lazily expanding simulator.
pub(crate) fn interior_row(
    triplet: &BernsteinTriplet,
    kind: ChainKind,
    n: usize,
) -> Result<Vec<f64>> {
    let nf = n as f64;
    let s2 = triplet.sigma2;
    let mut row = vec![0.0; n + 2];
    // Levy up/diagonal integrals come from the closed forms; the per-l down
    // rates are assembled separately for range safety.
    let (i_up, i_diag) = match &triplet.levy {
        LevyMeasure::Zero => (0.0, 0.0),
        LevyMeasure::Exp { c, b } => (
            c * (1.0 / (b + nf + 1.0) - 1.0 / b + (nf + 1.0) / (b * b)),
            c * (1.0 / (b + nf) - 1.0 / (b + nf + 1.0) - 1.0 / (b * b)),
        ),
        _ => {
            let ints = triplet.levy_generator_integrals(n)?;
            (ints.up, ints.diag)
        }
    };
    let down = down_rates(triplet, n)?;
    row[..n].copy_from_slice(&down);
    if n >= 1 {
        row[n - 1] += s2 * nf;
    }
    row[n + 1] = s2 * (nf + 1.0) + triplet.m + i_up / (nf + 1.0);
    row[n] = -(2.0 * s2 * nf + s2 + triplet.m) + i_diag;
    if kind == ChainKind::Laguerre && n >= 1 {
        row[n - 1] += nf;
        row[n] -= nf;
    }
    // quadrature round-off guard; the closed forms are nonnegative as written
    for l in 0..=n + 1 {
        if l != n && row[l] < 0.0 {
            if row[l] > -1e-12 {
                row[l] = 0.0;
            } else {
                return Err(Error::InvalidTriplet(format!(
                    "negative rate {} at ({n}, {l})",
                    row[l]
                )));
            }
        }
    }
    Ok(row)
}

/// Build the self-similar generator truncated to `[0..N]`.
pub fn build_gphi(
    triplet: &BernsteinTriplet,
    n_max: usize,
    boundary: BoundaryPolicy,
) -> Result<SkipFreeGenerator> {
    build(triplet, ChainKind::SelfSimilar, n_max, boundary)
}

/// Build the skip-free Laguerre generator truncated to `[0..N]`.
pub fn build_lphi(
    triplet: &BernsteinTriplet,
    n_max: usize,
    boundary: BoundaryPolicy,
) -> Result<SkipFreeGenerator> {
    build(triplet, ChainKind::Laguerre, n_max, boundary)
}

fn build(
    triplet: &BernsteinTriplet,
    kind: ChainKind,
    n_max: usize,
    boundary: BoundaryPolicy,
) -> Result<SkipFreeGenerator> {
    assert!(n_max >= 1, "truncation level must be at least 1");
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..n_max {
        rows.push(interior_row(triplet, kind, n)?);
    }
    let mut last = interior_row(triplet, kind, n_max)?;
    let up = last.pop().expect("interior row has an up entry");
    if boundary == BoundaryPolicy::Reflecting {
        last[n_max] += up;
    }
    rows.push(last);
    Ok(SkipFreeGenerator {
        kind,
        n_max,
        boundary,
        triplet: triplet.clone(),
        rows,
    })
}

impl SkipFreeGenerator {
    /// Entries of row `n`: index `l`, length `n+2` (or `N+1` for the last row).
    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    pub fn entry(&self, n: usize, l: usize) -> f64 {
        self.rows[n].get(l).copied().unwrap_or(0.0)
    }

    /// Apply the generator to a function on `[0..N]`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n_max + 1);
        self.rows
            .iter()
            .map(|row| row.iter().zip(f).map(|(r, v)| r * v).sum())
            .collect()
    }

    /// Largest diagonal magnitude; the uniformization rate.
    pub fn max_diagonal(&self) -> f64 {
        (0..=self.n_max)
            .map(|n| self.rows[n][n].abs())
            .fold(0.0, f64::max)
    }

    /// Structural validation: skip-free shape, sign of the off-diagonal
    /// entries, and interior row-sum residuals (which cross-check the
    /// closed-form diagonal integral against the per-entry closed forms).
    pub fn validate(&self) -> ValidationReport {
        let mut min_offdiag = f64::INFINITY;
        let mut row_sum_residuals: Vec<f64> = Vec::with_capacity(self.n_max);
        for (n, row) in self.rows.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                if l != n {
                    min_offdiag = min_offdiag.min(v);
                }
            }
            if n < self.n_max {
                row_sum_residuals.push(row.iter().sum());
            }
        }
        let boundary_row_sum: f64 = self.rows[self.n_max].iter().sum();
        let max_interior_residual = row_sum_residuals
            .iter()
            .fold(0.0f64, |a, r| a.max(r.abs()));
        ValidationReport {
            skip_free: true, // rows are allocated without room above n+1
            min_offdiag,
            max_interior_residual,
            row_sum_residuals,
            boundary_row_sum,
        }
    }

    /// CSV export `(n, l, rate)` with round-trip-safe floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,l,rate\n");
        for (n, row) in self.rows.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                if v != 0.0 || l == n {
                    out.push_str(&format!("{n},{l},{v:.16e}\n"));
                }
            }
        }
        out
    }

    /// JSON header carrying the triplet, truncation and boundary policy.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "n_max": self.n_max,
            "boundary": self.boundary,
            "triplet": self.triplet,
        })
    }
}

/// Result of [`SkipFreeGenerator::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub skip_free: bool,
    pub min_offdiag: f64,
    pub max_interior_residual: f64,
    pub row_sum_residuals: Vec<f64>,
    pub boundary_row_sum: f64,
}

impl ValidationReport {
    /// All three structural invariants at their standard tolerances.
    pub fn passes(&self) -> bool {
        self.skip_free && self.min_offdiag >= -1e-12 && self.max_interior_residual <= 1e-10
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::Atom;
    use crate::families;

    #[test]
    fn linear_birth_death_rates() {
        // sigma2 = 1, m = 0: up-rate n+1, down-rate n, diagonal -(2n+1)
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let g = build_gphi(&t, 10, BoundaryPolicy::SubStochastic).unwrap();
        for n in 0..10 {
            assert_eq!(g.entry(n, n + 1), (n + 1) as f64);
            if n >= 1 {
                assert_eq!(g.entry(n, n - 1), n as f64);
            }
            assert_eq!(g.entry(n, n), -((2 * n + 1) as f64));
        }
    }

    #[test]
    fn single_atom_row_zero() {
        let t = BernsteinTriplet::new(
            0.0,
            0.0,
            LevyMeasure::Atoms {
                atoms: vec![Atom { y: 1.0, w: 1.0 }],
            },
        );
        // phi(1) = 1 - (1 - e^{-1}) = e^{-1} > 0, triplet is fine
        let t = t.unwrap();
        let g = build_gphi(&t, 5, BoundaryPolicy::SubStochastic).unwrap();
        let e1 = (-1f64).exp();
        assert!((g.entry(0, 1) - e1).abs() < 1e-15);
        assert!((g.entry(0, 0) + e1).abs() < 1e-15);
    }

    #[test]
    fn laguerre_corrections_linear_family() {
        let (s2, m) = (1.5, 0.7);
        let t = BernsteinTriplet::linear(s2, m).unwrap();
        let g = build_lphi(&t, 8, BoundaryPolicy::SubStochastic).unwrap();
        for n in 1..8 {
            assert!((g.entry(n, n - 1) - (1.0 + s2) * n as f64).abs() < 1e-13);
            assert!((g.entry(n, n + 1) - (s2 * (n as f64 + 1.0) + m)).abs() < 1e-13);
        }
        // n = 0 row has no down correction
        assert_eq!(g.row(0).len(), 2);
    }

    #[test]
    fn interior_row_sums_vanish() {
        for t in [
            families::meixner_chain(1.0, 1.0).unwrap(),
            families::perturbed_chain(3.0).unwrap(),
            families::beta_chain(2.0).unwrap(),
        ] {
            for kind in [ChainKind::SelfSimilar, ChainKind::Laguerre] {
                let g = build(&t, kind, 200, BoundaryPolicy::SubStochastic).unwrap();
                let rep = g.validate();
                assert!(rep.passes(), "{kind:?}: {rep:?}");
                assert!(rep.max_interior_residual <= 1e-10);
            }
        }
    }

    #[test]
    fn boundary_policies_differ_only_in_last_row() {
        let t = families::perturbed_chain(3.0).unwrap();
        let a = build_lphi(&t, 30, BoundaryPolicy::SubStochastic).unwrap();
        let b = build_lphi(&t, 30, BoundaryPolicy::Reflecting).unwrap();
        for n in 0..30 {
            assert_eq!(a.row(n), b.row(n));
        }
        assert!(a.validate().boundary_row_sum < -1e-6);
        assert!(b.validate().boundary_row_sum.abs() < 1e-10);
    }

    #[test]
    fn generator_on_first_factorial_polynomial() {
        // G p_1 = phi(1) on interior rows; L p_1 = phi(1) - n
        for t in [
            families::meixner_chain(1.0, 2.0).unwrap(),
            families::perturbed_chain(2.5).unwrap(),
            families::beta_chain(3.0).unwrap(),
        ] {
            let n_max = 60;
            let p1: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
            let g = build_gphi(&t, n_max, BoundaryPolicy::SubStochastic).unwrap();
            let gp = g.apply(&p1);
            let phi1 = t.phi(1.0);
            for n in 0..n_max {
                assert!(
                    (gp[n] - phi1).abs() < 1e-9 * phi1.max(1.0) * (n as f64 + 1.0),
                    "n = {n}: {} vs {phi1}",
                    gp[n]
                );
            }
            let l = build_lphi(&t, n_max, BoundaryPolicy::SubStochastic).unwrap();
            let lp = l.apply(&p1);
            for n in 0..n_max {
                let expect = phi1 - n as f64;
                assert!((lp[n] - expect).abs() < 1e-9 * expect.abs().max(1.0) * (n as f64 + 1.0));
            }
        }
    }

    #[test]
    fn atoms_match_single_atom_closed_display() {
        // one unit atom at y: down rates C(n+1,l)/(n+1) e^{-ly}(1-e^{-y})^{n-l+1}
        let y = 0.8;
        let t = BernsteinTriplet::new(
            0.1,
            0.5,
            LevyMeasure::Atoms {
                atoms: vec![Atom { y, w: 1.0 }],
            },
        )
        .unwrap();
        let g = build_gphi(&t, 12, BoundaryPolicy::SubStochastic).unwrap();
        for n in 2..12usize {
            for l in 0..n - 1 {
                let binom = (ln_gamma(n as f64 + 2.0)
                    - ln_gamma(l as f64 + 1.0)
                    - ln_gamma((n - l) as f64 + 2.0))
                .exp();
                let expect = binom / (n as f64 + 1.0)
                    * (-(l as f64) * y).exp()
                    * (1.0 - (-y).exp()).powi((n - l + 1) as i32);
                assert!((g.entry(n, l) - expect).abs() < 1e-13 * expect.max(1e-12));
            }
        }
    }

    #[test]
    fn down_entries_match_direct_assembly_from_integrals() {
        let t = families::perturbed_chain(3.0).unwrap();
        for n in [3usize, 17, 80] {
            let ints = t.levy_generator_integrals(n).unwrap();
            let g = build_gphi(&t, 100, BoundaryPolicy::SubStochastic).unwrap();
            for l in 0..n.saturating_sub(1) {
                let binom = (ln_gamma(n as f64 + 2.0)
                    - ln_gamma(l as f64 + 1.0)
                    - ln_gamma((n - l) as f64 + 2.0))
                .exp();
                let direct = binom * ints.low[l] / (n as f64 + 1.0);
                let rel = (g.entry(n, l) - direct).abs() / direct.max(1e-300);
                assert!(rel < 1e-10, "n={n} l={l}");
            }
        }
    }

    #[test]
    fn injected_negative_rate_is_flagged() {
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let mut g = build_gphi(&t, 5, BoundaryPolicy::SubStochastic).unwrap();
        g.rows[3][1] = -1e-6;
        let rep = g.validate();
        assert!(!rep.passes());
        assert!(rep.min_offdiag < -1e-12);
    }

    #[test]
    fn csv_export_shape() {
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        let g = build_gphi(&t, 3, BoundaryPolicy::SubStochastic).unwrap();
        let csv = g.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n,l,rate"));
        assert!(csv.contains("0,1,1.0000000000000000e0"));
    }
}
