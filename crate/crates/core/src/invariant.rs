//! The invariant distribution of the skip-free Laguerre chain.
//!
//! Two independent routes compute the law `n_φ`:
//!
//! - **Series.** `n_φ(n) = (1/n!) Σ_r (-1)^r W_φ(n+r+1)/r!`, valid when
//!   `σ² < 1`. The terms span hundreds of orders of magnitude and
//!   alternate, so they are accumulated as scaled double-doubles,
//!   smallest first.
//! - **Stationary solve.** The left null vector of the truncated
//!   conservative Laguerre matrix. Because up-jumps are single steps, the
//!   column balance equations resolve one new unknown each: starting from
//!   `π(N) = 1`, column `l` yields `π(l-1)` from the already known
//!   `π(l), ..., π(N)`. This is the route that works for every `σ²`.
//!
//! Both routes are certified against the factorial-moment identity
//! `Σ_n p_k(n) n_φ(n) = W_φ(k+1)`.

use serde::Serialize;

use crate::bernstein::BernsteinTriplet;
use crate::dd::{self, Sdd};
use crate::error::{Error, Result};
use crate::generator::{self, BoundaryPolicy, ChainKind, SkipFreeGenerator};

/// How an [`InvariantLaw`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawMethod {
    Series,
    StationarySolve,
    ClosedForm,
}

/// The invariant law on `[0..N]`.
///
/// Weights are carried both as scaled double-doubles (the co-eigenfunction
/// sums cancel deep enough that `f64`-level weight noise would dominate
/// them) and in log space (they decay super-geometrically and underflow
/// `f64` long before the truncations the spectral code asks for).
#[derive(Debug, Clone)]
pub struct InvariantLaw {
    weights_sdd: Vec<Sdd>,
    log_weights: Vec<f64>,
    /// Log of the relative accuracy of the weights; sets the noise floor
    /// of everything built on them.
    pub precision_ln: f64,
    pub tail_mass_bound: f64,
    pub method: LawMethod,
    /// Sup-norm residual of the defining stationarity equations, when the
    /// law came from a solve.
    pub residual: Option<f64>,
}

/// Relative accuracy of a law reconstructed from `f64` logs.
const LOG_ROUNDTRIP_PRECISION_LN: f64 = -32.24; // ln(1e-14)

/// Relative accuracy of a law solved from scaled double-double rows
/// (exact rate products for the zero and exponential families).
const SOLVE_PRECISION_LN: f64 = -58.0;

/// Relative accuracy of the series route, capped by the `f64` evaluations
/// of `φ` inside the Bernstein-gamma products.
const SERIES_PRECISION_LN: f64 = -34.54; // ln(1e-15)

impl InvariantLaw {
    pub fn from_log_weights(log_weights: Vec<f64>, method: LawMethod) -> Self {
        let weights_sdd = log_weights
            .iter()
            .map(|&l| Sdd::from_ln(1.0, l))
            .collect();
        let tail = estimate_tail(&log_weights);
        InvariantLaw {
            weights_sdd,
            log_weights,
            precision_ln: LOG_ROUNDTRIP_PRECISION_LN,
            tail_mass_bound: tail,
            method,
            residual: None,
        }
    }

    fn from_sdd_weights(weights_sdd: Vec<Sdd>, method: LawMethod, precision_ln: f64) -> Self {
        let log_weights: Vec<f64> = weights_sdd.iter().map(|w| w.ln_abs()).collect();
        let tail = estimate_tail(&log_weights);
        InvariantLaw {
            weights_sdd,
            log_weights,
            precision_ln,
            tail_mass_bound: tail,
            method,
            residual: None,
        }
    }

    /// Largest resolved state.
    pub fn n_max(&self) -> usize {
        self.log_weights.len() - 1
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.log_weights[n].exp()
    }

    pub fn log_weight(&self, n: usize) -> f64 {
        self.log_weights[n]
    }

    pub fn weight_sdd(&self, n: usize) -> Sdd {
        self.weights_sdd[n]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn mass(&self) -> f64 {
        let mut terms = self.weights_sdd.clone();
        dd::sum_sorted(&mut terms).to_f64()
    }

    /// CSV export `(n, weight)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,weight\n");
        for (n, &l) in self.log_weights.iter().enumerate() {
            out.push_str(&format!("{n},{:.16e}\n", l.exp()));
        }
        out
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "n_max": self.n_max(),
            "tail_mass_bound": self.tail_mass_bound,
            "residual": self.residual,
        })
    }
}

fn estimate_tail(log_weights: &[f64]) -> f64 {
    // geometric extrapolation from the last 10 resolved weights
    let n = log_weights.len();
    if n < 11 {
        return f64::INFINITY;
    }
    let last = log_weights[n - 1];
    let ratio_ln = (last - log_weights[n - 11]) / 10.0;
    if ratio_ln >= 0.0 {
        return f64::INFINITY;
    }
    let r = ratio_ln.exp();
    (last + (r / (1.0 - r)).ln()).exp()
}

/// Extendable Bernstein-gamma values for the series route.
struct GrowableW<'a> {
    triplet: &'a BernsteinTriplet,
    w: Vec<Sdd>,
}

impl<'a> GrowableW<'a> {
    fn new(triplet: &'a BernsteinTriplet) -> Self {
        GrowableW {
            triplet,
            w: vec![Sdd::ONE],
        }
    }

    /// `W_φ(j)`, `j ≥ 1`.
    fn w(&mut self, j: usize) -> Sdd {
        while self.w.len() < j {
            let k = self.w.len();
            let prev = self.w[k - 1];
            self.w.push(prev.mul_f64(self.triplet.phi(k as f64)));
        }
        self.w[j - 1]
    }
}

const SERIES_TERM_CAP: usize = 20_000;

/// Cancellation budget of the series route: stop once the largest term
/// exceeds the result by this many e-folds (≈ 27 of the ~31 significant
/// digits the scaled double-double accumulation carries).
const SERIES_CANCEL_BUDGET: f64 = 62.0;

/// Alternating-series route, valid for `σ² < 1`.
///
/// The cancellation in the series deepens geometrically in `n` when
/// `σ² > 0`, so the returned law may resolve fewer states than requested;
/// it always extends exactly as far as the working precision supports
/// (for `σ² = 0` the series is benign and the full range is returned).
/// Callers needing a specific range should check [`InvariantLaw::n_max`].
pub fn nphi_series(triplet: &BernsteinTriplet, n_max: usize) -> Result<InvariantLaw> {
    if triplet.sigma2 >= 1.0 {
        return Err(Error::Unsupported(format!(
            "the series representation requires sigma2 < 1, got {}",
            triplet.sigma2
        )));
    }
    let mut w = GrowableW::new(triplet);
    let mut weights = Vec::with_capacity(n_max + 1);
    'states: for n in 0..=n_max {
        let mut terms: Vec<Sdd> = Vec::new();
        let mut partial = Sdd::ZERO;
        let mut max_ln = f64::NEG_INFINITY;
        let mut r = 0usize;
        loop {
            let mut term = w.w(n + r + 1).div(dd::factorial(r));
            if r % 2 == 1 {
                term = term.neg();
            }
            max_ln = max_ln.max(term.ln_abs());
            terms.push(term);
            partial = partial.add(term);
            // stop once the ratio is contracting and terms are negligible
            let ratio = triplet.phi((n + r + 1) as f64) / (r as f64 + 1.0);
            let negligible = !partial.is_zero()
                && term.abs().ln_abs() < partial.abs().ln_abs() + (1e-16f64).ln();
            if ratio < 1.0 && negligible {
                break;
            }
            r += 1;
            if r > SERIES_TERM_CAP {
                return Err(Error::NonConvergence(format!(
                    "series for n = {n} did not decay within {SERIES_TERM_CAP} terms"
                )));
            }
        }
        let total = dd::sum_sorted(&mut terms).div(dd::factorial(n));
        let exhausted = total.signum() <= 0.0
            || max_ln - total.mul(dd::factorial(n)).ln_abs() > SERIES_CANCEL_BUDGET;
        if exhausted {
            if weights.len() >= 11 {
                break 'states; // resolved prefix is still a usable law
            }
            return Err(Error::NonConvergence(format!(
                "series cancellation exhausted the working precision already at n = {n}"
            )));
        }
        weights.push(total);
    }
    Ok(InvariantLaw::from_sdd_weights(weights, LawMethod::Series, SERIES_PRECISION_LN))
}

/// Stationary solve on a reflecting Laguerre truncation.
///
/// Exploits the skip-free structure: the balance equation of column `l`
/// involves `π(l-1)` only through the single up-rate `L(l-1, l)`, so a
/// downward sweep from `π(N) = 1` resolves the whole vector in `O(N²)`.
///
/// The sweep re-derives the matrix rows in scaled double-double form
/// (conservative diagonals, exact products for the zero and exponential
/// families) rather than reading the `f64` entries of the passed
/// generator; the generator fixes the truncation and is checked for the
/// required kind and boundary.
pub fn nphi_solve(gen: &SkipFreeGenerator) -> Result<InvariantLaw> {
    if gen.kind != ChainKind::Laguerre || gen.boundary != BoundaryPolicy::Reflecting {
        return Err(Error::Unsupported(
            "stationary solve needs a Laguerre generator with a reflecting boundary".into(),
        ));
    }
    let n = gen.n_max;
    // rows[j][l], with the boundary row reflecting: up-rate folded away
    let mut rows: Vec<Vec<Sdd>> = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let mut row = generator::interior_row_sdd(&gen.triplet, ChainKind::Laguerre, j)?;
        if j == n {
            let up = row.pop().expect("interior row has an up entry");
            row[n] = row[n].add(up);
        }
        rows.push(row);
    }
    let mut pi = vec![Sdd::ZERO; n + 1];
    pi[n] = Sdd::ONE;
    for l in (1..=n).rev() {
        // sum_{j >= l} pi(j) L(j, l) + pi(l-1) L(l-1, l) = 0
        let mut acc = Sdd::ZERO;
        for (j, pi_j) in pi.iter().enumerate().take(n + 1).skip(l) {
            if let Some(&rate) = rows[j].get(l) {
                acc = acc.add(pi_j.mul(rate));
            }
        }
        let up = rows[l - 1][l];
        if up.signum() <= 0.0 {
            return Err(Error::NonConvergence(format!(
                "vanishing up-rate at state {}; chain is not irreducible on the truncation",
                l - 1
            )));
        }
        pi[l - 1] = acc.neg().div(up);
        if pi[l - 1].signum() <= 0.0 {
            return Err(Error::NonConvergence(format!(
                "stationary sweep lost positivity at state {}",
                l - 1
            )));
        }
    }
    let mut mass_terms = pi.clone();
    let total = dd::sum_sorted(&mut mass_terms);
    let weights: Vec<Sdd> = pi.iter().map(|p| p.div(total)).collect();

    // residual of the one equation the sweep never used (column 0), plus
    // re-evaluation of the others
    let mut residual = 0.0f64;
    for l in 0..=n {
        let mut acc = Sdd::ZERO;
        for (j, pi_j) in pi.iter().enumerate().take(n + 1).skip(l.saturating_sub(1)) {
            if let Some(&rate) = rows[j].get(l) {
                acc = acc.add(pi_j.mul(rate));
            }
        }
        residual = residual.max(acc.div(total).to_f64().abs());
    }
    if residual > 1e-8 {
        return Err(Error::NonConvergence(format!(
            "stationarity residual {residual:.3e} exceeds 1e-8"
        )));
    }
    let mut law = InvariantLaw::from_sdd_weights(weights, LawMethod::StationarySolve, SOLVE_PRECISION_LN);
    law.residual = Some(residual);
    Ok(law)
}

/// Solve with the truncation grown until the geometric tail estimate drops
/// below `1e-12`, starting no smaller than `min_n`.
pub fn nphi_solve_auto(triplet: &BernsteinTriplet, min_n: usize) -> Result<InvariantLaw> {
    let mut n = min_n.max(64).next_power_of_two();
    loop {
        let gen = generator::build_lphi(triplet, n, BoundaryPolicy::Reflecting)?;
        let law = nphi_solve(&gen)?;
        if law.tail_mass_bound < 1e-12 {
            return Ok(law);
        }
        n *= 2;
        if n > 4096 {
            return Err(Error::NonConvergence(
                "invariant-law truncation exceeded 4096 without resolving the tail".into(),
            ));
        }
    }
}

/// One entry of the factorial-moment certificate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertEntry {
    pub k: usize,
    /// `|Σ_n p_k(n) n_φ(n) - W_φ(k+1)| / W_φ(k+1)`.
    pub residual: f64,
    /// False when the truncated tail of `p_k · n_φ` could dominate the
    /// reported residual.
    pub conclusive: bool,
}

/// Certify a law against the moment identity for `k = 0..=kmax`.
pub fn moment_certificate(
    law: &InvariantLaw,
    triplet: &BernsteinTriplet,
    kmax: usize,
) -> Result<Vec<CertEntry>> {
    let w = triplet.gamma_table(kmax)?;
    let n_max = law.n_max();
    let mut out = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let mut terms: Vec<Sdd> = (k..=n_max)
            .map(|n| dd::falling(n, k).mul(law.weight_sdd(n)))
            .collect();
        let last = terms.last().copied().unwrap_or(Sdd::ZERO);
        let total = dd::sum_sorted(&mut terms);
        let target = w.w(k + 1);
        let residual = total.sub(target).div(target).to_f64().abs();
        // the summand is increasing-then-decreasing; the last term bounds the
        // tail up to the geometric ratio of the weights
        let conclusive = last.div(target).to_f64().abs() < 1e-12;
        out.push(CertEntry {
            k,
            residual,
            conclusive,
        });
    }
    Ok(out)
}
