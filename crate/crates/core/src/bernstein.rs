//! Bernstein-function triplets and everything derived from them.
//!
//! A triplet `(m, σ², Π)` with `m, σ² ≥ 0` and a Lévy measure `Π` on
//! `(0, ∞)` satisfying `∫ (y ∧ y²) Π(dy) < ∞` determines the Bernstein
//! function
//!
//! ```text
//! φ(u) = m + σ² u + ∫ (1 - e^{-uy}) Π̄(y) dy,      Π̄(y) = Π(y, ∞).
//! ```
//!
//! The chain generators, moment formulas and spectral objects in the rest
//! of the crate are all expressed through `φ`, its analytic continuation to
//! the negative half-line, the Bernstein-gamma products
//! `W_φ(k+1) = φ(1)···φ(k)`, and a family of tail integrals of `Π` that
//! appear as jump rates.
//!
//! Lévy measures are restricted to four machine-representable families:
//! zero, an exponential density `c e^{-by} dy`, a finite set of atoms, and
//! a tabulated density handled by adaptive quadrature. The closed forms for
//! the first three are cross-checked against the quadrature oracle in the
//! test suites.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dd::Sdd;
use crate::error::{Error, Result};
use crate::reference;

/// Default search bound for the continuation bisection.
const DPHI_SEARCH_BOUND: f64 = 1e6;

/// A single atom of a discrete Lévy measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Location, strictly positive.
    pub y: f64,
    /// Mass, strictly positive.
    pub w: f64,
}

/// Machine-representable Lévy measure families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LevyMeasure {
    /// No jump part.
    Zero,
    /// `Π(dy) = c e^{-by} dy` with `c, b > 0`.
    Exp { c: f64, b: f64 },
    /// `Π = Σ w_i δ_{y_i}`.
    Atoms { atoms: Vec<Atom> },
    /// Density samples on a strictly increasing positive grid, interpreted
    /// as a piecewise-linear density and integrated by adaptive quadrature.
    Tabulated { ys: Vec<f64>, density: Vec<f64> },
}

impl LevyMeasure {
    fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::Zero => Ok(()),
            LevyMeasure::Exp { c, b } => {
                if !(c.is_finite() && b.is_finite() && *c > 0.0 && *b > 0.0) {
                    return Err(Error::InvalidTriplet(format!(
                        "exponential Levy density needs c, b > 0, got c = {c}, b = {b}"
                    )));
                }
                Ok(())
            }
            LevyMeasure::Atoms { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidTriplet(
                        "atomic Levy measure with no atoms; use kind \"zero\"".into(),
                    ));
                }
                for a in atoms {
                    if !(a.y.is_finite() && a.w.is_finite() && a.y > 0.0 && a.w > 0.0) {
                        return Err(Error::InvalidTriplet(format!(
                            "atom locations and masses must be strictly positive, got (y, w) = ({}, {})",
                            a.y, a.w
                        )));
                    }
                }
                Ok(())
            }
            LevyMeasure::Tabulated { ys, density } => {
                if ys.len() != density.len() || ys.len() < 2 {
                    return Err(Error::InvalidTriplet(
                        "tabulated Levy density needs matching grids with at least 2 points".into(),
                    ));
                }
                if ys[0] <= 0.0 || ys.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidTriplet(
                        "tabulated grid must be strictly increasing and positive".into(),
                    ));
                }
                if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
                    return Err(Error::InvalidTriplet(
                        "tabulated density values must be finite and nonnegative".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `∫ y Π(dy) = ∫_0^∞ Π̄(y) dy`, the first moment of the measure.
    pub fn first_moment(&self) -> f64 {
        match self {
            LevyMeasure::Zero => 0.0,
            LevyMeasure::Exp { c, b } => c / (b * b),
            LevyMeasure::Atoms { atoms } => atoms.iter().map(|a| a.w * a.y).sum(),
            LevyMeasure::Tabulated { .. } => self
                .quad(|y| y)
                .expect("first moment of a finite tabulated density"),
        }
    }

    /// Integrate `g` against the measure. Closed sums for atoms, adaptive
    /// quadrature against the interpolated density for tabulated data.
    fn quad(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        match self {
            LevyMeasure::Zero => Ok(0.0),
            LevyMeasure::Exp { c, b } => {
                let (c, b) = (*c, *b);
                reference::integrate_semi_infinite(|y| g(y) * c * (-b * y).exp())
            }
            LevyMeasure::Atoms { atoms } => Ok(atoms.iter().map(|a| a.w * g(a.y)).sum()),
            LevyMeasure::Tabulated { ys, density } => {
                // cell-by-cell panels: the piecewise-linear density is
                // smooth inside each cell but kinked at every grid point
                let mut total = 0.0;
                let mut err = 0.0;
                for i in 0..ys.len() - 1 {
                    let (a, b) = (ys[i], ys[i + 1]);
                    let (da, db) = (density[i], density[i + 1]);
                    let (v, e) = reference::gk15_cell(
                        |y| {
                            let t = (y - a) / (b - a);
                            g(y) * (da * (1.0 - t) + db * t)
                        },
                        a,
                        b,
                    );
                    total += v;
                    err += e;
                }
                if err > 1e-9 * total.abs().max(1.0) {
                    return Err(crate::error::Error::Integration(format!(
                        "tabulated cell quadrature error {err:.3e}"
                    )));
                }
                Ok(total)
            }
        }
    }
}

/// `e^{-a} - 1 + a`, accurate for small `a`.
pub(crate) fn em1p(a: f64) -> f64 {
    if a.abs() < 1e-3 {
        let a2 = a * a;
        a2 * (0.5 - a / 6.0 + a2 / 24.0 - a2 * a / 120.0)
    } else {
        (-a).exp_m1() + a
    }
}

/// A Bernstein-function triplet `(m, σ², Π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinTriplet {
    pub m: f64,
    pub sigma2: f64,
    pub levy: LevyMeasure,
}

impl BernsteinTriplet {
    pub fn new(m: f64, sigma2: f64, levy: LevyMeasure) -> Result<Self> {
        if !(m.is_finite() && m >= 0.0) || !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::InvalidTriplet(format!(
                "need m >= 0 and sigma2 >= 0, got m = {m}, sigma2 = {sigma2}"
            )));
        }
        levy.validate()?;
        let t = BernsteinTriplet { m, sigma2, levy };
        if !(t.phi(1.0) > 0.0) {
            return Err(Error::InvalidTriplet(
                "phi(1) must be strictly positive (degenerate triplet)".into(),
            ));
        }
        Ok(t)
    }

    /// Pure drift/diffusion triplet `φ(u) = m + σ² u`.
    pub fn linear(sigma2: f64, m: f64) -> Result<Self> {
        BernsteinTriplet::new(m, sigma2, LevyMeasure::Zero)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: BernsteinTriplet = serde_json::from_str(s)
            .map_err(|e| Error::InvalidTriplet(format!("config parse error: {e}")))?;
        BernsteinTriplet::new(raw.m, raw.sigma2, raw.levy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("triplet serializes")
    }

    /// Evaluate `φ(u)` for `u ≥ 0`.
    ///
    /// Closed forms for the zero, exponential and atomic families; adaptive
    /// quadrature of `∫ [y - (1 - e^{-uy})/u] Π(dy)` for tabulated data
    /// (the tail integral rewritten against the measure itself).
    pub fn phi(&self, u: f64) -> f64 {
        assert!(u >= 0.0, "phi is evaluated on the nonnegative half-line");
        self.m + self.sigma2 * u + self.levy_part(u)
    }

    fn levy_part(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        match &self.levy {
            LevyMeasure::Zero => 0.0,
            LevyMeasure::Exp { c, b } => c * u / (b * b * (u + b)),
            LevyMeasure::Atoms { atoms } => {
                atoms.iter().map(|a| a.w * em1p(u * a.y) / u).sum()
            }
            m @ LevyMeasure::Tabulated { .. } => m
                .quad(|y| em1p(u * y) / u)
                .expect("tabulated phi quadrature on a finite grid"),
        }
    }

    /// Analytic continuation `φ(-u)` for `u ≥ 0`.
    ///
    /// Returns `-∞` at and beyond the family's abscissa of convergence
    /// (`u ≥ b` for the exponential density). Not available for tabulated
    /// measures, which carry no analytic form.
    pub fn phi_continuation(&self, u: f64) -> Result<f64> {
        assert!(u >= 0.0);
        let base = self.m - self.sigma2 * u;
        match &self.levy {
            LevyMeasure::Zero => Ok(base),
            LevyMeasure::Exp { c, b } => {
                if u >= *b {
                    Ok(f64::NEG_INFINITY)
                } else {
                    Ok(base - c * u / (b * b * (b - u)))
                }
            }
            LevyMeasure::Atoms { atoms } => {
                if u == 0.0 {
                    return Ok(base);
                }
                // y - (e^{uy} - 1)/u per atom; -em1p(-a)/u with a = u y
                let s: f64 = atoms.iter().map(|a| -a.w * em1p(-u * a.y) / u).sum();
                Ok(base + s)
            }
            LevyMeasure::Tabulated { .. } => Err(Error::Unsupported(
                "analytic continuation requires an analytic Levy family, not tabulated data".into(),
            )),
        }
    }

    /// Decay threshold `d_φ = min{u ≥ 0 : φ(-u) = -∞ or φ(-u) = 0}`.
    ///
    /// `+∞` when no such point exists (constant positive continuation).
    /// Found by bisection on a bracketing interval; the doubling search is
    /// capped, and hitting the cap is reported as non-convergence with the
    /// bound in the message.
    pub fn d_phi(&self) -> Result<f64> {
        if self.m == 0.0 {
            // phi(-0) = phi(0) = 0 already
            return Ok(0.0);
        }
        let eval = |u: f64| self.phi_continuation(u);
        match &self.levy {
            LevyMeasure::Zero => {
                if self.sigma2 > 0.0 {
                    Ok(self.m / self.sigma2)
                } else {
                    Ok(f64::INFINITY)
                }
            }
            LevyMeasure::Exp { b, .. } => {
                // continuation decreases from m > 0 and diverges at b
                bisect_root(&eval, 0.0, *b)
            }
            LevyMeasure::Atoms { .. } => {
                let mut lo = 0.0;
                let mut hi = 1.0;
                while eval(hi)? > 0.0 {
                    lo = hi;
                    hi *= 2.0;
                    if hi > DPHI_SEARCH_BOUND {
                        return Err(Error::NonConvergence(format!(
                            "no continuation root below the search bound; d_phi >= {DPHI_SEARCH_BOUND:e}"
                        )));
                    }
                }
                bisect_root(&eval, lo, hi)
            }
            LevyMeasure::Tabulated { .. } => Err(Error::Unsupported(
                "d_phi requires the analytic continuation, unsupported for tabulated data".into(),
            )),
        }
    }

    /// `m_φ = (m + ∫_0^∞ Π̄(y) dy) / σ²`, `+∞` when `σ² = 0`.
    pub fn m_phi(&self) -> f64 {
        if self.sigma2 == 0.0 {
            return f64::INFINITY;
        }
        (self.m + self.levy.first_moment()) / self.sigma2
    }

    /// `σ₁`: the diffusion coefficient, or 1 when it vanishes.
    pub fn sigma1(&self) -> f64 {
        if self.sigma2 > 0.0 {
            self.sigma2
        } else {
            1.0
        }
    }

    /// Spectral-expansion threshold `t* = ½ log(1 + 1/σ₁)`.
    pub fn t_star(&self) -> f64 {
        0.5 * (1.0 + 1.0 / self.sigma1()).ln()
    }

    /// All derived scalar quantities in one struct.
    pub fn derived_constants(&self) -> DerivedConstants {
        DerivedConstants {
            sigma1: self.sigma1(),
            d_phi: self.d_phi().ok(),
            m_phi: self.m_phi(),
            pibar0: self.levy.first_moment(),
            t_star: self.t_star(),
        }
    }

    /// `φ(u)` in scaled double-double form. Exact-grade for the zero and
    /// exponential families, whose closed forms are rational in the
    /// triplet parameters; atoms and tabulated data fall back to the
    /// `f64` evaluation.
    pub fn phi_sdd(&self, u: f64) -> Sdd {
        match &self.levy {
            LevyMeasure::Zero => Sdd::from_f64(self.m).add(Sdd::from_f64(self.sigma2).mul_f64(u)),
            LevyMeasure::Exp { c, b } => {
                if u == 0.0 {
                    return Sdd::from_f64(self.m);
                }
                let jump = Sdd::from_f64(*c).mul_f64(u).div(
                    Sdd::from_f64(b * b).mul(Sdd::from_f64(u).add(Sdd::from_f64(*b))),
                );
                Sdd::from_f64(self.m)
                    .add(Sdd::from_f64(self.sigma2).mul_f64(u))
                    .add(jump)
            }
            _ => Sdd::from_f64(self.phi(u)),
        }
    }

    /// Bernstein-gamma values `W_φ(1), ..., W_φ(K+1)` where
    /// `W_φ(k+1) = φ(k) W_φ(k)` and `W_φ(1) = 1`.
    ///
    /// Carried as scaled double-doubles: the products overflow `f64` near
    /// `k ≈ 170` already for `φ(u) = u`, and the eigenfunction sums cancel
    /// deep enough that `f64`-rounded factors would poison them.
    pub fn gamma_table(&self, kmax: usize) -> Result<GammaTable> {
        let mut w = Vec::with_capacity(kmax + 1);
        w.push(Sdd::ONE);
        for k in 1..=kmax {
            let f = self.phi_sdd(k as f64);
            if !(f.signum() > 0.0) {
                return Err(Error::InvalidTriplet(format!(
                    "phi({k}) = {} is not strictly positive",
                    f.to_f64()
                )));
            }
            let prev = w[k - 1];
            w.push(prev.mul(f));
        }
        Ok(GammaTable { w })
    }

    /// `φ_β(u) = u log(1 + σ^{-2}) + log Γ(u+β+1) - log Γ(1+β) - log Γ(u+1)`.
    ///
    /// The Laplace exponent of the subordinator driving the Bochner
    /// subordination of the Laguerre chain.
    pub fn phi_beta(&self, beta: f64, u: f64) -> Result<f64> {
        if self.sigma2 == 0.0 {
            return Err(Error::Unsupported(
                "phi_beta requires sigma2 > 0".into(),
            ));
        }
        assert!(beta > 0.0 && u >= 0.0);
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(u * (1.0 + 1.0 / self.sigma2).ln()
            + ln_gamma(u + beta + 1.0)
            - ln_gamma(1.0 + beta)
            - ln_gamma(u + 1.0))
    }

    /// Tail integrals of `Π` entering row `n` of the chain generators:
    ///
    /// - `low[l] = ∫ e^{-ly}(1-e^{-y})^{n-l+1} Π(dy)` for `l ∈ [0, n-1]`,
    /// - `up     = ∫ (e^{-(n+1)y} - 1 + (n+1)y) Π(dy)`,
    /// - `diag   = ∫ (e^{-ny} - e^{-(n+1)y} - y) Π(dy)`.
    ///
    /// The exponential family reduces to Beta-function values through
    /// `∫_0^∞ e^{-ay}(1-e^{-y})^j dy = B(a, j+1)`; atoms are evaluated
    /// directly; tabulated densities go through adaptive quadrature.
    pub fn levy_generator_integrals(&self, n: usize) -> Result<LevyRowIntegrals> {
        let nf = n as f64;
        match &self.levy {
            LevyMeasure::Zero => Ok(LevyRowIntegrals {
                low: vec![0.0; n],
                up: 0.0,
                diag: 0.0,
            }),
            LevyMeasure::Exp { c, b } => {
                let low = (0..n)
                    .map(|l| c * ln_beta(l as f64 + b, nf - l as f64 + 2.0).exp())
                    .collect();
                let up = c * (1.0 / (b + nf + 1.0) - 1.0 / b + (nf + 1.0) / (b * b));
                let diag = c * (1.0 / (b + nf) - 1.0 / (b + nf + 1.0) - 1.0 / (b * b));
                Ok(LevyRowIntegrals { low, up, diag })
            }
            LevyMeasure::Atoms { atoms } => {
                let low = (0..n)
                    .map(|l| {
                        atoms
                            .iter()
                            .map(|a| {
                                let ln1me = (-(-a.y).exp_m1()).ln();
                                a.w * (-(l as f64) * a.y + (nf - l as f64 + 1.0) * ln1me).exp()
                            })
                            .sum()
                    })
                    .collect();
                let up = atoms.iter().map(|a| a.w * em1p((nf + 1.0) * a.y)).sum();
                let diag = atoms
                    .iter()
                    .map(|a| a.w * ((-nf * a.y).exp() - (-(nf + 1.0) * a.y).exp() - a.y))
                    .sum();
                Ok(LevyRowIntegrals { low, up, diag })
            }
            m @ LevyMeasure::Tabulated { .. } => {
                let mut low = Vec::with_capacity(n);
                for l in 0..n {
                    low.push(m.quad(|y| {
                        (-(l as f64) * y).exp() * (-(-y).exp_m1()).powf(nf - l as f64 + 1.0)
                    })?);
                }
                let up = m.quad(|y| em1p((nf + 1.0) * y))?;
                let diag = m.quad(|y| (-nf * y).exp() - (-(nf + 1.0) * y).exp() - y)?;
                Ok(LevyRowIntegrals { low, up, diag })
            }
        }
    }
}

/// `log B(a, b)` for positive arguments.
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn bisect_root(f: &impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<f64> {
    // f(lo) > 0 and f(hi) <= 0 (possibly -inf); tolerance near machine level
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Derived scalar quantities of a triplet.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivedConstants {
    pub sigma1: f64,
    /// `None` when the continuation is unsupported (tabulated family) or
    /// the root search hit its bound.
    pub d_phi: Option<f64>,
    pub m_phi: f64,
    /// `∫_0^∞ Π̄(y) dy`.
    pub pibar0: f64,
    pub t_star: f64,
}

/// Bernstein-gamma values `W_φ(1..=K+1)` in scaled double-double form.
#[derive(Debug, Clone)]
pub struct GammaTable {
    w: Vec<Sdd>,
}

impl GammaTable {
    /// `W_φ(j)` for `j ∈ [1, K+1]`.
    pub fn w(&self, j: usize) -> Sdd {
        assert!(j >= 1 && j <= self.w.len(), "W index {j} out of table");
        self.w[j - 1]
    }

    pub fn w_f64(&self, j: usize) -> f64 {
        self.w(j).to_f64()
    }

    /// Number of stored values, `K+1`.
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Row integrals of the Lévy measure; see
/// [`BernsteinTriplet::levy_generator_integrals`].
#[derive(Debug, Clone)]
pub struct LevyRowIntegrals {
    pub low: Vec<f64>,
    pub up: f64,
    pub diag: f64,
}
