//! Biorthogonal spectral system of the skip-free Laguerre chain.
//!
//! The chain is non-reversible whenever the Lévy part is nontrivial, so
//! instead of an orthogonal eigenbasis it carries a biorthogonal pair: the
//! polynomial eigenfunctions
//!
//! ```text
//! P_k(n) = (1 + σ₁^{-1})^{-k/2} Σ_{r=0}^k (-1)^r C(k, r) p_r(n) / W_φ(r+1)
//! ```
//!
//! with `K_t P_k = e^{-kt} P_k`, and co-eigenfunctions whose weighted form
//!
//! ```text
//! V_k(n) n_φ(n) = (1 + σ₁^{-1})^{k/2} Σ_{r=0}^{k∧n} (-1)^r
//!                 (k+n-r)! / ((k-r)!(n-r)!r!) · n_φ(k+n-r)
//! ```
//!
//! satisfies `⟨P_k, V_l⟩_{n_φ} = 1_{k=l}`. For `σ² > 0` the `P_k` form a
//! Bessel sequence with bound one and the heat kernel expands as
//! `K_t(n, l) = Σ_k e^{-kt} P_k(n) V_k(l) n_φ(l)` for
//! `t > t* = ½ log(1 + σ^{-2})`; below that threshold the expansion is
//! refused and callers are pointed at the uniformization oracle.
//!
//! All alternating sums are evaluated in scaled double-double form,
//! smallest terms first; the co-eigenfunctions are always handled through
//! their weighted form `V_k · n_φ`, which is the quantity every inner
//! product actually needs and which avoids dividing by geometrically small
//! weights.

use rayon::prelude::*;
use serde::Serialize;

use crate::bernstein::{BernsteinTriplet, GammaTable};
use crate::dd::{self, Sdd};
use crate::error::{Error, Result};
use crate::generator::{self, BoundaryPolicy};
use crate::invariant::{self, InvariantLaw};
use crate::reference;

/// Default safety margin over the spectral threshold `t*`.
pub const DEFAULT_THRESHOLD_MARGIN: f64 = 0.05;

/// Slack `ε` in the co-eigenfunction growth envelope
/// `‖V_k‖ ≤ C (1+σ^{-2})^{k/2} e^{εk}`.
const ENVELOPE_EPS: f64 = 0.01;

/// Relative tail target for truncated spectral sums.
const TAIL_TARGET: f64 = 1e-13;

/// Absolute term floor for the heat-kernel sum. Entries much smaller than
/// the expansion's cancellation scale are only meaningful in absolute
/// terms; once terms are this small the partial sum is as good as the
/// expansion can make it.
const HEAT_ABS_FLOOR: f64 = 1e-17;

/// An entry counts as clean when it exceeds its noise level by this
/// log-margin (a factor of 100).
const CLEAN_MARGIN_LN: f64 = 4.61;

/// Tables of eigenfunctions and weighted co-eigenfunctions for one triplet.
#[derive(Debug)]
pub struct SpectralSystem {
    pub triplet: BernsteinTriplet,
    /// Largest spectral index tabulated.
    pub kmax: usize,
    /// Largest state tabulated.
    pub n_max: usize,
    pub law: InvariantLaw,
    pub t_star: f64,
    /// Times below `t_star + threshold_margin` are refused.
    pub threshold_margin: f64,
    w: GammaTable,
    /// Largest index whose truncated inner products are trustworthy:
    /// the diagonal biorthogonality residual stays below `1e-9` for all
    /// `k ≤ k_usable`. Beyond it the product `P_k V_k n_φ` either leaks
    /// past `n_max` or its alternating sums exceed the precision of the
    /// invariant law, so coefficient-based synthesis truncates here.
    pub k_usable: usize,
    /// `P_k(n)`, indexed `[k][n]`.
    p_table: Vec<Vec<Sdd>>,
    /// Log of the noise level of each eigenfunction entry.
    p_noise_ln: Vec<Vec<f64>>,
    /// `V_k(n) n_φ(n)`, indexed `[k][n]`.
    vw_table: Vec<Vec<Sdd>>,
    /// Log of the noise level of each `vw` entry: its alternating sum
    /// cancels down from terms whose accuracy is set by the invariant
    /// law, so deep-cancelled entries can be noise-dominated.
    vw_noise_ln: Vec<Vec<f64>>,
    /// Log of the empirical constant of the co-eigenfunction envelope
    /// `|V_k(l)| n_φ(l) ≤ C e^{k(t*+ε)} √n_φ(l)`, fitted on clean entries.
    c_env_ln: f64,
}

/// Relative accuracy of the Bernstein-gamma products feeding the
/// eigenfunction sums (`φ` is evaluated in scaled double-double form for
/// the closed-form families).
const W_EPS_LN: f64 = -58.0;

/// Eigenfunction value and the log of its noise level.
fn eigen_p_terms(w: &GammaTable, sigma1: f64, k: usize, n: usize) -> (Sdd, f64) {
    let pref_ln = -0.5 * k as f64 * (1.0 + 1.0 / sigma1).ln();
    let pref = Sdd::from_ln(1.0, pref_ln);
    let mut max_ln = f64::NEG_INFINITY;
    let mut terms: Vec<Sdd> = (0..=k.min(n))
        .map(|r| {
            let t = dd::binomial(k, r)
                .mul(dd::falling(n, r))
                .div(w.w(r + 1));
            max_ln = max_ln.max(t.ln_abs());
            if r % 2 == 1 {
                t.neg()
            } else {
                t
            }
        })
        .collect();
    let value = dd::sum_sorted(&mut terms).mul(pref);
    (value, max_ln + pref_ln + W_EPS_LN)
}

/// Weighted co-eigenfunction value and the log of its noise level
/// (largest term magnitude times the law precision).
fn coeigen_vw_terms(law: &InvariantLaw, sigma1: f64, k: usize, n: usize) -> (Sdd, f64) {
    let pref_ln = 0.5 * k as f64 * (1.0 + 1.0 / sigma1).ln();
    let pref = Sdd::from_ln(1.0, pref_ln);
    let mut max_ln = f64::NEG_INFINITY;
    let mut terms: Vec<Sdd> = (0..=k.min(n))
        .map(|r| {
            let t = dd::factorial(k + n - r)
                .div(dd::factorial(k - r).mul(dd::factorial(n - r)).mul(dd::factorial(r)))
                .mul(law.weight_sdd(k + n - r));
            max_ln = max_ln.max(t.ln_abs());
            if r % 2 == 1 {
                t.neg()
            } else {
                t
            }
        })
        .collect();
    let value = dd::sum_sorted(&mut terms).mul(pref);
    (value, max_ln + pref_ln + law.precision_ln)
}

impl SpectralSystem {
    /// Tabulate `P_k` and `V_k n_φ` for `k ≤ kmax`, `n ≤ n_max`.
    ///
    /// The invariant law is resolved up to `n_max + kmax` (the largest
    /// index the co-eigenfunction sums reach) by the stationary solver.
    pub fn build(triplet: &BernsteinTriplet, kmax: usize, n_max: usize) -> Result<Self> {
        let law = invariant::nphi_solve_auto(triplet, n_max + kmax)?;
        Self::build_with_law(triplet, kmax, n_max, law)
    }

    /// As [`SpectralSystem::build`] with a caller-supplied law (it must
    /// resolve index `n_max + kmax`).
    pub fn build_with_law(
        triplet: &BernsteinTriplet,
        kmax: usize,
        n_max: usize,
        law: InvariantLaw,
    ) -> Result<Self> {
        if law.n_max() < n_max + kmax {
            return Err(Error::OutOfRange(format!(
                "law resolves {} states, co-eigenfunctions need {}",
                law.n_max(),
                n_max + kmax
            )));
        }
        let w = triplet.gamma_table(kmax.min(n_max) + 1)?;
        let sigma1 = triplet.sigma1();
        let p_pairs: Vec<Vec<(Sdd, f64)>> = (0..=kmax)
            .into_par_iter()
            .map(|k| {
                (0..=n_max)
                    .map(|n| eigen_p_terms(&w, sigma1, k, n))
                    .collect()
            })
            .collect();
        let p_table: Vec<Vec<Sdd>> = p_pairs
            .iter()
            .map(|row| row.iter().map(|(v, _)| *v).collect())
            .collect();
        let p_noise_ln: Vec<Vec<f64>> = p_pairs
            .iter()
            .map(|row| row.iter().map(|(_, n)| *n).collect())
            .collect();
        let pairs: Vec<Vec<(Sdd, f64)>> = (0..=kmax)
            .into_par_iter()
            .map(|k| {
                (0..=n_max)
                    .map(|n| coeigen_vw_terms(&law, sigma1, k, n))
                    .collect()
            })
            .collect();
        let vw_table: Vec<Vec<Sdd>> = pairs
            .iter()
            .map(|row| row.iter().map(|(v, _)| *v).collect())
            .collect();
        let vw_noise_ln: Vec<Vec<f64>> = pairs
            .iter()
            .map(|row| row.iter().map(|(_, n)| *n).collect())
            .collect();
        let t_star = triplet.t_star();
        // self-validate the coefficient range on the diagonal
        let mut k_usable = 0;
        for k in 0..=kmax {
            let mut terms: Vec<Sdd> = (0..=n_max)
                .map(|n| p_table[k][n].mul(vw_table[k][n]))
                .collect();
            let resid = dd::sum_sorted(&mut terms).to_f64() - 1.0;
            if resid.abs() > 1e-9 {
                break;
            }
            k_usable = k;
        }
        // empirical envelope constant over entries above their noise
        // floor; for strongly non-reversible chains the co-eigenfunction
        // growth can sit far above its asymptotic rate at moderate k, so
        // the constant absorbs that pre-asymptotic excess
        let mut c_env_ln = f64::NEG_INFINITY;
        for (k, row) in vw_table.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                let v_ln = v.ln_abs();
                if v_ln > vw_noise_ln[k][l] + CLEAN_MARGIN_LN {
                    c_env_ln = c_env_ln.max(
                        v_ln - 0.5 * law.log_weight(l) - k as f64 * (t_star + ENVELOPE_EPS),
                    );
                }
            }
        }
        Ok(SpectralSystem {
            triplet: triplet.clone(),
            kmax,
            n_max,
            law,
            t_star,
            threshold_margin: DEFAULT_THRESHOLD_MARGIN,
            k_usable,
            w,
            p_table,
            p_noise_ln,
            vw_table,
            vw_noise_ln,
            c_env_ln,
        })
    }

    pub fn gamma_table(&self) -> &GammaTable {
        &self.w
    }

    /// `P_k(n)`; saturates `f64` for extreme indices, use [`Self::p_sdd`]
    /// when the raw scale matters.
    pub fn eigenfunction_p(&self, k: usize, n: usize) -> f64 {
        self.p_sdd(k, n).to_f64()
    }

    pub fn p_sdd(&self, k: usize, n: usize) -> Sdd {
        self.p_table[k][n]
    }

    /// `V_k(n)`, reconstructed by dividing the weighted form by `n_φ(n)`.
    pub fn coeigenfunction_v(&self, k: usize, n: usize) -> f64 {
        self.vw_table[k][n]
            .div(self.law.weight_sdd(n))
            .to_f64()
    }

    /// `V_k(n) n_φ(n)`, the form every inner product consumes.
    pub fn v_weighted(&self, k: usize, n: usize) -> Sdd {
        self.vw_table[k][n]
    }

    /// `⟨P_k, V_l⟩_{n_φ} - 1_{k=l}` over the truncation.
    pub fn biorthogonality_check(&self, k: usize, l: usize) -> f64 {
        let mut terms: Vec<Sdd> = (0..=self.n_max)
            .map(|n| self.p_table[k][n].mul(self.vw_table[l][n]))
            .collect();
        let ip = dd::sum_sorted(&mut terms);
        let target = if k == l { 1.0 } else { 0.0 };
        ip.to_f64() - target
    }

    /// `‖P_k‖_{ℓ²(n_φ)}` over the truncation.
    pub fn p_norm(&self, k: usize) -> f64 {
        let mut terms: Vec<Sdd> = (0..=self.n_max)
            .map(|n| {
                let p = self.p_table[k][n];
                p.mul(p).mul(self.law.weight_sdd(n))
            })
            .collect();
        dd::sum_sorted(&mut terms).to_f64().sqrt()
    }

    fn check_threshold(&self, t: f64) -> Result<()> {
        if self.triplet.sigma2 == 0.0 {
            return Err(Error::Unsupported(
                "spectral expansion requires sigma2 > 0".into(),
            ));
        }
        let thresh = self.t_star + self.threshold_margin;
        if t < thresh {
            return Err(Error::Unsupported(format!(
                "t = {t} is below the spectral threshold {thresh:.6}; \
                 use the uniformization oracle for short times"
            )));
        }
        Ok(())
    }

    /// Transition probability `K_t(n, l)` by spectral expansion.
    ///
    /// Requires `σ² > 0` and `t ≥ t* + margin`. The expansion is summed
    /// until eight consecutive terms fall below the tail target (relative
    /// to the partial sum, with an absolute floor: entries far in the tail
    /// of the kernel are only computable in absolute terms), with the
    /// analytic envelope `e^{-kt} c (1+σ^{-2})^{k/2} e^{εk} / √n_φ(n)` as
    /// a fallback stopping bound; if the tabulated `kmax` is exhausted
    /// first the call reports non-convergence.
    pub fn heat_kernel(&self, t: f64, n: usize, l: usize) -> Result<f64> {
        self.heat_kernel_with_error(t, n, l).map(|(v, _)| v)
    }

    /// As [`Self::heat_kernel`], also returning the entry's accumulated
    /// absolute uncertainty bound (truncation-noise of the kept terms plus
    /// envelope bounds of the skipped ones).
    pub fn heat_kernel_with_error(&self, t: f64, n: usize, l: usize) -> Result<(f64, f64)> {
        self.check_threshold(t)?;
        let mut partial = Sdd::ZERO;
        let mut noise_est = 0.0f64;
        let mut quiet = 0usize;
        let mut settled = false;
        let ln_tail = TAIL_TARGET.ln();
        let ln_floor = HEAT_ABS_FLOOR.ln();
        for k in 0..=self.kmax {
            let p = self.p_table[k][n];
            let vw = self.vw_table[k][l];
            let w_ln = -(k as f64) * t;
            let term = Sdd::from_ln(1.0, w_ln).mul(p).mul(vw);
            partial = partial.add(term);
            // noise of the term: each factor's own noise times the other
            noise_est += (w_ln + p.ln_abs() + self.vw_noise_ln[k][l]).exp()
                + (w_ln + self.p_noise_ln[k][n] + vw.ln_abs()).exp();
            let cutoff = if partial.is_zero() {
                ln_floor
            } else {
                (partial.ln_abs() + ln_tail).max(ln_floor)
            };
            if term.ln_abs() < cutoff {
                quiet += 1;
                if quiet >= 8 {
                    settled = true;
                    break;
                }
            } else {
                quiet = 0;
            }
            if k >= 8 && self.envelope_exhausted(t, n, l, k) {
                settled = true;
                break;
            }
        }
        if !settled {
            return Err(Error::NonConvergence(format!(
                "heat kernel entry ({n}, {l}) at t = {t} did not settle within kmax = {}",
                self.kmax
            )));
        }
        let value = partial.to_f64();
        // refuse entries whose surviving value does not dominate the
        // accumulated term noise: the expansion passed through a hump the
        // working precision cannot cancel
        if noise_est > 1e-9 && value.abs() < 30.0 * noise_est {
            return Err(Error::NonConvergence(format!(
                "heat kernel entry ({n}, {l}) at t = {t} is noise-limited \
                 (value {value:.2e}, noise estimate {noise_est:.2e})"
            )));
        }
        Ok((value, noise_est))
    }

    /// Log of the envelope bound `C e^{k(t*+ε)} √n_φ(l)` on `|V_k n_φ|(l)`.
    fn vw_envelope_ln(&self, k: usize, l: usize) -> f64 {
        self.c_env_ln + k as f64 * (self.t_star + ENVELOPE_EPS) + 0.5 * self.law.log_weight(l)
    }

    /// `true` once the analytic tail envelope at index `k` is below the
    /// absolute tail target for the entry `(n, l)`.
    fn envelope_exhausted(&self, t: f64, n: usize, l: usize, k: usize) -> bool {
        let rate = t - self.t_star - ENVELOPE_EPS;
        if rate <= 0.0 {
            return false;
        }
        let amp =
            self.c_env_ln + 0.5 * self.law.log_weight(l) - 0.5 * self.law.log_weight(n);
        let geometric = -(-rate).exp_m1(); // 1 - e^{-rate}
        amp - (k as f64 + 1.0) * rate - geometric.ln() < TAIL_TARGET.ln()
    }

    /// Geometric bound on the truncated heat-kernel tail beyond `k_used`.
    pub fn heat_kernel_tail_bound(&self, t: f64, n: usize, l: usize, k_used: usize) -> f64 {
        let rate = t - self.t_star - ENVELOPE_EPS;
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        let amp =
            self.c_env_ln + 0.5 * self.law.log_weight(l) - 0.5 * self.law.log_weight(n);
        (-(k_used as f64 + 1.0) * rate + amp).exp() / (1.0 - (-rate).exp())
    }

    /// Spectral coefficients `⟨f, V_k⟩_{n_φ}` of a vector on `[0..n_max]`,
    /// for `k ≤ k_usable` (higher indices are not resolvable on this
    /// truncation and are left at zero).
    pub fn coefficients(&self, f: &[f64]) -> SpectralCoeffs {
        assert_eq!(f.len(), self.n_max + 1, "function must live on [0..n_max]");
        let coeffs = (0..=self.kmax)
            .map(|k| {
                if k > self.k_usable {
                    return Sdd::ZERO;
                }
                let mut terms: Vec<Sdd> = f
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(n, &v)| self.vw_table[k][n].mul_f64(v))
                    .collect();
                dd::sum_sorted(&mut terms)
            })
            .collect();
        SpectralCoeffs { coeffs }
    }

    /// Synthesize `Σ_{k ≤ k_usable} weight(k) ⟨f, V_k⟩ P_k` on the
    /// truncation.
    pub fn synthesize(&self, coeffs: &SpectralCoeffs, weight_ln: impl Fn(usize) -> f64) -> Vec<f64> {
        let kt = self.k_usable.min(coeffs.coeffs.len() - 1);
        (0..=self.n_max)
            .map(|n| {
                let mut terms: Vec<Sdd> = (0..=kt)
                    .map(|k| {
                        Sdd::from_ln(1.0, weight_ln(k))
                            .mul(coeffs.coeffs[k])
                            .mul(self.p_table[k][n])
                    })
                    .collect();
                dd::sum_sorted(&mut terms).to_f64()
            })
            .collect()
    }

    /// `K_t f` by spectral synthesis; same domain restrictions as
    /// [`Self::heat_kernel`].
    pub fn semigroup_apply(&self, f: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_threshold(t)?;
        let coeffs = self.coefficients(f);
        Ok(self.synthesize(&coeffs, |k| -(k as f64) * t))
    }

    /// Subordinated semigroup `Σ_k e^{-t φ_β(k)} ⟨f, V_k⟩ P_k`, valid for
    /// `σ² > 0`, `β > 0` and `t > ½`.
    pub fn subordinated_apply(&self, f: &[f64], t: f64, beta: f64) -> Result<Vec<f64>> {
        if self.triplet.sigma2 == 0.0 {
            return Err(Error::Unsupported(
                "subordinated expansion requires sigma2 > 0".into(),
            ));
        }
        if !(beta > 0.0) {
            return Err(Error::Unsupported("beta must be positive".into()));
        }
        if t <= 0.5 {
            return Err(Error::Unsupported(format!(
                "subordinated expansion requires t > 1/2, got {t}"
            )));
        }
        let phis: Vec<f64> = (0..=self.kmax)
            .map(|k| self.triplet.phi_beta(beta, k as f64))
            .collect::<Result<_>>()?;
        let coeffs = self.coefficients(f);
        Ok(self.synthesize(&coeffs, |k| -t * phis[k]))
    }

    /// Evolve a vector at any `t ≥ 0`: spectral expansion above the
    /// threshold, uniformization on the truncated chain below it.
    pub fn evolve(&self, f: &[f64], t: f64) -> Result<Vec<f64>> {
        if self.triplet.sigma2 > 0.0 && t >= self.t_star + self.threshold_margin {
            return self.semigroup_apply(f, t);
        }
        let gen = generator::build_lphi(&self.triplet, self.n_max, BoundaryPolicy::SubStochastic)?;
        let out = reference::expm_apply_block(&gen, t, &[f.to_vec()], reference::UNIFORMIZATION_TOL)?;
        Ok(out.into_iter().next().unwrap())
    }

    /// `ℓ²(n_φ)` norm over the truncation.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        let mut terms: Vec<Sdd> = f
            .iter()
            .enumerate()
            .map(|(n, &v)| self.law.weight_sdd(n).mul_f64(v * v))
            .collect();
        dd::sum_sorted(&mut terms).to_f64().sqrt()
    }

    /// Mean of `f` under the invariant law, over the truncation.
    pub fn mean(&self, f: &[f64]) -> f64 {
        let mut terms: Vec<Sdd> = f
            .iter()
            .enumerate()
            .map(|(n, &v)| self.law.weight_sdd(n).mul_f64(v))
            .collect();
        dd::sum_sorted(&mut terms).to_f64()
    }
}

/// Coefficients `⟨f, V_k⟩_{n_φ}` for `k ≤ kmax`.
#[derive(Debug, Clone)]
pub struct SpectralCoeffs {
    coeffs: Vec<Sdd>,
}

impl SpectralCoeffs {
    pub fn get(&self, k: usize) -> f64 {
        self.coeffs[k].to_f64()
    }
}

/// Hypocoercive prefactor `√((m_φ+1)(1+σ²)/(σ²(d_φ+1)))` of the
/// exponential `ℓ²(n_φ)` convergence estimate.
///
/// Requires `σ² > 0`, a finite positive `d_φ`, and a finite Lévy first
/// moment (which the representable families always have).
pub fn hypocoercive_constant(triplet: &BernsteinTriplet) -> Result<f64> {
    if triplet.sigma2 == 0.0 {
        return Err(Error::Unsupported(
            "hypocoercive estimate requires sigma2 > 0".into(),
        ));
    }
    let d = triplet.d_phi()?;
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Unsupported(format!(
            "hypocoercive estimate requires 0 < d_phi < inf, got {d}"
        )));
    }
    let m = triplet.m_phi();
    Ok(((m + 1.0) * (1.0 + triplet.sigma2) / (triplet.sigma2 * (d + 1.0))).sqrt())
}

/// The two canonical entropy functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiEntropy {
    /// `Φ(x) = x²`; the entropy is the variance.
    Square,
    /// `Φ(x) = x log x` on positive functions; Boltzmann entropy.
    XLogX,
}

impl PhiEntropy {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            PhiEntropy::Square => x * x,
            PhiEntropy::XLogX => {
                if x <= 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
        }
    }
}

/// `Ent_μ(f) = μΦ(f) - Φ(μf)` under the invariant law, truncated.
pub fn entropy(sys: &SpectralSystem, f: &[f64], phi: PhiEntropy) -> f64 {
    let phi_f: Vec<f64> = f.iter().map(|&v| phi.apply(v)).collect();
    sys.mean(&phi_f) - phi.apply(sys.mean(f))
}

/// One grid point of an entropy-decay check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntropyPoint {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; the decay estimate holds when this is nonnegative.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyDecayReport {
    pub points: Vec<EntropyPoint>,
    pub passed: bool,
}

/// Check `Ent(K_t^{φ,τ_β} f) ≤ e^{-φ_β(1)(t-1)_+} Ent(f)` on a grid.
///
/// All grid times must satisfy the subordinated-expansion condition
/// `t > ½`; for the `x log x` entropy the input must be strictly positive.
pub fn entropy_decay_check(
    sys: &SpectralSystem,
    f: &[f64],
    beta: f64,
    phi: PhiEntropy,
    t_grid: &[f64],
) -> Result<EntropyDecayReport> {
    if phi == PhiEntropy::XLogX && f.iter().any(|&v| v <= 0.0) {
        return Err(Error::Unsupported(
            "x log x entropy needs a strictly positive function".into(),
        ));
    }
    let ent0 = entropy(sys, f, phi);
    let rate = sys.triplet.phi_beta(beta, 1.0)?;
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let evolved = sys.subordinated_apply(f, t, beta)?;
        // spectral synthesis can leave harmless negative dust on a positive
        // function; clamp before taking x log x
        let evolved: Vec<f64> = if phi == PhiEntropy::XLogX {
            evolved.iter().map(|&v| v.max(1e-300)).collect()
        } else {
            evolved
        };
        let lhs = entropy(sys, &evolved, phi);
        let rhs = (-rate * (t - 1.0).max(0.0)).exp() * ent0;
        points.push(EntropyPoint {
            t,
            lhs,
            rhs,
            margin: rhs - lhs,
        });
    }
    let passed = points.iter().all(|p| p.margin >= -1e-10 * p.rhs.abs().max(1.0));
    Ok(EntropyDecayReport { points, passed })
}

/// Spectral tables as CSV `(k, n, P, V)`.
pub fn spectral_csv(sys: &SpectralSystem) -> String {
    let mut out = String::from("k,n,p,v\n");
    for k in 0..=sys.kmax {
        for n in 0..=sys.n_max {
            out.push_str(&format!(
                "{k},{n},{:.16e},{:.16e}\n",
                sys.eigenfunction_p(k, n),
                sys.coeigenfunction_v(k, n)
            ));
        }
    }
    out
}
