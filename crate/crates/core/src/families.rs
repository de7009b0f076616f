//! Three fully worked chain families with closed-form golden values, plus
//! a terminating hypergeometric evaluator used to express them.
//!
//! - **Meixner family** `φ(u) = σ²u + m`: the reversible birth-death
//!   Laguerre chain. Invariant law negative binomial, eigenfunctions
//!   Meixner polynomials (a terminating ₂F₁), orthogonal with norms
//!   `‖P_k‖² = 1/c_k(β)`, `β = m/σ²`.
//! - **Perturbed family** `φ_m(u) = (u+m+1)(u+m-1)/(u+m)`, `m > 1`:
//!   diffusion plus exponential jump tail; the simplest genuinely
//!   non-reversible case, with `d_φ = m - 1` and `m_φ = m`.
//! - **Beta family** `φ_m(u) = u/(m(u+m))`, `m > 1`: pure jump
//!   (compound Poisson with exponential jumps), `σ² = 0`, bounded `φ`.
//!
//! The golden suites rerun each family's closed forms against the generic
//! machinery and report residuals. Where a closed display disagrees with
//! the general construction by a normalization (these exist in transcribed
//! sources), the suite asserts the rederived relation and says so in the
//! check's note.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::bernstein::{BernsteinTriplet, LevyMeasure};
use crate::dd::{self, Sdd};
use crate::error::{Error, Result};
use crate::generator::{self, BoundaryPolicy};
use crate::invariant::{self, LawMethod};
use crate::reference;
use crate::spectral::{self, SpectralSystem};

/// Drift/diffusion triplet `φ(u) = σ²u + m` (requires `σ² > 0`).
pub fn meixner_chain(sigma2: f64, m: f64) -> Result<BernsteinTriplet> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidTriplet(
            "the Meixner family needs sigma2 > 0".into(),
        ));
    }
    BernsteinTriplet::linear(sigma2, m)
}

/// `φ_m(u) = (u+m+1)(u+m-1)/(u+m)` via the triplet
/// `(σ² = 1, m = (m²-1)/m, Π(dy) = m e^{-my} dy)`, `m > 1`.
pub fn perturbed_chain(mm: f64) -> Result<BernsteinTriplet> {
    if !(mm > 1.0) {
        return Err(Error::InvalidTriplet(
            "the perturbed family needs m > 1".into(),
        ));
    }
    BernsteinTriplet::new(
        (mm * mm - 1.0) / mm,
        1.0,
        LevyMeasure::Exp { c: mm, b: mm },
    )
}

/// `φ_m(u) = u/(m(u+m))` via the triplet
/// `(σ² = 0, m = 0, Π(dy) = m e^{-my} dy)`, `m > 1`.
pub fn beta_chain(mm: f64) -> Result<BernsteinTriplet> {
    if !(mm > 1.0) {
        return Err(Error::InvalidTriplet("the Beta family needs m > 1".into()));
    }
    BernsteinTriplet::new(0.0, 0.0, LevyMeasure::Exp { c: mm, b: mm })
}

/// `c_k(a) = Γ(a+k+1)/(Γ(a+1)Γ(k+1))`.
pub fn c_k(a: f64, k: usize) -> f64 {
    (ln_gamma(a + k as f64 + 1.0) - ln_gamma(a + 1.0) - ln_gamma(k as f64 + 1.0)).exp()
}

/// Log-weight of the Meixner invariant law: negative binomial with
/// `p = σ²/(1+σ²)` and shape `β + 1`, `β = m/σ²`.
pub fn meixner_log_weight(sigma2: f64, m: f64, n: usize) -> f64 {
    let beta = m / sigma2;
    let p = sigma2 / (1.0 + sigma2);
    ln_gamma(n as f64 + beta + 1.0) - ln_gamma(beta + 1.0) - ln_gamma(n as f64 + 1.0)
        + n as f64 * p.ln()
        + (beta + 1.0) * (1.0 - p).ln()
}

/// Terminating hypergeometric sum
/// `Σ_{r=0}^R Π_i (a_i)_r / Π_j (c_j)_r · x^r / r!`,
/// where `R` is fixed by the most binding nonpositive-integer upper
/// parameter. Non-terminating parameter sets are refused: this evaluator
/// exists for the polynomial identities of the example families.
pub fn hypergeometric_terminating(upper: &[f64], lower: &[f64], x: f64) -> Result<f64> {
    let r_max = upper
        .iter()
        .filter(|a| **a <= 0.0 && (a.round() - **a).abs() < 1e-9)
        .map(|a| (-a.round()) as usize)
        .min()
        .ok_or_else(|| {
            Error::Unsupported(
                "series does not terminate: no nonpositive-integer upper parameter".into(),
            )
        })?;
    for c in lower {
        if *c <= 0.0 && (c.round() - *c).abs() < 1e-9 && ((-c.round()) as usize) < r_max {
            return Err(Error::Unsupported(format!(
                "lower parameter {c} hits zero before the series terminates"
            )));
        }
    }
    let mut term = Sdd::ONE;
    let mut terms = vec![term];
    for r in 0..r_max {
        let rf = r as f64;
        let mut factor = x / (rf + 1.0);
        for a in upper {
            factor *= a + rf;
        }
        for c in lower {
            factor /= c + rf;
        }
        term = term.mul_f64(factor);
        terms.push(term);
    }
    Ok(dd::sum_sorted(&mut terms).to_f64())
}

/// One golden check: a named residual against its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct GoldenCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl GoldenCheck {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        GoldenCheck {
            name: name.into(),
            residual,
            tolerance,
            passed: residual.is_finite() && residual <= tolerance,
            note: None,
        }
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Golden report for one family run.
#[derive(Debug, Clone, Serialize)]
pub struct GoldenReport {
    pub family: String,
    pub params: serde_json::Value,
    pub checks: Vec<GoldenCheck>,
    pub passed: bool,
}

impl GoldenReport {
    fn finish(family: &str, params: serde_json::Value, checks: Vec<GoldenCheck>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        GoldenReport {
            family: family.into(),
            params,
            checks,
            passed,
        }
    }
}

/// The preconfigured families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    Meixner31,
    Perturbed32,
    Beta33,
}

/// Run the family's closed-form identities against the generic machinery.
pub fn golden_suite(family: Family, params: &[f64]) -> Result<GoldenReport> {
    match family {
        Family::Meixner31 => {
            let (s2, m) = match params {
                [] => (1.0, 2.0),
                [s2, m] => (*s2, *m),
                _ => {
                    return Err(Error::Unsupported(
                        "Meixner golden suite takes [sigma2, m]".into(),
                    ))
                }
            };
            golden_meixner(s2, m)
        }
        Family::Perturbed32 => {
            let mm = match params {
                [] => 3.0,
                [mm] => *mm,
                _ => return Err(Error::Unsupported("perturbed golden suite takes [m]".into())),
            };
            golden_perturbed(mm)
        }
        Family::Beta33 => {
            let mm = match params {
                [] => 2.0,
                [mm] => *mm,
                _ => return Err(Error::Unsupported("Beta golden suite takes [m]".into())),
            };
            golden_beta(mm)
        }
    }
}

pub fn golden_meixner(sigma2: f64, m: f64) -> Result<GoldenReport> {
    let triplet = meixner_chain(sigma2, m)?;
    let beta = m / sigma2;
    let mut checks = Vec::new();

    // invariant law vs the negative-binomial closed form
    let n_law = 400;
    let gen = generator::build_lphi(&triplet, n_law, BoundaryPolicy::Reflecting)?;
    let law = invariant::nphi_solve(&gen)?;
    let sup = (0..=n_law)
        .map(|n| (law.weight(n) - meixner_log_weight(sigma2, m, n).exp()).abs())
        .fold(0.0, f64::max);
    checks.push(GoldenCheck::new("invariant_negative_binomial_sup", sup, 1e-12));
    if (sigma2 - 1.0).abs() < 1e-14 {
        // at sigma2 = 1 the closed form reduces to
        // Gamma(n+beta+1)/(Gamma(beta+1) n!) 2^{-n-beta-1}
        let sup = (0..=60)
            .map(|n| {
                let printed = (ln_gamma(n as f64 + beta + 1.0)
                    - ln_gamma(beta + 1.0)
                    - ln_gamma(n as f64 + 1.0)
                    - (n as f64 + beta + 1.0) * 2f64.ln())
                .exp();
                (law.weight(n) - printed).abs()
            })
            .fold(0.0, f64::max);
        checks.push(GoldenCheck::new("invariant_dyadic_display", sup, 1e-12));
    }

    // Bernstein-gamma vs sigma^{2k} Gamma(k+1+beta)/Gamma(1+beta)
    let w = triplet.gamma_table(20)?;
    let sup = (0..=20usize)
        .map(|k| {
            let expect =
                k as f64 * sigma2.ln() + ln_gamma(k as f64 + 1.0 + beta) - ln_gamma(1.0 + beta);
            ((w.w(k + 1).ln_abs() - expect) / expect.abs().max(1.0)).abs()
        })
        .fold(0.0, f64::max);
    checks.push(GoldenCheck::new("gamma_table_closed_form", sup, 1e-12));

    // spectral: eigenfunctions as terminating 2F1, norms, co-eigen ratio
    let sys = SpectralSystem::build_with_law(&triplet, 12, 200, law)?;
    let mut sup_p = 0.0f64;
    for k in 0..=12usize {
        for n in 0..=12usize {
            let f21 = hypergeometric_terminating(
                &[-(n as f64), -(k as f64)],
                &[beta + 1.0],
                -1.0 / sigma2,
            )?;
            let expect = (1.0 + 1.0 / sigma2).powf(-(k as f64) / 2.0) * f21;
            let got = sys.eigenfunction_p(k, n);
            sup_p = sup_p.max((got - expect).abs() / expect.abs().max(1.0));
        }
    }
    checks.push(GoldenCheck::new("eigenfunction_2f1", sup_p, 1e-10));

    let sup_norm = (0..=12usize)
        .map(|k| {
            let n2 = sys.p_norm(k).powi(2);
            let expect = 1.0 / c_k(beta, k);
            ((n2 - expect) / expect).abs()
        })
        .fold(0.0, f64::max);
    checks.push(GoldenCheck::new("norm_identity_ck", sup_norm, 1e-9));

    let sup_v = {
        // residual relative to the row scale: near exact polynomial zeros
        // the co-eigenfunction value is limited by the law's precision
        let mut sup = 0.0f64;
        for k in 1..=10usize {
            let ck = c_k(beta, k);
            let scale = (0..=30)
                .map(|n| (ck * sys.eigenfunction_p(k, n)).abs())
                .fold(1.0, f64::max);
            for n in 0..=30usize {
                let got = sys.coeigenfunction_v(k, n);
                let expect = ck * sys.eigenfunction_p(k, n);
                sup = sup.max((got - expect).abs() / scale);
            }
        }
        sup
    };
    checks.push(
        GoldenCheck::new("coeigen_orthogonal_partner", sup_v, 5e-7)
            .with_note("row-scale relative; limited by law precision at polynomial zeros"),
    );

    Ok(GoldenReport::finish(
        "meixner",
        serde_json::json!({"sigma2": sigma2, "m": m}),
        checks,
    ))
}

pub fn golden_perturbed(mm: f64) -> Result<GoldenReport> {
    let triplet = perturbed_chain(mm)?;
    let mut checks = Vec::new();

    // rational form of phi
    let sup = [0.0, 0.5, 1.0, 2.5, 10.0]
        .iter()
        .map(|&u| {
            let expect = (u + mm + 1.0) * (u + mm - 1.0) / (u + mm);
            ((triplet.phi(u) - expect) / expect.max(1.0)).abs()
        })
        .fold(0.0, f64::max);
    checks.push(GoldenCheck::new("phi_rational_form", sup, 1e-12));

    // derived constants
    let d = triplet.d_phi()?;
    checks.push(GoldenCheck::new("d_phi", (d - (mm - 1.0)).abs(), 1e-9));
    checks.push(GoldenCheck::new("m_phi", (triplet.m_phi() - mm).abs(), 1e-12));
    let hypo = spectral::hypocoercive_constant(&triplet)?;
    let expect = (2.0 * (mm + 1.0) / mm).sqrt();
    checks.push(GoldenCheck::new(
        "hypocoercive_constant",
        (hypo - expect).abs(),
        1e-11,
    ));

    // W(2) = phi(1) = m(m+2)/(m+1)
    let w = triplet.gamma_table(1)?;
    checks.push(GoldenCheck::new(
        "w2_value",
        (w.w_f64(2) - mm * (mm + 2.0) / (mm + 1.0)).abs(),
        1e-12,
    ));

    // generator rows against the quadrature oracle
    let g = generator::build_gphi(&triplet, 25, BoundaryPolicy::SubStochastic)?;
    let mut sup = 0.0f64;
    for n in [2usize, 7, 20] {
        for l in 0..n - 1 {
            let binom = (ln_gamma(n as f64 + 2.0)
                - ln_gamma(l as f64 + 1.0)
                - ln_gamma((n - l) as f64 + 2.0))
            .exp();
            let oracle = reference::integrate_semi_infinite(|y| {
                mm * (-mm * y).exp()
                    * (-(l as f64) * y).exp()
                    * (1.0 - (-y).exp()).powi((n - l + 1) as i32)
            })? * binom
                / (n as f64 + 1.0);
            sup = sup.max((g.entry(n, l) - oracle).abs() / oracle.max(1e-30));
        }
    }
    checks.push(GoldenCheck::new("generator_vs_quadrature", sup, 1e-8));

    // eigenfunctions against the hypergeometric display; the display is
    // consistent with the general construction only after an overall 1/m
    // normalization, which is what is asserted here
    let sys = SpectralSystem::build(&triplet, 10, 150)?;
    let mut sup_p = 0.0f64;
    for k in 0..=8usize {
        for n in 0..=8usize {
            let a = hypergeometric_terminating(&[-(k as f64), -(n as f64)], &[mm + 1.0], -1.0)?;
            let b = hypergeometric_terminating(&[-(k as f64), -(n as f64)], &[mm + 2.0], -1.0)?;
            let display = 2f64.powf(-(k as f64) / 2.0) * ((mm + 1.0) * a - b);
            let got = sys.eigenfunction_p(k, n) * mm;
            sup_p = sup_p.max((got - display).abs() / display.abs().max(1.0));
        }
    }
    checks.push(
        GoldenCheck::new("eigenfunction_2f1_combination", sup_p, 1e-9)
            .with_note("display normalized by 1/m against the general construction"),
    );

    // biorthogonality of the non-reversible pair
    let sup_b = {
        let mut sup = 0.0f64;
        for k in 0..=8usize {
            for l in 0..=8usize {
                sup = sup.max(sys.biorthogonality_check(k, l).abs());
            }
        }
        sup
    };
    checks.push(GoldenCheck::new("biorthogonality", sup_b, 1e-7));

    Ok(GoldenReport::finish(
        "perturbed",
        serde_json::json!({"m": mm}),
        checks,
    ))
}

pub fn golden_beta(mm: f64) -> Result<GoldenReport> {
    let triplet = beta_chain(mm)?;
    let mut checks = Vec::new();

    // W table vs Gamma(m+1)Gamma(k+1)/(m^k Gamma(k+1+m))
    let w = triplet.gamma_table(30)?;
    let sup = (0..=30usize)
        .map(|k| {
            let expect = ln_gamma(mm + 1.0) + ln_gamma(k as f64 + 1.0)
                - k as f64 * mm.ln()
                - ln_gamma(k as f64 + 1.0 + mm);
            (w.w(k + 1).ln_abs() - expect).abs()
        })
        .fold(0.0, f64::max);
    checks.push(GoldenCheck::new("gamma_table_closed_form", sup, 1e-10));

    // series and solve agree; mass and positivity
    let n_law = 300;
    let series = invariant::nphi_series(&triplet, n_law)?;
    let gen = generator::build_lphi(&triplet, n_law, BoundaryPolicy::Reflecting)?;
    let solve = invariant::nphi_solve(&gen)?;
    let sup = (0..=n_law)
        .map(|n| (series.weight(n) - solve.weight(n)).abs())
        .fold(0.0, f64::max);
    checks.push(GoldenCheck::new("series_vs_solve_sup", sup, 1e-8));
    checks.push(GoldenCheck::new(
        "series_mass",
        (series.mass() - 1.0).abs(),
        1e-10,
    ));
    assert_eq!(series.method, LawMethod::Series);

    // eigenfunctions as the terminating 3F1-type sum, sigma1 = 1
    let sys = SpectralSystem::build(&triplet, 10, 120)?;
    let mut sup_p = 0.0f64;
    for k in 0..=8usize {
        for n in 0..=8usize {
            let f31 = hypergeometric_terminating(
                &[-(k as f64), -(n as f64), mm + 1.0],
                &[1.0],
                -mm,
            )?;
            let expect = 2f64.powf(-(k as f64) / 2.0) * f31;
            let got = sys.eigenfunction_p(k, n);
            sup_p = sup_p.max((got - expect).abs() / expect.abs().max(1.0));
        }
    }
    checks.push(
        GoldenCheck::new("eigenfunction_3f1", sup_p, 1e-8)
            .with_note("prefactor read as 2^{-k/2}, matching the general construction"),
    );

    // moment certificate through k = 10
    let certs = invariant::moment_certificate(&solve, &triplet, 10)?;
    let sup = certs
        .iter()
        .filter(|c| c.conclusive)
        .map(|c| c.residual)
        .fold(0.0, f64::max);
    checks.push(GoldenCheck::new("moment_certificate", sup, 1e-8));

    Ok(GoldenReport::finish(
        "beta",
        serde_json::json!({"m": mm}),
        checks,
    ))
}
