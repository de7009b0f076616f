//! End-to-end verification suites with machine-readable reports.
//!
//! Each suite runs a set of checks at pinned tolerances and reports one
//! record per check, including the residual, the tolerance and any seed
//! used, so a failing run can be reproduced exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::bernstein::BernsteinTriplet;
use crate::error::Result;
use crate::families::{self, Family};
use crate::generator::{self, BoundaryPolicy, ChainKind};
use crate::invariant;
use crate::moments;
use crate::reference;
use crate::simulate::{self, RateFault};
use crate::spectral::{self, PhiEntropy, SpectralSystem};

/// One named check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn residual(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
            seed: None,
            note: None,
        }
    }

    /// A check that passes when `value` is at least `floor` (p-values,
    /// margins).
    fn at_least(name: &str, value: f64, floor: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: floor,
            passed: value.is_finite() && value >= floor,
            seed: None,
            note: None,
        }
    }

    fn seeded(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn noted(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

/// Report of one suite run.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn finish(suite: &str, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        SuiteReport {
            suite: suite.into(),
            passed,
            checks,
        }
    }
}

/// Exact moment-level self-similarity over a randomized sweep, the
/// two-sample Monte Carlo test, and its injected-fault negative control.
pub fn suite_selfsim(triplet: &BernsteinTriplet, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(0..=6);
        let n = rng.gen_range(0..=20u64);
        let t = rng.gen_range(0.0..2.0);
        let alpha = rng.gen_range(0.0..=1.0);
        let (l, r) = moments::selfsimilarity_identity(triplet, k, n, t, alpha)?;
        worst = worst.max((l - r).abs() / l.abs().max(r.abs()).max(1e-3));
    }
    checks.push(Check::residual("moment_identity_sweep", worst, 1e-11).seeded(seed));

    let rep = simulate::selfsimilarity_mc_test(triplet, 5, 1.0, 0.5, 100_000, seed, None)?;
    checks.push(
        Check::at_least("mc_two_sample_p", rep.chi2.p_value, rep.level)
            .seeded(seed)
            .noted(format!("chi2 = {:.3}, dof = {}", rep.chi2.statistic, rep.chi2.dof)),
    );
    let worst_z = rep
        .moment_z
        .iter()
        .map(|(_, a, b, c)| a.abs().max(b.abs()).max(c.abs()))
        .fold(0.0, f64::max);
    checks.push(Check::residual("mc_moment_z", worst_z, 4.0).seeded(seed));

    let fault = RateFault {
        from: 5,
        to: 6,
        factor: 1.6,
    };
    let faulted = simulate::selfsimilarity_mc_test(triplet, 5, 1.0, 0.5, 100_000, seed, Some(fault))?;
    checks.push(
        Check {
            name: "fault_control_detected".into(),
            value: if faulted.passed { 0.0 } else { 1.0 },
            tolerance: 1.0,
            passed: !faulted.passed,
            seed: Some(seed),
            note: Some(format!(
                "rate ({},{}) x{}: p = {:.2e}",
                fault.from, fault.to, fault.factor, faulted.chi2.p_value
            )),
        },
    );
    Ok(SuiteReport::finish("selfsim", checks))
}

/// Gateway identity sweep including the entrance law at `x = 0`.
pub fn suite_gateway(triplet: &BernsteinTriplet, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let k = rng.gen_range(0..=6);
        let x = if i % 10 == 0 {
            0.0
        } else {
            rng.gen_range(0.0..4.0)
        };
        let t = rng.gen_range(0.0..2.0);
        let (l, r) = moments::gateway_moment_identity(triplet, k, x, t)?;
        worst = worst.max((l - r).abs() / l.abs().max(r.abs()).max(1e-3));
    }
    let checks = vec![Check::residual("gateway_sweep", worst, 1e-11).seeded(seed)];
    Ok(SuiteReport::finish("gateway", checks))
}

/// Scaling-limit gaps decrease along the grid; the first-moment gap obeys
/// its exact floor bound.
pub fn suite_scaling(triplet: &BernsteinTriplet) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let grid = [10u64, 100, 1_000, 10_000];
    let gaps = moments::scaling_limit_check(triplet, 2, 1.0, 1.0, &grid)?;
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check {
        name: "gaps_decrease_k2".into(),
        value: *gaps.last().unwrap(),
        tolerance: gaps[0],
        passed: monotone,
        seed: None,
        note: Some(format!("{gaps:?}")),
    });
    let gaps = moments::scaling_limit_check(triplet, 1, 1.0 / 3.0, 1.0, &grid)?;
    let ok = gaps
        .iter()
        .zip(&grid)
        .all(|(g, &n)| *g <= 1.0 / n as f64 + 1e-15);
    checks.push(Check {
        name: "k1_gap_floor_bound".into(),
        value: gaps[0],
        tolerance: 0.1,
        passed: ok,
        seed: None,
        note: None,
    });
    Ok(SuiteReport::finish("scaling", checks))
}

/// Biorthogonality, eigen residuals, Bessel bounds and (for `σ² > 0`) the
/// heat kernel against the uniformization oracle.
pub fn suite_spectral(triplet: &BernsteinTriplet) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let kmax = 8;
    let n_max = 200;
    let sys = SpectralSystem::build(triplet, 120, n_max)?;

    let mut sup = 0.0f64;
    for k in 0..=kmax {
        for l in 0..=kmax {
            sup = sup.max(sys.biorthogonality_check(k, l).abs());
        }
    }
    checks.push(Check::residual("biorthogonality", sup, 1e-7));

    let gen = generator::build_lphi(triplet, n_max, BoundaryPolicy::SubStochastic)?;
    let mut sup = 0.0f64;
    for k in 0..=kmax {
        let pk: Vec<f64> = (0..=n_max).map(|n| sys.eigenfunction_p(k, n)).collect();
        let lp = gen.apply(&pk);
        for n in 0..n_max {
            sup = sup.max((lp[n] + k as f64 * pk[n]).abs() / pk[n].abs().max(1.0));
        }
    }
    checks.push(Check::residual("eigen_residual", sup, 1e-8));

    if triplet.sigma2 > 0.0 {
        let sup = (0..=12)
            .map(|k| sys.p_norm(k) - 1.0)
            .fold(0.0, f64::max);
        checks.push(Check::residual("bessel_bound_one", sup.max(0.0), 1e-10));

        let t = sys.t_star + 0.1;
        let rows = reference::expm_rows(&gen, t, &(0..=15).collect::<Vec<_>>(), 1e-10)?;
        let mut sup = 0.0f64;
        for (i, n) in (0..=15usize).enumerate() {
            for l in 0..=15usize {
                let spectral = sys.heat_kernel(t, n, l)?;
                sup = sup.max((spectral - rows[i][l]).abs());
            }
        }
        checks.push(Check::residual("heat_kernel_vs_uniformization", sup, 1e-6));
    }
    Ok(SuiteReport::finish("spectral", checks))
}

/// Hypocoercive inequality, `τ_β` law and entropy decay.
pub fn suite_ergodic(triplet: &BernsteinTriplet, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();

    if let Ok(constant) = spectral::hypocoercive_constant(triplet) {
        checks.push(Check::at_least("hypocoercive_constant_geq_one", constant, 1.0));
        let n_max = 200;
        let sys = SpectralSystem::build(triplet, 60, n_max)?;
        let gen = generator::build_lphi(triplet, n_max, BoundaryPolicy::SubStochastic)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut fns: Vec<Vec<f64>> = Vec::new();
        for _ in 0..20 {
            let raw: Vec<f64> = (0..=n_max).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = sys.mean(&raw);
            fns.push(raw.iter().map(|v| v - mean).collect());
        }
        let mut worst_excess = 0.0f64;
        for &t in &[0.25, 0.5] {
            let evolved = reference::expm_apply_block(&gen, t, &fns, 1e-10)?;
            for (f, ef) in fns.iter().zip(&evolved) {
                let bound = constant * (-t).exp() * sys.l2_norm(f);
                worst_excess = worst_excess.max(sys.l2_norm(ef) - bound);
            }
        }
        for &t in &[1.0, 2.0, 3.5, 5.0] {
            for f in &fns {
                let ef = sys.semigroup_apply(f, t)?;
                let bound = constant * (-t).exp() * sys.l2_norm(f);
                worst_excess = worst_excess.max(sys.l2_norm(&ef) - bound);
            }
        }
        checks.push(Check::residual("hypocoercive_inequality_excess", worst_excess.max(0.0), 1e-10).seeded(seed));
    }

    if triplet.sigma2 > 0.0 {
        let beta = triplet.m_phi().max(1.0) + 1.0;
        let draws = simulate::sample_tau_beta_batch(triplet, beta, 200_000, seed)?;
        let mut worst_z = 0.0f64;
        for u in [0.5, 1.0, 2.0] {
            let vals: Vec<f64> = draws.iter().map(|&x| (-u * x).exp()).collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            let se = (var / vals.len() as f64).sqrt();
            let expect = (u * (triplet.sigma2 / (1.0 + triplet.sigma2)).ln()
                - triplet.phi_beta(beta, u)?
                + u * (1.0 + 1.0 / triplet.sigma2).ln())
            .exp();
            worst_z = worst_z.max((mean - expect).abs() / se.max(1e-300));
        }
        checks.push(Check::residual("tau_beta_laplace_z", worst_z, 3.0).seeded(seed));

        let sys = SpectralSystem::build(triplet, 40, 120)?;
        let mut f = vec![1.0; 121];
        f[3] = 2.5;
        f[4] = 2.0;
        for phi in [PhiEntropy::Square, PhiEntropy::XLogX] {
            let rep = spectral::entropy_decay_check(&sys, &f, beta, phi, &[0.6, 1.0, 1.8, 3.0])?;
            let worst = rep
                .points
                .iter()
                .map(|p| -p.margin)
                .fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::residual(
                &format!("entropy_decay_excess_{phi:?}"),
                worst.max(0.0),
                1e-10,
            ));
        }
    }
    Ok(SuiteReport::finish("ergodic", checks))
}

/// Golden suites for the three example families; if the triplet matches a
/// family its parameters are used, otherwise the defaults run.
pub fn suite_golden(triplet: &BernsteinTriplet) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let runs = match recognize_family(triplet) {
        Some((family, params)) => vec![families::golden_suite(family, &params)?],
        None => vec![
            families::golden_suite(Family::Meixner31, &[])?,
            families::golden_suite(Family::Perturbed32, &[])?,
            families::golden_suite(Family::Beta33, &[])?,
        ],
    };
    for rep in runs {
        for c in rep.checks {
            let mut check = Check::residual(&format!("{}::{}", rep.family, c.name), c.residual, c.tolerance);
            if let Some(note) = c.note {
                check = check.noted(note);
            }
            checks.push(check);
        }
    }
    Ok(SuiteReport::finish("golden", checks))
}

fn recognize_family(triplet: &BernsteinTriplet) -> Option<(Family, Vec<f64>)> {
    use crate::bernstein::LevyMeasure;
    match &triplet.levy {
        LevyMeasure::Zero if triplet.sigma2 > 0.0 => {
            Some((Family::Meixner31, vec![triplet.sigma2, triplet.m]))
        }
        LevyMeasure::Exp { c, b } if (c - b).abs() < 1e-12 && *b > 1.0 => {
            if triplet.sigma2 == 0.0 && triplet.m == 0.0 {
                Some((Family::Beta33, vec![*b]))
            } else if (triplet.sigma2 - 1.0).abs() < 1e-12
                && (triplet.m - (b * b - 1.0) / b).abs() < 1e-9
            {
                Some((Family::Perturbed32, vec![*b]))
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Invariant-law cross-validation suite.
pub fn suite_invariant(triplet: &BernsteinTriplet) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let law = invariant::nphi_solve_auto(triplet, 200)?;
    checks.push(Check::residual("mass", (law.mass() - 1.0).abs(), 1e-10));
    checks.push(Check::residual(
        "stationarity_residual",
        law.residual.unwrap_or(f64::NAN),
        1e-8,
    ));
    if triplet.sigma2 < 1.0 {
        let series = invariant::nphi_series(triplet, law.n_max().min(400))?;
        let sup = (0..=series.n_max())
            .map(|n| (series.weight(n) - law.weight(n)).abs())
            .fold(0.0, f64::max);
        checks.push(Check::residual("series_vs_solve_sup", sup, 1e-8));
    }
    let certs = invariant::moment_certificate(&law, triplet, 10)?;
    let sup = certs
        .iter()
        .filter(|c| c.conclusive)
        .map(|c| c.residual)
        .fold(0.0, f64::max);
    checks.push(Check::residual("moment_certificate_k10", sup, 1e-7));
    Ok(SuiteReport::finish("invariant", checks))
}

/// Structural suite: skip-free paths, generator row sums, dilation
/// semigroup property.
pub fn suite_structural(triplet: &BernsteinTriplet, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();

    let mut all_skip_free = true;
    for replica in 0..200u64 {
        let p = simulate::gillespie(triplet, ChainKind::SelfSimilar, 3, 0.5, seed + replica)?;
        all_skip_free &= p.is_skip_free();
    }
    checks.push(Check {
        name: "paths_skip_free".into(),
        value: if all_skip_free { 0.0 } else { 1.0 },
        tolerance: 0.0,
        passed: all_skip_free,
        seed: Some(seed),
        note: None,
    });

    for kind in [ChainKind::SelfSimilar, ChainKind::Laguerre] {
        let g = match kind {
            ChainKind::SelfSimilar => generator::build_gphi(triplet, 200, BoundaryPolicy::SubStochastic)?,
            ChainKind::Laguerre => generator::build_lphi(triplet, 200, BoundaryPolicy::SubStochastic)?,
        };
        let rep = g.validate();
        checks.push(Check::residual(
            &format!("row_sums_{kind:?}"),
            rep.max_interior_residual,
            1e-10,
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..=200).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut sup = 0.0f64;
    for (alpha, beta) in [(0.3, 0.7), (0.9, 0.5), (0.25, 0.95)] {
        let composed = crate::kernels::dilation_apply(&crate::kernels::dilation_apply(&f, beta), alpha);
        let direct = crate::kernels::dilation_apply(&f, alpha * beta);
        for (a, b) in composed.iter().zip(&direct) {
            sup = sup.max((a - b).abs());
        }
    }
    checks.push(Check::residual("dilation_semigroup", sup, 1e-12).seeded(seed));
    Ok(SuiteReport::finish("structural", checks))
}

/// Which suites to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    SelfSim,
    Gateway,
    Scaling,
    Spectral,
    Ergodic,
    Golden,
    Invariant,
    Structural,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "selfsim" => Suite::SelfSim,
            "gateway" => Suite::Gateway,
            "scaling" => Suite::Scaling,
            "spectral" => Suite::Spectral,
            "ergodic" => Suite::Ergodic,
            "golden" => Suite::Golden,
            "invariant" => Suite::Invariant,
            "structural" => Suite::Structural,
            "all" => Suite::All,
            other => return Err(format!("unknown suite '{other}'")),
        })
    }
}

/// Run the requested suites against one triplet.
pub fn run_suites(triplet: &BernsteinTriplet, suite: Suite, seed: u64) -> Result<Vec<SuiteReport>> {
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::SelfSim {
        out.push(suite_selfsim(triplet, seed)?);
    }
    if all || suite == Suite::Gateway {
        out.push(suite_gateway(triplet, seed)?);
    }
    if all || suite == Suite::Scaling {
        out.push(suite_scaling(triplet)?);
    }
    if all || suite == Suite::Invariant {
        out.push(suite_invariant(triplet)?);
    }
    if all || suite == Suite::Spectral {
        out.push(suite_spectral(triplet)?);
    }
    if all || suite == Suite::Ergodic {
        out.push(suite_ergodic(triplet, seed)?);
    }
    if all || suite == Suite::Golden {
        out.push(suite_golden(triplet)?);
    }
    if all || suite == Suite::Structural {
        out.push(suite_structural(triplet, seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;

    #[test]
    fn scaling_and_gateway_suites_pass_quickly() {
        let t = BernsteinTriplet::linear(1.0, 0.0).unwrap();
        assert!(suite_scaling(&t).unwrap().passed);
        let rep = suite_gateway(&t, 11).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn invariant_suite_beta_family() {
        let t = families::beta_chain(2.0).unwrap();
        let rep = suite_invariant(&t).unwrap();
        assert!(rep.passed, "{rep:#?}");
    }

    #[test]
    fn structural_suite() {
        let t = families::perturbed_chain(3.0).unwrap();
        let rep = suite_structural(&t, 5).unwrap();
        assert!(rep.passed, "{rep:#?}");
    }

    #[test]
    fn suite_parsing() {
        assert_eq!("golden".parse::<Suite>().unwrap(), Suite::Golden);
        assert!("nonsense".parse::<Suite>().is_err());
    }
}
