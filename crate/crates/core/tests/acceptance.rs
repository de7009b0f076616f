//! Acceptance suite: ten criteria covering moment formulas against Monte
//! Carlo, the exact distributional identities, invariant-law cross
//! validation, spectral correctness, oracle equivalence of the heat
//! kernel, ergodicity constants, subordination, scaling limits and
//! structural invariants. One pass/fail line is printed per criterion;
//! every tolerance is pinned here.

use std::time::Instant;

use skipfree::bernstein::BernsteinTriplet;
use skipfree::families;
use skipfree::generator::{self, BoundaryPolicy, ChainKind};
use skipfree::invariant;
use skipfree::kernels;
use skipfree::moments;
use skipfree::reference;
use skipfree::simulate::{self, RateFault};
use skipfree::spectral::{self, PhiEntropy, SpectralSystem};

const SEED: u64 = 0x5eed_2024;

fn criterion(id: u32, name: &str, passed: bool, detail: &str) {
    println!(
        "criterion {id:2} ({name}): {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {id} ({name}) failed: {detail}");
}

/// 1. Factorial-moment formula vs Monte Carlo, 3 standard errors,
///    k ∈ {1,2,3}, n ∈ {0,5}, t ∈ {0.5,1}, on the pure-diffusion and
///    Beta-family triplets; 10^5 paths per configuration, under 60 s.
#[test]
fn c01_moment_formula_vs_monte_carlo() {
    let start = Instant::now();
    let triplets = [
        BernsteinTriplet::linear(1.0, 0.0).unwrap(),
        families::beta_chain(2.0).unwrap(),
    ];
    let mut worst_z: f64 = 0.0;
    let mut detail = String::new();
    for (ti, triplet) in triplets.iter().enumerate() {
        for (ni, &n0) in [0u64, 5].iter().enumerate() {
            for (tti, &t) in [0.5f64, 1.0].iter().enumerate() {
                let seed = SEED + (ti * 4 + ni * 2 + tti) as u64;
                let ends =
                    simulate::endpoints(triplet, ChainKind::SelfSimilar, n0, t, 100_000, seed)
                        .unwrap();
                for k in 1..=3usize {
                    let (mean, se) = simulate::factorial_moment_estimate(&ends, k);
                    let exact = moments::ssm_moments(triplet, k, n0, t).unwrap();
                    let z = (mean - exact) / se.max(1e-300);
                    if z.abs() > worst_z {
                        worst_z = z.abs();
                        detail = format!(
                            "worst |z| = {:.2} at triplet {ti}, n0 = {n0}, t = {t}, k = {k}",
                            z.abs()
                        );
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let passed = worst_z <= 3.0 && elapsed < 60.0;
    criterion(
        1,
        "ssm moments vs MC",
        passed,
        &format!("{detail}; elapsed {elapsed:.1}s"),
    );
}

/// 2. Self-similarity: exact moment-level equality to 1e-11 relative over
///    a 200-point randomized sweep, the two-sample MC test at level 0.01,
///    and a failing injected-fault control.
#[test]
fn c02_selfsimilarity() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(SEED);
    let triplets = [
        BernsteinTriplet::linear(1.0, 0.0).unwrap(),
        families::perturbed_chain(3.0).unwrap(),
        families::beta_chain(2.0).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let tr = &triplets[rng.gen_range(0..3)];
        let k = rng.gen_range(0..=6);
        let n = rng.gen_range(0..=20u64);
        let t = rng.gen_range(0.0..2.0);
        let alpha = rng.gen_range(0.0..=1.0);
        let (l, r) = moments::selfsimilarity_identity(tr, k, n, t, alpha).unwrap();
        worst = worst.max((l - r).abs() / l.abs().max(r.abs()).max(1e-3));
    }
    let sweep_ok = worst <= 1e-11;

    let tr = BernsteinTriplet::linear(1.0, 0.0).unwrap();
    let mc = simulate::selfsimilarity_mc_test(&tr, 5, 1.0, 0.5, 100_000, SEED, None).unwrap();
    let fault = RateFault {
        from: 5,
        to: 6,
        factor: 1.6,
    };
    let faulted =
        simulate::selfsimilarity_mc_test(&tr, 5, 1.0, 0.5, 100_000, SEED, Some(fault)).unwrap();
    let passed = sweep_ok && mc.passed && !faulted.passed;
    criterion(
        2,
        "self-similarity",
        passed,
        &format!(
            "sweep sup rel {worst:.2e} (tol 1e-11); MC p = {:.3}; fault p = {:.1e} detected = {}",
            mc.chi2.p_value,
            faulted.chi2.p_value,
            !faulted.passed
        ),
    );
}

/// 3. Gateway identity to 1e-11 relative over a randomized sweep that
///    includes the entrance law at x = 0.
#[test]
fn c03_gateway() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(SEED + 3);
    let triplets = [
        BernsteinTriplet::linear(1.0, 0.0).unwrap(),
        families::perturbed_chain(3.0).unwrap(),
        families::beta_chain(2.0).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    let mut zero_x_checked = 0;
    for i in 0..200 {
        let tr = &triplets[i % 3];
        let k = rng.gen_range(0..=6);
        let x = if i % 8 == 0 {
            zero_x_checked += 1;
            0.0
        } else {
            rng.gen_range(0.0..4.0)
        };
        let t = rng.gen_range(0.0..2.0);
        let (l, r) = moments::gateway_moment_identity(tr, k, x, t).unwrap();
        worst = worst.max((l - r).abs() / l.abs().max(r.abs()).max(1e-3));
    }
    let passed = worst <= 1e-11 && zero_x_checked >= 20;
    criterion(
        3,
        "gateway identity",
        passed,
        &format!("sweep sup rel {worst:.2e} (tol 1e-11), {zero_x_checked} entrance-law points"),
    );
}

/// 4. Invariant law: series vs solve to sup 1e-8 on the Beta family with
///    N = 600; moment certificate to 1e-7 for k ≤ 10; Meixner solve vs
///    the negative-binomial closed form to 1e-12.
#[test]
fn c04_invariant_law() {
    let beta_family = families::beta_chain(2.0).unwrap();
    let series = invariant::nphi_series(&beta_family, 600).unwrap();
    let gen = generator::build_lphi(&beta_family, 600, BoundaryPolicy::Reflecting).unwrap();
    let solve = invariant::nphi_solve(&gen).unwrap();
    assert_eq!(series.n_max(), 600, "series should resolve the full range");
    let sup = (0..=600)
        .map(|n| (series.weight(n) - solve.weight(n)).abs())
        .fold(0.0, f64::max);

    let certs = invariant::moment_certificate(&solve, &beta_family, 10).unwrap();
    let cert_sup = certs
        .iter()
        .map(|c| {
            assert!(c.conclusive, "certificate k = {} inconclusive", c.k);
            c.residual
        })
        .fold(0.0, f64::max);

    let mut nb_sup: f64 = 0.0;
    for m in [1.0, 2.0] {
        let tr = families::meixner_chain(1.0, m).unwrap();
        let gen = generator::build_lphi(&tr, 400, BoundaryPolicy::Reflecting).unwrap();
        let law = invariant::nphi_solve(&gen).unwrap();
        for n in 0..=400usize {
            let closed = families::meixner_log_weight(1.0, m, n).exp();
            nb_sup = nb_sup.max((law.weight(n) - closed).abs());
            // at sigma2 = 1 this is the dyadic form Gamma(n+beta+1)/(Gamma(beta+1) n!) 2^{-n-beta-1}
        }
    }
    let passed = sup <= 1e-8 && cert_sup <= 1e-7 && nb_sup <= 1e-12;
    criterion(
        4,
        "invariant law",
        passed,
        &format!(
            "series vs solve sup {sup:.2e} (tol 1e-8); certificates sup {cert_sup:.2e} (tol 1e-7); closed form sup {nb_sup:.2e} (tol 1e-12)"
        ),
    );
}

/// 5. Spectral correctness: biorthogonality residuals ≤ 1e-7 for
///    k,l ≤ 12; eigen residual ≤ 1e-8 on interior states; Bessel bounds
///    ‖P_k‖ ≤ 1 and ≤ 1/√c_k(d_φ); Meixner norm identity to 1e-9.
#[test]
fn c05_spectral_correctness() {
    let n_max = 400;
    let cases: Vec<(String, BernsteinTriplet)> = vec![
        ("meixner m=1".into(), families::meixner_chain(1.0, 1.0).unwrap()),
        ("meixner m=2".into(), families::meixner_chain(1.0, 2.0).unwrap()),
        ("perturbed m=3".into(), families::perturbed_chain(3.0).unwrap()),
    ];
    let mut biorth_sup: f64 = 0.0;
    let mut eigen_sup: f64 = 0.0;
    let mut bessel_excess: f64 = 0.0;
    let mut norm_sup: f64 = 0.0;
    for (name, tr) in &cases {
        let sys = SpectralSystem::build(tr, 12, n_max).unwrap();
        for k in 0..=12usize {
            for l in 0..=12usize {
                biorth_sup = biorth_sup.max(sys.biorthogonality_check(k, l).abs());
            }
        }
        let gen = generator::build_lphi(tr, n_max, BoundaryPolicy::SubStochastic).unwrap();
        for k in 0..=12usize {
            let pk: Vec<f64> = (0..=n_max).map(|n| sys.eigenfunction_p(k, n)).collect();
            let lp = gen.apply(&pk);
            for n in 0..n_max {
                eigen_sup = eigen_sup.max((lp[n] + k as f64 * pk[n]).abs() / pk[n].abs().max(1.0));
            }
        }
        let d = tr.d_phi().unwrap();
        for k in 0..=12usize {
            let norm = sys.p_norm(k);
            bessel_excess = bessel_excess.max(norm - 1.0);
            bessel_excess = bessel_excess.max(norm - 1.0 / families::c_k(d, k).sqrt());
        }
        if name.starts_with("meixner") {
            let beta = tr.m / tr.sigma2;
            for k in 0..=12usize {
                let n2 = sys.p_norm(k).powi(2);
                let target = 1.0 / families::c_k(beta, k);
                norm_sup = norm_sup.max((n2 - target).abs() / target.max(1e-30));
            }
        }
    }
    let passed =
        biorth_sup <= 1e-7 && eigen_sup <= 1e-8 && bessel_excess <= 1e-10 && norm_sup <= 1e-9;
    criterion(
        5,
        "spectral correctness",
        passed,
        &format!(
            "biorth {biorth_sup:.2e} (1e-7); eigen {eigen_sup:.2e} (1e-8); bessel excess {bessel_excess:.2e}; norm identity {norm_sup:.2e} (1e-9)"
        ),
    );
}

/// 6. Heat kernel vs uniformization to 1e-6 sup on n,l ≤ 30 at
///    t ∈ {t*+0.1, 1, 2}; spectral row sums within 1e-8 of one.
#[test]
fn c06_heat_kernel_oracle() {
    let cases = [
        families::meixner_chain(1.0, 1.0).unwrap(),
        families::perturbed_chain(3.0).unwrap(),
    ];
    let mut sup_diff: f64 = 0.0;
    let mut row_sum_err: f64 = 0.0;
    for tr in &cases {
        // the near-threshold time needs expansion depth ~ 2.5x the largest
        // state whose kernel entry is still resolvable
        let sys = SpectralSystem::build(tr, 400, 160).unwrap();
        let gen = generator::build_lphi(tr, 200, BoundaryPolicy::SubStochastic).unwrap();
        let starts: Vec<usize> = (0..=30).collect();
        for t in [sys.t_star + 0.1, 1.0, 2.0] {
            let oracle = reference::expm_rows(&gen, t, &starts, 1e-10).unwrap();
            for (i, &n) in starts.iter().enumerate() {
                for l in 0..=30usize {
                    let hk = sys.heat_kernel(t, n, l).unwrap();
                    sup_diff = sup_diff.max((hk - oracle[i][l]).abs());
                }
            }
            for &n in &[0usize, 10, 30] {
                // deep-tail entries the expansion reports as noise-limited
                // must be certifiably negligible (checked via the oracle)
                // and are accounted at their oracle value
                let orow = &oracle[starts.iter().position(|&s| s == n).unwrap()];
                let mut sum = 0.0;
                let mut refused_mass = 0.0;
                for l in 0..=sys.n_max {
                    match sys.heat_kernel(t, n, l) {
                        Ok(v) => sum += v,
                        Err(_) => {
                            refused_mass += orow[l];
                            sum += orow[l];
                        }
                    }
                }
                assert!(
                    refused_mass <= 1e-8,
                    "noise-limited entries of row {n} at t = {t} carry oracle mass {refused_mass:.2e}"
                );
                row_sum_err = row_sum_err.max((sum - 1.0).abs());
            }
        }
    }
    let passed = sup_diff <= 1e-6 && row_sum_err <= 1e-8;
    criterion(
        6,
        "heat kernel vs uniformization",
        passed,
        &format!("sup diff {sup_diff:.2e} (tol 1e-6); row sums off by {row_sum_err:.2e} (tol 1e-8)"),
    );
}

/// 7. Hypocoercivity: the inequality holds one-sidedly for 50 random
///    centered functions on a t-grid ⊂ [0, 5] with N = 400, and the
///    perturbed-family constant equals √(8/3) to 1e-12.
#[test]
fn c07_hypocoercivity() {
    use rand::{Rng, SeedableRng};
    let tr = families::perturbed_chain(3.0).unwrap();
    let constant = spectral::hypocoercive_constant(&tr).unwrap();
    let const_err = (constant - (8.0f64 / 3.0).sqrt()).abs();

    let n_max = 400;
    let sys = SpectralSystem::build(&tr, 60, n_max).unwrap();
    let gen = generator::build_lphi(&tr, n_max, BoundaryPolicy::SubStochastic).unwrap();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(SEED + 7);
    let mut fns: Vec<Vec<f64>> = Vec::new();
    for _ in 0..50 {
        let raw: Vec<f64> = (0..=n_max).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = sys.mean(&raw);
        fns.push(raw.iter().map(|v| v - mean).collect());
    }
    let mut worst_excess = f64::NEG_INFINITY;
    // short times through uniformization (below the spectral threshold)
    for &t in &[0.0, 0.25, 0.5] {
        let evolved = reference::expm_apply_block(&gen, t, &fns, 1e-10).unwrap();
        for (f, ef) in fns.iter().zip(&evolved) {
            let bound = constant * (-t).exp() * sys.l2_norm(f);
            worst_excess = worst_excess.max(sys.l2_norm(ef) - bound);
        }
    }
    // longer times through the spectral expansion
    for &t in &[1.0, 2.0, 3.5, 5.0] {
        for f in &fns {
            let ef = sys.semigroup_apply(f, t).unwrap();
            let bound = constant * (-t).exp() * sys.l2_norm(f);
            worst_excess = worst_excess.max(sys.l2_norm(&ef) - bound);
        }
    }
    let passed = const_err <= 1e-12 && worst_excess <= 1e-10;
    criterion(
        7,
        "hypocoercivity",
        passed,
        &format!(
            "constant err {const_err:.2e} (tol 1e-12); worst inequality excess {worst_excess:.2e}"
        ),
    );
}

/// 8. Subordination: empirical Laplace transform of τ_β within 3 s.e. at
///    u ∈ {0.5, 1, 2} on 10^6 draws; the subordinated projector on P_k to
///    1e-9; entropy decay margins nonnegative for both functionals.
#[test]
fn c08_subordination() {
    let tr = families::meixner_chain(1.0, 1.0).unwrap();
    let beta = 2.0; // above m_phi = 1
    let draws = simulate::sample_tau_beta_batch(&tr, beta, 1_000_000, SEED + 8).unwrap();
    let mut worst_z: f64 = 0.0;
    for u in [0.5, 1.0, 2.0] {
        let vals: Vec<f64> = draws.iter().map(|&x| (-u * x).exp()).collect();
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        let se = (var / vals.len() as f64).sqrt();
        // (sigma^2/(1+sigma^2))^u Gamma(1+beta)Gamma(u+1)/Gamma(u+beta+1)
        let expect = (u * (tr.sigma2 / (1.0 + tr.sigma2)).ln() - tr.phi_beta(beta, u).unwrap()
            + u * (1.0 + 1.0 / tr.sigma2).ln())
        .exp();
        worst_z = worst_z.max((mean - expect).abs() / se.max(1e-300));
    }

    let sys = SpectralSystem::build(&tr, 30, 250).unwrap();
    let t = 1.0;
    let mut proj_sup: f64 = 0.0;
    for k in 0..=6usize {
        let pk: Vec<f64> = (0..=sys.n_max).map(|n| sys.eigenfunction_p(k, n)).collect();
        let out = sys.subordinated_apply(&pk, t, beta).unwrap();
        let scale = (-t * tr.phi_beta(beta, k as f64).unwrap()).exp();
        for n in 0..=60usize {
            proj_sup = proj_sup.max((out[n] - scale * pk[n]).abs() / pk[n].abs().max(1.0));
        }
    }

    let mut f = vec![1.0; sys.n_max + 1];
    f[3] = 2.5;
    f[4] = 2.0;
    f[7] = 1.5;
    let mut entropy_margin: f64 = 0.0;
    for phi in [PhiEntropy::Square, PhiEntropy::XLogX] {
        let rep =
            spectral::entropy_decay_check(&sys, &f, beta, phi, &[0.6, 1.0, 1.5, 2.0, 3.0]).unwrap();
        for p in rep.points {
            entropy_margin = entropy_margin.max(-p.margin);
        }
    }
    let passed = worst_z <= 3.0 && proj_sup <= 1e-9 && entropy_margin <= 1e-10;
    criterion(
        8,
        "subordination",
        passed,
        &format!(
            "Laplace worst |z| {worst_z:.2} (tol 3); projector {proj_sup:.2e} (tol 1e-9); entropy excess {entropy_margin:.2e}"
        ),
    );
}

/// 9. Scaling limit: gaps decrease along n ∈ {10, 10², 10³, 10⁴} and the
///    k = 1 gap obeys its exact 1/n floor bound.
#[test]
fn c09_scaling_limit() {
    let grid = [10u64, 100, 1_000, 10_000];
    let mut monotone = true;
    let mut detail = String::new();
    for (tr, name) in [
        (BernsteinTriplet::linear(1.0, 0.0).unwrap(), "pure birth"),
        (families::beta_chain(2.0).unwrap(), "beta family"),
    ] {
        for k in [2usize, 3] {
            let gaps = moments::scaling_limit_check(&tr, k, 1.0, 1.0, &grid).unwrap();
            monotone &= gaps.windows(2).all(|w| w[1] < w[0]);
            if k == 2 && name == "pure birth" {
                detail = format!("k=2 gaps {gaps:?}");
            }
        }
    }
    let tr = BernsteinTriplet::linear(1.0, 0.0).unwrap();
    let gaps = moments::scaling_limit_check(&tr, 1, 1.0 / 3.0, 1.0, &grid).unwrap();
    let k1_ok = gaps
        .iter()
        .zip(&grid)
        .all(|(g, &n)| {
            let floor_gap = 1.0 / 3.0 - (n as f64 / 3.0).floor() / n as f64;
            (*g - floor_gap).abs() < 1e-13 && *g <= 1.0 / n as f64 + 1e-15
        });
    let passed = monotone && k1_ok;
    criterion(
        9,
        "scaling limit",
        passed,
        &format!("{detail}; k=1 exact floor bound: {k1_ok}"),
    );
}

/// 10. Structural: all simulated paths skip-free, interior generator row
///     sums ≤ 1e-10, dilation semigroup to 1e-12 on [0..200].
#[test]
fn c10_structural() {
    use rand::{Rng, SeedableRng};
    let triplets = [
        families::meixner_chain(1.0, 2.0).unwrap(),
        families::perturbed_chain(3.0).unwrap(),
        families::beta_chain(2.0).unwrap(),
    ];
    let mut paths = 0u64;
    let mut skip_free = true;
    for (i, tr) in triplets.iter().enumerate() {
        for kind in [ChainKind::SelfSimilar, ChainKind::Laguerre] {
            for r in 0..2000u64 {
                let p =
                    simulate::gillespie(tr, kind, 4, 0.6, SEED + i as u64 * 10_000 + r).unwrap();
                skip_free &= p.is_skip_free();
                paths += 1;
            }
        }
    }

    let mut row_sup: f64 = 0.0;
    for tr in &triplets {
        for kind in [ChainKind::SelfSimilar, ChainKind::Laguerre] {
            let g = match kind {
                ChainKind::SelfSimilar => {
                    generator::build_gphi(tr, 200, BoundaryPolicy::SubStochastic).unwrap()
                }
                ChainKind::Laguerre => {
                    generator::build_lphi(tr, 200, BoundaryPolicy::SubStochastic).unwrap()
                }
            };
            row_sup = row_sup.max(g.validate().max_interior_residual);
        }
    }

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(SEED + 10);
    let f: Vec<f64> = (0..=200).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut dil_sup: f64 = 0.0;
    for (alpha, beta) in [(0.3, 0.7), (0.85, 0.6), (0.99, 0.2), (0.5, 0.5)] {
        let composed =
            kernels::dilation_apply(&kernels::dilation_apply(&f, beta), alpha);
        let direct = kernels::dilation_apply(&f, alpha * beta);
        for (a, b) in composed.iter().zip(&direct) {
            dil_sup = dil_sup.max((a - b).abs());
        }
    }
    let passed = skip_free && row_sup <= 1e-10 && dil_sup <= 1e-12;
    criterion(
        10,
        "structural invariants",
        passed,
        &format!(
            "{paths} paths all skip-free: {skip_free}; row sums {row_sup:.2e} (tol 1e-10); dilation semigroup {dil_sup:.2e} (tol 1e-12)"
        ),
    );
}
