//! Brute-force oracles: adaptive Gauss–Kronrod quadrature and the
//! uniformization matrix exponential.
//!
//! These are deliberately independent of the closed forms they certify.
//! The quadrature backs the Lévy-integral cross-checks (and is the primary
//! route for tabulated densities); uniformization provides transient
//! transition probabilities of the truncated chains against which the
//! spectral heat kernel is verified.

use crate::error::{Error, Result};
use crate::generator::SkipFreeGenerator;

// 15-point Kronrod extension of the 7-point Gauss rule (positive nodes).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

const QUAD_ABS_TOL: f64 = 1e-12;
const QUAD_REL_TOL: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 4000;

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let (fl, fr) = if x == 0.0 {
            let v = f(c);
            (v, 0.0)
        } else {
            (f(c - h * x), f(c + h * x))
        };
        kronrod += wk * (fl + fr);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (fl + fr);
        }
    }
    let value = kronrod * h;
    let err = ((kronrod - gauss) * h).abs();
    (value, err)
}

/// Adaptive integration of `f` over `[a, b]` to the crate-wide tolerances.
pub fn integrate_interval(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    integrate_interval_with_error(f, a, b).map(|q| q.value)
}

/// One non-adaptive Kronrod panel over `[a, b]`; used where the integrand
/// is known smooth on the cell (tabulated densities integrate cell by
/// cell because their interpolant has kinks at every grid point).
pub(crate) fn gk15_cell(f: impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    gk15(&f, a, b)
}

/// As [`integrate_interval`], also returning the error estimate.
pub fn integrate_interval_with_error(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
        });
    }
    // (error, a, b, value) intervals, worst first
    let (v0, e0) = gk15(&f, a, b);
    let mut intervals = vec![(e0, a, b, v0)];
    loop {
        let total: f64 = intervals.iter().map(|i| i.3).sum();
        let err: f64 = intervals.iter().map(|i| i.0).sum();
        if err <= QUAD_ABS_TOL.max(QUAD_REL_TOL * total.abs()) {
            return Ok(Quadrature {
                value: total,
                error: err,
            });
        }
        if intervals.len() >= QUAD_MAX_INTERVALS {
            return Err(Error::Integration(format!(
                "no convergence after {QUAD_MAX_INTERVALS} subdivisions (error {err:.3e})"
            )));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let (_, ia, ib, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (ia + ib);
        let (vl, el) = gk15(&f, ia, mid);
        let (vr, er) = gk15(&f, mid, ib);
        intervals.push((el, ia, mid, vl));
        intervals.push((er, mid, ib, vr));
    }
}

/// Adaptive integration of `f` over `[0, ∞)` through the substitution
/// `u = e^{-y}`, which maps the exponential tail onto `(0, 1]`.
pub fn integrate_semi_infinite(f: impl Fn(f64) -> f64) -> Result<f64> {
    integrate_interval(|u| f(-u.ln()) / u, 0.0, 1.0)
}

/// Value and error estimate of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Default Poisson truncation tolerance for uniformization.
pub const UNIFORMIZATION_TOL: f64 = 1e-10;

const UNIFORMIZATION_TERM_BUDGET: usize = 5_000_000;

/// Number of Poisson terms needed so the truncated tail is below `tol`.
fn poisson_terms(rate: f64, tol: f64) -> Result<usize> {
    if rate == 0.0 {
        return Ok(1);
    }
    let mut j = rate.ceil().max(1.0) as usize;
    let mut ln_term = -rate + (j as f64) * rate.ln() - statrs::function::gamma::ln_gamma(j as f64 + 1.0);
    loop {
        let r = rate / (j as f64 + 1.0);
        if r < 1.0 {
            // geometric tail bound from the term ratio
            let tail = ln_term.exp() * r / (1.0 - r);
            if tail <= tol {
                return Ok(j + 1);
            }
        }
        j += 1;
        ln_term += rate.ln() - (j as f64).ln();
        if j > UNIFORMIZATION_TERM_BUDGET {
            return Err(Error::NonConvergence(format!(
                "uniformization needs more than {UNIFORMIZATION_TERM_BUDGET} terms (rate {rate:.3e})"
            )));
        }
    }
}

/// Distribution rows of `e^{tL}` for the requested start states, by
/// uniformization over raw lower-Hessenberg rows.
///
/// `rows[n]` must hold the rates of row `n` (index `l`); sub-stochastic
/// rows are allowed and simply leak mass.
pub fn expm_rows_raw(
    rows: &[Vec<f64>],
    t: f64,
    starts: &[usize],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    assert!(t >= 0.0);
    let n_states = rows.len();
    let lambda = rows
        .iter()
        .enumerate()
        .map(|(n, r)| r[n].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let steps = poisson_terms(lambda * t, tol)?;
    let ln_rate = if t > 0.0 { (lambda * t).ln() } else { 0.0 };
    let mut out = Vec::with_capacity(starts.len());
    for &start in starts {
        assert!(start < n_states);
        let mut v = vec![0.0; n_states];
        v[start] = 1.0;
        let mut acc = vec![0.0; n_states];
        let mut ln_w = -lambda * t;
        for j in 0..steps {
            if j > 0 {
                ln_w += ln_rate - (j as f64).ln();
            }
            let w = ln_w.exp();
            if w > 0.0 {
                for (a, &x) in acc.iter_mut().zip(v.iter()) {
                    *a += w * x;
                }
            }
            if j + 1 < steps {
                // v <- v P with P = I + L/lambda (left action)
                let mut next = v.clone();
                for (n, row) in rows.iter().enumerate() {
                    let vn = v[n];
                    if vn != 0.0 {
                        for (l, &rate) in row.iter().enumerate() {
                            next[l] += vn * rate / lambda;
                        }
                    }
                }
                v = next;
            }
        }
        for a in acc.iter_mut() {
            if *a < 0.0 && *a > -tol {
                *a = 0.0;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Transition-probability matrix of the truncated generator at time `t`.
///
/// Rows sum to one (conservative boundary) or `1 - leak` (sub-stochastic),
/// within the Poisson truncation tolerance.
pub fn uniformization_expm(g: &SkipFreeGenerator, t: f64, tol: f64) -> Result<Expm> {
    let starts: Vec<usize> = (0..=g.n_max).collect();
    let rows = expm_rows(g, t, &starts, tol)?;
    let leak = rows.iter().map(|r| 1.0 - r.iter().sum::<f64>()).collect();
    Ok(Expm { rows, leak, tol })
}

/// Selected distribution rows of `e^{tL}`.
pub fn expm_rows(
    g: &SkipFreeGenerator,
    t: f64,
    starts: &[usize],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = (0..=g.n_max).map(|n| g.row(n).to_vec()).collect();
    expm_rows_raw(&rows, t, starts, tol)
}

/// Evolve a block of functions by `e^{tL}` (right action), sharing the
/// Poisson weights and row sweeps across the block.
pub fn expm_apply_block(
    g: &SkipFreeGenerator,
    t: f64,
    fns: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    assert!(t >= 0.0);
    let n_states = g.n_max + 1;
    let m = fns.len();
    for f in fns {
        assert_eq!(f.len(), n_states);
    }
    let lambda = g.max_diagonal().max(1e-300);
    let steps = poisson_terms(lambda * t, tol)?;
    let ln_rate = if t > 0.0 { (lambda * t).ln() } else { 0.0 };
    // flat block, state-major
    let mut v = vec![0.0; n_states * m];
    for (k, f) in fns.iter().enumerate() {
        for n in 0..n_states {
            v[n * m + k] = f[n];
        }
    }
    let mut acc = vec![0.0; n_states * m];
    let mut ln_w = -lambda * t;
    for j in 0..steps {
        if j > 0 {
            ln_w += ln_rate - (j as f64).ln();
        }
        let w = ln_w.exp();
        if w > 0.0 {
            for (a, &x) in acc.iter_mut().zip(v.iter()) {
                *a += w * x;
            }
        }
        if j + 1 < steps {
            // v <- P v = v + (L v)/lambda, row-major sweep
            let mut next = v.clone();
            for n in 0..n_states {
                let row = g.row(n);
                let base = n * m;
                for (l, &rate) in row.iter().enumerate() {
                    let src = l * m;
                    let scale = rate / lambda;
                    for k in 0..m {
                        next[base + k] += scale * v[src + k];
                    }
                }
            }
            v = next;
        }
    }
    Ok((0..m)
        .map(|k| (0..n_states).map(|n| acc[n * m + k]).collect())
        .collect())
}

/// Output of [`uniformization_expm`].
#[derive(Debug, Clone)]
pub struct Expm {
    pub rows: Vec<Vec<f64>>,
    /// Mass lost through the truncation per start state.
    pub leak: Vec<f64>,
    pub tol: f64,
}

impl Expm {
    pub fn prob(&self, n: usize, l: usize) -> f64 {
        self.rows[n][l]
    }
}
