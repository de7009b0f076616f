//! Chi-square goodness-of-fit and two-sample homogeneity tests with bin
//! merging, used by the Monte Carlo verification harnesses.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a chi-square test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - dist.cdf(x)).clamp(0.0, 1.0)
}

/// Goodness of fit of observed counts against expected probabilities.
///
/// Adjacent bins are merged until every expected count reaches
/// `min_expected` (the usual rule of five); whatever remains at the end is
/// folded into the last kept bin together with the distribution tail.
pub fn gof_test(observed: &[u64], expected_probs: &[f64], min_expected: f64) -> Chi2Result {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let nf = total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        acc_o += o as f64;
        acc_e += p * nf;
        if acc_e >= min_expected {
            bins.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    // remaining mass (including the tail beyond the histogram) into the last bin
    let covered: f64 = expected_probs.iter().sum();
    acc_e += (1.0 - covered).max(0.0) * nf;
    if let Some(last) = bins.last_mut() {
        last.0 += acc_o;
        last.1 += acc_e;
    } else {
        bins.push((acc_o, acc_e.max(1e-12)));
    }
    let statistic: f64 = bins
        .iter()
        .map(|(o, e)| (o - e) * (o - e) / e.max(1e-12))
        .sum();
    let dof = bins.len().saturating_sub(1).max(1);
    Chi2Result {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
    }
}

/// Two-sample homogeneity test on aligned count histograms.
///
/// Bins are merged until the combined count reaches `min_combined`.
pub fn two_sample_test(a: &[u64], b: &[u64], min_combined: u64) -> Chi2Result {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0);
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let k1 = (nb as f64 / na as f64).sqrt();
    let k2 = (na as f64 / nb as f64).sqrt();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut acc_a, mut acc_b) = (0u64, 0u64);
    for i in 0..len {
        acc_a += get(a, i);
        acc_b += get(b, i);
        if acc_a + acc_b >= min_combined {
            bins.push((acc_a as f64, acc_b as f64));
            acc_a = 0;
            acc_b = 0;
        }
    }
    if acc_a + acc_b > 0 {
        if let Some(last) = bins.last_mut() {
            last.0 += acc_a as f64;
            last.1 += acc_b as f64;
        } else {
            bins.push((acc_a as f64, acc_b as f64));
        }
    }
    let statistic: f64 = bins
        .iter()
        .map(|(oa, ob)| {
            let d = k1 * oa - k2 * ob;
            d * d / (oa + ob)
        })
        .sum();
    let dof = bins.len().saturating_sub(1).max(1);
    Chi2Result {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
    }
}
