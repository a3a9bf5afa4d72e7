//! Two-sample frequency tests: chi-square homogeneity, KL, and a KS check on p-values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Minimum expected count per cell after merging.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells after merging.
    pub cells: usize,
}

/// Merges adjacent categories until every merged cell has expected count at least
/// [`MIN_EXPECTED`] in both rows; a short tail joins the last full cell.
pub fn merge_sparse(a: &[u64], b: &[u64]) -> (Vec<u64>, Vec<u64>) {
    assert_eq!(a.len(), b.len(), "tables of different width");
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    let min_row = na.min(nb) as f64;
    let need = if min_row == 0.0 { f64::INFINITY } else { MIN_EXPECTED * n / min_row };
    let (mut ma, mut mb) = (Vec::new(), Vec::new());
    let (mut ca, mut cb) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        ca += x;
        cb += y;
        if (ca + cb) as f64 >= need {
            ma.push(ca);
            mb.push(cb);
            ca = 0;
            cb = 0;
        }
    }
    if ca + cb > 0 {
        match (ma.last_mut(), mb.last_mut()) {
            (Some(x), Some(y)) => {
                *x += ca;
                *y += cb;
            }
            _ => {
                ma.push(ca);
                mb.push(cb);
            }
        }
    }
    (ma, mb)
}

/// Chi-square test that two count vectors over the same categories share a law.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquare {
    let (ma, mb) = merge_sparse(a, b);
    let na: u64 = ma.iter().sum();
    let nb: u64 = mb.iter().sum();
    let n = (na + nb) as f64;
    let cells = ma.len();
    if cells < 2 || na == 0 || nb == 0 {
        return ChiSquare {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            cells,
        };
    }
    let mut stat = 0.0;
    for (&x, &y) in ma.iter().zip(&mb) {
        let col = (x + y) as f64;
        for (obs, row) in [(x, na), (y, nb)] {
            let expected = row as f64 * col / n;
            stat += (obs as f64 - expected).powi(2) / expected;
        }
    }
    let dof = cells - 1;
    let p_value = ChiSquared::new(dof as f64).expect("dof >= 1").sf(stat);
    ChiSquare {
        statistic: stat,
        dof,
        p_value,
        cells,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against U(0, 1), asymptotic p-value with
/// Stephens' small-sample correction.
pub fn ks_uniform(values: &[f64]) -> KsTest {
    let n = values.len();
    if n == 0 {
        return KsTest {
            statistic: 0.0,
            p_value: 1.0,
            n,
        };
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / nf - x).max(x - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        n,
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Plug-in `KL(P_a ‖ P_b)` in bits over the given cells. Cells empty in `b` but not
/// in `a` make it infinite.
pub fn kl_divergence(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .filter(|(&x, _)| x > 0)
        .map(|(&x, &y)| {
            let p = x as f64 / na as f64;
            let q = y as f64 / nb as f64;
            p * (p / q).log2()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    /// Plug-in estimate on the merged table, in bits.
    pub estimate: f64,
    /// Mean and spread of the same estimator when both samples share one law.
    pub null_mean: f64,
    pub null_std: f64,
}

/// KL on the merged table, with its null distribution from a parametric bootstrap
/// under the pooled proportions.
pub fn kl_with_null(a: &[u64], b: &[u64], replicates: usize, seed: u64) -> KlEstimate {
    let (ma, mb) = merge_sparse(a, b);
    let estimate = kl_divergence(&ma, &mb);
    let na: u64 = ma.iter().sum();
    let nb: u64 = mb.iter().sum();
    let pooled: Vec<u64> = ma.iter().zip(&mb).map(|(x, y)| x + y).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..replicates)
        .map(|_| {
            let x = multinomial(&pooled, na, &mut rng);
            let y = multinomial(&pooled, nb, &mut rng);
            kl_divergence(&x, &y)
        })
        .filter(|v| v.is_finite())
        .collect();
    let m = draws.len().max(1) as f64;
    let null_mean = draws.iter().sum::<f64>() / m;
    let null_std = (draws.iter().map(|v| (v - null_mean).powi(2)).sum::<f64>() / m).sqrt();
    KlEstimate {
        estimate,
        null_mean,
        null_std,
    }
}

/// `n` draws over categories weighted by `weights`, by sequential binomials.
fn multinomial(weights: &[u64], n: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut left_weight: u64 = weights.iter().sum();
    let mut left = n;
    weights
        .iter()
        .map(|&w| {
            if left == 0 || left_weight == 0 {
                return 0;
            }
            let p = (w as f64 / left_weight as f64).min(1.0);
            let k = Binomial::new(left, p).expect("valid binomial").sample(rng);
            left -= k;
            left_weight -= w;
            k
        })
        .collect()
}
