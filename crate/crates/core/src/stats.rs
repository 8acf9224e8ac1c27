//! Sample statistics for Monte Carlo output: moments with jackknife
//! standard errors, histograms and chi-square goodness of fit.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// A statistic with its delete-one jackknife standard error.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Power sums of data shifted by a fixed pivot; statistics are computed
/// from these so each jackknife replicate costs O(1).
#[derive(Clone, Copy, Debug)]
struct Sums {
    n: f64,
    s: [f64; 5],
}

impl Sums {
    fn of(data: &[f64], pivot: f64) -> Self {
        let mut s = [0.0; 5];
        for &x in data {
            let y = x - pivot;
            let y2 = y * y;
            s[0] += 1.0;
            s[1] += y;
            s[2] += y2;
            s[3] += y2 * y;
            s[4] += y2 * y2;
        }
        Sums { n: data.len() as f64, s }
    }

    fn without(&self, x: f64, pivot: f64) -> Self {
        let y = x - pivot;
        let y2 = y * y;
        let mut s = self.s;
        s[0] -= 1.0;
        s[1] -= y;
        s[2] -= y2;
        s[3] -= y2 * y;
        s[4] -= y2 * y2;
        Sums { n: self.n - 1.0, s }
    }

    /// Mean offset and central moments `m2, m3, m4` (divisor `n`).
    fn central(&self) -> (f64, f64, f64, f64) {
        let n = self.n;
        let d = self.s[1] / n;
        let e2 = self.s[2] / n;
        let e3 = self.s[3] / n;
        let e4 = self.s[4] / n;
        let m2 = e2 - d * d;
        let m3 = e3 - 3.0 * d * e2 + 2.0 * d * d * d;
        let m4 = e4 - 4.0 * d * e3 + 6.0 * d * d * e2 - 3.0 * d.powi(4);
        (d, m2, m3, m4)
    }
}

/// Which sample statistic to jackknife.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stat {
    Mean,
    /// Unbiased variance.
    Variance,
    Skewness,
    ExcessKurtosis,
}

fn evaluate(st: Stat, sums: &Sums, pivot: f64) -> f64 {
    let (d, m2, m3, m4) = sums.central();
    match st {
        Stat::Mean => pivot + d,
        Stat::Variance => m2 * sums.n / (sums.n - 1.0),
        Stat::Skewness => m3 / m2.powf(1.5),
        Stat::ExcessKurtosis => m4 / (m2 * m2) - 3.0,
    }
}

/// The statistic on the full sample and its jackknife standard error.
pub fn jackknife(data: &[f64], st: Stat) -> Result<Estimate> {
    if data.len() < 3 {
        return Err(Error::InvalidParameter("jackknife needs at least 3 observations".into()));
    }
    let pivot = data.iter().sum::<f64>() / data.len() as f64;
    let full = Sums::of(data, pivot);
    let value = evaluate(st, &full, pivot);
    let n = data.len() as f64;
    let reps: Vec<f64> = data.iter().map(|&x| evaluate(st, &full.without(x, pivot), pivot)).collect();
    let bar = reps.iter().sum::<f64>() / n;
    let ss: f64 = reps.iter().map(|r| (r - bar) * (r - bar)).sum();
    Ok(Estimate {
        value,
        se: ((n - 1.0) / n * ss).sqrt(),
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Equal-width histogram over the sample range; the last bin is closed.
pub fn histogram(data: &[f64], bins: usize) -> Histogram {
    if data.is_empty() || bins == 0 {
        return Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
        };
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Histogram {
            edges: vec![lo, lo],
            counts: vec![data.len() as u64],
        };
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0u64; bins];
    for &x in data {
        let i = (((x - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of `observed` counts to category probabilities.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::InvalidParameter("chi-square needs matching categories (at least two)".into()));
    }
    let total: u64 = observed.iter().sum();
    let psum: f64 = probs.iter().sum();
    if (psum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("probabilities sum to {psum}")));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e <= 0.0 {
            if o > 0 {
                return Err(Error::InvalidParameter("count observed in a zero-probability category".into()));
            }
            continue;
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let dof = probs.iter().filter(|&&p| p > 0.0).count() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: dist.sf(stat),
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_mean_se_is_classical() {
        let data: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let est = jackknife(&data, Stat::Mean).unwrap();
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((est.value - mean).abs() < 1e-12);
        assert!((est.se - (var / n).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_sample_has_zero_skew() {
        let data = [-2.0, -1.0, 0.0, 1.0, 2.0];
        assert!(jackknife(&data, Stat::Skewness).unwrap().value.abs() < 1e-12);
        let k = jackknife(&data, Stat::ExcessKurtosis).unwrap().value;
        assert!((k - (-1.3)).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_everything() {
        let data: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let h = histogram(&data, 7);
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
        assert_eq!(h.edges.len(), 8);
    }

    #[test]
    fn chi_square_of_perfect_fit() {
        let r = chi_square(&[25, 25, 50], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }
}
