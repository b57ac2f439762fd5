//! Monte Carlo estimates and goodness-of-fit statistics.

use serde::{Deserialize, Serialize};

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, se: 0.0, n: 0 }
    }

    pub fn upper(&self, k: f64) -> f64 {
        self.mean + k * self.se
    }

    pub fn lower(&self, k: f64) -> f64 {
        self.mean - k * self.se
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { mean: self.mean * s, se: self.se * s.abs(), n: self.n }
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = MeanAccumulator::default();
        samples.iter().for_each(|&x| acc.push(x));
        acc.estimate()
    }
}

/// Welford running mean/variance; a stream of identical values keeps the
/// mean bit-exact.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        Estimate { mean: self.mean, se, n: self.n }
    }
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        d.max(lo).max(hi)
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov critical coefficient `c(a) = sqrt(-ln(a/2)/2)`.
pub fn ks_coefficient(level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt()
}

pub fn ks_critical_one_sample(n: usize, level: f64) -> f64 {
    ks_coefficient(level) / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(n: usize, m: usize, level: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_coefficient(level) * ((n + m) / (n * m)).sqrt()
}

/// Kolmogorov distribution tail `P(K > t)` used for reporting p-values.
pub fn kolmogorov_pvalue(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1.0_f64).powf(k - 1.0) * (-2.0 * k * k * t * t).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Ordinary least squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let est = Estimate::from_samples(&xs);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((est.mean - mean).abs() < 1e-14);
        assert!((est.se - (var / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn constant_stream_keeps_exact_mean() {
        let x = 0.1 + 0.2;
        let mut acc = MeanAccumulator::default();
        (0..1000).for_each(|_| acc.push(x));
        assert_eq!(acc.mean(), x);
        assert_eq!(acc.estimate().se, 0.0);
    }

    #[test]
    fn ks_of_grid_against_uniform_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&xs, |x| x.clamp(0.0, 1.0)) <= 0.5e-3 + 1e-12);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
    }

    #[test]
    fn two_sample_statistic_of_disjoint_samples_is_one() {
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn one_percent_coefficient() {
        assert!((ks_coefficient(0.01) - 1.6276).abs() < 1e-4);
        assert!((kolmogorov_pvalue(1.6276) - 0.01).abs() < 2e-4);
    }
}
