//! Sample statistics and goodness-of-fit tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub use crate::metrics::{mean, population_std};

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

pub fn standard_error(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sample_std(values) / (values.len() as f64).sqrt()
}

/// Two-sided Kolmogorov–Smirnov distance between the sample's empirical CDF
/// and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Rayleigh CDF with scale `sigma`.
pub fn rayleigh_cdf(r: f64, sigma: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        1.0 - (-r * r / (2.0 * sigma * sigma)).exp()
    }
}

/// Equal-width histogram on `[lo, hi)`; values outside are counted apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi) || bins == 0 {
            return Err(Error::Config(format!("histogram needs lo < hi and bins > 0, got [{lo}, {hi}) x {bins}")));
        }
        Ok(Histogram {
            lo,
            hi,
            counts: vec![0; bins],
            below: 0,
            above: 0,
        })
    }

    pub fn from_samples(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let mut h = Histogram::new(lo, hi, bins)?;
        samples.iter().for_each(|&x| h.add(x));
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + bin as f64 * w, self.lo + (bin + 1) as f64 * w)
    }

    /// The right edge is closed so that samples equal to `hi` are kept.
    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.below += 1;
        } else if x > self.hi {
            self.above += 1;
        } else {
            let b = (((x - self.lo) / self.width()) as usize).min(self.bins() - 1);
            self.counts[b] += 1;
        }
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Densities normalized by the in-range count, so they integrate to 1.
    pub fn densities(&self) -> Vec<f64> {
        let n = self.in_range() as f64;
        let w = self.width();
        self.counts.iter().map(|&c| if n > 0.0 { c as f64 / (n * w) } else { 0.0 }).collect()
    }
}

/// Pearson chi-square goodness of fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells left after merging neighbours with expected count below 5.
    pub cells: usize,
}

/// Compares observed counts with expected counts. Adjacent cells are merged
/// left to right until each expected count reaches 5; the trailing remainder
/// joins the last full cell. Degrees of freedom are `cells − 1 − fitted`.
pub fn chi_square_test(observed: &[u64], expected: &[f64], fitted_parameters: usize) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(Error::Shape(format!(
            "{} observed cells but {} expected",
            observed.len(),
            expected.len()
        )));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob as f64;
        e += ex;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 + fitted_parameters {
        return Err(Error::Domain("too few cells for a chi-square test".into()));
    }
    let statistic = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum::<f64>();
    let dof = cells.len() - 1 - fitted_parameters;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
        cells: cells.len(),
    })
}
