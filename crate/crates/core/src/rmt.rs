//! Random-matrix baselines for 2×2 complex Gaussian channels: closed-form
//! densities of the effective rank and the diagonalization degree, their
//! expectations, and Monte-Carlo ensembles to check them against.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::metrics::{effective_rank, w_offdiag, ChannelMatrix, Shape};
use crate::quad::{integrate, integrate_to_infinity};
use crate::rng::stream;
use crate::stats::{chi_square_test, mean, sample_std, standard_error, ChiSquareTest, Histogram};

/// Beyond this argument ρ_h is below 1e-12 relative to its peak.
const RHO_H_CUTOFF: f64 = 12.0;

/// Upper edge of the w₁ histogram; about 0.2 % of draws lie above it.
pub const W1_HIST_MAX: f64 = 6.0;
pub const HIST_BINS: usize = 50;
/// Ensembles smaller than this are reported with a widened tolerance.
pub const SMALL_SAMPLE: usize = 1000;
pub const MIN_ENSEMBLE: usize = 100;

/// Matrix with i.i.d. entries whose real and imaginary parts are N(0, 1).
pub fn sample_cgrm<R: Rng + ?Sized>(rng: &mut R, nr: usize, ns: usize) -> ChannelMatrix {
    let m = DMatrix::from_fn(nr, ns, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    ChannelMatrix::new(m).expect("gaussian entries are finite")
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument {x} outside [0, 1]")))
    }
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Effective rank of a 2×2 matrix whose larger normalized singular value is `1 − x`.
pub fn alpha(x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok((-xlnx(x) - xlnx(1.0 - x)).exp())
}

fn alpha_prime(x: f64) -> f64 {
    let a = (-xlnx(x) - xlnx(1.0 - x)).exp();
    a * ((1.0 - x) / x).ln()
}

/// Inverse of [`alpha`] on its increasing branch `[0, 0.5]`, by bisection.
pub fn alpha_inverse(r: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&r) {
        return Err(Error::Domain(format!("effective rank {r} outside [1, 2]")));
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if alpha(mid)? < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Joint density of the two singular values.
pub fn joint_pdf_sv(s1: f64, s2: f64) -> Result<f64> {
    if s1 < 0.0 || s2 < 0.0 {
        return Err(Error::Domain(format!("singular values must be >= 0, got {s1}, {s2}")));
    }
    Ok(0.125 * (-(s1 * s1 + s2 * s2) / 2.0).exp() * (s1 * s1 - s2 * s2).powi(2) * s1 * s2)
}

/// Density of a normalized singular value `p₁ = σ₁/(σ₁+σ₂)`, either branch.
pub fn pdf_p1(p: f64) -> Result<f64> {
    check_unit(p)?;
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    let q = 1.0 + 2.0 * (p - 1.0) * p;
    Ok(-6.0 * (1.0 - 2.0 * p).powi(2) * (p - 1.0) * p / q.powi(4))
}

/// Density of the 2×2 effective rank on `[1, 2]`. The factor 2 folds the
/// mirror branch `p₁ ↦ 1 − p₁` onto `[0, 0.5]`.
pub fn pdf_reff(r: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&r) {
        return Err(Error::Domain(format!("effective rank {r} outside [1, 2]")));
    }
    if r == 1.0 || r == 2.0 {
        return Ok(0.0);
    }
    let x = alpha_inverse(r)?;
    let d = alpha_prime(x);
    if !(d > 0.0) {
        return Ok(0.0);
    }
    Ok(2.0 * pdf_p1(x)? / d)
}

/// Density of the sum of two independent unit-scale Rayleigh variables.
pub fn pdf_rayleigh_sum(z: f64) -> Result<f64> {
    if z < 0.0 {
        return Err(Error::Domain(format!("rayleigh sum needs z >= 0, got {z}")));
    }
    Ok(rho_h(z))
}

fn rho_h(z: f64) -> f64 {
    // e^{-z²/2}·e^{z²/4} folded into one exponent so large z cannot overflow.
    0.25 * (2.0 * z * (-z * z / 2.0).exp() + PI.sqrt() * (z * z - 2.0) * erf(z / 2.0) * (-z * z / 4.0).exp())
}

/// Density of w₁ for a 2×2 complex Gaussian matrix: the ratio of two
/// independent Rayleigh sums.
pub fn pdf_w1(w: f64) -> Result<f64> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::Domain(format!("w1 density needs finite w >= 0, got {w}")));
    }
    if w == 0.0 {
        return Ok(0.0);
    }
    let upper = RHO_H_CUTOFF.min(RHO_H_CUTOFF / w);
    Ok(integrate(|z| z * rho_h(z) * rho_h(w * z), 0.0, upper, 1e-15, 1e-10)?.value)
}

/// `E[R_eff] = ∫₁² R·pdf_reff(R) dR`.
pub fn expected_reff() -> Result<f64> {
    Ok(integrate(|r| r * pdf_reff(r).unwrap_or(0.0), 1.0, 2.0, 1e-12, 1e-10)?.value)
}

/// `E[w₁] = ∫₀^∞ w·pdf_w1(w) dw`.
pub fn expected_w1() -> Result<f64> {
    Ok(integrate_to_infinity(|w| w * pdf_w1(w).unwrap_or(0.0), 0.0, 1e-12, 1e-10)?.value)
}

/// Closed-form expectations, computed once per process.
pub fn closed_form_means() -> (f64, f64) {
    static MEANS: OnceLock<(f64, f64)> = OnceLock::new();
    *MEANS.get_or_init(|| {
        (
            expected_reff().expect("integrand is finite"),
            expected_w1().expect("integrand is finite"),
        )
    })
}

/// Probability mass of each histogram bin under `pdf`.
pub fn bin_masses<F: Fn(f64) -> f64>(pdf: F, lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    let w = (hi - lo) / bins as f64;
    (0..bins)
        .map(|b| {
            let a = lo + b as f64 * w;
            integrate(&pdf, a, a + w, 1e-14, 1e-10).map(|q| q.value)
        })
        .collect()
}

struct ClosedFormBins {
    reff: Vec<f64>,
    w1: Vec<f64>,
    w1_tail: f64,
}

fn closed_form_bins() -> &'static ClosedFormBins {
    static BINS: OnceLock<ClosedFormBins> = OnceLock::new();
    BINS.get_or_init(|| {
        let reff = bin_masses(|r| pdf_reff(r).unwrap_or(0.0), 1.0, 2.0, HIST_BINS).expect("finite integrand");
        let w1 = bin_masses(|w| pdf_w1(w).unwrap_or(0.0), 0.0, W1_HIST_MAX, HIST_BINS).expect("finite integrand");
        let tail = integrate_to_infinity(|w| pdf_w1(w).unwrap_or(0.0), W1_HIST_MAX, 1e-14, 1e-10)
            .expect("finite integrand")
            .value;
        ClosedFormBins { reff, w1, w1_tail: tail }
    })
}

/// `(R_eff, w₁)` of `count` independent 2×2 draws from stream `seed`.
pub fn sample_metrics(seed: u64, count: usize) -> Vec<(f64, f64)> {
    let mut rng = stream(seed, 0);
    (0..count)
        .map(|_| {
            let h = sample_cgrm(&mut rng, 2, 2);
            (
                effective_rank(&h).expect("gaussian draw is nonzero"),
                w_offdiag(&h, Shape::Diagonal).expect("gaussian draw is nonzero"),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub density: f64,
    pub closed_form_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub seed: u64,
    pub sample_count: usize,
    pub mean_reff: f64,
    pub mean_w1: f64,
    pub std_reff: f64,
    pub std_w1: f64,
    pub stderr_reff: f64,
    pub stderr_w1: f64,
    pub closed_form_mean_reff: f64,
    pub closed_form_mean_w1: f64,
    /// Bins over [1, 2].
    pub reff_histogram: Vec<HistogramBin>,
    /// Bins over [0, W1_HIST_MAX], normalized to the in-range draws.
    pub w1_histogram: Vec<HistogramBin>,
    pub w1_above_range: u64,
    pub reff_fit: ChiSquareTest,
    /// Includes an overflow cell for w₁ > W1_HIST_MAX.
    pub w1_fit: ChiSquareTest,
    pub small_sample: bool,
    /// Half-width, in standard errors, within which the means are expected.
    pub mean_tolerance_se: f64,
}

/// Monte-Carlo ensemble of 2×2 complex Gaussian matrices compared with the
/// closed-form densities.
pub fn ensemble_baseline(seed: u64, count: usize) -> Result<EnsembleReport> {
    if count < MIN_ENSEMBLE {
        return Err(Error::Config(format!("ensemble needs at least {MIN_ENSEMBLE} samples, got {count}")));
    }
    let draws = sample_metrics(seed, count);
    let reff: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let w1: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let cf = closed_form_bins();
    let (er, ew) = closed_form_means();
    let n = count as f64;

    let hr = Histogram::from_samples(&reff, 1.0, 2.0, HIST_BINS)?;
    let hw = Histogram::from_samples(&w1, 0.0, W1_HIST_MAX, HIST_BINS)?;
    let in_range_mass: f64 = cf.w1.iter().sum();

    let table = |h: &Histogram, masses: &[f64], norm: f64| -> Vec<HistogramBin> {
        h.densities()
            .iter()
            .zip(masses)
            .enumerate()
            .map(|(b, (&d, &m))| {
                let (l, r) = h.edges(b);
                HistogramBin {
                    bin_left: l,
                    bin_right: r,
                    density: d,
                    closed_form_density: m / (norm * (r - l)),
                }
            })
            .collect()
    };

    let reff_expected: Vec<f64> = cf.reff.iter().map(|m| m * n).collect();
    let reff_fit = chi_square_test(&hr.counts, &reff_expected, 0)?;
    let mut w_obs = hw.counts.clone();
    w_obs.push(hw.above);
    let mut w_exp: Vec<f64> = cf.w1.iter().map(|m| m * n).collect();
    w_exp.push(cf.w1_tail * n);
    let w1_fit = chi_square_test(&w_obs, &w_exp, 0)?;

    let small = count < SMALL_SAMPLE;
    Ok(EnsembleReport {
        seed,
        sample_count: count,
        mean_reff: mean(&reff),
        mean_w1: mean(&w1),
        std_reff: sample_std(&reff),
        std_w1: sample_std(&w1),
        stderr_reff: standard_error(&reff),
        stderr_w1: standard_error(&w1),
        closed_form_mean_reff: er,
        closed_form_mean_w1: ew,
        reff_histogram: table(&hr, &cf.reff, 1.0),
        w1_histogram: table(&hw, &cf.w1, in_range_mass),
        w1_above_range: hw.above,
        reff_fit,
        w1_fit,
        small_sample: small,
        mean_tolerance_se: if small { 5.0 } else { 3.0 },
    })
}

/// `bin_left,bin_right,density,closed_form_density` rows.
pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], mut w: W) -> Result<()> {
    writeln!(w, "bin_left,bin_right,density,closed_form_density")?;
    for b in bins {
        writeln!(w, "{},{},{},{}", b.bin_left, b.bin_right, b.density, b.closed_form_density)?;
    }
    Ok(())
}
