//! Scalar metrics over channel matrices: singular spectrum, effective rank,
//! degrees of (anti-)diagonalization, Shannon capacity, and the objective
//! family used to drive channel isolation.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Complex `Nr × Ns` matrix linking source emissions to receiver signals at
/// one frequency (`R = H · S`).
#[derive(Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: DMatrix<Complex64>,
    frequency: Option<f64>,
}

impl ChannelMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::Shape("channel matrix needs at least one row and column".into()));
        }
        if entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Domain("channel matrix entries must be finite".into()));
        }
        Ok(ChannelMatrix {
            entries,
            frequency: None,
        })
    }

    /// Builds from row-major complex entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let nr = rows.len();
        let ns = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ns) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(nr, ns, |i, j| rows[i][j]))
    }

    /// Builds from row-major real entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn identity(n: usize) -> Self {
        ChannelMatrix {
            entries: DMatrix::identity(n, n),
            frequency: None,
        }
    }

    pub fn zeros(nr: usize, ns: usize) -> Self {
        ChannelMatrix {
            entries: DMatrix::zeros(nr, ns),
            frequency: None,
        }
    }

    pub fn with_frequency(mut self, f: f64) -> Self {
        self.frequency = Some(f);
        self
    }

    pub fn frequency(&self) -> Option<f64> {
        self.frequency
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.entries[(i, j)] = value;
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.entries
    }

    /// Entry magnitudes |h_ij|, row-major.
    pub fn magnitudes(&self) -> Vec<Vec<f64>> {
        (0..self.nrows())
            .map(|i| (0..self.ncols()).map(|j| self.get(i, j).norm()).collect())
            .collect()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        ChannelMatrix {
            entries: self.entries.map(|z| z * c),
            frequency: self.frequency,
        }
    }

    pub fn transpose(&self) -> Self {
        ChannelMatrix {
            entries: self.entries.transpose(),
            frequency: self.frequency,
        }
    }

    /// Σ|h_ij|².
    pub fn total_energy(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl fmt::Debug for ChannelMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChannelMatrix({}x{}", self.nrows(), self.ncols())?;
        if let Some(freq) = self.frequency {
            write!(f, " @ {freq} Hz")?;
        }
        write!(f, ")[")?;
        for i in 0..self.nrows() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.ncols() {
                let z = self.get(i, j);
                write!(f, " {:.4}{:+.4}i", z.re, z.im)?;
            }
        }
        write!(f, " ]")
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelMatrixRepr {
    rows: usize,
    cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequency: Option<f64>,
    /// Row-major `[re, im]` pairs.
    entries: Vec<[f64; 2]>,
}

impl Serialize for ChannelMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut entries = Vec::with_capacity(self.nrows() * self.ncols());
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                let z = self.get(i, j);
                entries.push([z.re, z.im]);
            }
        }
        ChannelMatrixRepr {
            rows: self.nrows(),
            cols: self.ncols(),
            frequency: self.frequency,
            entries,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ChannelMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ChannelMatrixRepr::deserialize(deserializer)?;
        if repr.entries.len() != repr.rows * repr.cols {
            return Err(serde::de::Error::custom("entry count does not match rows x cols"));
        }
        let m = DMatrix::from_fn(repr.rows, repr.cols, |i, j| {
            let [re, im] = repr.entries[i * repr.cols + j];
            Complex64::new(re, im)
        });
        let mut h = ChannelMatrix::new(m).map_err(serde::de::Error::custom)?;
        h.frequency = repr.frequency;
        Ok(h)
    }
}

/// Singular values (descending) and their normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    pub sigma: Vec<f64>,
    pub p: Vec<f64>,
}

impl SingularSpectrum {
    /// Shannon entropy −Σ p ln p with 0·ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        -self
            .p
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

pub fn singular_values(h: &ChannelMatrix) -> Vec<f64> {
    let mut sigma: Vec<f64> = h.entries.singular_values().iter().map(|s| s.max(0.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    sigma
}

pub fn singular_spectrum(h: &ChannelMatrix) -> Result<SingularSpectrum> {
    let sigma = singular_values(h);
    let total: f64 = sigma.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let p = sigma.iter().map(|s| s / total).collect();
    Ok(SingularSpectrum { sigma, p })
}

/// exp of the singular-value entropy; lies in [1, min(Nr, Ns)].
pub fn effective_rank(h: &ChannelMatrix) -> Result<f64> {
    let spectrum = singular_spectrum(h)?;
    let upper = spectrum.sigma.len() as f64;
    Ok(spectrum.entropy().exp().clamp(1.0, upper))
}

/// Target pattern for the (anti-)diagonalization degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Diagonal,
    Antidiagonal,
}

impl Shape {
    /// Whether `(i, j)` lies on the target pattern of an `n × n` matrix.
    pub fn on_target(self, n: usize, i: usize, j: usize) -> bool {
        match self {
            Shape::Diagonal => i == j,
            Shape::Antidiagonal => i + j + 1 == n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Diagonal => write!(f, "diagonal"),
            Shape::Antidiagonal => write!(f, "antidiagonal"),
        }
    }
}

/// Off-target to on-target sum of entry magnitudes (w₁ for the diagonal,
/// w₂ for the anti-diagonal). `+∞` when only the on-target sum vanishes.
pub fn w_offdiag(h: &ChannelMatrix, shape: Shape) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::Shape(format!(
            "{shape} degree needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let n = h.nrows();
    let (mut on, mut off) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let a = h.get(i, j).norm();
            if shape.on_target(n, i, j) {
                on += a;
            } else {
                off += a;
            }
        }
    }
    if on > 0.0 {
        Ok(off / on)
    } else if off > 0.0 {
        Ok(f64::INFINITY)
    } else {
        Err(Error::DegenerateMatrix(format!("{shape} degree of an all-zero matrix")))
    }
}

/// Shannon capacity Σ log₂(1 + snr/N · σ²) in bits/s/Hz, N = min(Nr, Ns).
pub fn capacity(h: &ChannelMatrix, snr: f64) -> Result<f64> {
    let sigma = singular_values(h);
    capacity_from_singular_values(&sigma, snr)
}

pub fn capacity_from_singular_values(sigma: &[f64], snr: f64) -> Result<f64> {
    if !(snr >= 0.0) || !snr.is_finite() {
        return Err(Error::Domain(format!("snr must be finite and >= 0, got {snr}")));
    }
    let n = sigma.len() as f64;
    Ok(sigma.iter().map(|s| (1.0 + snr / n * s * s).log2()).sum())
}

fn require_square_family(hs: &[ChannelMatrix]) -> Result<usize> {
    let first = hs
        .first()
        .ok_or_else(|| Error::Shape("objective needs at least one matrix".into()))?;
    let n = first.nrows();
    for h in hs {
        if !h.is_square() || h.nrows() != n {
            return Err(Error::Shape(format!(
                "objective needs square matrices of equal size, got {}x{} and {}x{}",
                n,
                n,
                h.nrows(),
                h.ncols()
            )));
        }
    }
    Ok(n)
}

/// `|target − mean R_eff| + mean w_shape` over one or more matrices.
///
/// One diagonal matrix gives G₁, one anti-diagonal matrix G₂, and three
/// diagonal matrices with target 2 give G₃.
pub fn objective_isolation(hs: &[ChannelMatrix], shapes: &[Shape], target_rank: f64) -> Result<f64> {
    require_square_family(hs)?;
    if shapes.len() != hs.len() {
        return Err(Error::Shape(format!(
            "{} matrices but {} shapes",
            hs.len(),
            shapes.len()
        )));
    }
    let count = hs.len() as f64;
    let mut rank_sum = 0.0;
    let mut w_sum = 0.0;
    for (h, &shape) in hs.iter().zip(shapes) {
        rank_sum += effective_rank(h)?;
        w_sum += w_offdiag(h, shape)?;
    }
    if w_sum.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok((target_rank - rank_sum / count).abs() + w_sum / count)
}

/// Index set of matrix entries, 0-based `(row, column)` pairs.
pub type IndexSet = Vec<(usize, usize)>;

/// Validates a preserve/eliminate mask pair against an `nr × ns` matrix.
pub fn validate_masks(nr: usize, ns: usize, preserve: &[(usize, usize)], eliminate: &[(usize, usize)]) -> Result<()> {
    if preserve.is_empty() {
        return Err(Error::Config("preserve set must be nonempty".into()));
    }
    for &(i, j) in preserve.iter().chain(eliminate) {
        if i >= nr || j >= ns {
            return Err(Error::Config(format!(
                "mask entry ({i}, {j}) outside a {nr}x{ns} matrix"
            )));
        }
    }
    for p in preserve {
        if eliminate.contains(p) {
            return Err(Error::Config(format!(
                "entry ({}, {}) is in both preserve and eliminate sets",
                p.0, p.1
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for p in preserve.iter().chain(eliminate) {
        if !seen.insert(*p) {
            return Err(Error::Config(format!("entry ({}, {}) listed twice", p.0, p.1)));
        }
    }
    Ok(())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// `|target − R_eff| + sum(A₀)/sum(A₁) + std(A₁)/max(A₁)` over entry
/// magnitudes (G₄ and G₅).
pub fn objective_masked(
    h: &ChannelMatrix,
    preserve: &[(usize, usize)],
    eliminate: &[(usize, usize)],
    target_rank: f64,
) -> Result<f64> {
    validate_masks(h.nrows(), h.ncols(), preserve, eliminate)?;
    let kept: Vec<f64> = preserve.iter().map(|&(i, j)| h.get(i, j).norm()).collect();
    let removed: f64 = eliminate.iter().map(|&(i, j)| h.get(i, j).norm()).sum();
    let kept_sum: f64 = kept.iter().sum();
    let kept_max = kept.iter().cloned().fold(0.0, f64::max);
    if !(kept_sum > 0.0) {
        return Err(Error::DegenerateMatrix("all preserved entries are zero".into()));
    }
    let rank = effective_rank(h)?;
    Ok((target_rank - rank).abs() + removed / kept_sum + population_std(&kept) / kept_max)
}

/// Spectrally averaged isolation over a frequency grid (G₆):
/// `|target − mean R| + mean w₁ + std(R) + std(w₁)`.
pub fn objective_band(hs: &[ChannelMatrix], target_rank: f64) -> Result<f64> {
    require_square_family(hs)?;
    if hs.len() < 2 {
        return Err(Error::Config("band objective needs at least two grid points".into()));
    }
    let ranks = hs.iter().map(effective_rank).collect::<Result<Vec<_>>>()?;
    let ws = hs
        .iter()
        .map(|h| w_offdiag(h, Shape::Diagonal))
        .collect::<Result<Vec<_>>>()?;
    if ws.iter().any(|w| w.is_infinite()) {
        return Ok(f64::INFINITY);
    }
    Ok((target_rank - mean(&ranks)).abs() + mean(&ws) + population_std(&ranks) + population_std(&ws))
}

/// Σ_{A₀}|h|² / Σ_{A₁}|h|².
pub fn mask_energy_ratio(h: &ChannelMatrix, preserve: &[(usize, usize)], eliminate: &[(usize, usize)]) -> f64 {
    let e = |set: &[(usize, usize)]| set.iter().map(|&(i, j)| h.get(i, j).norm_sqr()).sum::<f64>();
    e(eliminate) / e(preserve)
}

/// Energy on and off the target pattern of a square matrix.
pub fn pattern_energy(h: &ChannelMatrix, shape: Shape) -> (f64, f64) {
    let n = h.nrows();
    let (mut on, mut off) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..h.ncols() {
            let e = h.get(i, j).norm_sqr();
            if shape.on_target(n, i, j) {
                on += e;
            } else {
                off += e;
            }
        }
    }
    (on, off)
}

/// Σ|h_ij − h_ji| / Σ|h_ij| for a square matrix.
pub fn transpose_asymmetry(h: &ChannelMatrix) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::Shape("transpose asymmetry needs a square matrix".into()));
    }
    let n = h.nrows();
    let mut diff = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            diff += (h.get(i, j) - h.get(j, i)).norm();
            total += h.get(i, j).norm();
        }
    }
    if total > 0.0 {
        Ok(diff / total)
    } else {
        Err(Error::DegenerateMatrix("transpose asymmetry of an all-zero matrix".into()))
    }
}

/// The 6×2 grouping of microphones 1-3 to source 1 and 4-6 to source 2.
pub fn grouped_6x2_masks() -> (IndexSet, IndexSet) {
    let preserve = vec![(0, 0), (1, 0), (2, 0), (3, 1), (4, 1), (5, 1)];
    let eliminate = vec![(0, 1), (1, 1), (2, 1), (3, 0), (4, 0), (5, 0)];
    (preserve, eliminate)
}

/// The 4×2 pattern: mic 1 hears source 1, mic 2 both, mic 3 source 2, mic 4 nothing.
pub fn masked_4x2_masks() -> (IndexSet, IndexSet) {
    let preserve = vec![(0, 0), (1, 0), (1, 1), (2, 1)];
    let eliminate = vec![(0, 1), (2, 0), (3, 0), (3, 1)];
    (preserve, eliminate)
}

/// Upper bound on R_eff for the 4×2 pattern with equal preserved magnitudes:
/// singular values (√3, 1).
pub fn masked_4x2_rank_bound() -> f64 {
    let s1 = 3f64.sqrt();
    let p = s1 / (s1 + 1.0);
    (-(p * p.ln()) - (1.0 - p) * (1.0 - p).ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spectrum_examples() {
        let s = singular_spectrum(&ChannelMatrix::identity(2)).unwrap();
        assert!(close(s.sigma[0], 1.0, 1e-12) && close(s.sigma[1], 1.0, 1e-12));
        assert!(close(s.p[0], 0.5, 1e-12));

        let r1 = ChannelMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        let s = singular_spectrum(&r1).unwrap();
        assert!(close(s.p[0], 1.0, 1e-12) && close(s.p[1], 0.0, 1e-12));

        let anti = ChannelMatrix::from_real_rows(&[&[0.0, 2.0], &[1.0, 0.0]]).unwrap();
        let s = singular_spectrum(&anti).unwrap();
        assert!(close(s.sigma[0], 2.0, 1e-12) && close(s.sigma[1], 1.0, 1e-12));
        assert!(close(s.p[0], 2.0 / 3.0, 1e-12));

        assert_eq!(
            singular_spectrum(&ChannelMatrix::zeros(2, 2)),
            Err(Error::DegenerateSpectrum)
        );
    }

    #[test]
    fn effective_rank_examples() {
        assert!(close(effective_rank(&ChannelMatrix::identity(2)).unwrap(), 2.0, 1e-12));
        let r1 = ChannelMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!(close(effective_rank(&r1).unwrap(), 1.0, 1e-12));
        let d = ChannelMatrix::from_real_rows(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let expected = (-(0.75f64 * 0.75f64.ln()) - 0.25 * 0.25f64.ln()).exp();
        assert!(close(effective_rank(&d).unwrap(), expected, 1e-12));
        assert!(close(expected, 1.7548, 1e-4));
    }

    #[test]
    fn w_examples() {
        let id = ChannelMatrix::identity(2);
        assert_eq!(w_offdiag(&id, Shape::Diagonal).unwrap(), 0.0);
        let m = ChannelMatrix::from_real_rows(&[&[1.0, 0.5], &[0.5, 1.0]]).unwrap();
        assert!(close(w_offdiag(&m, Shape::Diagonal).unwrap(), 0.5, 1e-15));
        let swap = ChannelMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(w_offdiag(&swap, Shape::Diagonal).unwrap(), f64::INFINITY);
        assert_eq!(w_offdiag(&swap, Shape::Antidiagonal).unwrap(), 0.0);
        assert!(matches!(
            w_offdiag(&ChannelMatrix::zeros(2, 2), Shape::Diagonal),
            Err(Error::DegenerateMatrix(_))
        ));
        assert!(matches!(
            w_offdiag(&ChannelMatrix::zeros(3, 2), Shape::Diagonal),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn antidiagonal_3x3_pattern() {
        // i + j = N + 1 in 1-based indexing.
        let m = ChannelMatrix::from_real_rows(&[&[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(w_offdiag(&m, Shape::Antidiagonal).unwrap(), 0.0);
        assert!(close(w_offdiag(&m, Shape::Diagonal).unwrap(), 2.0, 1e-15));
    }

    #[test]
    fn capacity_examples() {
        let id = ChannelMatrix::identity(2);
        assert!(close(capacity(&id, 3.0).unwrap(), 2.0 * 2.5f64.log2(), 1e-12));
        let r1 = ChannelMatrix::from_real_rows(&[&[2f64.sqrt(), 0.0], &[0.0, 0.0]]).unwrap();
        assert!(close(capacity(&r1, 3.0).unwrap(), 2.0, 1e-12));
        assert_eq!(capacity(&r1, 0.0).unwrap(), 0.0);
        assert!(matches!(capacity(&id, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn isolation_examples() {
        let id = ChannelMatrix::identity(2);
        assert!(objective_isolation(&[id.clone()], &[Shape::Diagonal], 2.0).unwrap() < 1e-12);
        let swap = ChannelMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert!(objective_isolation(&[swap.clone()], &[Shape::Antidiagonal], 2.0).unwrap() < 1e-12);
        assert_eq!(
            objective_isolation(&[swap], &[Shape::Diagonal], 2.0).unwrap(),
            f64::INFINITY
        );
        let three = vec![id.clone(), id.clone(), id];
        assert!(objective_isolation(&three, &[Shape::Diagonal; 3], 2.0).unwrap() < 1e-12);
    }

    #[test]
    fn single_matrix_isolation_is_g1() {
        let h = ChannelMatrix::from_rows(&[vec![c(0.3, 0.1), c(-0.7, 0.2)], vec![c(0.2, 0.9), c(1.1, -0.4)]]).unwrap();
        let g1 = (2.0 - effective_rank(&h).unwrap()) + w_offdiag(&h, Shape::Diagonal).unwrap();
        assert_eq!(objective_isolation(&[h.clone()], &[Shape::Diagonal], 2.0).unwrap(), g1);
        let g2 = (2.0 - effective_rank(&h).unwrap()) + w_offdiag(&h, Shape::Antidiagonal).unwrap();
        assert_eq!(objective_isolation(&[h], &[Shape::Antidiagonal], 2.0).unwrap(), g2);
    }

    #[test]
    fn masked_examples() {
        let (keep, drop) = grouped_6x2_masks();
        let pattern = ChannelMatrix::from_real_rows(&[
            &[1.0, 0.0],
            &[1.0, 0.0],
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 1.0],
            &[0.0, 1.0],
        ])
        .unwrap();
        assert!(objective_masked(&pattern, &keep, &drop, 2.0).unwrap() < 1e-12);

        let (keep, drop) = masked_4x2_masks();
        let pattern =
            ChannelMatrix::from_real_rows(&[&[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let bound = masked_4x2_rank_bound();
        assert!(close(bound, 1.9286, 1e-4), "{bound}");
        assert!(close(effective_rank(&pattern).unwrap(), bound, 1e-12));
        assert!(objective_masked(&pattern, &keep, &drop, 1.9286).unwrap() < 1e-4);
    }

    #[test]
    fn masked_errors() {
        let h = ChannelMatrix::identity(2);
        assert!(objective_masked(&h, &[], &[(0, 1)], 2.0).is_err());
        assert!(objective_masked(&h, &[(0, 0)], &[(0, 0)], 2.0).is_err());
        assert!(objective_masked(&h, &[(0, 0)], &[(2, 0)], 2.0).is_err());
        assert!(matches!(
            objective_masked(&h, &[(0, 1)], &[(0, 0)], 2.0),
            Err(Error::DegenerateMatrix(_))
        ));
    }

    #[test]
    fn band_examples() {
        let id = ChannelMatrix::identity(2);
        assert_eq!(objective_band(&vec![id.clone(); 26], 2.0).unwrap(), 0.0);
        let r1 = ChannelMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        let v = objective_band(&[id.clone(), r1], 2.0).unwrap();
        assert!(close(v, 1.0, 1e-12), "{v}");
        assert!(objective_band(&[id], 2.0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let h = ChannelMatrix::from_rows(&[vec![c(0.3, 0.1), c(-0.7, 0.2)], vec![c(0.2, 0.9), c(1.1, -0.4)]])
            .unwrap()
            .with_frequency(1300.0);
        let s = serde_json::to_string(&h).unwrap();
        let back: ChannelMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }
}
