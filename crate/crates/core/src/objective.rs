//! Declarative objectives compiled to a scalar function of measured channel
//! matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    objective_band, objective_isolation, objective_masked, validate_masks, ChannelMatrix, IndexSet, Shape,
};

/// Uniform frequency grid `start + n·step`, `n = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl BandGrid {
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.count).map(|n| self.start + n as f64 * self.step).collect()
    }
}

/// How per-frequency isolation terms combine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combine {
    /// `|target − mean R| + mean w`, as in G₃.
    #[default]
    Mean,
    /// Sum of per-frequency `|target − R| + w` terms, e.g. G₁(f₁) + G₂(f₂).
    Sum,
}

fn default_target_rank() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    /// G₁ at one frequency.
    IsolationDiagonal {
        frequency: f64,
        #[serde(default = "default_target_rank")]
        target_rank: f64,
    },
    /// G₂ at one frequency.
    IsolationAntidiagonal {
        frequency: f64,
        #[serde(default = "default_target_rank")]
        target_rank: f64,
    },
    /// Several frequencies, one target shape each.
    MultiFrequencyIsolation {
        frequencies: Vec<f64>,
        shapes: Vec<Shape>,
        #[serde(default = "default_target_rank")]
        target_rank: f64,
        #[serde(default)]
        combine: Combine,
    },
    /// Preserve/eliminate entry masks on a possibly rectangular matrix.
    Masked {
        frequency: f64,
        target_rank: f64,
        preserve: IndexSet,
        eliminate: IndexSet,
    },
    /// Spectrally averaged diagonal isolation over a grid.
    Band {
        grid: BandGrid,
        #[serde(default = "default_target_rank")]
        target_rank: f64,
    },
}

impl ObjectiveSpec {
    pub fn g1(frequency: f64) -> Self {
        ObjectiveSpec::IsolationDiagonal {
            frequency,
            target_rank: 2.0,
        }
    }

    /// Three diagonal isolations averaged, target rank 2.
    pub fn g3(frequencies: [f64; 3]) -> Self {
        ObjectiveSpec::MultiFrequencyIsolation {
            frequencies: frequencies.to_vec(),
            shapes: vec![Shape::Diagonal; 3],
            target_rank: 2.0,
            combine: Combine::Mean,
        }
    }

    /// G₁ at `f1` plus G₂ at `f2`.
    pub fn dual(f1: f64, f2: f64) -> Self {
        ObjectiveSpec::MultiFrequencyIsolation {
            frequencies: vec![f1, f2],
            shapes: vec![Shape::Diagonal, Shape::Antidiagonal],
            target_rank: 2.0,
            combine: Combine::Sum,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ObjectiveSpec::IsolationDiagonal { .. } => "isolation-diagonal",
            ObjectiveSpec::IsolationAntidiagonal { .. } => "isolation-antidiagonal",
            ObjectiveSpec::MultiFrequencyIsolation { .. } => "multi-frequency-isolation",
            ObjectiveSpec::Masked { .. } => "masked",
            ObjectiveSpec::Band { .. } => "band",
        }
    }

    pub fn target_rank(&self) -> f64 {
        match self {
            ObjectiveSpec::IsolationDiagonal { target_rank, .. }
            | ObjectiveSpec::IsolationAntidiagonal { target_rank, .. }
            | ObjectiveSpec::MultiFrequencyIsolation { target_rank, .. }
            | ObjectiveSpec::Masked { target_rank, .. }
            | ObjectiveSpec::Band { target_rank, .. } => *target_rank,
        }
    }

    /// Frequencies at which the objective needs a measured matrix, in order.
    pub fn frequencies(&self) -> Vec<f64> {
        match self {
            ObjectiveSpec::IsolationDiagonal { frequency, .. }
            | ObjectiveSpec::IsolationAntidiagonal { frequency, .. }
            | ObjectiveSpec::Masked { frequency, .. } => vec![*frequency],
            ObjectiveSpec::MultiFrequencyIsolation { frequencies, .. } => frequencies.clone(),
            ObjectiveSpec::Band { grid, .. } => grid.frequencies(),
        }
    }

    /// Target shape per measured frequency, where the objective has one.
    pub fn shapes(&self) -> Option<Vec<Shape>> {
        match self {
            ObjectiveSpec::IsolationDiagonal { .. } => Some(vec![Shape::Diagonal]),
            ObjectiveSpec::IsolationAntidiagonal { .. } => Some(vec![Shape::Antidiagonal]),
            ObjectiveSpec::MultiFrequencyIsolation { shapes, .. } => Some(shapes.clone()),
            ObjectiveSpec::Band { grid, .. } => Some(vec![Shape::Diagonal; grid.count]),
            ObjectiveSpec::Masked { .. } => None,
        }
    }

    /// Every violation against an `nr × ns` channel, empty when valid.
    pub fn violations(&self, nr: usize, ns: usize) -> Vec<String> {
        let mut out = Vec::new();
        let target = self.target_rank();
        let rank_cap = nr.min(ns) as f64;
        if !(target > 0.0) || !target.is_finite() {
            out.push(format!("target_rank must be positive, got {target}"));
        } else if target > rank_cap {
            out.push(format!("target_rank {target} exceeds min(Nr, Ns) = {rank_cap}"));
        }
        for f in self.frequencies() {
            if !(f > 0.0) || !f.is_finite() {
                out.push(format!("frequency {f} must be positive"));
            }
        }
        match self {
            ObjectiveSpec::Masked {
                preserve, eliminate, ..
            } => {
                if let Err(e) = validate_masks(nr, ns, preserve, eliminate) {
                    out.push(e.to_string());
                }
            }
            _ => {
                if nr != ns {
                    out.push(format!(
                        "{} objective needs a square channel, got {nr}x{ns}",
                        self.kind_name()
                    ));
                }
            }
        }
        match self {
            ObjectiveSpec::MultiFrequencyIsolation {
                frequencies, shapes, ..
            } => {
                if frequencies.is_empty() {
                    out.push("multi-frequency objective needs at least one frequency".into());
                }
                if frequencies.len() != shapes.len() {
                    out.push(format!(
                        "{} frequencies but {} shapes",
                        frequencies.len(),
                        shapes.len()
                    ));
                }
            }
            ObjectiveSpec::Band { grid, .. } => {
                if grid.count < 2 {
                    out.push("band grid needs at least two points".into());
                }
                if !(grid.step > 0.0) {
                    out.push("band grid step must be positive".into());
                }
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self, nr: usize, ns: usize) -> Result<()> {
        let v = self.violations(nr, ns);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Objective value for matrices measured at [`Self::frequencies`].
    pub fn evaluate(&self, hs: &[ChannelMatrix]) -> Result<f64> {
        let expected = self.frequencies().len();
        if hs.len() != expected {
            return Err(Error::Shape(format!(
                "{} objective needs {expected} matrices, got {}",
                self.kind_name(),
                hs.len()
            )));
        }
        match self {
            ObjectiveSpec::IsolationDiagonal { target_rank, .. } => {
                objective_isolation(hs, &[Shape::Diagonal], *target_rank)
            }
            ObjectiveSpec::IsolationAntidiagonal { target_rank, .. } => {
                objective_isolation(hs, &[Shape::Antidiagonal], *target_rank)
            }
            ObjectiveSpec::MultiFrequencyIsolation {
                shapes,
                target_rank,
                combine,
                ..
            } => match combine {
                Combine::Mean => objective_isolation(hs, shapes, *target_rank),
                Combine::Sum => hs
                    .iter()
                    .zip(shapes)
                    .map(|(h, &s)| objective_isolation(std::slice::from_ref(h), &[s], *target_rank))
                    .sum(),
            },
            ObjectiveSpec::Masked {
                preserve,
                eliminate,
                target_rank,
                ..
            } => objective_masked(&hs[0], preserve, eliminate, *target_rank),
            ObjectiveSpec::Band { target_rank, .. } => objective_band(hs, *target_rank),
        }
    }

    /// Like [`Self::evaluate`] but maps degenerate inputs to `+∞`, which the
    /// climbing optimizer always ranks last.
    pub fn value(&self, hs: &[ChannelMatrix]) -> f64 {
        match self.evaluate(hs) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::INFINITY,
        }
    }
}
