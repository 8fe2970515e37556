//! Scenario files: one JSON document per experiment.

use std::path::Path;

use chanshape::metrics::{grouped_6x2_masks, masked_4x2_masks, masked_4x2_rank_bound, Shape};
use chanshape::objective::{BandGrid, ObjectiveSpec};
use chanshape::optimizer::OptimizerConfig;
use chanshape::room::RoomSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "single-frequency-oci")]
    SingleFrequencyOci,
    #[serde(rename = "dual-frequency")]
    DualFrequency,
    #[serde(rename = "tri-note-music")]
    TriNoteMusic,
    #[serde(rename = "grouped-6x2")]
    Grouped6x2,
    #[serde(rename = "masked-4x2")]
    Masked4x2,
    #[serde(rename = "broadband")]
    Broadband,
    #[serde(rename = "rmt-baseline")]
    RmtBaseline,
    #[serde(rename = "acoustics-report")]
    AcousticsReport,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::SingleFrequencyOci => "single-frequency-oci",
            ScenarioKind::DualFrequency => "dual-frequency",
            ScenarioKind::TriNoteMusic => "tri-note-music",
            ScenarioKind::Grouped6x2 => "grouped-6x2",
            ScenarioKind::Masked4x2 => "masked-4x2",
            ScenarioKind::Broadband => "broadband",
            ScenarioKind::RmtBaseline => "rmt-baseline",
            ScenarioKind::AcousticsReport => "acoustics-report",
        }
    }

    /// Kinds that build rooms and run the optimizer.
    pub fn is_optimization(self) -> bool {
        !matches!(self, ScenarioKind::RmtBaseline | ScenarioKind::AcousticsReport)
    }

    fn ports(self) -> (usize, usize) {
        match self {
            ScenarioKind::Grouped6x2 => (6, 2),
            ScenarioKind::Masked4x2 => (4, 2),
            _ => (2, 2),
        }
    }

    pub fn default_objective(self) -> Option<ObjectiveSpec> {
        Some(match self {
            ScenarioKind::SingleFrequencyOci => ObjectiveSpec::g1(1300.0),
            ScenarioKind::DualFrequency => ObjectiveSpec::dual(1250.0, 1350.0),
            ScenarioKind::TriNoteMusic => ObjectiveSpec::g3([1318.0, 1480.0, 1661.0]),
            ScenarioKind::Grouped6x2 => {
                let (preserve, eliminate) = grouped_6x2_masks();
                ObjectiveSpec::Masked {
                    frequency: 1300.0,
                    target_rank: 2.0,
                    preserve,
                    eliminate,
                }
            }
            ScenarioKind::Masked4x2 => {
                let (preserve, eliminate) = masked_4x2_masks();
                ObjectiveSpec::Masked {
                    frequency: 1300.0,
                    target_rank: masked_4x2_rank_bound(),
                    preserve,
                    eliminate,
                }
            }
            ScenarioKind::Broadband => ObjectiveSpec::Band {
                grid: BandGrid {
                    start: 1350.0,
                    step: 4.0,
                    count: 26,
                },
                target_rank: 2.0,
            },
            _ => return None,
        })
    }

    pub fn default_optimizer(self) -> OptimizerConfig {
        let (budget, target) = match self {
            ScenarioKind::SingleFrequencyOci => (3000, 0.02),
            ScenarioKind::DualFrequency | ScenarioKind::TriNoteMusic => (10_000, 0.05),
            ScenarioKind::Grouped6x2 | ScenarioKind::Masked4x2 => (10_000, 0.0),
            _ => (20_000, 0.0),
        };
        OptimizerConfig {
            max_measurements: Some(budget),
            target_value: Some(target),
            stall_limit: Some(budget),
            ..Default::default()
        }
    }

    fn objective_matches(self, o: &ObjectiveSpec) -> bool {
        match (self, o) {
            (ScenarioKind::SingleFrequencyOci, ObjectiveSpec::IsolationDiagonal { .. })
            | (ScenarioKind::SingleFrequencyOci, ObjectiveSpec::IsolationAntidiagonal { .. })
            | (ScenarioKind::Grouped6x2, ObjectiveSpec::Masked { .. })
            | (ScenarioKind::Masked4x2, ObjectiveSpec::Masked { .. })
            | (ScenarioKind::Broadband, ObjectiveSpec::Band { .. }) => true,
            (ScenarioKind::DualFrequency, ObjectiveSpec::MultiFrequencyIsolation { frequencies, .. }) => {
                frequencies.len() == 2
            }
            (ScenarioKind::TriNoteMusic, ObjectiveSpec::MultiFrequencyIsolation { frequencies, .. }) => {
                frequencies.len() == 3
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AudioSignal {
    /// One Gaussian-enveloped beep per source at every objective frequency.
    #[default]
    Beeps,
    /// Source 0 plays "The C-D-E Song", source 1 "Hot Cross Buns".
    Melodies,
}

fn default_band_half_width() -> f64 {
    2.0
}
fn default_beep_sigma() -> f64 {
    0.1
}
fn default_beat() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioSpec {
    #[serde(default)]
    pub signal: AudioSignal,
    /// Intensities are integrated over `f ± band_half_width`.
    #[serde(default = "default_band_half_width")]
    pub band_half_width: f64,
    #[serde(default = "default_beep_sigma")]
    pub beep_sigma: f64,
    /// Beep centre per source, seconds; defaults to 0.4 s + 0.8 s·j.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beep_centers: Option<Vec<f64>>,
    #[serde(default = "default_beat")]
    pub beat_seconds: f64,
}

impl Default for AudioSpec {
    fn default() -> Self {
        AudioSpec {
            signal: AudioSignal::default(),
            band_half_width: default_band_half_width(),
            beep_sigma: default_beep_sigma(),
            beep_centers: None,
            beat_seconds: default_beat(),
        }
    }
}

impl AudioSpec {
    pub fn centers(&self, sources: usize) -> Vec<f64> {
        self.beep_centers
            .clone()
            .unwrap_or_else(|| (0..sources).map(|j| 0.4 + 0.8 * j as f64).collect())
    }

    /// Beep programme length: 0.4 s past the last centre.
    pub fn beep_duration(&self, sources: usize) -> f64 {
        self.centers(sources).iter().fold(0.0, |m: f64, &c| m.max(c)) + 0.4
    }
}

/// A scenario file as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Master seed; required.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<RoomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioSpec>,
    /// Ensemble size for `rmt-baseline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Modal-density frequencies for `acoustics-report`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    /// Output directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// A scenario with every default filled in; this is what runs and what is
/// saved next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedScenario {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub seed: u64,
    pub realizations: usize,
    pub room: RoomSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioSpec>,
    pub samples: usize,
    pub frequencies: Vec<f64>,
}

pub const DEFAULT_RMT_SAMPLES: usize = 10_000;

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(vec![format!("scenario file: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    /// Fills defaults, then checks everything; all violations are reported together.
    pub fn resolve(&self) -> Result<ResolvedScenario, CliError> {
        let mut v = Vec::new();
        let kind = self.kind;
        let seed = self.seed.unwrap_or_else(|| {
            v.push("seed is required; runs are never seeded from the clock".into());
            0
        });
        let realizations = self.realizations.unwrap_or(1);
        if kind.is_optimization() && realizations == 0 {
            v.push("realizations must be >= 1".into());
        }
        let (nr, ns) = kind.ports();
        let room = self.room.clone().unwrap_or(RoomSpec {
            receivers: nr,
            sources: ns,
            ..Default::default()
        });
        if room.seed != 0 {
            v.push("room.seed must be omitted; room seeds derive from the master seed".into());
        }
        let objective = self.objective.clone().or_else(|| kind.default_objective());
        let mut optimizer = self.optimizer.clone().unwrap_or_else(|| kind.default_optimizer());
        if self.optimizer.as_ref().is_some_and(|o| o.rng_seed != 0) {
            v.push("optimizer.rng_seed must be omitted; optimizer seeds derive from the master seed".into());
        }
        optimizer.rng_seed = 0;

        if kind.is_optimization() {
            v.extend(room.violations().into_iter().map(|m| format!("room: {m}")));
            if kind.ports() != (2, 2) && (room.receivers, room.sources) != kind.ports() {
                v.push(format!(
                    "{} needs {}x{} channels, room has {}x{}",
                    kind.name(),
                    nr,
                    ns,
                    room.receivers,
                    room.sources
                ));
            }
            match &objective {
                Some(o) => {
                    if !kind.objective_matches(o) {
                        v.push(format!("objective kind {} does not fit scenario {}", o.kind_name(), kind.name()));
                    }
                    v.extend(o.violations(room.receivers, room.sources).into_iter().map(|m| format!("objective: {m}")));
                    let nyquist = room.sample_rate / 2.0;
                    for f in o.frequencies() {
                        if f >= nyquist {
                            v.push(format!("objective: frequency {f} Hz is not below Nyquist {nyquist} Hz"));
                        }
                    }
                }
                None => v.push("objective is required".into()),
            }
            v.extend(optimizer.violations().into_iter().map(|m| format!("optimizer: {m}")));
            if let Some(a) = &self.audio {
                v.extend(audio_violations(kind, a, &room));
            }
        } else {
            for (name, present) in [
                ("room", self.room.is_some() && kind == ScenarioKind::RmtBaseline),
                ("objective", self.objective.is_some()),
                ("optimizer", self.optimizer.is_some()),
                ("audio", self.audio.is_some()),
            ] {
                if present {
                    v.push(format!("{name} does not apply to {}", kind.name()));
                }
            }
            if kind == ScenarioKind::AcousticsReport {
                v.extend(room.room.validate().err().map(|e| format!("room: {e}")));
            }
        }
        let samples = self.samples.unwrap_or(DEFAULT_RMT_SAMPLES);
        if kind == ScenarioKind::RmtBaseline && samples < chanshape::rmt::MIN_ENSEMBLE {
            v.push(format!("samples must be >= {}", chanshape::rmt::MIN_ENSEMBLE));
        }
        let frequencies = self
            .frequencies
            .clone()
            .unwrap_or_else(|| (0..=16).map(|k| 500.0 + 250.0 * k as f64).collect());
        if frequencies.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
            v.push("frequencies must be finite and >= 0".into());
        }

        if !v.is_empty() {
            return Err(CliError::Validation(v));
        }
        Ok(ResolvedScenario {
            kind,
            description: self.description.clone(),
            seed,
            realizations: if kind.is_optimization() { realizations } else { 1 },
            room,
            objective: if kind.is_optimization() { objective } else { None },
            optimizer,
            audio: self.audio.clone(),
            samples,
            frequencies,
        })
    }
}

fn audio_violations(kind: ScenarioKind, a: &AudioSpec, room: &RoomSpec) -> Vec<String> {
    let mut v = Vec::new();
    if kind == ScenarioKind::Broadband {
        v.push("audio replay is not defined for broadband scenarios".into());
    }
    if a.signal == AudioSignal::Melodies && (kind != ScenarioKind::TriNoteMusic || room.sources != 2) {
        v.push("melodies need a tri-note-music scenario with two sources".into());
    }
    if !(a.band_half_width > 0.0) {
        v.push("audio.band_half_width must be positive".into());
    }
    if !(a.beep_sigma > 0.0) || !(a.beat_seconds > 0.0) {
        v.push("audio.beep_sigma and audio.beat_seconds must be positive".into());
    }
    if let Some(c) = &a.beep_centers {
        if c.len() != room.sources {
            v.push(format!("audio.beep_centers needs {} entries, got {}", room.sources, c.len()));
        }
        if c.iter().any(|x| !(*x >= 0.0)) {
            v.push("audio.beep_centers must be >= 0".into());
        }
    }
    v
}

impl ResolvedScenario {
    /// Back to an editable spec; resolving it again gives `self`.
    pub fn to_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            kind: self.kind,
            description: self.description.clone(),
            seed: Some(self.seed),
            realizations: Some(self.realizations),
            room: Some(self.room.clone()),
            objective: self.objective.clone(),
            optimizer: self.kind.is_optimization().then(|| self.optimizer.clone()),
            audio: self.audio.clone(),
            samples: Some(self.samples),
            frequencies: Some(self.frequencies.clone()),
            output: None,
        }
    }

    pub fn objective(&self) -> &ObjectiveSpec {
        self.objective.as_ref().expect("optimization scenarios always carry an objective")
    }

    /// Room spec of realization `r`.
    pub fn room_for(&self, seed: u64) -> RoomSpec {
        RoomSpec { seed, ..self.room.clone() }
    }

    /// `(frequency, desired mask)` for every objective frequency, `[receiver][source]`.
    pub fn desired_paths(&self) -> Vec<(f64, Vec<Vec<bool>>)> {
        let (nr, ns) = (self.room.receivers, self.room.sources);
        let o = self.objective();
        match o {
            ObjectiveSpec::Masked { frequency, preserve, .. } => {
                vec![(*frequency, chanshape::signal::desired_mask(nr, ns, preserve))]
            }
            _ => {
                let shapes = o.shapes().unwrap_or_default();
                o.frequencies()
                    .into_iter()
                    .zip(shapes)
                    .map(|(f, s)| (f, shape_mask(nr, ns, s)))
                    .collect()
            }
        }
    }
}

pub fn shape_mask(nr: usize, ns: usize, shape: Shape) -> Vec<Vec<bool>> {
    (0..nr)
        .map(|i| (0..ns).map(|j| nr == ns && shape.on_target(nr, i, j)).collect())
        .collect()
}
