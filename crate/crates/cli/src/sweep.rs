//! One-parameter ensemble sweeps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::persist::OutputDir;
use crate::run::{run_scenario, RunSummary};
use crate::scenario::ScenarioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    CouplingRatio,
    Units,
    MaxFlipsPerStep,
    MaxMeasurements,
    NoiseSnrDb,
    QualityFactor,
    T60,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 7] = [
        SweepParameter::CouplingRatio,
        SweepParameter::Units,
        SweepParameter::MaxFlipsPerStep,
        SweepParameter::MaxMeasurements,
        SweepParameter::NoiseSnrDb,
        SweepParameter::QualityFactor,
        SweepParameter::T60,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::CouplingRatio => "coupling_ratio",
            SweepParameter::Units => "units",
            SweepParameter::MaxFlipsPerStep => "max_flips_per_step",
            SweepParameter::MaxMeasurements => "max_measurements",
            SweepParameter::NoiseSnrDb => "noise_snr_db",
            SweepParameter::QualityFactor => "quality_factor",
            SweepParameter::T60 => "t60",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            CliError::invalid(format!("{name} is not sweepable; choose one of {}", names.join(", ")))
        })
    }

    fn is_integer(self) -> bool {
        matches!(
            self,
            SweepParameter::Units | SweepParameter::MaxFlipsPerStep | SweepParameter::MaxMeasurements
        )
    }

    /// Copy of `base` with this parameter set to `value`; `base` must
    /// already be resolved so every section is present.
    pub fn apply(self, base: &ScenarioSpec, value: f64) -> Result<ScenarioSpec, CliError> {
        if self.is_integer() && (value.fract() != 0.0 || value < 0.0) {
            return Err(CliError::invalid(format!("{} takes whole numbers, got {value}", self.name())));
        }
        let mut s = base.clone();
        let room = s.room.as_mut().expect("resolved spec has a room");
        let opt = s.optimizer.as_mut().ok_or_else(|| CliError::invalid("sweeps need an optimization scenario"))?;
        match self {
            SweepParameter::CouplingRatio => room.coupling_ratio = value,
            SweepParameter::Units => room.units = value as usize,
            SweepParameter::MaxFlipsPerStep => opt.max_flips_per_step = value as usize,
            SweepParameter::MaxMeasurements => opt.max_measurements = Some(value as u64),
            SweepParameter::NoiseSnrDb => room.noise_snr_db = Some(value),
            SweepParameter::QualityFactor => room.resonator.quality_factor = value,
            SweepParameter::T60 => room.room.t60 = value,
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub directory: String,
    pub summary: RunSummary,
}

/// Runs `base` once per value in `<out>/<parameter>-<value>/` and writes
/// `sweep.csv` with ensemble means and stds per value and frequency.
pub fn run_sweep(
    base: &ScenarioSpec,
    parameter: SweepParameter,
    values: &[f64],
    out: &Path,
    workers: usize,
    force: bool,
) -> Result<Vec<SweepPoint>, CliError> {
    if values.is_empty() {
        return Err(CliError::invalid("sweep needs at least one value"));
    }
    let base = base.resolve()?.to_spec();
    let mut specs = Vec::new();
    let mut violations = Vec::new();
    for &v in values {
        match parameter.apply(&base, v).and_then(|s| s.resolve()) {
            Ok(r) => specs.push((v, r)),
            Err(CliError::Validation(msgs)) => {
                violations.extend(msgs.into_iter().map(|m| format!("{}={v}: {m}", parameter.name())))
            }
            Err(e) => return Err(e),
        }
    }
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    let parent = OutputDir::plain(out)?;
    let mut points = Vec::new();
    for (v, scn) in specs {
        let name = format!("{}-{v}", parameter.name());
        parent.log(&format!("sweep point {name}"))?;
        let outcome = run_scenario(&scn, &parent.path(&name), workers, force)?;
        points.push(SweepPoint {
            value: v,
            directory: name,
            summary: outcome.summary,
        });
    }
    parent.write("sweep.csv", &sweep_csv(parameter, &points)?)?;
    parent.write_manifest()?;
    Ok(points)
}

pub fn sweep_csv(parameter: SweepParameter, points: &[SweepPoint]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "parameter",
        "value",
        "frequency",
        "pre_reff_mean",
        "pre_reff_std",
        "post_reff_mean",
        "post_reff_std",
        "pre_w1_mean",
        "pre_w1_std",
        "post_w1_mean",
        "post_w1_std",
        "objective_post_mean",
        "objective_post_std",
        "measurements_mean",
        "measurements_std",
    ])?;
    let blank = |m: Option<(f64, f64)>| m.map_or([String::new(), String::new()], |(a, b)| [a.to_string(), b.to_string()]);
    for p in points {
        let s = &p.summary;
        for f in &s.frequencies {
            let mut row = vec![parameter.name().to_string(), p.value.to_string(), f.frequency.to_string()];
            row.extend([f.pre.effective_rank.mean, f.pre.effective_rank.std].map(|x| x.to_string()));
            row.extend([f.post.effective_rank.mean, f.post.effective_rank.std].map(|x| x.to_string()));
            row.extend(blank(f.pre.w1.map(|m| (m.mean, m.std))));
            row.extend(blank(f.post.w1.map(|m| (m.mean, m.std))));
            row.extend(blank(s.objective_post.map(|m| (m.mean, m.std))));
            row.extend([s.measurements.mean, s.measurements.std].map(|x| x.to_string()));
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}
