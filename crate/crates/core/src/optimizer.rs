//! Binary climbing optimizer over unit configurations, plus an exhaustive
//! oracle for small K.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::room::ArmConfiguration;

/// Largest K accepted by [`exhaustive_search`].
pub const EXHAUSTIVE_MAX_UNITS: usize = 20;

fn default_max_flips() -> usize {
    15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Upper bound of the per-step flip count M, drawn from 1..=this.
    #[serde(default = "default_max_flips")]
    pub max_flips_per_step: usize,
    /// Budget of oracle evaluations, the initial one included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_measurements: Option<u64>,
    /// Stop once the objective is at or below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_value: Option<f64>,
    /// Stop after this many consecutive rejected steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_limit: Option<u64>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_flips_per_step: default_max_flips(),
            max_measurements: Some(3000),
            target_value: Some(0.0),
            stall_limit: Some(1000),
            rng_seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_flips_per_step == 0 {
            out.push("max_flips_per_step must be >= 1".into());
        }
        let absent = [
            self.max_measurements.is_none(),
            self.target_value.is_none(),
            self.stall_limit.is_none(),
        ]
        .iter()
        .filter(|&&a| a)
        .count();
        if absent > 1 {
            out.push("at most one of max_measurements, target_value, stall_limit may be omitted".into());
        }
        if self.max_measurements == Some(0) {
            out.push("max_measurements must be >= 1".into());
        }
        if self.stall_limit == Some(0) {
            out.push("stall_limit must be >= 1".into());
        }
        if let Some(t) = self.target_value {
            if t.is_nan() {
                out.push("target_value must not be NaN".into());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Target,
    Stall,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: u64,
    pub flipped: Vec<usize>,
    pub value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub initial_value: f64,
    pub records: Vec<StepRecord>,
    pub best_config: ArmConfiguration,
    pub best_value: f64,
    pub measurement_count: u64,
    pub stop_reason: StopReason,
    pub rng_seed: u64,
}

/// Compact trace summary for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub initial_value: f64,
    pub best_value: f64,
    pub best_config: ArmConfiguration,
    pub measurement_count: u64,
    pub accepted_steps: usize,
    pub stop_reason: StopReason,
    pub seed: u64,
}

impl OptimizationTrace {
    pub fn accepted_values(&self) -> Vec<f64> {
        std::iter::once(self.initial_value)
            .chain(self.records.iter().filter(|r| r.accepted).map(|r| r.value))
            .collect()
    }

    /// Incumbent objective after each iteration, starting with the initial value.
    pub fn incumbent_curve(&self) -> Vec<f64> {
        let mut cur = self.initial_value;
        std::iter::once(cur)
            .chain(self.records.iter().map(|r| {
                if r.accepted {
                    cur = r.value;
                }
                cur
            }))
            .collect()
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            initial_value: self.initial_value,
            best_value: self.best_value,
            best_config: self.best_config.clone(),
            measurement_count: self.measurement_count,
            accepted_steps: self.records.iter().filter(|r| r.accepted).count(),
            stop_reason: self.stop_reason,
            seed: self.rng_seed,
        }
    }

    /// Header plus one row per iteration: `iteration,M,flipped,objective,accepted`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,M,flipped,objective,accepted")?;
        for r in &self.records {
            let flipped: Vec<String> = r.flipped.iter().map(|k| k.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iteration,
                r.flipped.len(),
                flipped.join(";"),
                r.value,
                r.accepted as u8
            )?;
        }
        Ok(())
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Climb from the all-open configuration. Each step flips M distinct
/// random units, M uniform on `1..=min(max_flips_per_step, K)`, and keeps
/// the flip only if the objective strictly decreases. NaN counts as `+∞`.
pub fn climb<F>(mut oracle: F, units: usize, cfg: &OptimizerConfig) -> Result<OptimizationTrace>
where
    F: FnMut(&ArmConfiguration) -> f64,
{
    if units == 0 {
        return Err(Error::Config("climb needs at least one unit".into()));
    }
    cfg.validate()?;
    let mut rng = StreamRng::seed_from_u64(cfg.rng_seed);
    let max_m = cfg.max_flips_per_step.min(units);

    let mut config = ArmConfiguration::zeros(units);
    let mut current = sanitize(oracle(&config));
    let initial_value = current;
    let mut measurements = 1u64;
    let mut stall = 0u64;
    let mut records = Vec::new();
    let reached = |v: f64| cfg.target_value.is_some_and(|t| v <= t);

    let stop_reason = loop {
        if reached(current) {
            break StopReason::Target;
        }
        if cfg.stall_limit.is_some_and(|s| stall >= s) {
            break StopReason::Stall;
        }
        if cfg.max_measurements.is_some_and(|b| measurements >= b) {
            break StopReason::Budget;
        }
        let m = rng.random_range(1..=max_m);
        let mut flipped = sample(&mut rng, units, m).into_vec();
        flipped.sort_unstable();
        config.flip_all(&flipped);
        let value = sanitize(oracle(&config));
        measurements += 1;
        let accepted = value < current;
        if accepted {
            current = value;
            stall = 0;
        } else {
            config.flip_all(&flipped);
            stall += 1;
        }
        records.push(StepRecord {
            iteration: records.len() as u64 + 1,
            flipped,
            value,
            accepted,
        });
    };

    Ok(OptimizationTrace {
        initial_value,
        records,
        best_config: config,
        best_value: current,
        measurement_count: measurements,
        stop_reason,
        rng_seed: cfg.rng_seed,
    })
}

/// Global minimum over all `2^K` configurations. Ties go to the lowest
/// configuration index, unit `k` being bit `k`.
pub fn exhaustive_search<F>(mut oracle: F, units: usize) -> Result<(ArmConfiguration, f64)>
where
    F: FnMut(&ArmConfiguration) -> f64,
{
    if units == 0 {
        return Err(Error::Config("exhaustive search needs at least one unit".into()));
    }
    if units > EXHAUSTIVE_MAX_UNITS {
        return Err(Error::Config(format!(
            "exhaustive search is capped at K = {EXHAUSTIVE_MAX_UNITS}, got {units}"
        )));
    }
    let mut best = (0u64, f64::INFINITY);
    let mut first = true;
    for index in 0..(1u64 << units) {
        let v = sanitize(oracle(&ArmConfiguration::from_index(units, index)));
        if first || v < best.1 {
            best = (index, v);
            first = false;
        }
    }
    Ok((ArmConfiguration::from_index(units, best.0), best.1))
}
