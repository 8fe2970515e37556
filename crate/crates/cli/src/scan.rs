//! Frequency scans of pre- and post-optimization configurations.

use chanshape::room::ArmConfiguration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::{build_room, matrix_metrics, MeanStd, RunRecord};
use crate::scenario::ResolvedScenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub f_lo: f64,
    pub f_hi: f64,
    pub step: f64,
}

impl ScanGrid {
    /// Grid points from `f_lo` up to `f_hi` inclusive (within half a step).
    pub fn frequencies(&self, sample_rate: f64) -> Result<Vec<f64>, CliError> {
        let nyquist = sample_rate / 2.0;
        let mut v = Vec::new();
        if !(self.step > 0.0) {
            v.push(format!("scan step must be positive, got {}", self.step));
        }
        if !(self.f_lo > 0.0 && self.f_lo <= self.f_hi && self.f_hi < nyquist) {
            v.push(format!(
                "scan range [{}, {}] Hz must lie inside (0, {nyquist}) Hz",
                self.f_lo, self.f_hi
            ));
        }
        if !v.is_empty() {
            return Err(CliError::Validation(v));
        }
        let n = ((self.f_hi - self.f_lo) / self.step + 0.5).floor() as usize;
        Ok((0..=n).map(|k| self.f_lo + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub frequency: f64,
    pub pre_reff: MeanStd,
    pub post_reff: MeanStd,
    pub pre_w1: MeanStd,
    pub post_w1: MeanStd,
}

/// Ensemble R_eff and w₁ over `grid` for the starting and the optimized
/// configuration of every record. Needs square channels.
pub fn frequency_scan(scn: &ResolvedScenario, records: &[RunRecord], grid: &ScanGrid) -> Result<Vec<ScanRow>, CliError> {
    if scn.room.receivers != scn.room.sources {
        return Err(CliError::invalid("frequency scans report w1 and need square channel matrices"));
    }
    let freqs = grid.frequencies(scn.room.sample_rate)?;
    let objective = scn.objective();
    // [record][frequency] -> (pre R, pre w1, post R, post w1)
    let per_room: Vec<Vec<[f64; 4]>> = records
        .par_iter()
        .map(|rec| {
            let room = build_room(scn, rec.realization)?;
            let start = ArmConfiguration::zeros(room.units());
            freqs
                .iter()
                .map(|&f| {
                    let a = matrix_metrics(&room.true_channel_at(&start, f)?, objective);
                    let b = matrix_metrics(&room.true_channel_at(&rec.trace.best_config, f)?, objective);
                    Ok([
                        a.effective_rank,
                        a.w1.unwrap_or(f64::NAN),
                        b.effective_rank,
                        b.w1.unwrap_or(f64::NAN),
                    ])
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<_, _>>()?;
    freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let col = |m: usize| {
                let v: Vec<f64> = per_room.iter().map(|r| r[k][m]).filter(|x| x.is_finite()).collect();
                MeanStd::of(&v).ok_or_else(|| CliError::Runtime(format!("no finite metrics at {f} Hz")))
            };
            Ok(ScanRow {
                frequency: f,
                pre_reff: col(0)?,
                pre_w1: col(1)?,
                post_reff: col(2)?,
                post_w1: col(3)?,
            })
        })
        .collect()
}

pub fn scan_csv(rows: &[ScanRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "frequency",
        "pre_reff_mean",
        "pre_reff_std",
        "post_reff_mean",
        "post_reff_std",
        "pre_w1_mean",
        "pre_w1_std",
        "post_w1_mean",
        "post_w1_std",
    ])?;
    for r in rows {
        w.write_record(
            [
                r.frequency,
                r.pre_reff.mean,
                r.pre_reff.std,
                r.post_reff.mean,
                r.post_reff.std,
                r.pre_w1.mean,
                r.pre_w1.std,
                r.post_w1.mean,
                r.post_w1.std,
            ]
            .map(|x| x.to_string()),
        )?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// The same data as `x,y,series` plot rows.
pub fn scan_plot_csv(rows: &[ScanRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "series"])?;
    let series: [(&str, fn(&ScanRow) -> f64); 4] = [
        ("reff_pre", |r| r.pre_reff.mean),
        ("reff_post", |r| r.post_reff.mean),
        ("w1_pre", |r| r.pre_w1.mean),
        ("w1_post", |r| r.post_w1.mean),
    ];
    for (name, pick) in series {
        for r in rows {
            w.write_record([r.frequency.to_string(), pick(r).to_string(), name.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Half-width of the post-optimization dip in mean w₁ around `f0`: the
/// distance from `f0` at which the mean w₁ climbs back through the midpoint
/// between its value at `f0` and `baseline`, found by linear interpolation on
/// each side and averaged.
pub fn effect_half_width(rows: &[ScanRow], f0: f64, baseline: f64) -> Option<f64> {
    let centre = rows
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.frequency - f0).abs().total_cmp(&(b.1.frequency - f0).abs()))?
        .0;
    let mid = 0.5 * (rows[centre].post_w1.mean + baseline);
    let side = |dir: isize| -> Option<f64> {
        let mut k = centre as isize;
        loop {
            let next = k + dir;
            if next < 0 || next as usize >= rows.len() {
                return None;
            }
            let (a, b) = (&rows[k as usize], &rows[next as usize]);
            if b.post_w1.mean >= mid {
                let t = (mid - a.post_w1.mean) / (b.post_w1.mean - a.post_w1.mean);
                let f = a.frequency + t * (b.frequency - a.frequency);
                return Some((f - rows[centre].frequency).abs());
            }
            k = next;
        }
    };
    Some(0.5 * (side(-1)? + side(1)?))
}
