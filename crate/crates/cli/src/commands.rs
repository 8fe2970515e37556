//! Subcommand implementations, shared by the binary and the tests.

use std::path::{Path, PathBuf};

use chanshape::acoustics::AcousticsReport;
use chanshape::rmt::{ensemble_baseline, write_histogram_csv, HistogramBin};
use serde::Serialize;

use crate::audio::{self, AudioOutcome};
use crate::error::CliError;
use crate::persist::{to_json, Opened, OutputDir};
use crate::run::{build_room, default_workers, run_scenario, RunOutcome};
use crate::scan::{frequency_scan, scan_csv, scan_plot_csv, ScanGrid, ScanRow};
use crate::scenario::{AudioSpec, ResolvedScenario, ScenarioKind, ScenarioSpec};
use crate::sweep::{run_sweep, SweepParameter, SweepPoint};

/// Flags every subcommand takes.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub force: bool,
}

impl Common {
    pub fn spec(&self) -> Result<ScenarioSpec, CliError> {
        let mut spec = ScenarioSpec::load(&self.scenario)?;
        if self.seed.is_some() {
            spec.seed = self.seed;
        }
        Ok(spec)
    }

    pub fn load(&self) -> Result<(ResolvedScenario, PathBuf), CliError> {
        let spec = self.spec()?;
        let scn = spec.resolve()?;
        Ok((scn, self.out_dir(&spec)))
    }

    fn out_dir(&self, spec: &ScenarioSpec) -> PathBuf {
        self.out
            .clone()
            .or_else(|| spec.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| Path::new("runs").join(spec.kind.name()))
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(default_workers)
    }
}

fn require(scn: &ResolvedScenario, kinds: &[ScenarioKind], command: &str) -> Result<(), CliError> {
    if kinds.contains(&scn.kind) {
        Ok(())
    } else {
        let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
        Err(CliError::invalid(format!(
            "`{command}` needs a {} scenario, got {}",
            names.join(" or "),
            scn.kind.name()
        )))
    }
}

fn xy_csv(rows: impl IntoIterator<Item = (f64, f64, String)>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "series"])?;
    for (x, y, s) in rows {
        w.write_record([x.to_string(), y.to_string(), s])?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn acoustics(c: &Common) -> Result<AcousticsReport, CliError> {
    let (scn, out) = c.load()?;
    require(&scn, &[ScenarioKind::AcousticsReport], "acoustics")?;
    let report = AcousticsReport::new(&scn.room.room, &scn.frequencies).map_err(|e| CliError::invalid(e.to_string()))?;
    let dir = match OutputDir::open(&out, &to_json(&scn)?, c.force)? {
        Opened::Complete(_) => return Ok(report),
        Opened::Ready(d) => d,
    };
    dir.write_json("acoustics.json", &report)?;
    let rows = report.modal_density.iter().map(|&(f, n)| (f, n, "modes_per_coherence_band".to_string()));
    dir.write("modal_density.csv", &xy_csv(rows)?)?;
    dir.write_manifest()?;
    dir.log("acoustics report written")?;
    Ok(report)
}

pub fn stats(c: &Common) -> Result<chanshape::rmt::EnsembleReport, CliError> {
    let (scn, out) = c.load()?;
    require(&scn, &[ScenarioKind::RmtBaseline], "stats")?;
    let dir = match OutputDir::open(&out, &to_json(&scn)?, c.force)? {
        Opened::Complete(d) => {
            let text = std::fs::read_to_string(d.path("report.json"))?;
            return Ok(serde_json::from_str(&text)?);
        }
        Opened::Ready(d) => d,
    };
    let report = ensemble_baseline(scn.seed, scn.samples)?;
    dir.write_json("report.json", &report)?;
    for (name, bins) in [("reff_histogram.csv", &report.reff_histogram), ("w1_histogram.csv", &report.w1_histogram)] {
        let mut buf = Vec::new();
        write_histogram_csv(bins, &mut buf)?;
        dir.write(name, &buf)?;
    }
    let centre = |b: &HistogramBin| 0.5 * (b.bin_left + b.bin_right);
    let mut rows = Vec::new();
    for (tag, bins) in [("reff", &report.reff_histogram), ("w1", &report.w1_histogram)] {
        rows.extend(bins.iter().map(|b| (centre(b), b.density, format!("{tag}_monte_carlo"))));
        rows.extend(bins.iter().map(|b| (centre(b), b.closed_form_density, format!("{tag}_closed_form"))));
    }
    dir.write("densities.csv", &xy_csv(rows)?)?;
    dir.write_manifest()?;
    dir.log(&format!("{} samples drawn", scn.samples))?;
    Ok(report)
}

pub fn optimize(c: &Common) -> Result<RunOutcome, CliError> {
    let (scn, out) = c.load()?;
    run_scenario(&scn, &out, c.workers(), c.force)
}

pub fn scan(c: &Common, grid: ScanGrid) -> Result<Vec<ScanRow>, CliError> {
    let (scn, out) = c.load()?;
    if !scn.kind.is_optimization() {
        return Err(CliError::invalid(format!("{} has no optimized configurations to scan", scn.kind.name())));
    }
    grid.frequencies(scn.room.sample_rate)?;
    let run = run_scenario(&scn, &out, c.workers(), c.force)?;
    let rows = frequency_scan(&scn, &run.records, &grid)?;
    run.dir.write_json("scan.json", &grid)?;
    run.dir.write("scan.csv", &scan_csv(&rows)?)?;
    run.dir.write("scan_plot.csv", &scan_plot_csv(&rows)?)?;
    run.dir.write_manifest()?;
    run.dir.log(&format!("scan over {} frequencies written", rows.len()))?;
    Ok(rows)
}

pub fn sweep(c: &Common, parameter: &str, values: &[f64]) -> Result<Vec<SweepPoint>, CliError> {
    let p = SweepParameter::parse(parameter)?;
    let spec = c.spec()?;
    let out = match &c.out {
        Some(o) => o.clone(),
        None => c.out_dir(&spec).join(format!("sweep-{}", p.name())),
    };
    run_sweep(&spec, p, values, &out, c.workers(), c.force)
}

#[derive(Debug, Clone, Serialize)]
pub struct AudioReplay {
    pub realization: usize,
    pub directory: PathBuf,
    pub files: Vec<String>,
    pub outcome: AudioOutcome,
}

/// Replays realization `r` of a (possibly already finished) run and writes
/// its WAV files and report under `audio/rNNNN/`.
pub fn audio(c: &Common, r: usize, dump_banks: bool) -> Result<AudioReplay, CliError> {
    let (scn, out) = c.load()?;
    if !scn.kind.is_optimization() || scn.kind == ScenarioKind::Broadband {
        return Err(CliError::invalid(format!("audio replay is not defined for {}", scn.kind.name())));
    }
    if r >= scn.realizations {
        return Err(CliError::invalid(format!(
            "realization {r} does not exist; the scenario has {}",
            scn.realizations
        )));
    }
    let spec: AudioSpec = scn.audio.clone().unwrap_or_default();
    let run = run_scenario(&scn, &out, c.workers(), c.force)?;
    let record = &run.records[r];
    let room = build_room(&scn, r)?;
    let outcome = match &record.audio {
        Some(a) => a.clone(),
        None => audio::outcome(&scn, &spec, &room, &record.trace.best_config)?,
    };
    let rel = format!("audio/r{r:04}");
    let sources = audio::source_waveforms(&scn, &spec)?;
    let mut files = audio::write_wavs(&run.dir.path(&rel), &room, &record.trace.best_config, &sources)?;
    run.dir.write_json(&format!("{rel}/report.json"), &outcome)?;
    files.push("report.json".into());
    if dump_banks {
        let mut buf = Vec::new();
        room.write_banks(&mut buf)?;
        run.dir.write(&format!("{rel}/banks.bin"), &buf)?;
        files.push("banks.bin".into());
    }
    run.dir.write_manifest()?;
    run.dir.log(&format!("audio replay of r{r:04} written"))?;
    Ok(AudioReplay {
        realization: r,
        directory: run.dir.path(&rel),
        files,
        outcome,
    })
}
