//! Scenario execution: one independent room and climb per realization, run
//! on a worker pool, persisted through a single writer.

use std::path::Path;
use std::sync::mpsc;

use chanshape::metrics::{effective_rank, mask_energy_ratio, w_offdiag, ChannelMatrix, Shape};
use chanshape::objective::ObjectiveSpec;
use chanshape::optimizer::{climb, OptimizationTrace, OptimizerConfig, StopReason, TraceSummary};
use chanshape::rng::derive_seed;
use chanshape::room::{ArmConfiguration, VirtualRoom};
use chanshape::signal::{energy_ratios, EnergyRatios};
use chanshape::stats::{mean, sample_std, standard_error};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioOutcome};
use crate::error::CliError;
use crate::persist::{to_json, Opened, OutputDir};
use crate::scenario::ResolvedScenario;

/// Stream index of the optimizer seed under a room seed.
const OPTIMIZER_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMetrics {
    pub frequency: f64,
    pub effective_rank: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_energy_ratio: Option<f64>,
    pub matrix: ChannelMatrix,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn matrix_metrics(h: &ChannelMatrix, objective: &ObjectiveSpec) -> MatrixMetrics {
    let w = |s| if h.is_square() { w_offdiag(h, s).ok().and_then(finite) } else { None };
    let mask = match objective {
        ObjectiveSpec::Masked { preserve, eliminate, .. } => finite(mask_energy_ratio(h, preserve, eliminate)),
        _ => None,
    };
    MatrixMetrics {
        frequency: h.frequency().unwrap_or(f64::NAN),
        effective_rank: effective_rank(h).unwrap_or(f64::NAN),
        w1: w(Shape::Diagonal),
        w2: w(Shape::Antidiagonal),
        mask_energy_ratio: mask,
        matrix: h.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub realization: usize,
    pub room_seed: u64,
    pub optimizer_seed: u64,
    /// Relative to the run directory.
    pub trace_csv: String,
    pub trace: TraceSummary,
    /// Objective on the noise-free channel, before and after.
    pub pre_objective: Option<f64>,
    pub post_objective: Option<f64>,
    pub pre: Vec<MatrixMetrics>,
    pub post: Vec<MatrixMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioOutcome>,
}

pub fn record_path(r: usize) -> String {
    format!("records/r{r:04}.json")
}

pub fn trace_path(r: usize) -> String {
    format!("traces/r{r:04}.csv")
}

fn trace_summary_path(r: usize) -> String {
    format!("traces/r{r:04}.json")
}

pub fn room_seed(scn: &ResolvedScenario, r: usize) -> u64 {
    derive_seed(scn.seed, r as u64)
}

pub fn build_room(scn: &ResolvedScenario, r: usize) -> Result<VirtualRoom, CliError> {
    Ok(VirtualRoom::build(&scn.room_for(room_seed(scn, r)))?)
}

fn true_channels(room: &VirtualRoom, config: &ArmConfiguration, freqs: &[f64]) -> Result<Vec<ChannelMatrix>, CliError> {
    freqs.iter().map(|&f| Ok(room.true_channel_at(config, f)?)).collect()
}

/// Runs realization `r` start to finish without touching the disk.
pub fn realize(scn: &ResolvedScenario, r: usize) -> Result<(RunRecord, OptimizationTrace), CliError> {
    let seed = room_seed(scn, r);
    let room = VirtualRoom::build(&scn.room_for(seed))?;
    let objective = scn.objective();
    let cfg = OptimizerConfig {
        rng_seed: derive_seed(seed, OPTIMIZER_STREAM),
        ..scn.optimizer.clone()
    };
    let trace = climb(
        |c| room.measure(c, objective).map_or(f64::INFINITY, |hs| objective.value(&hs)),
        room.units(),
        &cfg,
    )?;
    let freqs = objective.frequencies();
    let start = ArmConfiguration::zeros(room.units());
    let before = true_channels(&room, &start, &freqs)?;
    let after = true_channels(&room, &trace.best_config, &freqs)?;
    let audio = match &scn.audio {
        Some(a) => Some(audio::outcome(scn, a, &room, &trace.best_config)?),
        None => None,
    };
    let record = RunRecord {
        realization: r,
        room_seed: seed,
        optimizer_seed: cfg.rng_seed,
        trace_csv: trace_path(r),
        trace: trace.summary(),
        pre_objective: finite(objective.value(&before)),
        post_objective: finite(objective.value(&after)),
        pre: before.iter().map(|h| matrix_metrics(h, objective)).collect(),
        post: after.iter().map(|h| matrix_metrics(h, objective)).collect(),
        audio,
    };
    Ok((record, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        (!values.is_empty()).then(|| MeanStd {
            mean: mean(values),
            std: sample_std(values),
            stderr: standard_error(values),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub effective_rank: MeanStd,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_energy_ratio: Option<MeanStd>,
}

impl MetricStats {
    pub fn of<'a>(ms: impl Iterator<Item = &'a MatrixMetrics> + Clone) -> Option<Self> {
        let pick = |f: fn(&MatrixMetrics) -> Option<f64>| MeanStd::of(&ms.clone().filter_map(f).collect::<Vec<_>>());
        Some(MetricStats {
            effective_rank: pick(|m| finite(m.effective_rank))?,
            w1: pick(|m| m.w1),
            w2: pick(|m| m.w2),
            mask_energy_ratio: pick(|m| m.mask_energy_ratio),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySummary {
    pub frequency: f64,
    pub pre: MetricStats,
    pub post: MetricStats,
    pub energy: Option<EnergyRatios>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAudioSummary {
    pub frequency: f64,
    pub desired_gain_db: MeanStd,
    pub unwanted_suppression_db: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSummary {
    pub bands: Vec<BandAudioSummary>,
    /// Ensemble-mean correlations, `[receiver][piece]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xcorr_pre: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xcorr_post: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopCounts {
    pub target: usize,
    pub stall: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub realizations: usize,
    pub objective_pre: Option<MeanStd>,
    pub objective_post: Option<MeanStd>,
    pub measurements: MeanStd,
    pub stop_reasons: StopCounts,
    pub frequencies: Vec<FrequencySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioSummary>,
}

pub fn summarize(scn: &ResolvedScenario, records: &[RunRecord]) -> Result<RunSummary, CliError> {
    if records.is_empty() {
        return Err(CliError::Runtime("no records to summarize".into()));
    }
    let mut stops = StopCounts::default();
    for r in records {
        match r.trace.stop_reason {
            StopReason::Target => stops.target += 1,
            StopReason::Stall => stops.stall += 1,
            StopReason::Budget => stops.budget += 1,
        }
    }
    let desired = scn.desired_paths();
    let mut frequencies = Vec::new();
    for (k, (f, mask)) in desired.iter().enumerate() {
        let pre = MetricStats::of(records.iter().map(|r| &r.pre[k]))
            .ok_or_else(|| CliError::Runtime(format!("no finite effective rank at {f} Hz")))?;
        let post = MetricStats::of(records.iter().map(|r| &r.post[k]))
            .ok_or_else(|| CliError::Runtime(format!("no finite effective rank at {f} Hz")))?;
        let hb: Vec<ChannelMatrix> = records.iter().map(|r| r.pre[k].matrix.clone()).collect();
        let ha: Vec<ChannelMatrix> = records.iter().map(|r| r.post[k].matrix.clone()).collect();
        frequencies.push(FrequencySummary {
            frequency: *f,
            pre,
            post,
            energy: energy_ratios(&hb, &ha, mask).ok(),
        });
    }
    let measurements: Vec<f64> = records.iter().map(|r| r.trace.measurement_count as f64).collect();
    Ok(RunSummary {
        scenario: scn.kind.name().to_string(),
        seed: scn.seed,
        realizations: records.len(),
        objective_pre: MeanStd::of(&records.iter().filter_map(|r| r.pre_objective).collect::<Vec<_>>()),
        objective_post: MeanStd::of(&records.iter().filter_map(|r| r.post_objective).collect::<Vec<_>>()),
        measurements: MeanStd::of(&measurements).expect("records are nonempty"),
        stop_reasons: stops,
        frequencies,
        audio: audio_summary(records),
    })
}

fn audio_summary(records: &[RunRecord]) -> Option<AudioSummary> {
    let outcomes: Vec<&AudioOutcome> = records.iter().filter_map(|r| r.audio.as_ref()).collect();
    let first = outcomes.first()?;
    let bands = (0..first.bands.len())
        .map(|b| {
            let gain: Vec<f64> = outcomes.iter().map(|o| o.bands[b].gain.desired_gain_db).collect();
            let supp: Vec<f64> = outcomes.iter().map(|o| o.bands[b].gain.unwanted_suppression_db).collect();
            Some(BandAudioSummary {
                frequency: first.bands[b].frequency,
                desired_gain_db: MeanStd::of(&gain.into_iter().filter(|v| v.is_finite()).collect::<Vec<_>>())?,
                unwanted_suppression_db: MeanStd::of(&supp.into_iter().filter(|v| v.is_finite()).collect::<Vec<_>>())?,
            })
        })
        .collect::<Option<Vec<_>>>()?;
    let table_mean = |pick: fn(&AudioOutcome) -> Option<&Vec<Vec<f64>>>| -> Option<Vec<Vec<f64>>> {
        let tables: Vec<&Vec<Vec<f64>>> = outcomes.iter().filter_map(|o| pick(o)).collect();
        let t0 = tables.first()?;
        Some(
            (0..t0.len())
                .map(|i| (0..t0[i].len()).map(|j| mean(&tables.iter().map(|t| t[i][j]).collect::<Vec<_>>())).collect())
                .collect(),
        )
    };
    Some(AudioSummary {
        bands,
        xcorr_pre: table_mean(|o| o.xcorr.as_ref().map(|x| &x.pre)),
        xcorr_post: table_mean(|o| o.xcorr.as_ref().map(|x| &x.post)),
    })
}

/// Incumbent objective per measurement from a saved trace.
pub fn read_incumbent_curve(path: &Path, initial: f64) -> Result<Vec<f64>, CliError> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Runtime(format!("{}: no {name} column", path.display())))
    };
    let (vi, ai) = (col("objective")?, col("accepted")?);
    let mut cur = initial;
    let mut out = vec![cur];
    for row in rd.records() {
        let row = row?;
        let parse = |i: usize| row.get(i).unwrap_or_default().to_string();
        if parse(ai) == "1" {
            cur = parse(vi)
                .parse()
                .map_err(|_| CliError::Runtime(format!("{}: bad objective value", path.display())))?;
        }
        out.push(cur);
    }
    Ok(out)
}

fn convergence_csv(curves: &[(usize, Vec<f64>)]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "series"])?;
    for (r, c) in curves {
        let series = format!("r{r:04}");
        for (x, y) in c.iter().enumerate() {
            w.write_record([(x + 1).to_string(), y.to_string(), series.clone()])?;
        }
    }
    // Ensemble mean, each curve held at its final value after it stops.
    let len = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for x in 0..len {
        let ys: Vec<f64> = curves.iter().map(|(_, c)| c[x.min(c.len() - 1)]).collect();
        w.write_record([(x + 1).to_string(), mean(&ys).to_string(), "mean".to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// What an `optimize` invocation did.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: OutputDir,
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
    pub computed: usize,
    pub reused: usize,
    /// True when a verified, complete run was found and left alone.
    pub verified_only: bool,
}

fn load_record(dir: &OutputDir, r: usize) -> Option<RunRecord> {
    let text = std::fs::read_to_string(dir.path(&record_path(r))).ok()?;
    let rec: RunRecord = serde_json::from_str(&text).ok()?;
    (rec.realization == r && dir.path(&rec.trace_csv).is_file()).then_some(rec)
}

fn load_all(dir: &OutputDir, n: usize) -> Result<Vec<RunRecord>, CliError> {
    (0..n)
        .map(|r| load_record(dir, r).ok_or_else(|| CliError::Runtime(format!("record {} is missing", record_path(r)))))
        .collect()
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs or resumes `scn` in `out`.
pub fn run_scenario(scn: &ResolvedScenario, out: &Path, workers: usize, force: bool) -> Result<RunOutcome, CliError> {
    if !scn.kind.is_optimization() {
        return Err(CliError::invalid(format!("{} is not an optimization scenario", scn.kind.name())));
    }
    if workers == 0 {
        return Err(CliError::invalid("--workers must be >= 1"));
    }
    let n = scn.realizations;
    let dir = match OutputDir::open(out, &to_json(scn)?, force)? {
        Opened::Complete(dir) => {
            let records = load_all(&dir, n)?;
            let summary = summarize(scn, &records)?;
            return Ok(RunOutcome {
                dir,
                records,
                summary,
                computed: 0,
                reused: n,
                verified_only: true,
            });
        }
        Opened::Ready(dir) => dir,
    };

    let todo: Vec<usize> = (0..n).filter(|&r| load_record(&dir, r).is_none()).collect();
    let reused = n - todo.len();
    dir.log(&format!(
        "{}: {} realizations, {} to run, {} reused, {} workers",
        scn.kind.name(),
        n,
        todo.len(),
        reused,
        workers
    ))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let (tx, rx) = mpsc::channel();
    let mut failures = Vec::new();
    let persist = |r: usize, record: &RunRecord, trace: &OptimizationTrace| -> Result<(), CliError> {
        let mut csv = Vec::new();
        trace.write_csv(&mut csv)?;
        dir.write(&trace_path(r), &csv)?;
        dir.write_json(&trace_summary_path(r), &record.trace)?;
        dir.write_json(&record_path(r), record)
    };
    std::thread::scope(|s| -> Result<(), CliError> {
        s.spawn(|| {
            pool.install(|| {
                todo.par_iter().for_each_with(tx, |tx, &r| {
                    let _ = tx.send((r, realize(scn, r)));
                })
            })
        });
        for (r, result) in rx {
            match result.and_then(|(record, trace)| persist(r, &record, &trace).map(|_| record)) {
                Ok(record) => dir.log(&format!(
                    "r{r:04}: {:?} after {} measurements, objective {} -> {}",
                    record.trace.stop_reason,
                    record.trace.measurement_count,
                    record.trace.initial_value,
                    record.trace.best_value
                ))?,
                Err(e) => {
                    dir.log(&format!("r{r:04} failed: {e}"))?;
                    failures.push(r);
                }
            }
        }
        Ok(())
    })?;
    if !failures.is_empty() {
        failures.sort_unstable();
        return Err(CliError::Runtime(format!(
            "{} of {} realizations failed ({:?}); finished records are kept in {}",
            failures.len(),
            n,
            failures,
            out.display()
        )));
    }

    let records = load_all(&dir, n)?;
    let summary = summarize(scn, &records)?;
    dir.write_json("summary.json", &summary)?;
    let curves = records
        .iter()
        .map(|rec| Ok((rec.realization, read_incumbent_curve(&dir.path(&rec.trace_csv), rec.trace.initial_value)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    dir.write("convergence.csv", &convergence_csv(&curves)?)?;
    dir.write_manifest()?;
    dir.log("run complete")?;
    Ok(RunOutcome {
        dir,
        records,
        summary,
        computed: todo.len(),
        reused,
        verified_only: false,
    })
}
