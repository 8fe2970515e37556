use std::path::PathBuf;
use std::process::ExitCode;

use chanshape_cli::commands::{self, Common};
use chanshape_cli::scan::ScanGrid;
use chanshape_cli::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chanshape", version, about = "Channel-matrix conditioning experiments in a synthetic room")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output` or runs/<kind>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Replace existing results instead of verifying them.
    #[arg(long)]
    force: bool,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common {
            scenario: a.scenario,
            seed: a.seed,
            out: a.out,
            workers: a.workers,
            force: a.force,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form room-acoustics report.
    Acoustics(CommonArgs),
    /// Random-matrix baseline ensemble.
    Stats(CommonArgs),
    /// Run (or resume) an optimization scenario.
    Optimize(CommonArgs),
    /// Repeat a scenario over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Ensemble metrics over a frequency grid, before and after optimization.
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 500.0)]
        f_lo: f64,
        #[arg(long, default_value_t = 4000.0)]
        f_hi: f64,
        #[arg(long, default_value_t = 2.0)]
        step: f64,
    },
    /// Replay one realization through the room and write WAV files.
    Audio {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        realization: usize,
        /// Also write the room's transfer-function banks (large).
        #[arg(long)]
        dump_banks: bool,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Acoustics(a) => {
            let r = commands::acoustics(&a.into())?;
            println!(
                "schroeder {:.1} Hz, tau {:.1} ms, f_co {:.2} Hz, scattering interval {:.2} ms",
                r.schroeder_frequency_hz,
                r.decay_time_constant_s * 1e3,
                r.coherence_bandwidth_hz,
                r.mean_scattering_interval_s * 1e3
            );
        }
        Command::Stats(a) => {
            let r = commands::stats(&a.into())?;
            println!(
                "mean R_eff {:.4} (closed form {:.4}), mean w1 {:.4} (closed form {:.4}), chi-square p {:.3} / {:.3}",
                r.mean_reff, r.closed_form_mean_reff, r.mean_w1, r.closed_form_mean_w1, r.reff_fit.p_value, r.w1_fit.p_value
            );
        }
        Command::Optimize(a) => {
            let o = commands::optimize(&a.into())?;
            if o.verified_only {
                println!("{}: existing results verified", o.dir.root().display());
            } else {
                println!("{}: {} computed, {} reused", o.dir.root().display(), o.computed, o.reused);
            }
            for f in &o.summary.frequencies {
                let mut line = format!(
                    "  {:.1} Hz  R_eff {:.3} -> {:.3}",
                    f.frequency, f.pre.effective_rank.mean, f.post.effective_rank.mean
                );
                for (name, pre, post) in [
                    ("w1", f.pre.w1, f.post.w1),
                    ("w2", f.pre.w2, f.post.w2),
                    ("mask ratio", f.pre.mask_energy_ratio, f.post.mask_energy_ratio),
                ] {
                    if let (Some(a), Some(b)) = (pre, post) {
                        line.push_str(&format!("  {name} {:.3} -> {:.3}", a.mean, b.mean));
                    }
                }
                println!("{line}");
            }
        }
        Command::Sweep { common, param, values } => {
            for p in commands::sweep(&common.into(), &param, &values)? {
                let post = p.summary.objective_post.map_or(f64::NAN, |m| m.mean);
                println!("{param}={}: mean final objective {post:.4}", p.value);
            }
        }
        Command::Scan { common, f_lo, f_hi, step } => {
            let rows = commands::scan(&common.into(), ScanGrid { f_lo, f_hi, step })?;
            println!("{} frequencies scanned", rows.len());
        }
        Command::Audio {
            common,
            realization,
            dump_banks,
        } => {
            let r = commands::audio(&common.into(), realization, dump_banks)?;
            println!("{}: {}", r.directory.display(), r.files.join(", "));
            for b in &r.outcome.bands {
                println!(
                    "  {:.1} Hz  desired {:+.1} dB, unwanted suppressed {:.1} dB",
                    b.frequency, b.gain.desired_gain_db, b.gain.unwanted_suppression_db
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
