//! `wsdscope` command-line driver.
//!
//! Exit codes: 0 success, 1 other failure, 2 bad config or arguments,
//! 3 missing data or checkpoint, 4 numeric abort during training.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wsdscope::diag::run::{
    ALIGN_FILE, COSINE_FILE, DEFAULT_INTERP_POINTS, INTERP_COOLDOWN_FILE, INTERP_STABLE_FILE,
    NORMS_FILE, PCA_COOLDOWN_FILE, PCA_STABLE_FILE, SHARPNESS_FILE, TAU_FILE,
};
use wsdscope::diag::{write_csv, Phase, RunDir, SharpnessOptions};
use wsdscope::optim::ScheduleSpec;
use wsdscope::train::{
    self, average_rows, checkpoint_file_name, write_sweep_csv, ConfigMap, RunConfig, DEFAULT_FRACTIONS,
    MANIFEST_FILE, SWEEP_FILE,
};
use wsdscope::Error;

/// Environment variable naming the dataset location when a config leaves it open.
const DATA_ENV: &str = "WSDSCOPE_DATA";
const DIAG_DIR: &str = "diag";

#[derive(Parser)]
#[command(name = "wsdscope", version, about = "Train under WSD or cosine schedules and probe the loss landscape")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Override a config key (repeatable), e.g. `--set lr=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run from a config file.
    Train {
        config: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Continue a WSD run from a stable-phase checkpoint under a longer or
    /// re-timed schedule.
    Resume {
        /// Source run directory.
        run: PathBuf,
        /// New run directory.
        #[arg(long)]
        out: PathBuf,
        /// Total steps of the extended schedule.
        #[arg(long)]
        steps: u64,
        /// Cooldown fraction of the extended schedule (default: the source run's).
        #[arg(long, conflicts_with = "decay_start")]
        cooldown: Option<f64>,
        /// Decay start of the extended schedule.
        #[arg(long)]
        decay_start: Option<u64>,
        /// Checkpoint step to resume from (default: the source run's decay start).
        #[arg(long)]
        from: Option<u64>,
    },
    /// Cooldown-length sweep sharing one stable phase, plus a cosine baseline.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated cooldown fractions.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS)]
        fractions: Vec<f64>,
        /// Number of seeds, counted up from the config's seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Runs trained concurrently within a seed.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one diagnostic over a finished run; writes `<run>/diag/<name>.csv`.
    Diag {
        which: Diagnostic,
        run: PathBuf,
        #[command(flatten)]
        opts: DiagOptions,
    },
    /// Run every diagnostic into one directory alongside the manifest.
    Report {
        run: PathBuf,
        /// Output directory (default `<run>/diag`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: DiagOptions,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Diagnostic {
    Interp,
    Sharpness,
    Pca,
    Align,
    Tau,
    Cosine,
    Norms,
}

#[derive(Args)]
struct DiagOptions {
    /// Interpolation points per segment.
    #[arg(long, default_value_t = DEFAULT_INTERP_POINTS)]
    n_points: usize,
    /// Relative tolerance of the sharpness power iteration.
    #[arg(long, default_value_t = SharpnessOptions::default().tol)]
    tol: f64,
    /// Iteration cap of the sharpness power iteration.
    #[arg(long, default_value_t = SharpnessOptions::default().max_iter)]
    max_iter: usize,
    /// First step for sharpness (default: decay start).
    #[arg(long)]
    from: Option<u64>,
    /// Last step for sharpness (default: final step).
    #[arg(long)]
    to: Option<u64>,
}

impl DiagOptions {
    fn sharpness(&self) -> SharpnessOptions {
        SharpnessOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::IncompatibleSchedule(_) | Error::InvalidArgument(_) => 2,
        Error::DataMissing(_)
        | Error::MissingCheckpoint { .. }
        | Error::Checkpoint { .. }
        | Error::Format(_)
        | Error::Corrupt(_) => 3,
        e if e.is_numeric_abort() => 4,
        _ => 1,
    }
}

fn data_env() -> Option<PathBuf> {
    std::env::var_os(DATA_ENV).map(PathBuf::from)
}

fn load_map(path: &Path, overrides: &Overrides) -> Result<ConfigMap, Error> {
    let mut map = ConfigMap::read(path)?;
    for a in &overrides.set {
        map.apply_override(a)?;
    }
    Ok(map)
}

fn resolve(map: &ConfigMap) -> Result<RunConfig, Error> {
    Ok(map.resolve()?.with_data_dir_fallback(data_env()))
}

fn cmd_train(config: &Path, out: &Path, overrides: &Overrides) -> Result<(), Error> {
    let config = resolve(&load_map(config, overrides)?)?;
    let run = train::train(&config, out)?;
    let last = run.losses.last().expect("at least one row");
    println!(
        "trained {} steps into {}: final train loss {:.6}{}",
        last.step,
        out.display(),
        last.train_loss,
        last.eval_loss.map(|e| format!(", eval loss {e:.6}")).unwrap_or_default()
    );
    Ok(())
}

fn cmd_resume(
    run: &Path,
    out: &Path,
    steps: u64,
    cooldown: Option<f64>,
    decay_start: Option<u64>,
    from: Option<u64>,
) -> Result<(), Error> {
    let manifest = run.join(MANIFEST_FILE);
    if !manifest.is_file() {
        return Err(Error::DataMissing(manifest));
    }
    let config = resolve(&ConfigMap::read(&manifest)?)?;
    let s = config.schedule;
    let extended = match decay_start {
        Some(tc) => ScheduleSpec::wsd(s.warmup, tc, steps, s.peak_lr),
        None => {
            let f = cooldown.unwrap_or(s.cooldown_len() as f64 / s.total as f64);
            ScheduleSpec::wsd_with_cooldown(s.warmup, steps, f, s.peak_lr)
        }
    }
    .map_err(|e| Error::Config(format!("extended schedule: {e}")))?;
    let step = from.unwrap_or(s.decay_start);
    let ckpt = run.join(checkpoint_file_name(step));
    if !ckpt.is_file() {
        return Err(Error::MissingCheckpoint {
            step,
            purpose: format!("resume source in {}", run.display()),
        });
    }
    let res = train::resume(&config, &ckpt, extended, out)?;
    let last = res.losses.last().expect("at least one row");
    println!(
        "resumed at step {step} and trained to {} into {}: final train loss {:.6}",
        last.step,
        out.display(),
        last.train_loss
    );
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    out: &Path,
    fractions: &[f64],
    seeds: u64,
    parallel: usize,
    overrides: &Overrides,
) -> Result<(), Error> {
    let map = load_map(config, overrides)?;
    let base = resolve(&map)?;
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        return Err(Error::Config(format!("cooldown fractions must lie in (0, 1): {fractions:?}")));
    }
    let mut per_seed = Vec::new();
    for k in 0..seeds {
        let (config, dir) = if seeds == 1 {
            (base.clone(), out.to_path_buf())
        } else {
            // init and data seeds follow `seed` unless the config pins them
            let mut map = map.clone();
            let seed = base.seed + k;
            map.set("seed", &seed.to_string())?;
            (resolve(&map)?, out.join(format!("seed_{seed}")))
        };
        let data = config.load_data()?;
        let rows = train::sweep(&config, &data, fractions, &dir, parallel)?;
        for r in &rows {
            println!(
                "seed {} {:>8}: final train loss {:.6}, eval loss {:.6}",
                config.seed,
                r.label(),
                r.final_train_loss,
                r.final_eval_loss
            );
        }
        per_seed.push(rows);
    }
    if seeds > 1 {
        let avg = average_rows(&per_seed, out)?;
        write_sweep_csv(&out.join(SWEEP_FILE), &avg)?;
    }
    println!("wrote {}", out.join(SWEEP_FILE).display());
    Ok(())
}

fn cmd_diag(which: Diagnostic, run: &Path, opts: &DiagOptions) -> Result<(), Error> {
    let rd = RunDir::open(run, data_env())?;
    let out = run.join(DIAG_DIR);
    let written = match which {
        Diagnostic::Interp => {
            let (stable, cooldown) = rd.interp(opts.n_points)?;
            write_csv(&out.join(INTERP_STABLE_FILE), &stable)?;
            write_csv(&out.join(INTERP_COOLDOWN_FILE), &cooldown)?;
            vec![INTERP_STABLE_FILE, INTERP_COOLDOWN_FILE]
        }
        Diagnostic::Sharpness => {
            let (lo, hi) = rd.phase_range(Phase::Cooldown);
            let records = rd.sharpness(opts.from.unwrap_or(lo), opts.to.unwrap_or(hi), opts.sharpness())?;
            write_csv(&out.join(SHARPNESS_FILE), &records)?;
            vec![SHARPNESS_FILE]
        }
        Diagnostic::Pca => {
            let (s, d) = rd.pca()?;
            write_csv(&out.join(PCA_STABLE_FILE), &s.spectrum_records())?;
            write_csv(&out.join(PCA_COOLDOWN_FILE), &d.spectrum_records())?;
            vec![PCA_STABLE_FILE, PCA_COOLDOWN_FILE]
        }
        Diagnostic::Align => {
            write_csv(&out.join(ALIGN_FILE), &rd.align()?)?;
            vec![ALIGN_FILE]
        }
        Diagnostic::Tau => {
            write_csv(&out.join(TAU_FILE), &rd.tau()?)?;
            vec![TAU_FILE]
        }
        Diagnostic::Cosine => {
            write_csv(&out.join(COSINE_FILE), &rd.cosine()?)?;
            vec![COSINE_FILE]
        }
        Diagnostic::Norms => {
            write_csv(&out.join(NORMS_FILE), &rd.norms()?)?;
            vec![NORMS_FILE]
        }
    };
    for f in written {
        println!("wrote {}", out.join(f).display());
    }
    Ok(())
}

fn cmd_report(run: &Path, out: Option<&Path>, opts: &DiagOptions) -> Result<(), Error> {
    let rd = RunDir::open(run, data_env())?;
    let out = out.map_or_else(|| run.join(DIAG_DIR), Path::to_path_buf);
    rd.report(&out, opts.n_points, opts.sharpness())?;
    println!("wrote report to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Train { config, out, overrides } => cmd_train(config, out, overrides),
        Command::Resume {
            run,
            out,
            steps,
            cooldown,
            decay_start,
            from,
        } => cmd_resume(run, out, *steps, *cooldown, *decay_start, *from),
        Command::Sweep {
            config,
            out,
            fractions,
            seeds,
            parallel,
            overrides,
        } => cmd_sweep(config, out, fractions, *seeds, *parallel, overrides),
        Command::Diag { which, run, opts } => cmd_diag(*which, run, opts),
        Command::Report { run, out, opts } => cmd_report(run, out.as_deref(), opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
