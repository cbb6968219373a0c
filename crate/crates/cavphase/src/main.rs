use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use cavphase::config::{config_hash, load_preset, override_noise, parse_experiment};
use cavphase::experiment::Experiment;
use cavphase::pipeline::{generate, read_measurements, reconstruct_to_dir, write_measurements, ReconstructOptions};
use cavphase::presets::{description, PRESET_NAMES};
use cavphase::verify;
use cavphase_core::inversion::StopNorm;

const THREADS_ENV: &str = "CAVPHASE_THREADS";

#[derive(Parser)]
#[command(name = "cavphase", version, about = "Phase-field cavity reconstruction in 2D linear elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in experiments.
    Presets,
    /// Write synthetic boundary measurements.
    Generate(GenerateArgs),
    /// Reconstruct the cavity from measurement files.
    Reconstruct(ReconstructArgs),
    /// Run the acceptance checks.
    Verify {
        /// Worker threads (default: $CAVPHASE_THREADS or the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args)]
struct Source {
    /// Built-in experiment; may be repeated.
    #[arg(long, conflicts_with = "config")]
    preset: Vec<String>,
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise level in percent of the largest boundary displacement.
    #[arg(long)]
    noise: Option<f64>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory.
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    source: Source,
    /// Directory with measurement files; generated into `<out>/data` when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stopping norm: l2 or max.
    #[arg(long)]
    stop_norm: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// Snapshot period in iterations (0 = off).
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    /// Comma separated iterations to snapshot.
    #[arg(long, value_delimiter = ',', default_value = "20,200,1000,2000")]
    snapshot_at: Vec<usize>,
    /// Halve the time step while the objective increases.
    #[arg(long)]
    backtracking: bool,
    /// Experiments run concurrently (default: $CAVPHASE_THREADS or the number of CPUs).
    #[arg(long)]
    jobs: Option<usize>,
}

enum CliError {
    /// Bad input; exit status 2.
    Usage(String),
    /// The work itself failed; exit status 1.
    Runtime(String),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn threads(jobs: Option<usize>) -> Result<usize, CliError> {
    if let Some(j) = jobs {
        return Ok(j.max(1));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|j| j.max(1))
            .map_err(|_| usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn experiments(source: &Source) -> Result<Vec<Experiment>, CliError> {
    let mut list = if let Some(path) = &source.config {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        vec![parse_experiment(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?]
    } else if source.preset.is_empty() {
        vec![load_preset("test1").map_err(usage)?]
    } else {
        source
            .preset
            .iter()
            .map(|p| load_preset(p).map_err(usage))
            .collect::<Result<_, _>>()?
    };
    for e in &mut list {
        override_noise(e, source.noise, source.seed).map_err(usage)?;
    }
    Ok(list)
}

/// `base` itself for a single experiment, `base/<name>` for several.
fn subdir(base: &Path, e: &Experiment, several: bool) -> PathBuf {
    if several {
        base.join(&e.name)
    } else {
        base.to_path_buf()
    }
}

fn cmd_presets() {
    for name in PRESET_NAMES {
        println!("{name:<12} {}", description(name));
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let list = experiments(&args.source)?;
    let several = list.len() > 1;
    for e in &list {
        let files = generate(e).map_err(runtime)?;
        let dir = subdir(&args.out, e, several);
        for p in write_measurements(&dir, &files).map_err(runtime)? {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn run_one(e: &Experiment, args: &ReconstructArgs, several: bool) -> Result<String, CliError> {
    let out = subdir(&args.out, e, several);
    let files = match &args.data {
        Some(d) => read_measurements(&subdir(d, e, several), e).map_err(runtime)?,
        None => {
            let files = generate(e).map_err(runtime)?;
            write_measurements(&out.join("data"), &files).map_err(runtime)?;
            files
        }
    };
    let options = ReconstructOptions {
        snapshot_every: args.snapshot_every,
        snapshot_at: args.snapshot_at.clone(),
        progress: !several,
    };
    let outcome = reconstruct_to_dir(e, &files, &out, &options).map_err(runtime)?;
    let h = &outcome.history;
    let mut line = format!(
        "{} [{}]: {} after {} iterations, J {:.6e}",
        e.name,
        config_hash(e),
        h.stop.name(),
        h.iterations(),
        h.last().map_or(f64::NAN, |r| r.objective)
    );
    if let Some(m) = &outcome.metrics {
        line.push_str(&format!(", jaccard {:.4}", m.jaccard));
        if let Some(d) = m.centroid_distance {
            line.push_str(&format!(", centroid distance {d:.3e}"));
        }
    }
    line.push_str(&format!(" -> {}", out.display()));
    match outcome.failure {
        Some(f) => Err(runtime(format!("{line}\n{}: run failed: {f}", e.name))),
        None => Ok(line),
    }
}

fn cmd_reconstruct(args: &ReconstructArgs) -> Result<(), CliError> {
    let mut list = experiments(&args.source)?;
    let stop_norm = match &args.stop_norm {
        Some(s) => Some(StopNorm::from_name(s).ok_or_else(|| usage(format!("unknown stop norm '{s}' (l2 or max)")))?),
        None => None,
    };
    for e in &mut list {
        if let Some(n) = args.max_iter {
            e.run.max_iterations = n;
        }
        if let Some(n) = stop_norm {
            e.run.stop_norm = n;
        }
        if let Some(t) = args.tol {
            e.run.tol = t;
        }
        e.run.backtracking |= args.backtracking;
        for w in e.run.validate().map_err(|err| usage(format!("{}: {err}", e.name)))? {
            eprintln!("warning: {}: {w}", e.name);
        }
    }
    let several = list.len() > 1;
    let jobs = threads(args.jobs)?.min(list.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String, CliError>>>> = Mutex::new((0..list.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(e) = list.get(k) else { break };
                let r = run_one(e, args, several);
                results.lock().expect("results lock")[k] = Some(r);
            });
        }
    });
    let mut first_error = None;
    for r in results.into_inner().expect("results lock").into_iter().flatten() {
        match r {
            Ok(line) => println!("{line}"),
            Err(err) => {
                first_error.get_or_insert(err);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn cmd_verify(jobs: Option<usize>) -> Result<(), CliError> {
    let outcomes = verify::run_all(threads(jobs)?);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(runtime(format!("{failed} of {} criteria failed", outcomes.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
        Command::Generate(a) => cmd_generate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Verify { jobs } => cmd_verify(*jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
