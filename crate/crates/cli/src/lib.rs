//! `specadapt` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
//! Results go to stdout; diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use specadapt::engine::{augment_batch, BatchPosition, EngineConfig, PolicyKind};
use specadapt::ibf::{regularized_ibf, IbfParams};
use specadapt::io::{read_config, read_features, read_manifest, write_atomic, write_features, BatchManifest};
use specadapt::policy::{hybrid_normalize, loss_ranks, rank_policy, BatchLosses};
use specadapt::schedule::schedule_at;
use specadapt::sim::{run_simulation_with, Regime, SimConfig, SyntheticTask};
use specadapt::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// Name of the report written next to the augmented features.
pub const REPORT_FILE: &str = "report.jsonl";

#[derive(Debug, Parser)]
#[command(name = "specadapt", version, about = "Loss-adaptive spectrogram augmentation")]
struct Cli {
    /// Master seed for every random stream (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Engine configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective engine configuration and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Augment every sample of a manifest as one batch.
    Augment(AugmentArgs),
    /// Print the loss-to-lambda pipeline for a batch of losses.
    Policy(PolicyArgs),
    /// Print the gate probabilities for every epoch as CSV.
    Schedule(ScheduleArgs),
    /// Evaluate the regularized incomplete beta function.
    Ibf(IbfArgs),
    /// Run the closed-loop training simulator and print per-epoch metrics as CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    epoch: usize,
    #[arg(long, default_value_t = 0)]
    batch_index: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Hybrid,
    Rank,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// Comma-separated losses.
    #[arg(long, value_delimiter = ',', conflicts_with = "manifest", required_unless_present = "manifest")]
    losses: Option<Vec<f64>>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Defaults to the config's policy.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// Defaults to the config's schedule length.
    #[arg(long)]
    total_epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct IbfArgs {
    #[arg(long)]
    x: f64,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 0.5)]
    a: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Fixed,
    Adaptive,
    TwoStage,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "two-stage")]
    regime: RegimeArg,
    #[arg(long, default_value_t = 10)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 20)]
    adaptive_epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
    /// Write the metrics CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every batch's loss-pipeline trace as JSON lines.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

/// Runs the CLI with `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_INVALID
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(CliError { code, message }) => {
            let _ = writeln!(stderr, "error: {message}");
            code
        }
    }
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_io() { EXIT_IO } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult = Result<(), CliError>;

fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult {
    let mut config = match &cli.config {
        Some(path) => read_config(path)?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if cli.print_config {
        return emit(stdout, &config.to_toml_string());
    }
    match cli.command {
        Some(Command::Augment(args)) => cmd_augment(&args, &config),
        Some(Command::Policy(args)) => cmd_policy(&args, &config, stdout),
        Some(Command::Schedule(args)) => cmd_schedule(&args, &config, stdout),
        Some(Command::Ibf(args)) => cmd_ibf(&args, stdout),
        Some(Command::Simulate(args)) => cmd_simulate(&args, &config, stdout),
        None => Err(invalid("no subcommand given (see --help)")),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes()).map_err(|e| io_error(Path::new("<stdout>"), e))
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn cmd_augment(args: &AugmentArgs, config: &EngineConfig) -> CliResult {
    let manifest = read_manifest(&args.manifest)?;
    if manifest.is_empty() {
        return Err(invalid(format!("{}: manifest has no records", args.manifest.display())));
    }
    let base = manifest_dir(&args.manifest);
    let features = manifest
        .records
        .iter()
        .map(|r| {
            read_features(BatchManifest::resolve(base, r)).map_err(|e| {
                let mut err = CliError::from(e);
                err.message = format!("sample {}: {}", r.sample_id, err.message);
                err
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let losses = BatchLosses::new(manifest.losses())?;
    let position = BatchPosition {
        epoch: args.epoch,
        batch_index: args.batch_index,
    };
    let (augmented, report) = augment_batch(&features, &losses, position, config)?;
    let ids: Vec<&str> = manifest.records.iter().map(|r| r.sample_id.as_str()).collect();
    let report = report.with_ids(&ids)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    for (id, m) in ids.iter().zip(&augmented) {
        write_features(m, args.out_dir.join(format!("{id}.spgm")))?;
    }
    let mut buf = Vec::new();
    report
        .write_jsonl(&mut buf)
        .map_err(|e| invalid(format!("serializing report: {e}")))?;
    write_atomic(&args.out_dir.join(REPORT_FILE), &buf)?;
    Ok(())
}

fn cmd_policy(args: &PolicyArgs, config: &EngineConfig, stdout: &mut dyn Write) -> CliResult {
    let (ids, losses): (Vec<String>, Vec<f64>) = match (&args.losses, &args.manifest) {
        (Some(l), _) => ((0..l.len()).map(|i| i.to_string()).collect(), l.clone()),
        (None, Some(path)) => {
            let m = read_manifest(path)?;
            (m.records.iter().map(|r| r.sample_id.clone()).collect(), m.losses())
        }
        (None, None) => return Err(invalid("one of --losses or --manifest is required")),
    };
    let batch = BatchLosses::new(losses)?;
    let policy = match args.policy {
        Some(PolicyArg::Hybrid) => PolicyKind::Hybrid,
        Some(PolicyArg::Rank) => PolicyKind::Rank,
        None => config.policy,
    };
    let mut out = String::new();
    match policy {
        PolicyKind::Hybrid => {
            let t = hybrid_normalize(&batch, &config.ibf, config.clip_spread)?;
            out.push_str(&format!("# policy=hybrid mean={} var={}\n", t.l_mean, t.l_var));
            out.push_str("sample_id,loss,clipped,meannorm,minmax,lambda\n");
            for (i, id) in ids.iter().enumerate() {
                out.push_str(&format!(
                    "{id},{},{},{},{},{}\n",
                    t.l_raw[i], t.l_clipped[i], t.l_meannorm[i], t.l_minmax[i], t.lambda[i]
                ));
            }
        }
        PolicyKind::Rank => {
            let lambda = rank_policy(&batch, &config.ibf)?;
            let ranks = loss_ranks(batch.as_slice());
            out.push_str("# policy=rank\n");
            out.push_str("sample_id,loss,rank,lambda\n");
            for (i, id) in ids.iter().enumerate() {
                out.push_str(&format!("{id},{},{},{}\n", batch.as_slice()[i], ranks[i], lambda[i]));
            }
        }
        PolicyKind::Fixed => return Err(invalid("policy `fixed` has no lambda; use hybrid or rank")),
    }
    emit(stdout, &out)
}

fn cmd_schedule(args: &ScheduleArgs, config: &EngineConfig, stdout: &mut dyn Write) -> CliResult {
    let mut schedule = config.schedule;
    if let Some(total) = args.total_epochs {
        schedule.total_epochs = total;
    }
    let mut out = String::from("epoch,epoch_policy,p_mask,p_sub\n");
    for epoch in 0..=schedule.total_epochs {
        let s = schedule_at(epoch, &schedule)?;
        out.push_str(&format!("{},{},{},{}\n", s.epoch, s.epoch_policy, s.p_mask, s.p_sub));
    }
    emit(stdout, &out)
}

/// Formats `v` with 12 significant digits in positional notation.
pub fn format_significant(v: f64, digits: i32) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn cmd_ibf(args: &IbfArgs, stdout: &mut dyn Write) -> CliResult {
    let params = IbfParams::new(args.s, args.a)?;
    let value = regularized_ibf(args.x, &params)?;
    emit(stdout, &format!("{}\n", format_significant(value, 12)))
}

fn cmd_simulate(args: &SimulateArgs, config: &EngineConfig, stdout: &mut dyn Write) -> CliResult {
    let task = SyntheticTask {
        samples_per_class: args.samples_per_class,
        seed: args.task_seed,
        ..Default::default()
    };
    let sim = SimConfig {
        regime: match args.regime {
            RegimeArg::Fixed => Regime::Fixed,
            RegimeArg::Adaptive => Regime::Adaptive,
            RegimeArg::TwoStage => Regime::TwoStage,
        },
        pretrain_epochs: args.pretrain_epochs,
        adaptive_epochs: args.adaptive_epochs,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        engine: config.clone(),
    };
    let mut traces = Vec::new();
    let keep_traces = args.trace_out.is_some();
    let metrics = run_simulation_with(&task, &sim, |report| {
        if keep_traces {
            // writing into a Vec cannot fail
            report.write_header_jsonl(&mut traces).unwrap();
        }
    })?;
    if let Some(path) = &args.trace_out {
        write_atomic(path, &traces)?;
    }
    let csv = metrics.to_csv();
    match &args.out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => emit(stdout, &csv)?,
    }
    Ok(())
}
