//! `aerofuse`: integral imaging, fusion and evaluation from the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric. Failures print a
//! JSON error record on stderr.

mod commands;
mod job;

use std::path::PathBuf;
use std::process::ExitCode;

use aerofuse::fusion::Ablation;
use aerofuse::{par, ErrorKind};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use job::{FeatureSpec, JobSpec, Mode, UsageError};

#[derive(Debug, Parser)]
#[command(name = "aerofuse", version, about = "Fuse aerial basis images with salient multispectral features")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Log per-channel timings and progress.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register pose-annotated frames on a focal plane and average them.
    Integrate(JobArgs),
    /// Fuse a basis image with one or more feature channels.
    Fuse(JobArgs),
    /// Score a fused image against its sources.
    Evaluate(JobArgs),
    /// Run full, filterOnly and cnnOnly fusion side by side.
    Ablate(JobArgs),
    /// Run a JSON job file; flags override its fields.
    Run {
        #[arg(long)]
        job: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[command(flatten)]
        args: JobArgs,
    },
    /// Write randomly initialized network weights (not pretrained).
    InitWeights {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render synthetic forest scenes for experimentation.
    Samples {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the thermal frame stack and poses of the first scene.
        #[arg(long)]
        stack: bool,
    },
}

#[derive(Debug, Args, Default)]
struct JobArgs {
    #[arg(long)]
    basis: Option<PathBuf>,
    /// `path[:thermal][:colorcode][:rgb][:integral]`; repeatable.
    #[arg(long = "feature")]
    features: Vec<String>,
    /// Fused image to score (evaluate).
    #[arg(long)]
    fused: Option<PathBuf>,
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    plane: Option<PathBuf>,
    #[arg(long, env = "AEROFUSE_WEIGHTS")]
    weights: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// full, filterOnly or cnnOnly.
    #[arg(long)]
    ablation: Option<String>,
    /// Also produce and score the equal-weight alpha blend.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    dump_intermediates: Option<PathBuf>,
    /// Write raw 32-bit float TIFFs next to the intermediate dumps.
    #[arg(long)]
    float_tiff: bool,
    /// Extra brightened copy of the output for viewing only.
    #[arg(long)]
    display_gain: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl JobArgs {
    fn into_spec(self, mode: Option<Mode>) -> anyhow::Result<JobSpec> {
        let ablation = self
            .ablation
            .map(|a| a.parse::<Ablation>().map_err(|e| UsageError(e.to_string())))
            .transpose()?;
        Ok(JobSpec {
            mode,
            basis: self.basis,
            features: self
                .features
                .iter()
                .map(|f| FeatureSpec::parse_flag(f))
                .collect::<anyhow::Result<_>>()?,
            fused: self.fused,
            poses: self.poses,
            plane: self.plane,
            weights: self.weights,
            config: None,
            lambda: self.lambda,
            ablation,
            out: self.out,
            report: self.report,
            baseline: self.baseline.then_some(true),
            dump_intermediates: self.dump_intermediates,
            float_tiff: self.float_tiff.then_some(true),
            display_gain: self.display_gain,
        })
    }
}

fn execute(command: Command) -> anyhow::Result<serde_json::Value> {
    match command {
        Command::Integrate(a) => commands::run(&a.into_spec(Some(Mode::Integrate))?),
        Command::Fuse(a) => commands::run(&a.into_spec(Some(Mode::Fuse))?),
        Command::Evaluate(a) => commands::run(&a.into_spec(Some(Mode::Evaluate))?),
        Command::Ablate(a) => commands::run(&a.into_spec(Some(Mode::Ablate))?),
        Command::Run { job, mode, args } => {
            let file = JobSpec::load(&job)?;
            commands::run(&file.overridden_by(args.into_spec(mode)?))
        }
        Command::InitWeights { seed, out } => commands::init_weights(seed, &out),
        Command::Samples { out, count, seed, stack } => commands::samples(&out, count, seed, stack),
    }
}

fn kind_of(err: &anyhow::Error) -> ErrorKind {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<aerofuse::Error>() {
            return e.kind();
        }
        if cause.is::<UsageError>() {
            return ErrorKind::Usage;
        }
        if cause.is::<std::io::Error>() {
            return ErrorKind::Io;
        }
    }
    ErrorKind::Usage
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Io => 2,
        ErrorKind::Numeric => 3,
    }
}

fn report_error(kind: ErrorKind, message: String, causes: Vec<String>) -> ExitCode {
    let code = exit_code(kind);
    let kind = match kind {
        ErrorKind::Usage => "usage",
        ErrorKind::Io => "io",
        ErrorKind::Numeric => "numeric",
    };
    let record = json!({ "error": { "kind": kind, "exitCode": code, "message": message, "causes": causes } });
    eprintln!("{record}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return report_error(ErrorKind::Usage, e.kind().to_string(), Vec::new());
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let threads = cli.threads;
    match par::with_threads(threads, move || execute(cli.command)) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(err) => {
            let causes = err.chain().skip(1).map(|c| c.to_string()).collect();
            report_error(kind_of(&err), err.to_string(), causes)
        }
    }
}
