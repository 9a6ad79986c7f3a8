use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use unpredictable_cli::config::{
    DelayParams, DetectParams, DiscreteParams, ExperimentConfig, FunctionParams, Overrides, Pipeline, SequenceParams,
};
use unpredictable_cli::output::write_outcome;
use unpredictable_cli::pipelines::run_pipeline;
use unpredictable_cli::CliError;

/// Reproduces the worked examples, runs configured simulations and scans
/// time series for recurrence evidence.
#[derive(Debug, Parser)]
#[command(name = "unpredictable", version)]
struct Cli {
    /// Directory for CSV tables and JSON reports.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Simulation or scan horizon (time units, indices or rows).
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Integration or sampling step.
    #[arg(long, global = true, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Target tolerance: epsilon for the systems, last ladder rung otherwise.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Initial value of the logistic source, in (0, 1).
    #[arg(long, global = true)]
    seed: Option<f64>,
    /// Include wall-clock timings in the report (makes it non-reproducible).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rebuild one of the four worked examples and verify it.
    Reproduce { id: Example },
    /// Run the experiment described by a JSON configuration file.
    Run { config: PathBuf },
    /// Gather recurrence and decay evidence from a CSV table.
    Detect {
        csv: PathBuf,
        /// Near-return window: samples for sequences, time for functions.
        #[arg(long)]
        window: Option<f64>,
        /// Separation threshold.
        #[arg(long)]
        epsilon0: Option<f64>,
        /// Half-width of the separation interval (functions only).
        #[arg(long)]
        delta: Option<f64>,
        /// Comma-separated, strictly decreasing closeness ladder.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Example {
    #[value(name = "6.1")]
    Function,
    #[value(name = "6.2")]
    Sequence,
    #[value(name = "6.3")]
    Delay,
    #[value(name = "6.4")]
    Discrete,
}

impl Example {
    fn id(self) -> &'static str {
        match self {
            Example::Function => "6.1",
            Example::Sequence => "6.2",
            Example::Delay => "6.3",
            Example::Discrete => "6.4",
        }
    }

    fn pipeline(self, o: &Overrides) -> Result<Pipeline, CliError> {
        Ok(match self {
            Example::Function => {
                let mut p = FunctionParams::default();
                p.apply(o)?;
                Pipeline::Function(p)
            }
            Example::Sequence => {
                let mut p = SequenceParams::default();
                p.apply(o)?;
                Pipeline::Sequence(p)
            }
            Example::Delay => {
                let mut p = DelayParams::default();
                p.apply(o)?;
                Pipeline::Delay(p)
            }
            Example::Discrete => {
                let mut p = DiscreteParams::default();
                p.apply(o)?;
                Pipeline::Discrete(p)
            }
        })
    }
}

fn apply_overrides(p: &mut Pipeline, o: &Overrides) -> Result<(), CliError> {
    match p {
        Pipeline::Function(x) => x.apply(o),
        Pipeline::Sequence(x) => x.apply(o),
        Pipeline::Delay(x) => x.apply(o),
        Pipeline::Discrete(x) => x.apply(o),
        Pipeline::Detect(x) => x.apply(o),
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let o = Overrides {
        horizon: cli.horizon,
        step: cli.step,
        tol: cli.tol,
        seed: cli.seed,
    };
    let (pipeline, example, prefix) = match &cli.command {
        Command::Reproduce { id } => (id.pipeline(&o)?, id.id().to_string(), id.id().to_string()),
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let mut p = cfg.pipeline(base)?;
            apply_overrides(&mut p, &o)?;
            let kind = serde_json::to_value(cfg.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string));
            (p, kind.unwrap_or_default(), cfg.output.prefix.clone())
        }
        Command::Detect {
            csv,
            window,
            epsilon0,
            delta,
            ladder,
        } => {
            let mut p = DetectParams::new(csv.clone());
            if let Some(w) = window {
                p.window = *w;
            }
            if let Some(e) = epsilon0 {
                p.epsilon0 = *e;
            }
            if let Some(d) = delta {
                p.delta = *d;
            }
            if let Some(l) = ladder {
                p.ladder = l.clone();
            }
            p.apply(&o)?;
            (Pipeline::Detect(p), "detect".to_string(), "detect".to_string())
        }
    };
    let outcome = run_pipeline(&pipeline, &example)?;
    let written = write_outcome(&cli.out_dir, &prefix, &outcome, cli.timings)?;
    for c in &outcome.report.checks {
        println!("{:<15} {}", format!("{:?}", c.status).to_lowercase(), c.name);
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    let failed = outcome.report.failures();
    if !failed.is_empty() {
        eprintln!("failed checks: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
