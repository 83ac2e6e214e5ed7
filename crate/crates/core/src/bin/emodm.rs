use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emodm::diffusion::XiMode;
use emodm::harness::{self, EvaluateConfig, GenConfig, InstanceSpec, SampleConfig, TrainConfig};
use emodm::{Result, Suite};

/// Pareto set generation by reverse diffusion over evolutionary trajectories.
#[derive(Parser)]
#[command(name = "emodm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run NSGA-II and record one trajectory file per (instance, seed).
    GenTrajectories(GenArgs),
    /// Train a noise-model library from trajectory files.
    Train(TrainArgs),
    /// Generate a Pareto set for an instance from a library.
    Sample(SampleArgs),
    /// Report IGD of points files against the analytic reference front.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Benchmark suite: zdt, dtlz or lsmop.
    #[arg(long)]
    suite: Suite,
    /// Number of objectives.
    #[arg(long = "m")]
    m: usize,
    /// Number of decision variables.
    #[arg(long = "d")]
    d: usize,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Problem indices within the suite, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    index: Vec<usize>,
    /// Population size N.
    #[arg(long = "n-pop", default_value_t = 100)]
    n_pop: usize,
    /// Generations T.
    #[arg(long = "t-steps", default_value_t = 200)]
    t_steps: usize,
    /// Master seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Trajectory files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Train with identity attention weights.
    #[arg(long = "no-attention")]
    no_attention: bool,
    /// Library file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Library file.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Problem index within the suite.
    #[arg(long)]
    index: usize,
    /// Number of generated solutions N.
    #[arg(long = "n-pop", default_value_t = 100)]
    n_pop: usize,
    /// Seeds, comma separated; several seeds write `-s<seed>` suffixed files.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seed: Vec<u64>,
    /// Similarity-check schedule.
    #[arg(long, default_value = "log2", value_parser = ["every_step", "tenth", "log2", "first_only"])]
    xi: String,
    /// Pareto set CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-step IGD profile (evaluations outside the budget).
    #[arg(long = "igd-profile")]
    igd_profile: Option<PathBuf>,
    /// Reference front size for the profile.
    #[arg(long = "ref-size", default_value_t = harness::DEFAULT_REF_SIZE)]
    ref_size: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Pareto CSV files, or trajectory files (last generation is used).
    #[arg(required = true)]
    points: Vec<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Problem index within the suite.
    #[arg(long)]
    index: usize,
    /// Reference front size.
    #[arg(long = "ref-size", default_value_t = harness::DEFAULT_REF_SIZE)]
    ref_size: usize,
    /// Seeds of the random-population baseline, comma separated.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Baseline population size.
    #[arg(long = "n-pop", default_value_t = 100)]
    n_pop: usize,
    /// JSON report to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn spec(p: ProblemArgs, index: usize) -> InstanceSpec {
    InstanceSpec {
        suite: p.suite,
        index,
        m: p.m,
        d: p.d,
    }
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::GenTrajectories(a) => harness::cmd_gen_trajectories(&GenConfig {
            suite: a.problem.suite,
            indices: a.index,
            m: a.problem.m,
            d: a.problem.d,
            n: a.n_pop,
            t: a.t_steps,
            seeds: a.seed,
            out_dir: a.out,
        }),
        Command::Train(a) => harness::cmd_train(&TrainConfig {
            inputs: a.inputs,
            out: a.out,
            use_attention: !a.no_attention,
        }),
        Command::Sample(a) => harness::cmd_sample(&SampleConfig {
            model: a.model,
            instance: spec(a.problem, a.index),
            n: a.n_pop,
            seeds: a.seed,
            xi: a.xi.parse::<XiMode>()?,
            out: a.out,
            igd_profile: a.igd_profile,
            ref_size: a.ref_size,
        }),
        Command::Evaluate(a) => harness::cmd_evaluate(&EvaluateConfig {
            instance: spec(a.problem, a.index),
            points: a.points,
            ref_size: a.ref_size,
            baseline_seeds: a.seed,
            n: a.n_pop,
            out: a.out,
        }),
    }
}

fn usage_error(e: &clap::Error) -> String {
    let text = e.to_string();
    let message = text
        .lines()
        .map(|l| l.trim().trim_start_matches("error:").trim())
        .find(|l| !l.is_empty())
        .unwrap_or("invalid arguments");
    serde_json::json!({ "error": "usage", "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", usage_error(&e));
            return ExitCode::from(2);
        }
    };
    match run(cli.command).and_then(|text| harness::emit(std::io::stdout().lock(), &text)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", harness::error_line(&e));
            ExitCode::FAILURE
        }
    }
}
