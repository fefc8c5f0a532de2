use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anosov_lab_cli::config::{ensure_writable, Analysis};
use anosov_lab_cli::pipeline::{run_analysis, write_outputs, RunError, RunOutput};
use anosov_lab_cli::report::SWEEP_FILE;
use anosov_lab_cli::{exit, RunConfig};

#[derive(Parser)]
#[command(name = "anosov-lab", version, about = "Splittings, bi-contact structures and Liouville pairs of 3D flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses listed in a config and write report.json.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Diagnostics of the forward construction for a list of times, as CSV.
    #[command(name = "sweep-T")]
    SweepT {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated times.
        #[arg(long = "T", value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// Describe the built-in model families.
    ListModels,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, RunError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(n) = self.resolution {
            cfg.resolution = n;
        }
        if let Some(t) = self.tol {
            cfg.tol = Some(t);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        if let Some(o) = &cfg.out {
            ensure_writable(o)?;
        }
        Ok(cfg)
    }
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        RunError::Config(_) | RunError::Write { .. } => exit::CONFIG,
        RunError::Model(_) => exit::MODEL,
    })
}

fn finish(out: &RunOutput, cfg: &RunConfig) -> Result<(), RunError> {
    if let Some(dir) = &cfg.out {
        write_outputs(out, dir)?;
    }
    for a in &out.report.analyses {
        if let Some(e) = &a.error {
            eprintln!("{} failed: {e}", a.analysis.name());
        }
    }
    Ok(())
}

fn analyze(run: &RunArgs) -> Result<RunOutput, RunError> {
    let cfg = run.load()?;
    let out = run_analysis(&cfg)?;
    finish(&out, &cfg)?;
    if cfg.out.is_none() {
        println!("{}", serde_json::to_string_pretty(&out.report).expect("report serializes"));
    }
    Ok(out)
}

fn sweep(run: &RunArgs, times: &[f64]) -> Result<RunOutput, RunError> {
    let mut cfg = run.load()?;
    cfg.sweep_t = times.to_vec();
    cfg.analyses = vec![Analysis::SweepT];
    cfg.validate()?;
    let out = run_analysis(&cfg)?;
    finish(&out, &cfg)?;
    if let Some((_, csv)) = out.attachments.iter().find(|(n, _)| n == SWEEP_FILE) {
        print!("{}", String::from_utf8_lossy(csv));
    }
    Ok(out)
}

fn list_models() {
    println!("geodesic   unit tangent bundle of a hyperbolic surface, frame (e_s, e_u, X) of sl(2,R)");
    println!("           config: {{\"kind\": \"geodesic\"}}");
    println!("cat        suspension of a hyperbolic matrix in SL(2,Z), optional metric skew");
    println!("           config: {{\"kind\": \"cat\", \"matrix\": [[2,1],[1,1]], \"skew\": 0.0}}");
    println!("t3         bi-contact pair on T³ twisting n and m times, amplitudes eps, eps_prime in (0, 0.5)");
    println!("           config: {{\"kind\": \"t3\", \"n\": 1, \"m\": 1, \"eps\": 0.1, \"eps_prime\": 0.2}}");
    println!("document   frame model and flow read from a JSON model document");
    println!("           config: {{\"kind\": \"document\", \"path\": \"model.json\"}}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Analyze { run } => analyze(run),
        Command::SweepT { run, times } => sweep(run, times),
        Command::ListModels => {
            list_models();
            return ExitCode::SUCCESS;
        }
    };
    match r {
        Ok(out) if out.report.all_completed() => ExitCode::from(exit::SUCCESS),
        Ok(_) => ExitCode::from(exit::ANALYSIS),
        Err(e) => fail(&e),
    }
}
