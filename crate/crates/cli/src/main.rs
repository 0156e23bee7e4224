use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use georeid_cli::error::{RunError, StageContext, StageError};
use georeid_cli::{commands, run_experiment, verify_report, with_jobs, Arm, ExperimentConfig};

#[derive(Parser)]
#[command(name = "georeid", version, about = "Geometry-versus-appearance person re-identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmChoice {
    Geo,
    Rgb,
    Both,
}

impl ArmChoice {
    fn arms(self) -> Vec<Arm> {
        match self {
            ArmChoice::Geo => vec![Arm::Geometric],
            ArmChoice::Rgb => vec![Arm::Appearance],
            ArmChoice::Both => Arm::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict the descriptor arms.
    #[arg(long, value_enum)]
    arm: Option<ArmChoice>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset as PLY frames plus manifests.
    Synth(Common),
    /// Render the first frame of every sequence to PGM/PPM.
    Render(Common),
    /// Train one model per mode and arm on all sequences.
    Train(Common),
    /// Evaluate a checkpoint on every mode of the dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full cross-validated experiment with statistics and saliency.
    Xval(Common),
    /// Saliency audit only.
    Saliency(Common),
    /// Check that summary.json is re-derivable from the run's CSV files.
    VerifyReport {
        #[arg(long)]
        out: PathBuf,
    },
}

struct Prepared {
    cfg: ExperimentConfig,
    base: PathBuf,
    out: PathBuf,
    jobs: Option<usize>,
}

fn prepare(c: &Common) -> Result<Prepared, StageError> {
    let (mut cfg, base) = ExperimentConfig::load(&c.config).stage("config")?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.with_arms(c.arm.map(ArmChoice::arms));
    cfg.validate().stage("config")?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Prepared {
        cfg,
        base,
        out,
        jobs: c.jobs,
    })
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("output serializes"));
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Synth(c) => {
            let p = prepare(&c)?;
            let m = with_jobs(p.jobs, || commands::synth(&p.cfg, &p.base, &p.out))?;
            print_json(&m);
        }
        Command::Render(c) => {
            let p = prepare(&c)?;
            let n = with_jobs(p.jobs, || commands::render(&p.cfg, &p.base, &p.out))?;
            print_json(&serde_json::json!({ "rendered_sequences": n }));
        }
        Command::Train(c) => {
            let p = prepare(&c)?;
            let t = with_jobs(p.jobs, || commands::train(&p.cfg, &p.base, &p.out))?;
            print_json(&t);
        }
        Command::Eval { common, checkpoint } => {
            let p = prepare(&common)?;
            let r = with_jobs(p.jobs, || commands::eval(&p.cfg, &p.base, &checkpoint))?;
            print_json(&r);
        }
        Command::Xval(c) => {
            let p = prepare(&c)?;
            let s = with_jobs(p.jobs, || run_experiment(&p.cfg, &p.base, &p.out))?;
            for cond in &s.conditions {
                for arm in &cond.arms {
                    println!(
                        "{} -> {} {:<10} acc_micro {}  mAP {}",
                        cond.train_mode,
                        cond.test_mode,
                        arm.arm,
                        arm.metrics["acc_micro"].formatted,
                        arm.metrics["map"].formatted
                    );
                }
            }
            println!("wrote {}", p.out.join("summary.json").display());
        }
        Command::Saliency(c) => {
            let p = prepare(&c)?;
            let s = with_jobs(p.jobs, || commands::saliency(&p.cfg, &p.base, &p.out))?;
            print_json(&s);
        }
        Command::VerifyReport { out } => {
            let r = verify_report(Path::new(&out)).map_err(|e: RunError| StageError::new("verify", e))?;
            print_json(&r);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
