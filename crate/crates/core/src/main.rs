use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use model_reset::harness::{self, RunConfig, SweepSpec};
use model_reset::Error;

#[derive(Parser)]
#[command(name = "model-reset", about = "MBPO with world-model resetting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training run from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        buffer_in: Option<PathBuf>,
        #[arg(long)]
        buffer_out: Option<PathBuf>,
        #[arg(long)]
        reserved_buffer: Option<PathBuf>,
    },
    /// Run every cell of a sweep spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// MMSE (and VME with an agent) of a saved model on a saved buffer.
    EvalModel {
        #[arg(long)]
        model_ckpt: PathBuf,
        #[arg(long)]
        buffer: PathBuf,
        #[arg(long)]
        agent_ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Saved-policy warm-up versus random warm-up on the same config.
    SeedBuffer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        agent_ckpt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            buffer_in,
            buffer_out,
            reserved_buffer,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.buffer_in = buffer_in.or(cfg.buffer_in);
            cfg.buffer_out = buffer_out.or(cfg.buffer_out);
            cfg.reserved_buffer = reserved_buffer.or(cfg.reserved_buffer);
            let s = harness::run(&cfg)?;
            println!(
                "final_window_return={:.4} final_window_mmse={:.6} agent_updates={} model_trainings={} out={}",
                s.final_window_return,
                s.final_window_mmse,
                s.agent_updates,
                s.model_trainings,
                s.out_dir.display()
            );
        }
        Command::Sweep { spec, jobs } => {
            let spec = SweepSpec::load(&spec)?;
            for c in harness::sweep(&spec, jobs)? {
                println!(
                    "cell {} [{}]: return {:.2} ± {:.2}, mmse {:.5}, failed {}",
                    c.index,
                    c.label,
                    c.final_return.mean,
                    c.final_return.ci95,
                    c.final_mmse.mean,
                    c.failures.len()
                );
            }
        }
        Command::EvalModel {
            model_ckpt,
            buffer,
            agent_ckpt,
            seed,
        } => {
            let (mmse, vme) = harness::eval_model(&model_ckpt, &buffer, agent_ckpt.as_deref(), seed)?;
            match vme {
                Some(v) => println!("mmse={mmse:.10e} vme={v:.10e}"),
                None => println!("mmse={mmse:.10e}"),
            }
        }
        Command::SeedBuffer { config, agent_ckpt, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let o = harness::seed_buffer_experiment(&cfg, &agent_ckpt)?;
            println!("preinit auc={:.4} random auc={:.4}", o.preinit.return_auc, o.random.return_auc);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
