use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use camshot::config::{OracleKind, PipelineConfig};
use camshot::pipeline::{self, Inputs};
use camshot::service;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "camshot", version, about = "Waypoint retrieval, preference refinement and flight planning")]
struct Cli {
    #[arg(long, global = true, default_value = "camshot.toml")]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    oracle: Option<OracleKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank frames and pick the initial waypoints.
    Retrieve,
    /// Refine the retrieved waypoints with the configured oracle.
    Refine,
    /// Plan the flight through the refined waypoints.
    Plan,
    /// Retrieve, refine and plan.
    Run,
    /// Seeded refinement runs around the configured target pose.
    Robustness,
    /// Host human-preference sessions and the UI.
    Serve,
}

fn human_hub(cfg: &PipelineConfig) -> Result<Option<Arc<camshot_core::oracle::SessionHub>>> {
    if cfg.oracle.kind != OracleKind::Human {
        return Ok(None);
    }
    let (hub, addr, id) = camshot::spawn_human_session(cfg)?;
    println!("answer comparisons at http://{addr}/?session={id}");
    Ok(Some(hub))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = PipelineConfig::load(&cli.config)?;
    cfg.override_with(cli.out, cli.seed, cli.oracle)?;

    match cli.command {
        Command::Retrieve => {
            let inputs = Inputs::load(&cfg)?;
            let ordered = pipeline::cmd_retrieve(&cfg, &inputs)?;
            pipeline::write_manifest(&cfg, "retrieve")?;
            for w in &ordered.waypoints {
                println!("k={} frame={} score={:.4}", w.k, w.frame_id, w.score);
            }
        }
        Command::Refine => {
            let inputs = Inputs::load(&cfg)?;
            let hub = human_hub(&cfg)?;
            let refined = pipeline::cmd_refine(&cfg, &inputs, hub.as_ref())?;
            pipeline::write_manifest(&cfg, "refine")?;
            for w in &refined.waypoints {
                println!("k={} promotions={} sim={:?}", w.k, w.promotions, w.final_sim);
            }
        }
        Command::Plan => {
            let inputs = Inputs::load(&cfg)?;
            let plan = pipeline::cmd_plan(&cfg, &inputs)?;
            pipeline::write_manifest(&cfg, "plan")?;
            println!(
                "duration {:.2} s, {} boxes, {} samples",
                plan.knot_times.last().copied().unwrap_or(0.0),
                plan.corridor.len(),
                plan.controls.len()
            );
        }
        Command::Run => {
            let hub = human_hub(&cfg)?;
            pipeline::cmd_run(&cfg, hub.as_ref())?;
            println!("artifacts in {}", cfg.out.display());
        }
        Command::Robustness => {
            let inputs = Inputs::load(&cfg)?;
            let report = pipeline::cmd_robustness(&cfg, &inputs)?;
            let finals = report.final_sims();
            for (run, s) in finals.iter().enumerate() {
                println!("run {run}: final sim {s:.4}");
            }
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            let hits = finals.iter().filter(|&&s| s >= 0.95).count();
            println!("{hits}/{} runs ≥ 0.95, mean {mean:.4}", finals.len());
        }
        Command::Serve => {
            let state = Arc::new(service::AppState::new(cfg.clone())?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = service::bind(&cfg.serve.addr).await?;
                println!("listening on http://{}", listener.local_addr()?);
                service::serve(listener, state).await
            })?;
        }
    }
    Ok(())
}
