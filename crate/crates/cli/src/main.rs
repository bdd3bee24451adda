//! Command-line driver: topology generation, detector training, attack
//! campaigns, monitor sweeps, and result reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! invariant violation.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use fohsim::beam::train_embedding;
use fohsim::dfoh::train_classifier;
use fohsim::harness::{
    bootstrap_kb, build_world, load_config, run_beam_campaign, run_dfoh_campaign,
    run_monitor_sweep, stage_seed, summarize, ExperimentConfig, HarnessError,
};
use fohsim::topology::write_metadata;

#[derive(Parser)]
#[command(name = "fohsim", version, about = "Forged-origin hijack detector simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (strict JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the topology and metadata files for the configured world.
    GenTopology,
    /// Train the link-classifier forest and write it with its knowledge base.
    TrainDfoh,
    /// Train the role embedding and write it in text form.
    TrainBeam,
    /// Run the knowledge-base poisoning campaign.
    AttackDfoh,
    /// Run the threshold pollution campaign.
    AttackBeam,
    /// Sweep private-monitor deployments over recorded poison traces.
    EvalMonitors,
    /// Summarize the result CSVs in the output directory.
    Report,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    if let Command::Report = cli.command {
        let out = cli
            .out
            .clone()
            .ok_or_else(|| HarnessError::Config("report needs --out".into()))?;
        print!("{}", summarize(&out)?);
        return Ok(());
    }

    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Config("--config is required".into()))?;
    let mut config: ExperimentConfig = load_config(config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            HarnessError::Config("no output directory: set --out or out_dir".into())
        })?;
    std::fs::create_dir_all(&out)
        .map_err(|e| HarnessError::Data(format!("cannot create {}: {e}", out.display())))?;

    match cli.command {
        Command::GenTopology => {
            let world = build_world(&config)?;
            write(&out.join("topology.txt"), &world.graph.edge_list())?;
            write(&out.join("metadata.json"), &write_metadata(&world.metadata))?;
            println!(
                "topology: {} ASes, {} links, {} monitors",
                world.graph.node_count(),
                world.graph.edge_count(),
                world.monitors.len()
            );
        }
        Command::TrainDfoh => {
            let world = build_world(&config)?;
            let kb = bootstrap_kb(&world, &config.detector, stage_seed(config.seed, "kb"));
            let forest = train_classifier(
                &kb,
                &world.metadata,
                &config.detector.sampling,
                config.detector.forest.clone(),
                stage_seed(config.seed, "dfoh-train"),
            )
            .map_err(|e| HarnessError::Data(e.to_string()))?;
            write(&out.join("forest.json"), &forest.to_json())?;
            write(&out.join("kb_snapshot.csv"), &kb.snapshot())?;
            println!(
                "forest: {} trees over {} knowledge-base links",
                config.detector.forest.n_trees,
                kb.active_link_count()
            );
        }
        Command::TrainBeam => {
            let world = build_world(&config)?;
            let emb = train_embedding(
                &world.graph,
                &config.detector.embedding,
                stage_seed(config.seed, "beam-train"),
            )
            .map_err(|e| HarnessError::Data(e.to_string()))?;
            write(&out.join("embedding.txt"), &emb.serialize_text())?;
            println!(
                "embedding: {} ASes, dimension {}",
                world.graph.node_count(),
                emb.dimension
            );
        }
        Command::AttackDfoh => {
            let bundle = run_dfoh_campaign(&config, &out, cli.jobs)?;
            println!(
                "dfoh campaign: {} pairs, {} evaded, {} pair errors",
                bundle.dfoh_rows.len(),
                bundle.dfoh_rows.iter().filter(|r| r.evaded).count(),
                bundle.pair_errors.len()
            );
        }
        Command::AttackBeam => {
            let bundle = run_beam_campaign(&config, &out, cli.jobs)?;
            println!("beam campaign: {} rows", bundle.beam_rows.len());
        }
        Command::EvalMonitors => {
            let bundle = run_monitor_sweep(&config, &out, cli.jobs)?;
            println!("monitor sweep: {} rows", bundle.monitor_rows.len());
        }
        Command::Report => unreachable!("handled above"),
    }
    Ok(())
}

fn write(path: &std::path::Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text)
        .map_err(|e| HarnessError::Data(format!("cannot write {}: {e}", path.display())))
}
