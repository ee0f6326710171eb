use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphdeepar::config::{Overrides, RunConfig};
use graphdeepar::pipeline;
use graphdeepar::Result;

#[derive(Parser)]
#[command(name = "graphdeepar", version, about = "Graph-augmented probabilistic demand forecasting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "GRAPHDEEPAR_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for initialisation, sampling and forecasting.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Proceed when inputs come from different data or runs.
    #[arg(long, global = true)]
    force: bool,
    /// Override any config key, e.g. `--set train.max_epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Train and forecast without the graph encoder.
    #[arg(long, global = true)]
    no_graph: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the article similarity graph from static features.
    BuildGraph,
    /// Train a model and write its checkpoint and loss history.
    Train,
    /// Write quantile forecasts for the test weeks.
    Forecast {
        /// Forecast the weeks after the panel instead of the test weeks.
        #[arg(long)]
        future: bool,
    },
    /// Score forecast files per article group.
    Evaluate,
    /// Compare models across one or more report files.
    Compare {
        /// Report files; defaults to the report in the output directory.
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "deepar")]
        baseline: String,
    },
    /// Export per-week article embeddings and a 2-D projection.
    ExportEmbeddings {
        #[arg(long)]
        no_projection: bool,
    },
    /// Generate a clustered synthetic panel.
    SynthData,
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let overrides = Overrides {
        seed: g.seed,
        out_dir: g.out_dir,
        no_graph: g.no_graph,
        set: g.set,
    };
    let cfg = RunConfig::load(g.config.as_deref(), &overrides)?;
    match cli.command {
        Command::BuildGraph => {
            let s = pipeline::build_graph_cmd(&cfg)?;
            println!(
                "nodes={} edges={} mean_degree={:.4} degree_std={:.4} isolated_fraction={:.4}",
                s.n_nodes, s.edge_count, s.mean_degree, s.degree_std, s.isolated_fraction
            );
        }
        Command::Train => {
            let (ck, out) = pipeline::train_cmd(&cfg, g.force)?;
            println!(
                "model={} epochs={} best_epoch={} stopped_early={} train_loss={:.6} minutes={:.3}",
                ck.model_name,
                out.history.len(),
                out.best_epoch,
                out.stopped_early,
                out.final_train_loss,
                ck.train_minutes
            );
        }
        Command::Forecast { future } => {
            let n = pipeline::forecast_cmd(&cfg, g.force, future)?;
            println!("model={} rows={n}", cfg.model_name());
        }
        Command::Evaluate => {
            let report = pipeline::evaluate_cmd(&cfg, g.force)?;
            print!("{}", pipeline::format_report(&report));
        }
        Command::Compare { reports, baseline } => {
            let entries = pipeline::compare_cmd(&cfg, &reports, &baseline, g.force)?;
            print!("{}", pipeline::format_comparison(&entries));
        }
        Command::ExportEmbeddings { no_projection } => {
            let n = pipeline::export_embeddings_cmd(&cfg, g.force, !no_projection)?;
            println!("rows={n}");
        }
        Command::SynthData => {
            let path = pipeline::synth_data_cmd(&cfg)?;
            println!("config={}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
