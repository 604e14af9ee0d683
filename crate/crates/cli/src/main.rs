use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use nlmimo_cli::bench::run_bench;
use nlmimo_cli::commands::{self, SearchRow};
use nlmimo_cli::manifest::{write_csv, write_json};
use nlmimo_cli::{RunConfig, RunManifest};

#[derive(Parser)]
#[command(name = "nlmimo", version, about = "Uplink MU-MIMO detection experiments")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// PER against SNR per detector.
    PerSweep,
    /// Minimum-antenna heatmap.
    Search,
    /// Vehicles per use case and antenna budget, plus power savings.
    Connectivity,
    /// Detection throughput against worker count.
    Bench,
    /// Write the seeded search fixtures to disk.
    GenFixtures,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::PerSweep => "per-sweep",
            Command::Search => "search",
            Command::Connectivity => "connectivity",
            Command::Bench => "bench",
            Command::GenFixtures => "gen-fixtures",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (mut cfg, raw) = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), Vec::new()),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let name = cli.command.name();
    let manifest = RunManifest::new(name, &raw, cfg.seed);
    let out = &cli.out;
    let written = match cli.command {
        Command::PerSweep => {
            let rows = commands::per_sweep(&cfg)?;
            vec![write_csv(out, "per_sweep", &manifest, &rows)?, write_json(out, "per_sweep", &manifest, &rows)?]
        }
        Command::Search => {
            let cells = commands::search(&cfg)?;
            let rows: Vec<SearchRow> = cells.iter().map(SearchRow::from).collect();
            vec![write_csv(out, "search", &manifest, &rows)?, write_json(out, "search", &manifest, &cells)?]
        }
        Command::Connectivity => {
            let report = commands::connectivity(&cfg)?;
            vec![
                write_csv(out, "connectivity", &manifest, &report.rows)?,
                write_csv(out, "power", &manifest, &report.power)?,
                write_json(out, "connectivity", &manifest, &report)?,
            ]
        }
        Command::Bench => {
            let rows = run_bench(&cfg)?;
            vec![write_csv(out, "bench", &manifest, &rows)?, write_json(out, "bench", &manifest, &rows)?]
        }
        Command::GenFixtures => {
            let dir = out.join("fixtures");
            let spec = commands::gen_fixtures(&cfg, &dir)?;
            vec![write_json(&dir, "fixtures", &manifest, &spec)?]
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
