use std::path::PathBuf;
use std::process::ExitCode;

use cellshare::{api, stages, CliError, Run, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cellshare", version, about = "Day classification and census linkage for mobile-phone density grids")]
struct Cli {
    /// Run configuration (JSON). Built-in synthetic defaults when absent.
    #[arg(long, global = true, env = "CELLSHARE_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration's `out`.
    #[arg(long, global = true, env = "CELLSHARE_OUT")]
    out: Option<PathBuf>,
    /// Run seed; overrides the configuration's `seed`.
    #[arg(long, global = true, env = "CELLSHARE_SEED")]
    seed: Option<u64>,
    #[arg(long, short, global = true, env = "CELLSHARE_VERBOSE")]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic city and grid series.
    Synth,
    /// Validate inputs and compute daily density profiles.
    Ingest,
    /// Stacked HOG descriptors per day.
    Features,
    /// k-means over days, then functional subclustering.
    Cluster,
    /// Functional boxplots per day group.
    Fboxplot {
        /// Also write SVG plots.
        #[arg(long)]
        plot: bool,
    },
    /// Zone ratios, summary and market share at the snapshot.
    Linkage,
    /// All stages in order.
    Pipeline {
        #[arg(long)]
        plot: bool,
    },
    /// Serve the run directory over HTTP.
    Serve {
        /// Address to bind; overrides the configuration's `bind`.
        #[arg(long, env = "CELLSHARE_BIND")]
        bind: Option<String>,
    },
}

fn build_run(cli: &Cli) -> Result<Run, CliError> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => {
            let base = p.parent().map(PathBuf::from).unwrap_or_default();
            (RunConfig::load(p)?, base)
        }
        None => (RunConfig::synthetic(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = match (&cli.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("out"),
    };
    Run::new(cfg, base, out)
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let run = build_run(cli)?;
    let one = |r: Result<PathBuf, CliError>| r.map(|p| vec![p]);
    match &cli.command {
        Command::Synth => one(stages::synth(&run)),
        Command::Ingest => one(stages::ingest(&run)),
        Command::Features => one(stages::features(&run)),
        Command::Cluster => one(stages::cluster(&run)),
        Command::Fboxplot { plot } => one(stages::fboxplot(&run, *plot || run.cfg.boxplot.plot)),
        Command::Linkage => one(stages::linkage(&run)),
        Command::Pipeline { plot } => stages::pipeline(&run, *plot),
        Command::Serve { bind } => {
            let bind = bind.clone().unwrap_or_else(|| run.cfg.bind.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
            rt.block_on(api::serve(&run, &bind))?;
            Ok(vec![])
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(manifests) => {
            for m in manifests {
                println!("{}", serde_json::json!({ "status": "ok", "manifest": m.display().to_string() }));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::to_string(&e.report()).expect("error report serializes");
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
