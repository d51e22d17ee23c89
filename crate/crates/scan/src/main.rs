use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use horizon_scan::config::PipelineConfig;
use horizon_scan::error::{Result, ScanError};
use horizon_scan::pipeline::{self, Workspace};
use horizon_scan::synth::{write_synthetic, SynthConfig};
use horizon_scan::{report, service};

#[derive(Parser)]
#[command(name = "scan-cli", version, about = "Bibliometric horizon scanning: topics, growth, specialization")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Workspace directory for single stages; root of run directories for `run`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set topics=50`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct InputArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Field-name mapping for the corpus records.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args, Default)]
struct MetricsArgs {
    /// Error-bar scale used when calibration is off or skipped.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    calibrate: Option<String>,
    #[arg(long, value_name = "LO,HI")]
    chi_band: Option<String>,
    #[arg(long)]
    max_pct_err: Option<f64>,
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, normalize and tokenize the corpus.
    Ingest(InputArgs),
    /// Fit the topic model by Gibbs sampling.
    Model,
    /// Build the model stage from an external Gibbs state file.
    ImportMallet {
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Yearly counts, calibration, growth fits and the screen.
    Metrics(MetricsArgs),
    /// Activity sums and location quotients.
    Lq {
        /// `full` or `top200`.
        #[arg(long)]
        universe: Option<String>,
    },
    /// Topic map coordinates and nearest neighbors.
    Layout {
        /// Import coordinates from `topic_id,x,y` instead of projecting.
        #[arg(long)]
        coords: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Validate the workspace and write the run record and checksums.
    Snapshot,
    /// Report tables and histograms.
    Report {
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Write a synthetic corpus with planted ground truth.
    Synth {
        #[arg(long, default_value_t = 2000)]
        docs: usize,
        #[arg(long, default_value_t = 20)]
        topics: usize,
    },
    /// Serve a snapshot over HTTP (port from SCAN_PORT).
    Serve {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Run every stage into `<out>/<run_id>/snapshot`.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        metrics: MetricsArgs,
        #[arg(long)]
        universe: Option<String>,
        #[arg(long)]
        coords: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let here = Path::new("");
    let mut set = |k: &str, v: String| cfg.set(k, &v, here);
    if let Some(s) = cli.seed {
        set("seed", s.to_string())?;
    }
    if let Some(t) = cli.threads {
        set("threads", t.to_string())?;
    }
    if let Some(o) = &cli.out {
        set("out", path_str(o))?;
    }
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| ScanError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        set(k.trim(), v.trim().to_string())?;
    }
    let input = |cfg: &mut PipelineConfig, a: &InputArgs| -> Result<()> {
        if let Some(p) = &a.corpus {
            cfg.set("corpus", &path_str(p), here)?;
        }
        if let Some(p) = &a.schema {
            cfg.set("schema", &path_str(p), here)?;
        }
        Ok(())
    };
    let metrics = |cfg: &mut PipelineConfig, a: &MetricsArgs| -> Result<()> {
        let pairs = [
            ("scale", a.scale.map(|v| v.to_string())),
            ("calibrate", a.calibrate.clone()),
            ("chi_band", a.chi_band.clone()),
            ("max_pct_err", a.max_pct_err.map(|v| v.to_string())),
            ("top_n", a.top_n.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v, here)?;
            }
        }
        Ok(())
    };
    match &cli.command {
        Command::Ingest(a) => input(&mut cfg, a)?,
        Command::ImportMallet { state, diagnostics } => {
            if let Some(p) = state {
                cfg.set("mallet_state", &path_str(p), here)?;
            }
            if let Some(p) = diagnostics {
                cfg.set("mallet_diagnostics", &path_str(p), here)?;
            }
        }
        Command::Metrics(a) => metrics(&mut cfg, a)?,
        Command::Lq { universe: Some(u) } => cfg.set("universe", u, here)?,
        Command::Layout { coords, k } => {
            if let Some(p) = coords {
                cfg.set("coords", &path_str(p), here)?;
            }
            if let Some(k) = k {
                cfg.set("knn_k", &k.to_string(), here)?;
            }
        }
        Command::Report { top_n: Some(n) } => cfg.set("top_n", &n.to_string(), here)?,
        Command::Run { input: i, metrics: m, universe, coords, k } => {
            input(&mut cfg, i)?;
            metrics(&mut cfg, m)?;
            if let Some(u) = universe {
                cfg.set("universe", u, here)?;
            }
            if let Some(p) = coords {
                cfg.set("coords", &path_str(p), here)?;
            }
            if let Some(k) = k {
                cfg.set("knn_k", &k.to_string(), here)?;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| ScanError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let ws = Workspace::new(&cfg.out);
    match &cli.command {
        Command::Ingest(_) => {
            let stats = pipeline::ingest(&cfg, &ws)?;
            println!("{} documents ({} rejected), {} tokens, vocabulary {}", stats.documents, stats.rejects, stats.tokens, stats.vocabulary);
        }
        Command::Model => {
            let m = pipeline::model(&cfg, &ws)?;
            println!("{} topics, LL/token {:.4}", m.num_topics(), m.ll_per_token);
        }
        Command::ImportMallet { .. } => {
            let state = cfg
                .mallet_state
                .as_deref()
                .ok_or_else(|| ScanError::Usage("import-mallet needs --state or mallet_state".into()))?;
            let m = pipeline::import_mallet(&cfg, &ws, state, cfg.mallet_diagnostics.as_deref())?;
            println!("imported {} topics over {} documents", m.num_topics(), m.num_docs());
        }
        Command::Metrics(_) => {
            let s = pipeline::metrics(&cfg, &ws)?;
            println!("{} fitted, {} not fitted, error scale {:.4}", s.fitted, s.unfitted, s.scale);
        }
        Command::Lq { .. } => pipeline::lq(&cfg, &ws)?,
        Command::Layout { .. } => {
            let l = pipeline::layout(&cfg, &ws)?;
            println!("{} topics placed ({})", l.num_topics(), l.method.as_str());
        }
        Command::Snapshot => {
            let info = pipeline::snapshot(&cfg, &ws, &pipeline::run_id(&cfg)?)?;
            println!("run {}", info.run_id);
        }
        Command::Report { .. } => {
            report::report(&cfg, &ws)?;
            pipeline::refresh_checksums(&ws)?;
        }
        Command::Synth { docs, topics } => {
            let sc = SynthConfig { docs: *docs, topics: *topics, seed: cli.seed.unwrap_or(SynthConfig::default().seed), ..Default::default() };
            let syn = write_synthetic(&sc, &cfg.out)?;
            println!(
                "{} documents in {}; highest planted rate: topic {}",
                syn.docs.len(),
                cfg.out.display(),
                syn.truth.highest_k_topic
            );
        }
        Command::Serve { snapshot } => {
            let port = service::port_from_env()?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| ScanError::stage("serve", e))?;
            rt.block_on(service::serve(snapshot, port))?;
        }
        Command::Run { .. } => {
            let dir = pipeline::run_pipeline(&cfg)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
