use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};
use trackscope::config::{PipelineConfig, CONFIG_ENV, DEFAULT_TRACKERS};
use trackscope::error::{CliError, Result};
use trackscope::generate::{generate, SyntheticCorpusSpec};
use trackscope::inspect::{profile, render_text, EntityKind};
use trackscope::{formats, pipeline, report, simulate};
use trackscope_core::time::MonthKey;
use trackscope_core::transport::{TransportConfig, DEFAULT_DELAY_MAX_MS, DEFAULT_DELAY_MIN_MS};

#[derive(Parser)]
#[command(name = "trackscope")]
#[command(about = "Measure third-party tracking from browser request-event logs")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a synthetic event log and its ground-truth sidecar
    Generate {
        /// Corpus spec (TOML); a built-in demo corpus when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Event log to write (NDJSON)
        #[arg(short, long)]
        out: PathBuf,
        /// Sidecar path (default: <out>.truth.json)
        #[arg(long)]
        truth: Option<PathBuf>,
    },

    /// Run the full pipeline over an event log and write reports
    Run {
        /// Event log (NDJSON)
        events: PathBuf,
        /// Output directory
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },

    /// Print the profile of a tracker, site or company from a report
    Inspect {
        /// report-<month>.json
        report: PathBuf,
        #[arg(long, group = "entity")]
        tracker: Option<String>,
        #[arg(long, group = "entity")]
        site: Option<String>,
        #[arg(long, group = "entity")]
        company: Option<String>,
        #[arg(long)]
        json: bool,
    },

    /// Simulate the proxy transport with synthetic messages
    SimulateTransport {
        #[arg(long, default_value_t = 100)]
        clients: usize,
        #[arg(long, default_value_t = 10_000)]
        messages: usize,
        #[arg(long, default_value_t = 100)]
        interval_ms: i64,
        #[arg(long, default_value_t = 4)]
        proxies: usize,
        #[arg(long, default_value_t = DEFAULT_DELAY_MIN_MS)]
        delay_min_ms: i64,
        #[arg(long, default_value_t = DEFAULT_DELAY_MAX_MS)]
        delay_max_ms: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Validate a tracker database file
    DbCheck {
        /// Tracker CSV; the bundled database when omitted
        path: Option<PathBuf>,
    },

    /// Write the quorum counts an event log produces
    QuorumExport {
        events: PathBuf,
        /// Output CSV (key,value_digest,cardinality)
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config; its values override flags
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long)]
    suffix_list: Option<PathBuf>,
    #[arg(long)]
    tracker_db: Option<PathBuf>,
    #[arg(long)]
    cleaning_rules: Option<PathBuf>,
    #[arg(long)]
    geo_table: Option<PathBuf>,
    #[arg(long)]
    quorum_import: Option<PathBuf>,
    /// Distinct observers needed before a value is safe
    #[arg(long, default_value_t = 5)]
    k: u32,
    #[arg(long, default_value_t = 2)]
    min_value_length: usize,
    #[arg(long, default_value_t = 7)]
    window_days: u32,
    #[arg(long, default_value_t = 8)]
    hash_bytes: usize,
    #[arg(long, default_value_t = 4)]
    proxies: usize,
    #[arg(long, default_value_t = DEFAULT_DELAY_MIN_MS)]
    delay_min_ms: i64,
    #[arg(long, default_value_t = DEFAULT_DELAY_MAX_MS)]
    delay_max_ms: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only report this month (YYYY-MM)
    #[arg(long)]
    month: Option<MonthKey>,
}

impl PipelineArgs {
    fn resolve(self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            suffix_list: self.suffix_list,
            tracker_db: self.tracker_db,
            cleaning_rules: self.cleaning_rules,
            geo_table: self.geo_table,
            quorum_import: self.quorum_import,
            quorum: trackscope_core::QuorumConfig {
                k: self.k,
                min_value_length: self.min_value_length,
                window_days: self.window_days,
            },
            hash_truncation_bytes: self.hash_bytes,
            transport: TransportConfig {
                proxies: self.proxies,
                delay_min_ms: self.delay_min_ms,
                delay_max_ms: self.delay_max_ms,
                seed: self.seed,
            },
            month: self.month,
        };
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cmd_generate(
    spec: Option<PathBuf>,
    seed: u64,
    out: &Path,
    truth: Option<PathBuf>,
) -> Result<()> {
    let spec = match spec {
        Some(path) => {
            let text = formats::read_text(&path)?;
            toml::from_str::<SyntheticCorpusSpec>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => SyntheticCorpusSpec::demo(),
    };
    let generated = generate(&spec, seed).map_err(|e| CliError::Config(e.to_string()))?;
    formats::write_ndjson(out, &generated.events)?;
    let truth_path = truth.unwrap_or_else(|| {
        let mut name = out.as_os_str().to_owned();
        name.push(".truth.json");
        PathBuf::from(name)
    });
    report::write_json(&truth_path, &generated.truth)?;
    eprintln!(
        "wrote {} events for {} page loads to {}",
        generated.events.len(),
        generated.truth.total_pages,
        out.display()
    );
    Ok(())
}

fn cmd_inspect(
    path: &Path,
    tracker: Option<String>,
    site: Option<String>,
    company: Option<String>,
    json: bool,
) -> Result<()> {
    let report = report::read_report(path)?;
    let (kind, id) = match (tracker, site, company) {
        (Some(id), _, _) => (EntityKind::Tracker, id),
        (_, Some(id), _) => (EntityKind::Site, id),
        (_, _, Some(id)) => (EntityKind::Company, id),
        _ => {
            return Err(CliError::Config(
                "pass --tracker, --site or --company".into(),
            ))
        }
    };
    let profile = profile(&report, kind, &id)?;
    if json {
        print_json(&profile)
    } else {
        print!("{}", render_text(&report, &profile));
        Ok(())
    }
}

fn cmd_db_check(path: Option<PathBuf>) -> Result<()> {
    let db = match &path {
        Some(p) => formats::parse_tracker_db(&formats::read_text(p)?, p)?,
        None => formats::parse_tracker_db(DEFAULT_TRACKERS, Path::new("<bundled trackers.csv>"))?,
    };
    let mut categories: BTreeMap<&str, usize> = BTreeMap::new();
    let mut companies = std::collections::BTreeSet::new();
    let mut trackers = 0;
    for t in db.trackers() {
        trackers += 1;
        *categories.entry(t.category.as_str()).or_default() += 1;
        companies.insert(t.company_id.as_str());
    }
    println!("version    {}", db.version());
    println!("patterns   {}", db.len());
    println!("trackers   {trackers}");
    println!("companies  {}", companies.len());
    for (cat, n) in categories {
        println!("  {cat:<22} {n}");
    }
    Ok(())
}

fn cmd_quorum_export(events: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let events = formats::read_events(events)?;
    if events.is_empty() {
        return Err(CliError::Empty("event log contains no events".into()));
    }
    let stores = pipeline::build_quorum(cfg, &events)?;
    let Some((_, latest)) = stores.iter().next_back() else {
        return Err(CliError::Empty("no sub-resource requests to count".into()));
    };
    formats::write_quorum(latest, out)?;
    eprintln!("wrote {} quorum entries to {}", latest.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Commands::Generate {
            spec,
            seed,
            out,
            truth,
        } => cmd_generate(spec, seed, &out, truth),
        Commands::Run {
            events,
            out,
            pipeline,
        } => {
            let cfg = pipeline.resolve()?;
            let manifest = pipeline::cmd_run(&cfg, &events, &out)?;
            eprintln!(
                "{} page loads from {} events; wrote {} files to {}",
                manifest.counts.page_loads,
                manifest.counts.events,
                manifest.outputs.len() + 1,
                out.display()
            );
            Ok(())
        }
        Commands::Inspect {
            report,
            tracker,
            site,
            company,
            json,
        } => cmd_inspect(&report, tracker, site, company, json),
        Commands::SimulateTransport {
            clients,
            messages,
            interval_ms,
            proxies,
            delay_min_ms,
            delay_max_ms,
            seed,
        } => {
            let params = simulate::SimParams {
                clients,
                messages,
                send_interval_ms: interval_ms,
                transport: TransportConfig {
                    proxies,
                    delay_min_ms,
                    delay_max_ms,
                    seed,
                },
            };
            let summary =
                simulate::summarize(&params).map_err(|e| CliError::Config(e.to_string()))?;
            print_json(&summary)
        }
        Commands::DbCheck { path } => cmd_db_check(path),
        Commands::QuorumExport {
            events,
            out,
            pipeline,
        } => {
            let cfg = pipeline.resolve()?;
            cmd_quorum_export(&events, &out, &cfg)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        process::exit(err.exit_code());
    }
}
