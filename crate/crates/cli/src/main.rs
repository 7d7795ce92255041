use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use campaignd_api::{Client, ClientError, ServeError};
use campaignd_core::coverage::CampaignStats;
use campaignd_core::store::{ExportFilter, ExportFormat};
use campaignd_core::{CampaignId, Store, StoreError, StoreOptions};
use campaignd_sim::{reference_scenario, run, validate_scenario, Scenario, ScenarioError, SimError};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Participatory sensing campaign service.
#[derive(Debug, Parser)]
#[command(name = "campaignd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[command(flatten)]
        data: DataDir,
    },
    /// Drive a service with a scenario and print the run report as JSON.
    Simulate {
        /// Scenario file; the shipped reference scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Base URL of a running service; runs in-process when omitted.
        #[arg(long)]
        target: Option<String>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print campaign statistics, or a heatmap with --cell-deg.
    Stats {
        #[command(flatten)]
        source: Source,
        /// Campaigns to include; all when omitted.
        #[arg(long)]
        campaign: Vec<String>,
        #[arg(long, value_enum, default_value_t = StatsFormat::Text)]
        format: StatsFormat,
        /// Print the heatmap of the single --campaign at this cell size (JSON).
        #[arg(long)]
        cell_deg: Option<f64>,
    },
    /// Write an anonymised export of one campaign to stdout.
    Export {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        campaign: String,
        #[arg(long, value_enum, default_value_t = DataFormat::Json)]
        format: DataFormat,
    },
    /// Check a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataDir {
    #[arg(long, env = "CAMPAIGND_DATA", default_value = "./data")]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct Source {
    /// Base URL of a running service; reads the data directory when omitted.
    #[arg(long)]
    target: Option<String>,
    #[command(flatten)]
    data: DataDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatsFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DataFormat {
    Json,
    Csv,
}

impl From<DataFormat> for ExportFormat {
    fn from(f: DataFormat) -> Self {
        match f {
            DataFormat::Json => ExportFormat::Json,
            DataFormat::Csv => ExportFormat::Csv,
        }
    }
}

/// Exit 1: invalid input or usage. Exit 2: I/O or network failure.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Io(m) => m,
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(_) | StoreError::Log(_) => Failure::Io(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api(api) => Failure::Invalid(format!("{}: {}", api.code, api.message)),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<ServeError> for Failure {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Store(s) => s.into(),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(m) => Failure::Io(m),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ScenarioInvalid(s) => s.into(),
            SimError::ServiceUnreachable(_) => Failure::Io(e.to_string()),
            SimError::Service { .. } => Failure::Invalid(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("campaignd: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Serve { bind, data } => serve(&bind, data.data),
        Command::Simulate { scenario, target, seed } => simulate(scenario, target, seed),
        Command::Stats { source, campaign, format, cell_deg } => stats(&source, campaign, format, cell_deg),
        Command::Export { source, campaign, format } => export(&source, &campaign, format),
        Command::Validate { scenario } => {
            let s = validate_scenario(&scenario)?;
            let regions: usize = s.campaigns.iter().map(|c| c.regions.len()).sum();
            println!(
                "{}: valid ({} campaigns, {regions} regions, {} volunteers, {} days)",
                scenario.display(),
                s.campaigns.len(),
                s.volunteers.len(),
                s.duration_days
            );
            Ok(())
        }
    }
}

fn serve(bind: &str, data: PathBuf) -> Result<(), Failure> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    runtime.block_on(campaignd_api::serve(bind, &data, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    }))?;
    Ok(())
}

fn simulate(path: Option<PathBuf>, target: Option<String>, seed: Option<u64>) -> Result<(), Failure> {
    let mut scenario: Scenario = match path {
        Some(p) => validate_scenario(p)?,
        None => reference_scenario(),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let report = match target {
        Some(url) => run(&scenario, &Client::new(&url))?,
        None => run(&scenario, &Store::in_memory())?,
    };
    print_json(&report)?;
    if !report.agreement.exact {
        return Err(Failure::Invalid(format!("service disagrees with ledger: {}", report.agreement.mismatches.join("; "))));
    }
    Ok(())
}

enum Backend {
    Local(Arc<Store>),
    Remote(Client),
}

impl Backend {
    fn open(source: &Source) -> Result<Self, Failure> {
        Ok(match &source.target {
            Some(url) => Backend::Remote(Client::new(url)),
            None => {
                if !source.data.data.is_dir() {
                    return Err(Failure::Io(format!("data directory {} does not exist", source.data.data.display())));
                }
                Backend::Local(Arc::new(campaignd_api::open_store(&source.data.data, StoreOptions::default())?))
            }
        })
    }
}

fn stats(source: &Source, campaigns: Vec<String>, format: StatsFormat, cell_deg: Option<f64>) -> Result<(), Failure> {
    let backend = Backend::open(source)?;
    let ids: Vec<CampaignId> = campaigns.iter().map(|c| CampaignId::from(c.as_str())).collect();
    if let Some(cell_deg) = cell_deg {
        let [id] = ids.as_slice() else {
            return Err(Failure::Invalid("--cell-deg needs exactly one --campaign".into()));
        };
        let heatmap = match &backend {
            Backend::Local(store) => store.heatmap(id, cell_deg)?,
            Backend::Remote(client) => client.heatmap(id, cell_deg)?,
        };
        return print_json(&heatmap);
    }
    let stats = match &backend {
        Backend::Local(store) => {
            let ids = if ids.is_empty() { store.campaign_ids() } else { ids };
            store.stats(&ids)?
        }
        Backend::Remote(client) => client.stats(&ids)?,
    };
    match format {
        StatsFormat::Json => print_json(&stats),
        StatsFormat::Text => write_stdout(table(&stats).as_bytes()),
    }
}

fn table(s: &CampaignStats) -> String {
    let rows = [
        ("Cities", s.cities.to_string()),
        ("Participants", s.participants.to_string()),
        ("Regions", s.regions.to_string()),
        ("Experimentation Days", s.experimentation_days.to_string()),
        ("Measurements", s.measurements.to_string()),
        ("Avg Completion Rate", format!("{:.0}%", s.avg_completion * 100.0)),
    ];
    rows.iter().map(|(k, v)| format!("{k:<22}{v:>8}\n")).collect()
}

fn export(source: &Source, campaign: &str, format: DataFormat) -> Result<(), Failure> {
    let id = CampaignId::from(campaign);
    let bytes = match Backend::open(source)? {
        Backend::Local(store) => store.export(&id, format.into(), &ExportFilter::default())?,
        Backend::Remote(client) => client.export(&id, format.into())?,
    };
    write_stdout(&bytes)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push(b'\n');
    write_stdout(&text)
}

fn write_stdout(bytes: &[u8]) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Failure::Io(e.to_string()))
}
