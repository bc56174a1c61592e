use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use barometer::platform::{load_catalog, spawn_scheduler, ApiError, ChartQuery};
use barometer::{api, Config, Platform};
use barometer_core::jsonstat::parse_jsonstat;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "barometer",
    version,
    about = "Regional growth barometer service"
)]
struct Cli {
    /// Configuration file.
    #[arg(
        long,
        short,
        env = "BAROMETER_CONFIG",
        default_value = "barometer.toml",
        global = true
    )]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API and the refresh scheduler.
    Serve,
    /// Fetch sources now (all configured sources when none are named).
    Fetch { sources: Vec<String> },
    /// Write a variable's chart as CSV or SVG to stdout or a file.
    Export {
        number: u32,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check the catalog document.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Parse a JSON-stat file and print the resulting cube as JSON.
    Parse { file: PathBuf },
    /// Survey partition maintenance.
    Survey {
        #[command(subcommand)]
        action: SurveyAction,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    Validate,
}

#[derive(Subcommand)]
enum SurveyAction {
    /// Aggregate the identified partition and record the published cube.
    Republish,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] barometer::config::ConfigError),
    #[error(transparent)]
    Startup(#[from] barometer::platform::StartupError),
    #[error("{}", .0.message)]
    Api(ApiError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Parse(String),
    #[error("{0} source(s) failed")]
    Failed(usize),
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError::Api(e)
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Parse { file } = &cli.command {
        let cube = parse_jsonstat(&std::fs::read_to_string(file)?)
            .map_err(|e| CliError::Parse(e.to_string()))?;
        println!(
            "{}",
            serde_json::to_string_pretty(&cube).expect("cubes serialize")
        );
        return Ok(());
    }
    let config = Config::load(&cli.config)?;
    match cli.command {
        Command::Serve => serve(config),
        Command::Fetch { sources } => {
            let platform = Platform::open(&config)?;
            let ids = if sources.is_empty() {
                platform
                    .sources()
                    .into_iter()
                    .map(|s| s.source_id)
                    .collect()
            } else {
                sources
            };
            let mut failed = 0;
            for id in ids {
                match platform.refresh(&id, chrono::Utc::now()) {
                    Ok(r) => println!("{}", serde_json::to_string(&r).expect("reports serialize")),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{id}: {}", e.message);
                    }
                }
            }
            if failed > 0 {
                return Err(CliError::Failed(failed));
            }
            Ok(())
        }
        Command::Export {
            number,
            format,
            kind,
            filter,
            output,
        } => {
            let platform = Platform::open(&config)?;
            let query = ChartQuery {
                kind,
                filter,
                ..ChartQuery::default()
            };
            let export = platform.export(number, &format, &query)?;
            match output {
                Some(path) => std::fs::write(path, export.body)?,
                None => print!("{}", export.body),
            }
            Ok(())
        }
        Command::Catalog {
            action: CatalogAction::Validate,
        } => {
            let catalog = load_catalog(&config.catalog)?;
            println!(
                "catalog ok: {} published variables, highest assigned number {}",
                catalog.published().count(),
                catalog.highest_assigned()
            );
            Ok(())
        }
        Command::Survey {
            action: SurveyAction::Republish,
        } => {
            let platform = Platform::open(&config)?;
            let outcome = platform.republish_survey(chrono::Utc::now())?;
            println!(
                "{}",
                serde_json::to_string(&outcome).expect("outcomes serialize")
            );
            Ok(())
        }
        Command::Parse { .. } => unreachable!("handled above"),
    }
}

fn serve(config: Config) -> Result<(), CliError> {
    let platform = Arc::new(Platform::open(&config)?);
    let scheduler = config.scheduler.then(|| {
        spawn_scheduler(
            Arc::clone(&platform),
            Duration::from_secs(config.poll_secs.max(1)),
        )
    });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.listen).await?;
        tracing::info!(address = %listener.local_addr()?, "listening");
        axum::serve(listener, api::router(platform))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    if let Some(handle) = scheduler {
        handle.stop();
    }
    Ok(())
}
