use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pika_core::platform::CommunityState;
use pika_service::api::{router, AppState};
use pika_service::{commands, load_registry, parse_json};

#[derive(Parser)]
#[command(name = "pika", version, about = "Author, check and simulate community governance policies")]
struct Cli {
    /// Component library to load instead of the built-in one.
    #[arg(long, global = true, env = "PIKA_LIBRARY")]
    library: Option<PathBuf>,
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Check a policy document; exits 1 if there are diagnostics.
    Validate {
        policy: PathBuf,
        /// Also check literal values against this community.
        #[arg(long)]
        community: Option<PathBuf>,
    },
    /// Print the readable source of a compiled policy.
    Compile { policy: PathBuf },
    /// Run a scenario and print the effect trace as JSON lines.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long = "policy", required = true)]
        policies: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Initial community of the session.
        #[arg(long)]
        community: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the component library in use.
    ExportStdlib,
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let registry = load_registry(cli.library.as_deref())?;
    match cli.command {
        Verb::Validate { policy, community } => {
            let report = commands::validate(&registry, &policy, community.as_deref())?;
            for diagnostic in &report.diagnostics {
                println!("{diagnostic}");
            }
            if !report.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
            println!("{}: ok", policy.display());
        }
        Verb::Compile { policy } => print!("{}", commands::render(&registry, &policy)?),
        Verb::Simulate { scenario, policies, seed } => {
            print!("{}", commands::simulate(Arc::new(registry), &scenario, &policies, seed)?)
        }
        Verb::Serve { port, host, community, seed } => {
            let community: CommunityState = match community {
                Some(path) => parse_json(&path)?,
                None => CommunityState::default(),
            };
            let state = AppState::new(Arc::new(registry), community, seed);
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                eprintln!("listening on http://{addr}");
                axum::serve(listener, router(state)).await.context("serving")
            })?;
        }
        Verb::ExportStdlib => print!("{}", registry.to_library_json()),
    }
    Ok(ExitCode::SUCCESS)
}
