use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use utmsec::engine::{
    audit, parse_report, render_report, AuditConfig, CheckId, Format, Selection, SourceMode, REGISTRY,
};
use utmsec_testbed::{
    parse_toggles, request_shutdown, toggle_matrix, Profile, Testbed, TestbedConfig, Toggle, DEFAULT_PORT_BASE,
    PORT_SPAN,
};

/// Security audit toolkit for federated UTM deployments.
#[derive(Parser)]
#[command(name = "utmsec", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the audit against a target manifest.
    Scan(ScanArgs),
    /// Start, stop or describe the local mock deployment.
    Testbed {
        #[command(subcommand)]
        action: TestbedAction,
    },
    /// Re-render a saved JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "text", value_parser = parse_format)]
        format: Format,
    },
    /// Inspect the check registry.
    Checks {
        #[command(subcommand)]
        action: ChecksAction,
    },
    /// Parse and validate a manifest without contacting the target.
    ManifestValidate { manifest: PathBuf },
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated check ids; all checks when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_check)]
    checks: Vec<CheckId>,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "UTMSEC_PROBE_TIMEOUT_MS", default_value_t = 2000)]
    probe_timeout_ms: u64,
    /// Source address policy: auto, external or allowlisted.
    #[arg(long, default_value = "auto")]
    source: SourceMode,
    /// Also send time-based blind SQL injection payloads.
    #[arg(long)]
    enable_time_based: bool,
    /// Injection corpus file replacing the built-in one.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TestbedAction {
    /// Start the testbed and serve until interrupted or `testbed down`.
    Up {
        #[arg(long, default_value = "secure")]
        profile: Profile,
        /// Extra comma-separated toggles on top of the profile.
        #[arg(long, default_value = "")]
        toggles: String,
        #[arg(long, env = "UTMSEC_PORT_BASE", default_value_t = DEFAULT_PORT_BASE)]
        port_base: u16,
        /// State directory for certificates, stores and the manifest.
        #[arg(long, default_value = ".utmsec-testbed")]
        dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Stop a testbed started with `testbed up`.
    Down {
        #[arg(long, env = "UTMSEC_PORT_BASE", default_value_t = DEFAULT_PORT_BASE)]
        port_base: u16,
    },
    /// List toggles, the checks each one flips, and the profiles.
    Toggles,
}

#[derive(Subcommand)]
enum ChecksAction {
    /// One line per registry entry.
    List,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_check(s: &str) -> Result<CheckId, String> {
    s.parse().map_err(|e: utmsec::engine::UnknownCheck| e.to_string())
}

type Outcome = Result<ExitCode, String>;

fn emit(bytes: &[u8], out: Option<&PathBuf>) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(bytes).map_err(|e| e.to_string()),
    }
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

async fn scan(args: ScanArgs) -> Outcome {
    let manifest = utmsec_manifest::load_manifest(&args.manifest).map_err(|e| e.to_string())?;
    let config = AuditConfig {
        probe_timeout: Duration::from_millis(args.probe_timeout_ms),
        source: args.source,
        enable_time_based: args.enable_time_based,
        corpus_path: args.corpus,
        ..AuditConfig::default()
    };
    let selection = if args.checks.is_empty() { Selection::all() } else { Selection::only(args.checks) };
    let report = audit(manifest, config, &selection).await.map_err(|e| e.to_string())?;
    emit(&render_report(&report, args.format), args.out.as_ref())?;
    Ok(code(report.exit_code()))
}

async fn testbed_up(profile: Profile, toggles: &str, port_base: u16, dir: PathBuf, seed: Option<u64>) -> Outcome {
    let mut config = TestbedConfig::new(port_base, dir).with_profile(profile);
    config = config.with_toggles(parse_toggles(toggles).map_err(|e| e.to_string())?);
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    let mut testbed = Testbed::start(config).await.map_err(|e| e.to_string())?;
    let names: Vec<&str> = testbed.toggles().iter().map(|t| t.name()).collect();
    println!(
        "testbed up: profile {profile}, toggles [{}], ports {}-{}",
        names.join(", "),
        port_base,
        port_base + PORT_SPAN - 1
    );
    println!("manifest: {}", testbed.manifest_path().display());
    let _ = std::io::stdout().flush();
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {}
        _ = testbed.shutdown_requested() => {}
    }
    testbed.stop().await;
    let _ = writeln!(std::io::stdout(), "testbed stopped");
    Ok(ExitCode::SUCCESS)
}

fn toggles_table() -> String {
    let matrix = toggle_matrix();
    let mut s = String::new();
    for t in Toggle::ALL {
        let checks = matrix.get(t.name()).map(|c| c.join(",")).unwrap_or_default();
        s.push_str(&format!("{:<24} {:<12} {}\n", t.name(), checks, t.description()));
    }
    s.push('\n');
    for p in Profile::ALL {
        let members: Vec<&str> = p.toggles().iter().map(|t| t.name()).collect();
        let members = match p {
            Profile::Secure => "no toggles".to_string(),
            Profile::AllVulnerable => "every toggle".to_string(),
            Profile::PaperPoc => members.join(", "),
        };
        s.push_str(&format!("profile {:<16} {}\n", p.name(), members));
    }
    s
}

async fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Scan(args) => scan(args).await,
        Command::Testbed { action } => match action {
            TestbedAction::Up { profile, toggles, port_base, dir, seed } => {
                testbed_up(profile, &toggles, port_base, dir, seed).await
            }
            TestbedAction::Down { port_base } => {
                request_shutdown(port_base)
                    .await
                    .map_err(|e| format!("no testbed answered on port base {port_base}: {e}"))?;
                println!("shutdown requested");
                Ok(ExitCode::SUCCESS)
            }
            TestbedAction::Toggles => {
                print!("{}", toggles_table());
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Report { input, format } => {
            let bytes = std::fs::read(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let report = parse_report(&bytes).map_err(|e| format!("{}: {e}", input.display()))?;
            emit(&render_report(&report, format), None)?;
            Ok(code(report.exit_code()))
        }
        Command::Checks { action: ChecksAction::List } => {
            for c in &REGISTRY {
                println!("{:<8} {:<8} {}", c.id.to_string(), c.severity.to_string(), c.title);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ManifestValidate { manifest } => {
            let m = utmsec_manifest::load_manifest(&manifest).map_err(|e| e.to_string())?;
            println!(
                "{}: valid, {} components, {} mode",
                manifest.display(),
                m.components.len(),
                if m.is_introspective() { "introspective" } else { "remote" }
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(c) => c,
        Err(e) => {
            eprintln!("utmsec: error: {e}");
            ExitCode::from(2)
        }
    }
}
