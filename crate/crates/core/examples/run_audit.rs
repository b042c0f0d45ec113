//! Starts a local testbed and audits it.
//!
//!     cargo run -p utmsec --example run_audit -- paper-poc [extra,toggles]

use utmsec::engine::{audit, render_report, AuditConfig, Format, Selection};
use utmsec_testbed::{free_port_base, Profile, Testbed, TestbedConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let profile: Profile = args.next().as_deref().unwrap_or("secure").parse()?;
    let extra = args.next().unwrap_or_default();

    let dir = tempfile::tempdir()?;
    let base = free_port_base().ok_or("no free port range")?;
    let config = TestbedConfig::new(base, dir.path()).with_profile(profile).with_toggle_list(&extra)?;
    let mut testbed = Testbed::start(config).await?;

    let started = std::time::Instant::now();
    let report = audit(testbed.manifest().clone(), AuditConfig::default(), &Selection::all()).await?;
    testbed.stop().await;

    print!("{}", String::from_utf8(render_report(&report, Format::Text))?);
    for r in report.results.iter().filter(|r| !r.is_fail()) {
        println!("  {} {}: {}", r.check_id, r.status.as_str(), r.evidence.join(" | "));
    }
    println!("audit took {:.1?}", started.elapsed());
    Ok(())
}
