//! Connects to every testbed endpoint from the outside and from the
//! allowlisted source, and prints what each zone let through.
//!
//!     cargo run -p utmsec --example net_probe -- [toggles]   # e.g. expose-dbnode

use std::time::Duration;

use utmsec::netprobe::observe;
use utmsec::SourceBinding;
use utmsec_testbed::{free_port_base, Testbed, TestbedConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toggles = std::env::args().nth(1).unwrap_or_default();
    let dir = tempfile::tempdir()?;
    let config = TestbedConfig::new(free_port_base().ok_or("no free port range")?, dir.path()).with_toggle_list(&toggles)?;
    let mut tb = Testbed::start(config).await?;
    let m = tb.manifest().clone();

    let mut sources = vec![SourceBinding::External(m.external_source)];
    sources.extend(m.allowlist_sources.iter().map(|a| SourceBinding::Allowlisted(*a)));
    for c in &m.components {
        for ep in &c.endpoints {
            for src in &sources {
                let o = observe(&c.id, ep, *src, Duration::from_secs(1)).await?;
                println!("{:<8} {:<22} {:<14} {:?} ({} ms)", c.zone().to_string(), o.source_label, o.endpoint, o.outcome, o.elapsed_ms);
            }
        }
    }
    tb.stop().await;
    Ok(())
}
