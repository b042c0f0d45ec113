//! Handshakes with each database node with and without the client
//! certificate and prints the negotiated posture.
//!
//!     cargo run -p utmsec --example tls_probe -- [toggles]   # e.g. plaintext-dbnode,tls12-dbnode

use std::time::Duration;

use utmsec::engine::{AuditConfig, AuditContext};
use utmsec::manifest::ComponentRole;
use utmsec::tlsaudit::{db_channel_problems, probe_tls};
use utmsec_testbed::{free_port_base, Testbed, TestbedConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toggles = std::env::args().nth(1).unwrap_or_default();
    let dir = tempfile::tempdir()?;
    let config = TestbedConfig::new(free_port_base().ok_or("no free port range")?, dir.path()).with_toggle_list(&toggles)?;
    let mut tb = Testbed::start(config).await?;
    let ctx = AuditContext::new(tb.manifest().clone(), AuditConfig::default())?;

    for node in ctx.manifest.by_role(ComponentRole::DbNode) {
        for ep in &node.endpoints {
            let p = probe_tls(ep, ctx.identity(), ctx.bind_for(node), Duration::from_secs(2)).await?;
            println!("{}", p.endpoint);
            println!("  version {:?}, cipher {:?}", p.negotiated_version, p.cipher_name);
            println!("  client cert {:?}, TLS 1.2 accepted {:?}", p.requires_client_cert, p.accepts_tls12);
            if let Some(cert) = &p.server_cert {
                println!("  server cert {} (issuer {}, until {})", cert.subject, cert.issuer, cert.not_after);
            }
            for a in &p.alerts {
                println!("  alert: {a}");
            }
            let problems = db_channel_problems(&p);
            println!("  {}", if problems.is_empty() { "ok".to_string() } else { problems.join("; ") });
        }
    }
    tb.stop().await;
    Ok(())
}
