//! Runs the injection corpus against the gateway's parameterised endpoints.
//!
//!     cargo run -p utmsec --example sqli_scan -- [toggles]   # e.g. string-concat-query

use utmsec::engine::{AuditConfig, AuditContext};
use utmsec::manifest::ComponentRole;
use utmsec::sqliprobe::{scan_endpoint, Corpus, ScanOptions};
use utmsec_testbed::{free_port_base, Testbed, TestbedConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toggles = std::env::args().nth(1).unwrap_or_default();
    let dir = tempfile::tempdir()?;
    let config = TestbedConfig::new(free_port_base().ok_or("no free port range")?, dir.path()).with_toggle_list(&toggles)?;
    let mut tb = Testbed::start(config).await?;
    let ctx = AuditContext::new(tb.manifest().clone(), AuditConfig::default())?;
    let corpus = Corpus::default_corpus();
    println!("{} payloads ({} data-changing entries left out)", corpus.payloads.len(), corpus.excluded);

    for gw in ctx.manifest.by_role(ComponentRole::HttpsGateway) {
        let http = ctx.http_for(gw);
        for ep in gw.endpoints.iter().filter(|e| !e.params.is_empty()) {
            let token = match &ep.required_scope {
                Some(scope) => Some(ctx.token_for(gw, scope).await?.compact().to_string()),
                None => None,
            };
            let r = scan_endpoint(&http, ep, &corpus, token.as_deref(), &ScanOptions::default()).await;
            println!("{} {}", ep.label(), r.status.as_str());
            for e in &r.evidence {
                println!("  {e}");
            }
        }
    }
    tb.stop().await;
    Ok(())
}
