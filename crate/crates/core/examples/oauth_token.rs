//! Requests a client-credentials token from the testbed and estimates the
//! strength of the client secret (or of secrets given on the command line).
//!
//!     cargo run -p utmsec --example oauth_token -- [secret ...]

use utmsec::engine::{AuditConfig, AuditContext};
use utmsec::oauthaudit::{estimate, TokenRequest};
use utmsec_testbed::{free_port_base, Testbed, TestbedConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if !args.is_empty() {
        for s in &args {
            let e = estimate(s);
            println!("{s}: {} chars x log2({}) = {:.2} bits", e.length, e.charset_size, e.estimated_bits);
        }
        return Ok(());
    }

    let dir = tempfile::tempdir()?;
    let mut tb = Testbed::start(TestbedConfig::new(free_port_base().ok_or("no free port range")?, dir.path())).await?;
    let ctx = AuditContext::new(tb.manifest().clone(), AuditConfig::default())?;
    let client = &ctx.manifest.oauth_client;

    let mut req = TokenRequest::client_credentials(client);
    req.scope = Some(client.scopes.join(" "));
    let token = ctx.request_token(&req).await?;
    println!("header  {}", serde_json::to_string(&token.header)?);
    println!("claims  {}", serde_json::to_string_pretty(&token.claims)?);
    println!("lifetime {:?} s, scopes {:?}", token.lifetime_s(), token.scopes());

    if let Some(secret) = &client.client_secret {
        let e = estimate(secret);
        println!("client secret: {} chars, alphabet {}, {:.1} bits", e.length, e.charset_size, e.estimated_bits);
    }
    tb.stop().await;
    Ok(())
}
