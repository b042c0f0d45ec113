//! Loads a target manifest, prints its roster and its JSON rendering.
//!
//!     cargo run -p utmsec --example manifest_check -- [path]

use utmsec::manifest::{load_manifest, render_json};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../testbed/data/testbed.manifest").to_string());
    let m = load_manifest(&path)?;
    println!("{path}: {:?} mode, client {}", m.mode, m.oauth_client.client_id);
    for c in &m.components {
        println!("  {:<14} {:<16} {:<10} {} endpoint(s)", c.id, c.role.to_string(), c.zone().to_string(), c.endpoints.len());
        for ep in &c.endpoints {
            println!("      {}", ep.label());
        }
    }
    println!("{}", render_json(&m));
    Ok(())
}
