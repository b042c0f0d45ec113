use std::path::{Path, PathBuf};

use utmsec_manifest::{parse_manifest, render_toml, ComponentRole, TargetManifest};
use utmsec_testbed::{free_port_base, Testbed, TestbedConfig, DEFAULT_PORT_BASE};

const FIXTURE: &str = include_str!("../data/testbed.manifest");

fn relative_to(m: &mut TargetManifest, root: &Path, base: u16) {
    let rel = |p: &mut Option<PathBuf>| {
        if let Some(x) = p {
            *x = x.strip_prefix(root).unwrap().to_path_buf();
        }
    };
    rel(&mut m.trust_anchor);
    rel(&mut m.oauth_client.certificate);
    rel(&mut m.oauth_client.private_key);
    for c in &mut m.components {
        rel(&mut c.storage_path);
        for e in &mut c.endpoints {
            e.port = e.port - base + DEFAULT_PORT_BASE;
        }
    }
}

#[test]
fn fixture_round_trips() {
    let m = parse_manifest(FIXTURE.as_bytes()).unwrap();
    assert_eq!(parse_manifest(render_toml(&m).as_bytes()).unwrap(), m);
    assert_eq!(m.components.len(), 7);
    for role in ComponentRole::ALL.into_iter().filter(|r| *r != ComponentRole::UssMock) {
        assert_eq!(m.by_role(role).count(), 1, "{role}");
    }
}

#[tokio::test]
async fn fixture_matches_default_testbed() {
    let dir = tempfile::tempdir().unwrap();
    let base = free_port_base().unwrap();
    let mut tb = Testbed::start(TestbedConfig::new(base, dir.path())).await.unwrap();
    let mut live = tb.manifest().clone();
    tb.stop().await;
    relative_to(&mut live, &std::fs::canonicalize(dir.path()).unwrap(), base);
    assert_eq!(live, parse_manifest(FIXTURE.as_bytes()).unwrap());
}
