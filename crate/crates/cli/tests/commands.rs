use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use utmsec_testbed::free_port_base;

fn utmsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_utmsec")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A `testbed up` child; stopped through `testbed down` or killed on drop.
struct Running {
    child: Child,
    base: u16,
    manifest: PathBuf,
}

impl Running {
    fn up(profile: &str, dir: &Path) -> Running {
        let base = free_port_base().unwrap();
        let mut child = Command::new(env!("CARGO_BIN_EXE_utmsec"))
            .args(["testbed", "up", "--profile", profile, "--dir"])
            .arg(dir)
            .env("UTMSEC_PORT_BASE", base.to_string())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let banner = lines.next().unwrap().unwrap();
        assert!(banner.starts_with("testbed up:"), "{banner}");
        let manifest = lines.next().unwrap().unwrap();
        let manifest = PathBuf::from(manifest.strip_prefix("manifest: ").unwrap());
        Running { child, base, manifest }
    }

    fn down(mut self) {
        let o = utmsec(&["testbed", "down", "--port-base", &self.base.to_string()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(self.child.wait().unwrap().success());
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.child.kill();
    }
}

#[test]
fn checks_list_is_the_registry() {
    let o = utmsec(&["checks", "list"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 27);
    assert!(lines[0].starts_with("NET-01"));
    assert!(lines[26].starts_with("LOG-04"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(utmsec(&["scan", "--bogus"]).status.code(), Some(2));
    assert_eq!(utmsec(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(utmsec(&["scan", "--manifest", "x", "--checks", "NET-09"]).status.code(), Some(2));
    assert_eq!(utmsec(&["testbed", "up", "--toggles", "foo"]).status.code(), Some(2));
    let missing = utmsec(&["scan", "--manifest", "/nonexistent/m.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&missing.stderr).lines().count(), 1);
}

#[test]
fn toggles_listing_covers_the_matrix() {
    let out = stdout(&utmsec(&["testbed", "toggles"]));
    for t in utmsec_testbed::Toggle::ALL {
        assert!(out.contains(t.name()), "{}", t.name());
    }
    assert!(out.contains("profile paper-poc"));
}

#[test]
fn manifest_validate() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/../testbed/data/testbed.manifest");
    let o = utmsec(&["manifest-validate", fixture]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("7 components"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "mode = \"remote\"\n").unwrap();
    assert_eq!(utmsec(&["manifest-validate", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn scan_secure_then_paper_poc() {
    let dir = tempfile::tempdir().unwrap();
    let tb = Running::up("secure", &dir.path().join("secure"));
    let out = dir.path().join("secure.json");
    let o = utmsec(&["scan", "--manifest", tb.manifest.to_str().unwrap(), "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["summary"]["total"], 27);
    assert_eq!(report["summary"]["findings"], 0);
    let rerender = utmsec(&["report", "--input", out.to_str().unwrap()]);
    assert_eq!(rerender.status.code(), Some(0));
    assert!(stdout(&rerender).contains("No findings."));
    tb.down();

    let tb = Running::up("paper-poc", &dir.path().join("poc"));
    let o = utmsec(&["scan", "--manifest", tb.manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("Findings (3):"), "{text}");
    for title in [
        "Database node channels implement mTLS",
        "No insecure authorization flows (grant types) are enabled",
        "Signing private key is not exposed",
    ] {
        assert!(text.contains(title), "{title}");
    }
    let only = utmsec(&["scan", "--manifest", tb.manifest.to_str().unwrap(), "--checks", "NET-01,DB-01", "--format", "json"]);
    let report: serde_json::Value = serde_json::from_slice(&only.stdout).unwrap();
    assert_eq!(report["summary"]["total"], 2);
    assert_eq!(report["summary"]["findings"], 1);
    tb.down();
}
