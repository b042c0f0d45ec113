use serde_json::Value;
use utmsec::engine::{audit, parse_report, render_report, AuditConfig, Format, Selection};
use utmsec_testbed::{free_port_base, Profile, Testbed, TestbedConfig};

fn schema() -> jsonschema::JSONSchema {
    let text = include_str!("../../../docs/report.schema.json");
    let v: Value = serde_json::from_str(text).unwrap();
    jsonschema::JSONSchema::compile(&v).expect("schema compiles")
}

#[tokio::test]
async fn live_report_validates_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = TestbedConfig::new(free_port_base().unwrap(), dir.path()).with_profile(Profile::PaperPoc);
    let mut tb = Testbed::start(config).await.unwrap();
    let report = audit(tb.manifest().clone(), AuditConfig::default(), &Selection::all()).await.unwrap();
    tb.stop().await;
    assert_eq!(report.findings.len(), 3);

    let bytes = render_report(&report, Format::Json);
    let json: Value = serde_json::from_slice(&bytes).unwrap();
    let schema = schema();
    if let Err(errors) = schema.validate(&json) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("report violates schema: {msgs:#?}");
    }
    let back = parse_report(&bytes).unwrap();
    assert_eq!(back, report);
    assert_eq!(render_report(&back, Format::Json), bytes);
}

#[test]
fn schema_rejects_unknown_status() {
    let mut bad: Value = serde_json::from_str(
        r#"{"schema_version":"utmsec.report/v1","tool":{"name":"utmsec","version":"0"},
            "generated_at":"2025-01-01T00:00:00Z","manifest_digest":"sha256:00",
            "results":[{"check_id":"JWT-06","status":"maybe","evidence":[],"duration_ms":1}],
            "findings":[],"summary":{"total":1,"pass":0,"fail":0,"not_assessable":0,"skipped":0,"findings":0,"by_severity":{}}}"#,
    )
    .unwrap();
    let schema = schema();
    assert!(!schema.is_valid(&bad));
    bad["results"][0]["status"] = "pass".into();
    bad["manifest_digest"] = format!("sha256:{}", "0".repeat(64)).into();
    assert!(schema.is_valid(&bad));
}
