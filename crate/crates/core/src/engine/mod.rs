//! Check registry, scheduling and reports.

mod context;
pub mod registry;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use utmsec_manifest::{ComponentRole, TargetManifest};

pub use context::{AuditConfig, AuditContext, AuditError, Selection, SourceMode};
pub(crate) use context::timed;
pub use registry::{Area, CheckId, CheckInfo, Severity, UnknownCheck, REGISTRY};
pub use report::{CheckResult, CheckStatus, Finding, Report, Summary, ToolInfo, SCHEMA_VERSION};

use crate::{jwtkit, logaudit, netprobe, oauthaudit, sqliprobe, tlsaudit, webcheck};

const NO_WEB: &str = "no web interface declared";
const NO_SECRET: &str = "no client_secret in use";

/// Why a conditional check does not apply to `manifest`, if it does not.
pub fn skip_reason(manifest: &TargetManifest, id: CheckId) -> Option<&'static str> {
    let public_web = manifest.has_role(ComponentRole::WebAppPublic);
    let any_web = manifest.components.iter().any(|c| c.role.is_web_app());
    let secret = manifest.oauth_client.client_secret.is_some();
    match (id.area(), id.number()) {
        (Area::Oauth, 3 | 4) if !secret => Some(NO_SECRET),
        (Area::Oauth, 6) | (Area::Jwt, 10) if !public_web => Some(NO_WEB),
        (Area::Web, 1) if !any_web => Some(NO_WEB),
        _ => None,
    }
}

/// Registry ids whose trigger condition holds, in registry order.
pub fn applicable_checks(manifest: &TargetManifest) -> Vec<CheckId> {
    CheckId::all().filter(|id| skip_reason(manifest, *id).is_none()).collect()
}

/// SHA-256 over the manifest's JSON rendering.
pub fn manifest_digest(manifest: &TargetManifest) -> String {
    let json = utmsec_manifest::render_json(manifest);
    format!("sha256:{}", hex::encode(Sha256::digest(json.as_bytes())))
}

/// Runs the selected checks. Module groups run concurrently; checks within
/// a group run one after another.
pub async fn run_audit(ctx: &AuditContext, selection: &Selection) -> Report {
    let selected: Vec<CheckId> = CheckId::all().filter(|id| selection.contains(*id)).collect();
    let mut results = Vec::new();
    let mut active = BTreeSet::new();
    for id in &selected {
        match skip_reason(&ctx.manifest, *id) {
            Some(reason) => results.push(CheckResult::skipped(*id, reason)),
            None => {
                active.insert(*id);
            }
        }
    }
    let sel = Selection::only(active.iter().copied());
    let any = |area: Area| active.iter().any(|id| id.area() == area);

    let net = async {
        if any(Area::Net) {
            netprobe::check_zones(ctx, &sel).await
        } else {
            Vec::new()
        }
    };
    let db = async {
        let mut out = Vec::new();
        if any(Area::Db) {
            out.extend(tlsaudit::check_db(ctx, &sel).await);
            let db02 = CheckId::new_unchecked(Area::Db, 2);
            if sel.contains(db02) {
                out.push(timed(sqliprobe::check_sqli(ctx)).await);
            }
        }
        out
    };
    let oauth = async {
        if any(Area::Oauth) {
            oauthaudit::check_oauth(ctx, &sel).await
        } else {
            Vec::new()
        }
    };
    let jwt = async {
        if any(Area::Jwt) {
            jwtkit::run_jwt_battery(ctx, &sel).await
        } else {
            Vec::new()
        }
    };
    let web = async {
        if any(Area::Web) {
            vec![timed(webcheck::check_web(ctx)).await]
        } else {
            Vec::new()
        }
    };
    let logs = async {
        if any(Area::Log) {
            logaudit::check_logs(ctx, &sel).await
        } else {
            Vec::new()
        }
    };
    let (n, d, o, j, w, l) = tokio::join!(net, db, oauth, jwt, web, logs);

    let mut seen = BTreeSet::new();
    for r in [n, d, o, j, w, l].into_iter().flatten() {
        if active.contains(&r.check_id) && seen.insert(r.check_id) {
            results.push(r);
        }
    }
    for id in active.difference(&seen) {
        results.push(CheckResult::not_assessable(*id, "check produced no result"));
    }
    let generated_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    Report::assemble(manifest_digest(&ctx.manifest), generated_at, results)
}

/// Loads credentials and runs the audit in one go.
pub async fn audit(
    manifest: TargetManifest,
    config: AuditConfig,
    selection: &Selection,
) -> Result<Report, AuditError> {
    let ctx = AuditContext::new(manifest, config)?;
    Ok(run_audit(&ctx, selection).await)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            other => Err(format!("unknown format {other:?} (expected json or text)")),
        }
    }
}

pub fn render_report(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        Format::Text => render_text(report).into_bytes(),
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<Report, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// Drops the fields that legitimately differ between identical runs.
pub fn strip_volatile(report: &mut serde_json::Value) {
    if let Some(obj) = report.as_object_mut() {
        obj.remove("generated_at");
        if let Some(results) = obj.get_mut("results").and_then(|r| r.as_array_mut()) {
            for r in results {
                if let Some(r) = r.as_object_mut() {
                    r.remove("duration_ms");
                }
            }
        }
    }
}

fn render_text(report: &Report) -> String {
    let mut s = String::new();
    let sum = &report.summary;
    let _ = writeln!(s, "{} {} audit report", report.tool.name, report.tool.version);
    let _ = writeln!(s, "manifest {}", report.manifest_digest);
    let _ = writeln!(s, "generated {}", report.generated_at);
    let _ = writeln!(
        s,
        "{} checks: {} pass, {} fail, {} not assessable, {} skipped",
        sum.total, sum.pass, sum.fail, sum.not_assessable, sum.skipped
    );
    let _ = writeln!(s);
    if report.findings.is_empty() {
        let _ = writeln!(s, "No findings.");
    } else {
        let _ = writeln!(s, "Findings ({}):", report.findings.len());
        let mut by_component: BTreeMap<&str, Vec<&Finding>> = BTreeMap::new();
        for f in &report.findings {
            by_component.entry(&f.component_id).or_default().push(f);
        }
        for (component, findings) in by_component {
            let _ = writeln!(s, "\n  {component}");
            for f in findings {
                let _ = writeln!(s, "    [{}] {} {}", f.severity, f.check_id, f.title);
                if let Some(r) = report.result(f.check_id) {
                    for e in &r.evidence {
                        let _ = writeln!(s, "      - {e}");
                    }
                }
                let _ = writeln!(s, "      fix: {}", f.remediation);
            }
        }
    }
    let _ = writeln!(s, "\nResults:");
    for r in &report.results {
        let _ = writeln!(
            s,
            "  {:<8} {:<14} {}",
            r.check_id.to_string(),
            r.status.as_str(),
            r.check_id.info().title
        );
        if r.status != CheckStatus::Pass && r.status != CheckStatus::Fail {
            if let Some(e) = r.evidence.first() {
                let _ = writeln!(s, "  {:<8} {:<14} ({e})", "", "");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use utmsec_manifest::{ComponentSpec, OAuthClient};

    fn manifest(roles: &[ComponentRole], secret: bool) -> TargetManifest {
        TargetManifest {
            mode: Default::default(),
            required_log_fields: vec![],
            allowlist_sources: vec![],
            external_source: None,
            declared_grant_types: vec![],
            trust_anchor: None,
            oauth_client: OAuthClient {
                client_id: "c".into(),
                client_secret: secret.then(|| "s".into()),
                ..Default::default()
            },
            profiles: vec![],
            components: roles
                .iter()
                .enumerate()
                .map(|(i, r)| ComponentSpec::new(format!("c{i}"), *r))
                .collect(),
        }
    }

    #[test]
    fn conditional_checks() {
        let m = manifest(&[ComponentRole::OAuthServer, ComponentRole::HttpsGateway], false);
        let skipped: Vec<String> = CheckId::all()
            .filter(|id| skip_reason(&m, *id).is_some())
            .map(|id| id.to_string())
            .collect();
        assert_eq!(skipped, ["OAUTH-03", "OAUTH-04", "OAUTH-06", "JWT-10", "WEB-01"]);
        assert_eq!(applicable_checks(&m).len(), 22);

        let all = manifest(&[ComponentRole::OAuthServer, ComponentRole::WebAppPublic], true);
        assert_eq!(applicable_checks(&all).len(), 27);

        let admin_only = manifest(&[ComponentRole::OAuthServer, ComponentRole::WebAppAdmin], true);
        let a = applicable_checks(&admin_only);
        assert!(a.contains(&"WEB-01".parse().unwrap()));
        assert!(!a.contains(&"JWT-10".parse().unwrap()));
    }

    #[test]
    fn empty_report_renders() {
        let r = Report::assemble("sha256:00".into(), "2026-01-01T00:00:00Z".into(), vec![]);
        let json = render_report(&r, Format::Json);
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["results"], serde_json::json!([]));
        assert_eq!(parse_report(&json).unwrap(), r);
        assert!(String::from_utf8(render_report(&r, Format::Text)).unwrap().contains("No findings."));
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn text_groups_findings_by_component() {
        let id = |s: &str| s.parse::<CheckId>().unwrap();
        let results = vec![
            CheckResult::fail(id("JWT-04"), "oauth/private.pem: PEM private key served").on("oauth"),
            CheckResult::fail(id("DB-01"), "db/node-1: plaintext").on("db"),
            CheckResult::fail(id("OAUTH-05"), "password grant: enabled").on("oauth"),
            CheckResult::pass(id("NET-01"), "ok"),
        ];
        let r = Report::assemble("sha256:00".into(), "t".into(), results);
        let text = String::from_utf8(render_report(&r, Format::Text)).unwrap();
        let db = text.find("\n  db\n").unwrap();
        let oauth = text.find("\n  oauth\n").unwrap();
        assert!(db < oauth);
        for f in &r.findings {
            assert!(text.contains(&f.title));
        }
        assert_eq!(render_report(&r, Format::Text), render_report(&r.clone(), Format::Text));
    }

    #[test]
    fn volatile_fields_are_stripped() {
        let mut r = CheckResult::pass("NET-01".parse().unwrap(), "ok");
        r.duration_ms = 17;
        let report = Report::assemble("d".into(), "t".into(), vec![r]);
        let mut v = serde_json::to_value(&report).unwrap();
        strip_volatile(&mut v);
        assert!(v.get("generated_at").is_none());
        assert!(v["results"][0].get("duration_ms").is_none());
    }
}
