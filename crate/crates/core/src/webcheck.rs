//! Web-interface header baseline (WEB-01). Automated inspection covers only
//! the response headers; the interfaces still need manual testing.

use utmsec_manifest::{ComponentSpec, Endpoint};

use crate::engine::registry::{Area, CheckId};
use crate::engine::{AuditContext, CheckResult, CheckStatus};
use crate::http::{HttpRequest, HttpResponse};

const WEB01: CheckId = CheckId::new_unchecked(Area::Web, 1);

/// Baseline headers absent from a response.
pub fn missing_headers(resp: &HttpResponse) -> Vec<&'static str> {
    let mut out = Vec::new();
    let csp = resp.header("content-security-policy");
    if csp.is_none() {
        out.push("Content-Security-Policy");
    }
    if !resp
        .header("x-content-type-options")
        .is_some_and(|v| v.trim().eq_ignore_ascii_case("nosniff"))
    {
        out.push("X-Content-Type-Options: nosniff");
    }
    let framing = resp.header("x-frame-options").is_some()
        || csp.is_some_and(|c| c.to_ascii_lowercase().contains("frame-ancestors"));
    if !framing {
        out.push("X-Frame-Options or frame-ancestors");
    }
    out
}

fn page(c: &ComponentSpec) -> Option<&Endpoint> {
    c.endpoint("home")
        .or_else(|| c.endpoints.iter().find(|e| e.scheme.is_http() && e.path.as_deref().map_or(true, |p| p == "/")))
        .or_else(|| c.endpoints.iter().find(|e| e.scheme.is_http()))
}

pub async fn check_web(ctx: &AuditContext) -> CheckResult {
    let webs: Vec<&ComponentSpec> = ctx
        .manifest
        .components
        .iter()
        .filter(|c| c.role.is_web_app())
        .collect();
    if webs.is_empty() {
        return CheckResult::skipped(WEB01, "no web interface declared");
    }
    let mut verdicts = Vec::new();
    let mut evidence = Vec::new();
    let mut culprit = None;
    for c in webs {
        let Some(ep) = page(c) else {
            evidence.push(format!("{}: no HTTP endpoint declared", c.id));
            verdicts.push(CheckStatus::NotAssessable);
            continue;
        };
        match ctx.http_for(c).send(HttpRequest::get(ep.url())).await {
            Ok(resp) => {
                let missing = missing_headers(&resp);
                if missing.is_empty() {
                    evidence.push(format!("{}: security header baseline present", c.id));
                    verdicts.push(CheckStatus::Pass);
                } else {
                    evidence.push(format!("{}: missing {}", c.id, missing.join(", ")));
                    verdicts.push(CheckStatus::Fail);
                    culprit.get_or_insert_with(|| c.id.clone());
                }
            }
            Err(e) => {
                evidence.push(format!("{}: {e}", c.id));
                verdicts.push(CheckStatus::NotAssessable);
            }
        }
    }
    evidence.push("header baseline only; each web interface still requires manual testing".into());
    let r = CheckResult::from_verdicts(WEB01, verdicts, evidence);
    match culprit {
        Some(c) => r.on(c),
        None => r,
    }
}
