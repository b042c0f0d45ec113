//! Log repository audit (LOG-01..04) and hash-chain verification.
//!
//! Wire API of a log repository:
//!
//! | request | answer |
//! |---|---|
//! | `GET /logs` | every record from genesis |
//! | `GET /logs?tail=N` | the last N records with the link preceding them as `anchor` |
//! | `POST /logs {"fields": {..}, "link": hex?}` | `201 {"seq", "link"}`; a supplied link must match |
//! | `PUT /logs/{seq}`, `DELETE /logs/{seq}` | must be refused |

mod chain;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use utmsec_manifest::{ComponentRole, ComponentSpec, Endpoint, Scheme};

pub use chain::{canonical_bytes, link_for, verify_chain, LogChain, LogRecord, Verification, GENESIS};

use crate::engine::registry::{Area, CheckId};
use crate::engine::{timed, AuditContext, CheckResult, CheckStatus, Selection};
use crate::http::{HttpClient, HttpError, HttpRequest, HttpResponse};

const fn id(n: u8) -> CheckId {
    CheckId::new_unchecked(Area::Log, n)
}

/// Field that tags records written by the auditor itself.
pub const MARKER_FIELD: &str = "audit_marker";
pub const SACRIFICIAL_MARKER: &str = "utmsec-sacrificial";
const FORGED_MARKER: &str = "utmsec-forged-link";

/// One page as served by `GET /logs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogPage {
    pub anchor: String,
    pub records: Vec<LogRecord>,
}

impl LogPage {
    pub fn into_chain(self) -> Result<LogChain, String> {
        let anchor = hex::decode(&self.anchor)
            .ok()
            .and_then(|b| <[u8; 32]>::try_from(b.as_slice()).ok())
            .ok_or("page anchor is not a 32-byte hex digest")?;
        Ok(LogChain { anchor, records: self.records })
    }

    pub fn from_chain(chain: &LogChain) -> Self {
        LogPage { anchor: hex::encode(chain.anchor), records: chain.records.clone() }
    }
}

/// Required fields missing from any of `records`, sorted.
pub fn missing_fields(records: &[LogRecord], required: &[String]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for r in records {
        for f in required {
            if r.fields.get(f).map_or(true, |v| v.is_empty()) {
                out.insert(f.clone());
            }
        }
    }
    out
}

fn repo_endpoint(c: &ComponentSpec) -> Option<&Endpoint> {
    c.endpoint("logs")
        .or_else(|| c.endpoints.iter().find(|e| e.scheme.is_http()))
}

fn logs_url(ep: &Endpoint, suffix: &str) -> String {
    format!("{}/logs{suffix}", ep.origin())
}

fn is_denied(status: u16) -> bool {
    status == 401 || status == 403
}

/// Fields for a record the auditor writes.
fn audit_fields(ctx: &AuditContext, marker: &str) -> BTreeMap<String, String> {
    let actor = ctx.manifest.oauth_client.client_id.clone();
    let mut f: BTreeMap<String, String> = ctx
        .manifest
        .required_log_fields
        .iter()
        .map(|k| (k.clone(), String::new()))
        .collect();
    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    for (k, v) in f.iter_mut() {
        *v = match k.as_str() {
            "timestamp" => now.clone(),
            "actor_id" | "token_subject" => actor.clone(),
            "action" => "audit-probe".into(),
            "resource" => "logs".into(),
            "outcome" => "probe".into(),
            _ => "utmsec".into(),
        };
    }
    f.insert(MARKER_FIELD.into(), marker.into());
    f
}

struct Repo<'a> {
    ctx: &'a AuditContext,
    component: &'a ComponentSpec,
    endpoint: &'a Endpoint,
    http: HttpClient,
}

impl<'a> Repo<'a> {
    async fn token(&self, scope: &str) -> Result<String, String> {
        self.ctx
            .token_for(self.component, scope)
            .await
            .map(|t| t.compact().to_string())
    }

    async fn send(&self, req: HttpRequest) -> Result<HttpResponse, HttpError> {
        self.http.send(req).await
    }

    async fn read(&self, suffix: &str) -> Result<LogChain, String> {
        let token = self.token("logs.read").await.map_err(|e| format!("no read token: {e}"))?;
        let resp = self
            .send(HttpRequest::get(logs_url(self.endpoint, suffix)).bearer(&token))
            .await
            .map_err(|e| format!("GET /logs{suffix}: {e}"))?;
        if !resp.is_success() {
            return Err(format!("GET /logs{suffix} answered {}", resp.status));
        }
        let page: LogPage = serde_json::from_slice(&resp.body)
            .map_err(|e| format!("GET /logs{suffix}: unexpected body: {e}"))?;
        page.into_chain()
    }

    async fn append(&self, fields: &BTreeMap<String, String>, link: Option<&str>) -> Result<HttpResponse, String> {
        let token = self.token("logs.write").await.map_err(|e| format!("no write token: {e}"))?;
        let mut body = serde_json::json!({ "fields": fields });
        if let Some(l) = link {
            body["link"] = l.into();
        }
        self.send(HttpRequest::json("POST", logs_url(self.endpoint, ""), &body).bearer(&token))
            .await
            .map_err(|e| format!("POST /logs: {e}"))
    }
}

pub async fn check_logs(ctx: &AuditContext, sel: &Selection) -> Vec<CheckResult> {
    let ids: Vec<CheckId> = (1..=4).map(id).filter(|i| sel.contains(*i)).collect();
    let Some(component) = ctx.manifest.by_role(ComponentRole::LogRepository).next() else {
        return ids
            .into_iter()
            .map(|i| CheckResult::skipped(i, "no log repository declared"))
            .collect();
    };
    let Some(endpoint) = repo_endpoint(component) else {
        return ids
            .into_iter()
            .map(|i| CheckResult::not_assessable(i, format!("{} declares no HTTP endpoint", component.id)))
            .collect();
    };
    let repo = Repo { ctx, component, endpoint, http: ctx.http_for(component) };
    // Write-probing goes last so the reads see the repository untouched.
    let mut out = Vec::new();
    if sel.contains(id(1)) {
        out.push(timed(log01(&repo)).await);
    }
    if sel.contains(id(3)) {
        out.push(timed(log03(&repo)).await);
    }
    if sel.contains(id(4)) {
        out.push(timed(log04(&repo)).await);
    }
    if sel.contains(id(2)) {
        out.push(timed(log02(&repo)).await);
    }
    out.into_iter().map(|r| r.on(&component.id)).collect()
}

async fn log01(repo: &Repo<'_>) -> CheckResult {
    let required = &repo.ctx.manifest.required_log_fields;
    let suffix = match repo.ctx.config.log_sample {
        Some(n) => format!("?tail={n}"),
        None => String::new(),
    };
    let scope = match repo.ctx.config.log_sample {
        Some(n) => format!("last {n} records"),
        None => "all records".into(),
    };
    let chain = match repo.read(&suffix).await {
        Ok(c) => c,
        Err(e) => return CheckResult::not_assessable(id(1), e),
    };
    if chain.records.is_empty() {
        return CheckResult::not_assessable(id(1), "repository holds no records to sample");
    }
    let missing = missing_fields(&chain.records, required);
    if missing.is_empty() {
        CheckResult::pass(
            id(1),
            format!("{scope} carry every required field: {}", required.join(", ")),
        )
    } else {
        CheckResult::fail(
            id(1),
            format!(
                "{scope}: records lack required fields: {}",
                missing.into_iter().collect::<Vec<_>>().join(", ")
            ),
        )
    }
}

async fn log03(repo: &Repo<'_>) -> CheckResult {
    let mut evidence = Vec::new();
    let mut verdicts = Vec::new();
    match repo.read("").await {
        Ok(chain) => match verify_chain(&chain) {
            Verification::Ok => {
                evidence.push("stored chain verifies from genesis".into());
                verdicts.push(CheckStatus::Pass);
            }
            Verification::Broken { first_broken_seq } => {
                evidence.push(format!("stored chain breaks at seq {first_broken_seq}"));
                verdicts.push(CheckStatus::Fail);
            }
        },
        Err(e) => {
            evidence.push(e);
            verdicts.push(CheckStatus::NotAssessable);
        }
    }
    let forged = hex::encode([0xab; 32]);
    match repo.append(&audit_fields(repo.ctx, FORGED_MARKER), Some(&forged)).await {
        Ok(resp) if resp.is_success() => {
            evidence.push(format!("append with forged link accepted ({})", resp.status));
            verdicts.push(CheckStatus::Fail);
        }
        Ok(resp) if is_denied(resp.status) => {
            evidence.push(format!("append not authorized ({}); forged link untested", resp.status));
            verdicts.push(CheckStatus::NotAssessable);
        }
        Ok(resp) => {
            evidence.push(format!("append with forged link refused ({})", resp.status));
            verdicts.push(CheckStatus::Pass);
        }
        Err(e) => {
            evidence.push(e);
            verdicts.push(CheckStatus::NotAssessable);
        }
    }
    CheckResult::from_verdicts(id(3), verdicts, evidence)
}

async fn log04(repo: &Repo<'_>) -> CheckResult {
    let mut evidence = Vec::new();
    let mut verdicts = Vec::new();
    let url = logs_url(repo.endpoint, "?tail=1");
    match repo.send(HttpRequest::get(&url)).await {
        Ok(resp) if resp.is_success() => {
            evidence.push(format!("anonymous read answered {}", resp.status));
            verdicts.push(CheckStatus::Fail);
        }
        Ok(resp) => {
            evidence.push(format!("anonymous read refused ({})", resp.status));
            verdicts.push(CheckStatus::Pass);
        }
        Err(e) => {
            evidence.push(format!("anonymous read: {e}"));
            verdicts.push(CheckStatus::NotAssessable);
        }
    }
    let token = repo.token("logs.read").await.ok();
    let mut req = HttpRequest::get(&url);
    if let Some(t) = &token {
        req = req.bearer(t);
    }
    match repo.ctx.http_external().send(req).await {
        Ok(resp) if resp.is_success() => {
            evidence.push(format!("read from external vantage answered {}", resp.status));
            verdicts.push(CheckStatus::Fail);
        }
        Ok(resp) => {
            evidence.push(format!("read from external vantage refused ({})", resp.status));
            verdicts.push(CheckStatus::Pass);
        }
        Err(e) if e.is_unreachable() => {
            evidence.push("repository not reachable from external vantage".into());
            verdicts.push(CheckStatus::Pass);
        }
        Err(e) => {
            evidence.push(format!("read from external vantage: {e}"));
            verdicts.push(CheckStatus::NotAssessable);
        }
    }
    if repo.endpoint.scheme == Scheme::Http {
        evidence.push("repository served over plaintext HTTP".into());
    }
    CheckResult::from_verdicts(id(4), verdicts, evidence)
}

async fn log02(repo: &Repo<'_>) -> CheckResult {
    let fields = audit_fields(repo.ctx, SACRIFICIAL_MARKER);
    let resp = match repo.append(&fields, None).await {
        Ok(r) => r,
        Err(e) => return CheckResult::not_assessable(id(2), e),
    };
    let seq = match (resp.is_success(), resp.json().and_then(|j| j.get("seq")?.as_u64())) {
        (true, Some(s)) => s,
        _ => {
            return CheckResult::not_assessable(
                id(2),
                format!("could not create sacrificial record ({})", resp.status),
            )
        }
    };
    let mut evidence = vec![format!(
        "sacrificial record created with {MARKER_FIELD}={SACRIFICIAL_MARKER}"
    )];
    let mut verdicts = Vec::new();
    let token = match repo.token("logs.write").await {
        Ok(t) => t,
        Err(e) => return CheckResult::not_assessable(id(2), format!("no write token: {e}")),
    };
    let url = logs_url(repo.endpoint, &format!("/{seq}"));
    let mut altered = fields.clone();
    altered.insert("outcome".into(), "overwritten".into());
    let attempts = [
        ("overwrite", HttpRequest::json("PUT", &url, &serde_json::json!({ "fields": altered }))),
        ("delete", HttpRequest { method: "DELETE".into(), ..HttpRequest::get(&url) }),
    ];
    for (what, req) in attempts {
        match repo.send(req.bearer(&token)).await {
            Ok(r) if r.is_success() => {
                evidence.push(format!("{what} of sacrificial record accepted ({})", r.status));
                verdicts.push(CheckStatus::Fail);
            }
            Ok(r) => {
                evidence.push(format!("{what} of sacrificial record refused ({})", r.status));
                verdicts.push(CheckStatus::Pass);
            }
            Err(e) => {
                evidence.push(format!("{what}: {e}"));
                verdicts.push(CheckStatus::NotAssessable);
            }
        }
    }
    CheckResult::from_verdicts(id(2), verdicts, evidence)
}
