use std::collections::BTreeSet;

use url::Url;
use utmsec_manifest::ComponentRole;

use super::{authorize_endpoint, estimate, TokenOutcome, TokenRequest};
use crate::engine::registry::{Area, CheckId};
use crate::engine::{timed, AuditContext, CheckResult, CheckStatus, Selection};
use crate::http::HttpRequest;
use crate::webflow;

const fn id(n: u8) -> CheckId {
    CheckId::new_unchecked(Area::Oauth, n)
}

const MIN_SECRET_BITS: f64 = 256.0;

/// Scopes granted beyond the entitlement.
pub fn polp_violation(granted: &[String], entitled: &[String]) -> BTreeSet<String> {
    let entitled: BTreeSet<&String> = entitled.iter().collect();
    granted
        .iter()
        .filter(|s| !entitled.contains(s))
        .cloned()
        .collect()
}

pub async fn check_oauth(ctx: &AuditContext, sel: &Selection) -> Vec<CheckResult> {
    let server = &ctx.manifest.oauth_server().id;
    let mut out = Vec::new();
    if sel.contains(id(1)) {
        out.push(timed(oauth01(ctx)).await.on(server));
    }
    if sel.contains(id(2)) {
        out.push(timed(oauth02(ctx)).await.on(server));
    }
    if sel.contains(id(3)) {
        out.push(timed(async { oauth03(ctx) }).await.on(server));
    }
    if sel.contains(id(4)) {
        out.push(timed(async { oauth04(ctx) }).await.on(server));
    }
    if sel.contains(id(5)) {
        out.push(timed(oauth05(ctx)).await.on(server));
    }
    if sel.contains(id(6)) {
        let web = ctx.manifest.by_role(ComponentRole::WebAppPublic).next();
        let r = match web {
            Some(w) => timed(oauth06(ctx, w)).await.on(&w.id),
            None => CheckResult::skipped(id(6), "no web interface declared"),
        };
        out.push(r);
    }
    out
}

async fn oauth01(ctx: &AuditContext) -> CheckResult {
    let client = &ctx.manifest.oauth_client;
    if !client.has_certificate() {
        return CheckResult::not_assessable(
            id(1),
            "no client certificate declared; certificate binding cannot be exercised",
        );
    }
    let mut without = TokenRequest::client_credentials(client);
    without.present_certificate = false;
    match ctx.token_outcome(&without).await {
        Ok(TokenOutcome::Issued(_)) => CheckResult::fail(
            id(1),
            "client_credentials token issued without presenting the registered client certificate",
        ),
        Ok(TokenOutcome::Rejected(r)) => {
            let mut res = CheckResult::pass(
                id(1),
                format!("issuance without client certificate rejected: {r}"),
            );
            match ctx.token_outcome(&TokenRequest::client_credentials(client)).await {
                Ok(TokenOutcome::Issued(t)) => {
                    let bound = t
                        .token
                        .claims
                        .get("cnf")
                        .and_then(|c| c.get("x5t#S256"))
                        .is_some();
                    res = res.with(format!(
                        "issuance with client certificate succeeded; cnf x5t#S256 claim {}",
                        if bound { "present" } else { "absent" }
                    ));
                }
                Ok(TokenOutcome::Rejected(r)) => {
                    res = res.with(format!("issuance with client certificate also rejected: {r}"));
                }
                Err(e) => res = res.with(format!("issuance with client certificate failed: {e}")),
            }
            res
        }
        Err(e) => CheckResult::not_assessable(id(1), format!("token endpoint: {e}")),
    }
}

async fn oauth02(ctx: &AuditContext) -> CheckResult {
    let client = &ctx.manifest.oauth_client;
    let mut evidence = Vec::new();
    let mut verdicts = Vec::new();
    let mut assessed = false;
    for profile in &ctx.manifest.profiles {
        if profile.client_id != client.client_id {
            evidence.push(format!(
                "profile {}: no credentials held for this client, not assessed",
                profile.client_id
            ));
            continue;
        }
        // No scope parameter: the server grants whatever the client is registered for.
        let req = TokenRequest::client_credentials(client);
        match ctx.token_outcome(&req).await {
            Ok(TokenOutcome::Issued(t)) => {
                assessed = true;
                let extra = polp_violation(&t.granted_scope, &profile.entitled_scopes);
                let mut granted = t.granted_scope.clone();
                granted.sort();
                if extra.is_empty() {
                    evidence.push(format!(
                        "profile {}: granted [{}] within entitlement",
                        profile.client_id,
                        granted.join(" ")
                    ));
                    verdicts.push(CheckStatus::Pass);
                } else {
                    evidence.push(format!(
                        "profile {}: granted scopes beyond entitlement: {}",
                        profile.client_id,
                        extra.into_iter().collect::<Vec<_>>().join(" ")
                    ));
                    verdicts.push(CheckStatus::Fail);
                }
            }
            Ok(TokenOutcome::Rejected(r)) => {
                evidence.push(format!("profile {}: token request rejected: {r}", profile.client_id));
                verdicts.push(CheckStatus::NotAssessable);
            }
            Err(e) => {
                evidence.push(format!("profile {}: {e}", profile.client_id));
                verdicts.push(CheckStatus::NotAssessable);
            }
        }
    }
    if !assessed && !verdicts.contains(&CheckStatus::NotAssessable) {
        evidence.push(format!("no onboarding profile declared for client {}", client.client_id));
        verdicts.push(CheckStatus::NotAssessable);
    }
    CheckResult::from_verdicts(id(2), verdicts, evidence)
}

fn oauth03(ctx: &AuditContext) -> CheckResult {
    let Some(secret) = &ctx.manifest.oauth_client.client_secret else {
        return CheckResult::skipped(id(3), "no client_secret in use");
    };
    let e = estimate(secret);
    let detail = format!(
        "structural estimate: {} chars x log2({}) = {:.2} bits",
        e.length, e.charset_size, e.estimated_bits
    );
    if e.estimated_bits < MIN_SECRET_BITS {
        CheckResult::fail(id(3), format!("{detail} < {MIN_SECRET_BITS}"))
    } else {
        CheckResult::pass(id(3), format!("{detail} >= {MIN_SECRET_BITS}"))
    }
}

fn oauth04(ctx: &AuditContext) -> CheckResult {
    let Some(secret) = &ctx.manifest.oauth_client.client_secret else {
        return CheckResult::skipped(id(4), "no client_secret in use");
    };
    if !ctx.manifest.is_introspective() {
        return CheckResult::not_assessable(id(4), "remote mode: credential store not readable");
    }
    let server = ctx.manifest.oauth_server();
    let Some(path) = ctx.manifest.readable_storage(server) else {
        return CheckResult::not_assessable(id(4), format!("{} declares no storage_path", server.id));
    };
    match std::fs::read(path) {
        Err(e) => CheckResult::not_assessable(id(4), format!("credential store unreadable: {e}")),
        Ok(bytes) => {
            let found = !secret.is_empty()
                && bytes
                    .windows(secret.len())
                    .any(|w| w == secret.as_bytes());
            if found {
                CheckResult::fail(id(4), "client_secret found verbatim in the credential store")
            } else {
                CheckResult::pass(id(4), "client_secret not present in plaintext in the credential store")
            }
        }
    }
}

/// Whether an error code from the token endpoint means the grant is off.
fn grant_disabled(error: &str) -> bool {
    matches!(error, "unsupported_grant_type" | "unauthorized_client")
}

async fn oauth05(ctx: &AuditContext) -> CheckResult {
    let declared: BTreeSet<&str> = ctx
        .manifest
        .declared_grant_types
        .iter()
        .map(String::as_str)
        .collect();
    let mut evidence = vec![format!(
        "declared grant types: {}",
        declared.iter().copied().collect::<Vec<_>>().join(", ")
    )];
    let mut verdicts = Vec::new();

    if !declared.contains("password") {
        let mut req = TokenRequest::client_credentials(&ctx.manifest.oauth_client);
        req.grant_type = "password".into();
        req.extra = vec![
            ("username".into(), "utmsec-probe".into()),
            ("password".into(), "utmsec-probe-not-a-password".into()),
        ];
        match ctx.token_outcome(&req).await {
            Ok(TokenOutcome::Rejected(r)) if grant_disabled(&r.error) => {
                evidence.push(format!("password grant: disabled ({})", r.error));
                verdicts.push(CheckStatus::Pass);
            }
            Ok(TokenOutcome::Rejected(r)) => {
                evidence.push(format!(
                    "password grant: enabled (request processed, answered {})",
                    r.error
                ));
                verdicts.push(CheckStatus::Fail);
            }
            Ok(TokenOutcome::Issued(_)) => {
                evidence.push("password grant: enabled (token issued)".into());
                verdicts.push(CheckStatus::Fail);
            }
            Err(e) => {
                evidence.push(format!("password grant: {e}"));
                verdicts.push(CheckStatus::NotAssessable);
            }
        }
    }

    let server = ctx.manifest.oauth_server();
    match authorize_endpoint(server) {
        None => evidence.push("no authorize endpoint declared; front-channel grants not probed".into()),
        Some(authz) => {
            // Use the web application's registered client when there is one.
            let web = ctx.manifest.by_role(ComponentRole::WebAppPublic).next();
            let discovered = match web {
                Some(w) => webflow::start_login(ctx, w).await.ok(),
                None => None,
            };
            let client_id = discovered
                .as_ref()
                .and_then(|d| d.client_id.clone())
                .unwrap_or_else(|| ctx.manifest.oauth_client.client_id.clone());
            let redirect_uri = discovered.as_ref().and_then(|d| d.redirect_uri.clone());
            let mut probes: Vec<(&str, &str)> = Vec::new();
            if !declared.contains("implicit") {
                probes.push(("implicit", "token"));
            }
            probes.push(("authorization_code without PKCE", "code"));
            for (label, response_type) in probes {
                let mut url = Url::parse(&authz.url()).expect("endpoint URL parses");
                {
                    let mut q = url.query_pairs_mut();
                    q.append_pair("response_type", response_type);
                    q.append_pair("client_id", &client_id);
                    if let Some(r) = &redirect_uri {
                        q.append_pair("redirect_uri", r);
                    }
                    q.append_pair("state", "utmsec-grant-probe");
                }
                match ctx.http_for(server).send(HttpRequest::get(url.as_str())).await {
                    Err(e) => {
                        evidence.push(format!("{label}: {e}"));
                        verdicts.push(CheckStatus::NotAssessable);
                    }
                    Ok(resp) => {
                        let location = resp.header("location").unwrap_or("");
                        let issued = (300..400).contains(&resp.status)
                            && (location.contains("access_token=") || location.contains("code="));
                        if issued {
                            evidence.push(format!("{label}: enabled (credential returned in redirect)"));
                            verdicts.push(CheckStatus::Fail);
                        } else {
                            let err = Url::parse(location)
                                .ok()
                                .and_then(|u| webflow::query_param(&u, "error"))
                                .or_else(|| {
                                    resp.json()
                                        .and_then(|b| b.get("error").and_then(|e| e.as_str()).map(str::to_string))
                                })
                                .unwrap_or_else(|| format!("http_{}", resp.status));
                            evidence.push(format!("{label}: refused ({err})"));
                            verdicts.push(CheckStatus::Pass);
                        }
                    }
                }
            }
        }
    }
    CheckResult::from_verdicts(id(5), verdicts, evidence)
}

async fn oauth06(ctx: &AuditContext, web: &utmsec_manifest::ComponentSpec) -> CheckResult {
    let start = match webflow::start_login(ctx, web).await {
        Ok(s) => s,
        Err(e) => return CheckResult::not_assessable(id(6), e),
    };
    let mut res = CheckResult::new(id(6), CheckStatus::Pass);
    match &start.state {
        None => {
            return CheckResult::fail(
                id(6),
                format!("{}: authorization request carries no state parameter", web.id),
            )
        }
        Some(_) => res = res.with(format!("{}: authorization request carries a state parameter", web.id)),
    }
    let cb = match webflow::authorize(ctx, &start).await {
        Ok(u) => u,
        Err(e) => return CheckResult::not_assessable(id(6), e),
    };
    let tampered = webflow::with_state(&cb, Some("utmsec-forged-state"));
    match webflow::callback(ctx, web, &tampered, &start.cookies).await {
        Err(e) => CheckResult::not_assessable(id(6), e),
        Ok(resp) => {
            let session = webflow::set_cookies(&resp)
                .iter()
                .any(|c| !c.value.is_empty());
            if resp.status >= 400 && !session {
                res.with(format!("callback with forged state rejected ({})", resp.status))
            } else {
                CheckResult::fail(
                    id(6),
                    format!(
                        "{}: callback with forged state accepted ({}{})",
                        web.id,
                        resp.status,
                        if session { ", session cookie set" } else { "" }
                    ),
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn polp_is_set_difference() {
        assert!(polp_violation(&v(&["a", "b"]), &v(&["b", "a", "c"])).is_empty());
        let extra = polp_violation(&v(&["b", "admin", "a", "admin"]), &v(&["a", "b"]));
        assert_eq!(extra.into_iter().collect::<Vec<_>>(), ["admin"]);
    }

    #[test]
    fn grant_errors() {
        assert!(grant_disabled("unsupported_grant_type"));
        assert!(grant_disabled("unauthorized_client"));
        assert!(!grant_disabled("invalid_grant"));
        assert!(!grant_disabled("invalid_request"));
    }
}
