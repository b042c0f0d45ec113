//! Differential SQL-injection probing of gateway endpoints (DB-02).

mod corpus;
mod similarity;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use utmsec_manifest::{ComponentRole, Endpoint};

pub use corpus::{Corpus, CorpusError, Payload, PayloadClass, DEFAULT_CORPUS};
pub use similarity::{
    boolean_hit, distance, new_error_signatures, ResponseSummary, ERROR_SIGNATURES, THRESHOLD,
};

use crate::engine::registry::{Area, CheckId};
use crate::engine::{AuditContext, CheckResult, CheckStatus};
use crate::http::{HttpClient, HttpRequest};

const DB02: CheckId = CheckId::new_unchecked(Area::Db, 2);

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub time_based: bool,
    pub sleep_s: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { time_based: false, sleep_s: 3 }
    }
}

/// What one probe request showed.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionProbe {
    pub endpoint: String,
    pub parameter: String,
    pub payload: String,
    pub class: PayloadClass,
    pub baseline: ResponseSummary,
    pub probe: ResponseSummary,
}

fn url_with(endpoint: &Endpoint, params: &BTreeMap<String, String>, target: &str, value: &str) -> String {
    let mut url = url::Url::parse(&endpoint.url()).expect("endpoint URL parses");
    {
        let mut q = url.query_pairs_mut();
        for (k, v) in params {
            q.append_pair(k, if k == target { value } else { v });
        }
    }
    url.to_string()
}

async fn fetch(
    http: &HttpClient,
    url: String,
    token: Option<&str>,
) -> Result<(ResponseSummary, Duration), String> {
    let mut req = HttpRequest::get(url);
    if let Some(t) = token {
        req = req.bearer(t);
    }
    let start = Instant::now();
    let resp = http.send(req).await.map_err(|e| e.to_string())?;
    Ok((ResponseSummary::of(resp.status, &resp.body), start.elapsed()))
}

#[derive(Debug, Default)]
struct ParamFindings {
    error: Vec<(String, Vec<&'static str>)>,
    boolean: Vec<String>,
    time: Vec<String>,
}

/// Runs the corpus against every declared parameter of one endpoint.
/// Payloads go out serially so the baseline stays comparable.
pub async fn scan_endpoint(
    http: &HttpClient,
    endpoint: &Endpoint,
    corpus: &Corpus,
    token: Option<&str>,
    opts: &ScanOptions,
) -> CheckResult {
    let params = &endpoint.params;
    let label = endpoint.label();
    if params.is_empty() {
        return CheckResult::pass(DB02, format!("{label}: no injectable parameters declared"));
    }
    let mut evidence = Vec::new();
    let mut failed = false;
    let mut sent = 0usize;
    for (name, benign) in params {
        let (baseline, base_elapsed) = match fetch(http, url_with(endpoint, params, name, benign), token).await {
            Ok(b) => b,
            Err(e) => return CheckResult::not_assessable(DB02, format!("{label}: baseline request failed: {e}")),
        };
        if !(200..300).contains(&baseline.status) {
            return CheckResult::not_assessable(
                DB02,
                format!("{label}: baseline request answered {}", baseline.status),
            );
        }
        let mut found = ParamFindings::default();
        for p in corpus.payloads.iter() {
            match p.class {
                PayloadClass::ErrorBased => {
                    let value = p.render(benign, None, 0);
                    let (probe, _) = match fetch(http, url_with(endpoint, params, name, &value), token).await {
                        Ok(r) => r,
                        Err(e) => {
                            return CheckResult::not_assessable(DB02, format!("{label}: probe failed: {e}"))
                        }
                    };
                    sent += 1;
                    let sigs = new_error_signatures(&baseline, &probe);
                    if !sigs.is_empty() {
                        found.error.push((value, sigs));
                    }
                }
                PayloadClass::Boolean => {
                    let tv = p.render(benign, Some(true), 0);
                    let fv = p.render(benign, Some(false), 0);
                    let t = fetch(http, url_with(endpoint, params, name, &tv), token).await;
                    let f = fetch(http, url_with(endpoint, params, name, &fv), token).await;
                    let ((t, _), (f, _)) = match (t, f) {
                        (Ok(t), Ok(f)) => (t, f),
                        (Err(e), _) | (_, Err(e)) => {
                            return CheckResult::not_assessable(DB02, format!("{label}: probe failed: {e}"))
                        }
                    };
                    sent += 2;
                    if boolean_hit(&baseline, &t, &f) {
                        found.boolean.push(format!("{tv} / {fv}"));
                    }
                }
                PayloadClass::TimeBased if opts.time_based => {
                    let value = p.render(benign, None, opts.sleep_s);
                    sent += 1;
                    if let Ok((_, elapsed)) = fetch(http, url_with(endpoint, params, name, &value), token).await {
                        let delay = Duration::from_millis(opts.sleep_s * 800);
                        if elapsed >= base_elapsed + delay {
                            found.time.push(value);
                        }
                    }
                }
                PayloadClass::TimeBased => {}
            }
        }
        if let Some((payload, sigs)) = found.error.first() {
            failed = true;
            evidence.push(format!(
                "{label} param {name}: error-based payload {payload:?} surfaced {}",
                sigs.join(", ")
            ));
            if found.error.len() > 1 {
                evidence.push(format!(
                    "{label} param {name}: {} further error-based payloads triggered",
                    found.error.len() - 1
                ));
            }
        }
        if let Some(pair) = found.boolean.first() {
            failed = true;
            evidence.push(format!(
                "{label} param {name}: boolean pair {pair:?} true~baseline, false differs"
            ));
        }
        if let Some(payload) = found.time.first() {
            failed = true;
            evidence.push(format!("{label} param {name}: time-based payload {payload:?} delayed the response"));
        }
    }
    if !failed {
        let names: Vec<&str> = params.keys().map(String::as_str).collect();
        evidence.push(format!(
            "{label}: {sent} probes over params [{}], no injection signal",
            names.join(", ")
        ));
    }
    let mut r = CheckResult::new(DB02, if failed { CheckStatus::Fail } else { CheckStatus::Pass });
    r.evidence = evidence;
    r
}

pub async fn check_sqli(ctx: &AuditContext) -> CheckResult {
    let gateways: Vec<_> = ctx.manifest.by_role(ComponentRole::HttpsGateway).collect();
    if gateways.is_empty() {
        return CheckResult::skipped(DB02, "no HTTPS gateway declared");
    }
    let corpus = match &ctx.config.corpus_path {
        Some(p) => match Corpus::load(p) {
            Ok(c) => c,
            Err(e) => return CheckResult::not_assessable(DB02, e.to_string()),
        },
        None => Corpus::default_corpus(),
    };
    let opts = ScanOptions {
        time_based: ctx.config.enable_time_based,
        sleep_s: ctx.config.time_based_delay_s,
    };
    let mut verdicts = Vec::new();
    let mut evidence = Vec::new();
    let mut culprit = None;
    for gw in gateways {
        let targets: Vec<&Endpoint> = gw.endpoints.iter().filter(|e| !e.params.is_empty()).collect();
        if targets.is_empty() {
            evidence.push(format!("{}: no injectable parameters declared", gw.id));
            verdicts.push(CheckStatus::Pass);
            continue;
        }
        let timeout = ctx.config.probe_timeout
            + if opts.time_based { Duration::from_secs(opts.sleep_s * 2) } else { Duration::ZERO };
        let http = ctx.http_for_with_timeout(gw, timeout);
        for ep in targets {
            let token = match &ep.required_scope {
                Some(scope) => match ctx.token_for(gw, scope).await {
                    Ok(t) => Some(t.compact().to_string()),
                    Err(e) => {
                        evidence.push(format!("{}/{}: no authorized token: {e}", gw.id, ep.label()));
                        verdicts.push(CheckStatus::NotAssessable);
                        continue;
                    }
                },
                None => None,
            };
            let r = scan_endpoint(&http, ep, &corpus, token.as_deref(), &opts).await;
            if r.is_fail() {
                culprit.get_or_insert_with(|| gw.id.clone());
            }
            verdicts.push(r.status);
            evidence.extend(r.evidence.into_iter().map(|e| format!("{}/{e}", gw.id)));
        }
    }
    if corpus.excluded > 0 {
        evidence.push(format!("{} data-changing payloads excluded from the corpus", corpus.excluded));
    }
    let r = CheckResult::from_verdicts(DB02, verdicts, evidence);
    match culprit {
        Some(c) => r.on(c),
        None => r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn vacuous_params() {
        let ep = Endpoint::parse_url("https://127.0.0.1:9/v1/isa").unwrap();
        let http = HttpClient::new(Duration::from_millis(50));
        let r = scan_endpoint(&http, &ep, &Corpus::default_corpus(), None, &ScanOptions::default()).await;
        assert_eq!(r.status, CheckStatus::Pass);
        assert!(r.evidence[0].ends_with("no injectable parameters declared"));
    }

    #[test]
    fn url_substitutes_only_target() {
        let mut ep = Endpoint::parse_url("https://h:1/q").unwrap();
        ep.params.insert("a".into(), "1".into());
        ep.params.insert("b".into(), "2".into());
        assert_eq!(url_with(&ep, &ep.params, "b", "x' OR"), "https://h:1/q?a=1&b=x%27+OR");
    }
}
