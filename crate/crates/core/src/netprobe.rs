//! Visibility-zone verification (NET-01, NET-02).

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use utmsec_manifest::{Endpoint, TargetManifest, Zone};

use crate::engine::registry::{Area, CheckId};
use crate::engine::{AuditContext, CheckResult, CheckStatus, Selection};
use crate::net::{self, ConnectError, SourceBinding};

const NET01: CheckId = CheckId::new_unchecked(Area::Net, 1);
const NET02: CheckId = CheckId::new_unchecked(Area::Net, 2);

/// How long a fresh connection is watched for an immediate reset.
const SETTLE: Duration = Duration::from_millis(150);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    ConnectOk,
    ConnectRefused,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachabilityObservation {
    pub component_id: String,
    pub endpoint: String,
    pub source_label: String,
    pub outcome: Outcome,
    pub elapsed_ms: u64,
}

impl ReachabilityObservation {
    pub fn reachable(&self) -> bool {
        self.outcome == Outcome::ConnectOk
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("local socket error: {0}")]
    Local(ConnectError),
}

/// Opens a TCP connection from `source` and immediately drops it. A
/// connection that is accepted and then reset within a short settle
/// window counts as refused: that is how address-filtering listeners
/// turn away disallowed peers.
pub async fn probe_reachability(
    endpoint: &Endpoint,
    source: SourceBinding,
    timeout: Duration,
) -> Result<(Outcome, u64), ProbeError> {
    let start = Instant::now();
    let elapsed = |s: Instant| s.elapsed().as_millis() as u64;
    let target = match net::resolve(&endpoint.host, endpoint.port).await {
        Ok(a) => a,
        Err(e) => return Err(ProbeError::Local(e)),
    };
    let outcome = match net::connect_from(target, source.bind_addr(), timeout).await {
        Ok(stream) => {
            if net::reset_after_accept(&stream, SETTLE).await {
                Outcome::ConnectRefused
            } else {
                Outcome::ConnectOk
            }
        }
        Err(ConnectError::Timeout) => {
            // Keep the invariant elapsed >= timeout for timeouts.
            let spent = start.elapsed();
            if spent < timeout {
                tokio::time::sleep(timeout - spent).await;
            }
            Outcome::Timeout
        }
        Err(e) if e.is_local() => return Err(ProbeError::Local(e)),
        Err(_) => Outcome::ConnectRefused,
    };
    Ok((outcome, elapsed(start)))
}

pub async fn observe(
    component_id: &str,
    endpoint: &Endpoint,
    source: SourceBinding,
    timeout: Duration,
) -> Result<ReachabilityObservation, ProbeError> {
    let (outcome, elapsed_ms) = probe_reachability(endpoint, source, timeout).await?;
    Ok(ReachabilityObservation {
        component_id: component_id.to_string(),
        endpoint: endpoint.label(),
        source_label: source.label(),
        outcome,
        elapsed_ms,
    })
}

/// Pure verdict over recorded observations. `allowlist_assessed` is false
/// when no allowlisted vantage could be used (remote mode).
pub fn evaluate_zones(
    manifest: &TargetManifest,
    observations: &[ReachabilityObservation],
    allowlist_assessed: bool,
) -> (CheckResult, CheckResult) {
    let zone_of = |id: &str| manifest.component(id).map(|c| c.zone());
    let external = |o: &ReachabilityObservation| o.source_label == "external";

    let restricted: Vec<&ReachabilityObservation> = observations
        .iter()
        .filter(|o| zone_of(&o.component_id) == Some(Zone::Restricted))
        .collect();
    let public: Vec<&ReachabilityObservation> = observations
        .iter()
        .filter(|o| zone_of(&o.component_id) == Some(Zone::Public))
        .collect();

    let net01 = if !manifest.components.iter().any(|c| c.zone() == Zone::Restricted) {
        CheckResult::pass(NET01, "no restricted components declared")
    } else {
        let mut evidence = Vec::new();
        let mut failed: Option<String> = None;
        for o in restricted.iter().filter(|o| external(o)) {
            if o.reachable() {
                failed.get_or_insert_with(|| o.component_id.clone());
                evidence.push(format!(
                    "{}/{} reachable from external source",
                    o.component_id, o.endpoint
                ));
            } else {
                evidence.push(format!(
                    "{}/{} not reachable from external source ({:?})",
                    o.component_id, o.endpoint, o.outcome
                ));
            }
        }
        if allowlist_assessed {
            for o in restricted.iter().filter(|o| !external(o)) {
                if !o.reachable() {
                    evidence.push(format!(
                        "warning: {}/{} not reachable from {} (over-restricted?)",
                        o.component_id, o.endpoint, o.source_label
                    ));
                }
            }
        } else {
            evidence.push("allowlist verification not assessable: no allowlisted source available".into());
        }
        let mut r = CheckResult::new(
            NET01,
            if failed.is_some() { CheckStatus::Fail } else { CheckStatus::Pass },
        );
        r.evidence = evidence;
        if let Some(c) = failed {
            r = r.on(c);
        }
        r
    };

    let net02 = if public.is_empty() {
        CheckResult::pass(NET02, "no public endpoints declared")
    } else {
        let mut failed: Option<String> = None;
        let mut evidence = Vec::new();
        for o in public.iter().filter(|o| external(o)) {
            if o.reachable() {
                evidence.push(format!("{}/{} reachable from external source", o.component_id, o.endpoint));
            } else {
                failed.get_or_insert_with(|| o.component_id.clone());
                evidence.push(format!(
                    "{}/{} unreachable from external source ({:?})",
                    o.component_id, o.endpoint, o.outcome
                ));
            }
        }
        let mut r = CheckResult::new(
            NET02,
            if failed.is_some() { CheckStatus::Fail } else { CheckStatus::Pass },
        );
        r.evidence = evidence;
        if let Some(c) = failed {
            r = r.on(c);
        }
        r
    };
    (net01, net02)
}

pub async fn check_zones(ctx: &AuditContext, sel: &Selection) -> Vec<CheckResult> {
    if !sel.contains(NET01) && !sel.contains(NET02) {
        return Vec::new();
    }
    let start = Instant::now();
    let timeout = ctx.config.probe_timeout;
    let external = SourceBinding::External(ctx.external_bind());
    let allowlisted = ctx.allowlisted_bind().map(SourceBinding::Allowlisted);

    let mut jobs = Vec::new();
    for c in &ctx.manifest.components {
        for ep in &c.endpoints {
            jobs.push((c.id.clone(), ep.clone(), external));
            if c.zone() == Zone::Restricted {
                if let Some(a) = allowlisted {
                    jobs.push((c.id.clone(), ep.clone(), a));
                }
            }
        }
    }
    let handles: Vec<_> = jobs
        .into_iter()
        .map(|(cid, ep, src)| tokio::spawn(async move { observe(&cid, &ep, src, timeout).await }))
        .collect();

    let mut observations = Vec::new();
    let mut local_errors = Vec::new();
    for h in handles {
        match h.await.expect("probe task") {
            Ok(o) => observations.push(o),
            Err(e) => local_errors.push(e.to_string()),
        }
    }
    if !local_errors.is_empty() {
        local_errors.sort();
        local_errors.dedup();
        let reason = format!("auditor-side socket errors: {}", local_errors.join("; "));
        return [NET01, NET02]
            .into_iter()
            .filter(|id| sel.contains(*id))
            .map(|id| CheckResult::not_assessable(id, reason.clone()))
            .collect();
    }
    observations.sort_by(|a, b| {
        (&a.component_id, &a.endpoint, &a.source_label).cmp(&(&b.component_id, &b.endpoint, &b.source_label))
    });
    let (mut n1, mut n2) = evaluate_zones(&ctx.manifest, &observations, allowlisted.is_some());
    let ms = start.elapsed().as_millis() as u64;
    n1.duration_ms = ms;
    n2.duration_ms = ms;
    [n1, n2].into_iter().filter(|r| sel.contains(r.check_id)).collect()
}
