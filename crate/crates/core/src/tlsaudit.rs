//! TLS posture of database-node channels (DB-01) and data-at-rest
//! inspection (DB-03, DB-04).

use std::net::IpAddr;
use std::sync::Arc;
use std::time::Duration;

use rustls::pki_types::CertificateDer;
use serde::{Deserialize, Serialize};
use tokio::io::AsyncReadExt;
use tokio_rustls::TlsConnector;
use utmsec_manifest::{ComponentRole, ComponentSpec, Endpoint};

use crate::engine::registry::{Area, CheckId};
use crate::engine::{timed, AuditContext, CheckResult, CheckStatus, Selection};
use crate::net::{self, ConnectError};
use crate::tls::{self, ClientIdentity, ObservingVerifier, RecordingResolver, ServerTrust};

const DB01: CheckId = CheckId::new_unchecked(Area::Db, 1);
const DB03: CheckId = CheckId::new_unchecked(Area::Db, 3);
const DB04: CheckId = CheckId::new_unchecked(Area::Db, 4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientCertDemand {
    Required,
    Optional,
    NotRequested,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertSummary {
    pub subject: String,
    pub issuer: String,
    pub not_after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlsPosture {
    pub endpoint: String,
    /// The endpoint answered with something other than TLS.
    pub plaintext: bool,
    pub negotiated_version: Option<String>,
    pub requires_client_cert: Option<ClientCertDemand>,
    pub cipher_name: Option<String>,
    pub server_cert: Option<CertSummary>,
    /// Result of offering TLS 1.2 only.
    pub accepts_tls12: Option<bool>,
    /// Handshake errors and alerts, in the order observed.
    pub alerts: Vec<String>,
}

impl TlsPosture {
    fn empty(endpoint: &Endpoint) -> Self {
        TlsPosture {
            endpoint: endpoint.label(),
            plaintext: false,
            negotiated_version: None,
            requires_client_cert: None,
            cipher_name: None,
            server_cert: None,
            accepts_tls12: None,
            alerts: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TlsProbeError {
    #[error("{0}")]
    Connect(#[from] ConnectError),
    #[error("{0}")]
    Setup(#[from] tls::TlsSetupError),
}

struct Attempt {
    requested: bool,
    /// Handshake finished and the server kept talking to us.
    accepted: bool,
    plaintext: bool,
    version: Option<String>,
    cipher: Option<String>,
    leaf: Option<CertificateDer<'static>>,
    error: Option<String>,
}

fn rustls_error(e: &std::io::Error) -> Option<&rustls::Error> {
    e.get_ref().and_then(|inner| inner.downcast_ref::<rustls::Error>())
}

fn version_name(v: rustls::ProtocolVersion) -> String {
    match v {
        rustls::ProtocolVersion::TLSv1_3 => "1.3".into(),
        rustls::ProtocolVersion::TLSv1_2 => "1.2".into(),
        other => format!("{other:?}"),
    }
}

async fn attempt(
    endpoint: &Endpoint,
    bind: Option<IpAddr>,
    timeout: Duration,
    versions: &[&'static rustls::SupportedProtocolVersion],
    identity: Option<&ClientIdentity>,
) -> Result<Attempt, TlsProbeError> {
    let addr = net::resolve(&endpoint.host, endpoint.port).await?;
    let stream = net::connect_from(addr, bind, timeout).await?;
    let observer = ObservingVerifier::new();
    let resolver = RecordingResolver::new(identity);
    let config = tls::client_config(versions, ServerTrust::Observe(observer.clone()), resolver.clone())?;
    let name = tls::server_name(&endpoint.host).unwrap_or_else(|_| {
        rustls::pki_types::ServerName::try_from("localhost").expect("static name")
    });
    let mut out = Attempt {
        requested: false,
        accepted: false,
        plaintext: false,
        version: None,
        cipher: None,
        leaf: None,
        error: None,
    };
    let connector = TlsConnector::from(Arc::new(config));
    match tokio::time::timeout(timeout, connector.connect(name, stream)).await {
        Err(_) => out.error = Some("handshake timed out".into()),
        Ok(Err(e)) => {
            if let Some(rustls::Error::InvalidMessage(_)) = rustls_error(&e) {
                out.plaintext = true;
            }
            out.error = Some(rustls_error(&e).map_or_else(|| e.to_string(), |r| r.to_string()));
        }
        Ok(Ok(mut conn)) => {
            {
                let (_, c) = conn.get_ref();
                out.version = c.protocol_version().map(version_name);
                out.cipher = c.negotiated_cipher_suite().map(|s| format!("{:?}", s.suite()));
            }
            // TLS 1.3 servers reject a missing certificate after the client
            // has already finished, so wait for the first server bytes.
            let mut buf = [0u8; 256];
            match tokio::time::timeout(timeout.min(Duration::from_millis(1000)), conn.read(&mut buf)).await {
                Err(_) => out.accepted = true,
                Ok(Ok(n)) if n > 0 => out.accepted = true,
                Ok(Ok(_)) => out.error = Some("connection closed after handshake".into()),
                Ok(Err(e)) => {
                    out.error = Some(rustls_error(&e).map_or_else(|| e.to_string(), |r| r.to_string()))
                }
            }
        }
    }
    out.requested = resolver.was_requested();
    out.leaf = observer.leaf();
    Ok(out)
}

fn summarize(der: &CertificateDer<'_>) -> Option<CertSummary> {
    let (_, cert) = x509_parser::parse_x509_certificate(der.as_ref()).ok()?;
    Some(CertSummary {
        subject: cert.subject().to_string(),
        issuer: cert.issuer().to_string(),
        not_after: cert
            .validity()
            .not_after
            .to_rfc2822()
            .unwrap_or_else(|_| cert.validity().not_after.to_string()),
    })
}

/// Handshakes without a client certificate, with one (when available) and
/// with TLS 1.2 only, and reports what the server did.
pub async fn probe_tls(
    endpoint: &Endpoint,
    identity: Option<&ClientIdentity>,
    bind: Option<IpAddr>,
    timeout: Duration,
) -> Result<TlsPosture, TlsProbeError> {
    let mut posture = TlsPosture::empty(endpoint);
    let all = rustls::DEFAULT_VERSIONS;
    let bare = attempt(endpoint, bind, timeout, all, None).await?;
    if let Some(e) = &bare.error {
        posture.alerts.push(format!("without client certificate: {e}"));
    }
    if bare.plaintext {
        posture.plaintext = true;
        return Ok(posture);
    }
    posture.server_cert = bare.leaf.as_ref().and_then(summarize);
    let mut handshake = if bare.version.is_some() { Some(&bare) } else { None };

    let with_id = match (identity, bare.requested) {
        (Some(id), true) => Some(attempt(endpoint, bind, timeout, all, Some(id)).await?),
        _ => None,
    };
    if let Some(w) = &with_id {
        match &w.error {
            Some(e) => posture.alerts.push(format!("with client certificate: {e}")),
            None if w.accepted => {}
            None => posture.alerts.push("with client certificate: no response".into()),
        }
        if w.accepted {
            handshake = Some(w);
        }
    }
    if let Some(h) = handshake.or(with_id.as_ref().filter(|w| w.version.is_some())) {
        posture.negotiated_version = h.version.clone();
        posture.cipher_name = h.cipher.clone();
    }
    if posture.negotiated_version.is_some() || bare.requested {
        posture.requires_client_cert = Some(if !bare.requested {
            ClientCertDemand::NotRequested
        } else if bare.accepted {
            ClientCertDemand::Optional
        } else {
            ClientCertDemand::Required
        });
    }

    let legacy = attempt(endpoint, bind, timeout, &[&rustls::version::TLS12], identity).await?;
    posture.accepts_tls12 = Some(legacy.version.is_some() || legacy.requested);
    if let Some(e) = &legacy.error {
        posture.alerts.push(format!("TLS 1.2 only: {e}"));
    }
    Ok(posture)
}

/// Empty when the posture meets the database channel requirements.
pub fn db_channel_problems(p: &TlsPosture) -> Vec<String> {
    if p.plaintext {
        return vec!["speaks no TLS (plaintext channel)".into()];
    }
    let mut out = Vec::new();
    match p.negotiated_version.as_deref() {
        None => out.push("no TLS handshake completed".into()),
        Some("1.3") => {}
        Some(v) => out.push(format!("negotiated TLS {v} < 1.3")),
    }
    if p.accepts_tls12 == Some(true) {
        out.push("accepts a TLS 1.2-only client".into());
    }
    match p.requires_client_cert {
        Some(ClientCertDemand::Required) => {}
        Some(d) => out.push(format!("client certificate {d:?}, not Required")),
        None => out.push("client certificate demand unknown".into()),
    }
    out
}

fn describe(p: &TlsPosture) -> String {
    if p.plaintext {
        return "plaintext".into();
    }
    format!(
        "TLS {}, client certificate {}",
        p.negotiated_version.as_deref().unwrap_or("none"),
        p.requires_client_cert.map_or("unknown".into(), |d| format!("{d:?}")),
    )
}

pub async fn check_db_transport(ctx: &AuditContext) -> CheckResult {
    let nodes: Vec<&ComponentSpec> = ctx.manifest.by_role(ComponentRole::DbNode).collect();
    if nodes.is_empty() {
        return CheckResult::skipped(DB01, "no database node declared");
    }
    let mut evidence = Vec::new();
    let mut verdicts = Vec::new();
    let mut culprit = None;
    for node in nodes {
        for ep in &node.endpoints {
            let label = format!("{}/{}", node.id, ep.label());
            match probe_tls(ep, ctx.identity(), ctx.bind_for(node), ctx.config.probe_timeout).await {
                Err(e) => {
                    evidence.push(format!("{label}: not assessable: {e}"));
                    verdicts.push(CheckStatus::NotAssessable);
                }
                Ok(p) => {
                    let problems = db_channel_problems(&p);
                    if problems.is_empty() {
                        evidence.push(format!("{label}: {}", describe(&p)));
                        verdicts.push(CheckStatus::Pass);
                    } else {
                        culprit.get_or_insert_with(|| node.id.clone());
                        evidence.push(format!("{label}: {}", problems.join("; ")));
                        verdicts.push(CheckStatus::Fail);
                    }
                }
            }
        }
    }
    let r = CheckResult::from_verdicts(DB01, verdicts, evidence);
    match culprit {
        Some(c) => r.on(c),
        None => r,
    }
}

/// `AES-256`, `aes256`, `AES_256_GCM` all count as AES-256.
pub fn is_aes256(alg: &str) -> bool {
    let norm: String = alg
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_uppercase())
        .collect();
    norm.starts_with("AES256")
}

fn storage_header(bytes: &[u8]) -> Option<String> {
    let line = bytes.split(|b| *b == b'\n').next()?;
    let line = std::str::from_utf8(line).ok()?;
    line.strip_prefix("ALG=").map(|s| s.trim().to_string())
}

pub fn check_data_at_rest(ctx: &AuditContext, sel: &Selection) -> Vec<CheckResult> {
    let nodes: Vec<&ComponentSpec> = ctx.manifest.by_role(ComponentRole::DbNode).collect();
    let mut out = Vec::new();
    let wanted: Vec<CheckId> = [DB03, DB04].into_iter().filter(|i| sel.contains(*i)).collect();
    if nodes.is_empty() {
        return wanted
            .into_iter()
            .map(|i| CheckResult::skipped(i, "no database node declared"))
            .collect();
    }
    if !ctx.manifest.is_introspective() {
        return wanted
            .into_iter()
            .map(|i| CheckResult::not_assessable(i, "remote mode: storage not readable"))
            .collect();
    }
    let mut e3 = Vec::new();
    let mut v3 = Vec::new();
    let mut e4 = Vec::new();
    let mut v4 = Vec::new();
    let mut c3 = None;
    let mut c4 = None;
    for node in nodes {
        let stored = match ctx.manifest.readable_storage(node) {
            None => Err(format!("{}: no storage_path declared", node.id)),
            Some(p) => std::fs::read(p).map_err(|e| format!("{}: storage unreadable: {e}", node.id)),
        };

        match &stored {
            Err(reason) => {
                e3.push(reason.clone());
                v3.push(CheckStatus::NotAssessable);
            }
            Ok(_) if node.sentinels.is_empty() => {
                e3.push(format!("{}: no sentinels declared", node.id));
                v3.push(CheckStatus::NotAssessable);
            }
            Ok(bytes) => {
                let found: Vec<&String> = node
                    .sentinels
                    .iter()
                    .filter(|s| !s.is_empty() && bytes.windows(s.len()).any(|w| w == s.as_bytes()))
                    .collect();
                if found.is_empty() {
                    e3.push(format!("{}: no sentinel readable in stored bytes", node.id));
                    v3.push(CheckStatus::Pass);
                } else {
                    c3.get_or_insert_with(|| node.id.clone());
                    let names: Vec<&str> = found.iter().map(|s| s.as_str()).collect();
                    e3.push(format!("{}: sentinel {} found in clear", node.id, names.join(", ")));
                    v3.push(CheckStatus::Fail);
                }
            }
        }

        match node.declared_encryption_at_rest.as_deref() {
            None => {
                c4.get_or_insert_with(|| node.id.clone());
                e4.push(format!("{}: no at-rest encryption algorithm declared", node.id));
                v4.push(CheckStatus::Fail);
            }
            Some(alg) if !is_aes256(alg) => {
                c4.get_or_insert_with(|| node.id.clone());
                e4.push(format!("{}: declared algorithm {alg} is not AES-256", node.id));
                v4.push(CheckStatus::Fail);
            }
            Some(alg) => {
                let header = stored.as_ref().ok().and_then(|b| storage_header(b));
                match header {
                    Some(h) if !is_aes256(&h) => {
                        c4.get_or_insert_with(|| node.id.clone());
                        e4.push(format!(
                            "{}: declares {alg} but storage header says {h}",
                            node.id
                        ));
                        v4.push(CheckStatus::Fail);
                    }
                    _ => {
                        e4.push(format!("{}: declared algorithm {alg}", node.id));
                        v4.push(CheckStatus::Pass);
                    }
                }
            }
        }
    }
    if sel.contains(DB03) {
        let r = CheckResult::from_verdicts(DB03, v3, e3);
        out.push(match c3 {
            Some(c) => r.on(c),
            None => r,
        });
    }
    if sel.contains(DB04) {
        let r = CheckResult::from_verdicts(DB04, v4, e4);
        out.push(match c4 {
            Some(c) => r.on(c),
            None => r,
        });
    }
    out
}

pub async fn check_db(ctx: &AuditContext, sel: &Selection) -> Vec<CheckResult> {
    let mut out = Vec::new();
    if sel.contains(DB01) {
        out.push(timed(check_db_transport(ctx)).await);
    }
    out.extend(check_data_at_rest(ctx, sel));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posture() -> TlsPosture {
        TlsPosture {
            endpoint: "n".into(),
            plaintext: false,
            negotiated_version: Some("1.3".into()),
            requires_client_cert: Some(ClientCertDemand::Required),
            cipher_name: None,
            server_cert: None,
            accepts_tls12: Some(false),
            alerts: vec![],
        }
    }

    #[test]
    fn db_channel_rules() {
        assert!(db_channel_problems(&posture()).is_empty());
        let mut p = posture();
        p.accepts_tls12 = Some(true);
        assert_eq!(db_channel_problems(&p), ["accepts a TLS 1.2-only client"]);
        let mut p = posture();
        p.requires_client_cert = Some(ClientCertDemand::Optional);
        assert_eq!(db_channel_problems(&p).len(), 1);
        let mut p = posture();
        p.negotiated_version = Some("1.2".into());
        assert_eq!(db_channel_problems(&p), ["negotiated TLS 1.2 < 1.3"]);
        let mut p = posture();
        p.plaintext = true;
        assert_eq!(db_channel_problems(&p), ["speaks no TLS (plaintext channel)"]);
    }

    #[test]
    fn aes_names() {
        for ok in ["AES-256", "aes256", "AES_256_GCM", "AES-256-GCM"] {
            assert!(is_aes256(ok), "{ok}");
        }
        for bad in ["AES-128", "AES-128-GCM", "DES", "NONE", ""] {
            assert!(!is_aes256(bad), "{bad}");
        }
    }

    #[test]
    fn header_parse() {
        assert_eq!(storage_header(b"ALG=AES-256-GCM\n\x01\x02").as_deref(), Some("AES-256-GCM"));
        assert_eq!(storage_header(b"\x00\x01"), None);
    }
}
