use std::collections::{BTreeSet, HashMap};
use std::future::Future;
use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rustls::RootCertStore;
use tokio::sync::Mutex;
use utmsec_manifest::{ComponentSpec, TargetManifest, Zone};

use super::registry::CheckId;
use super::report::CheckResult;
use crate::http::HttpClient;
use crate::jwtkit::SignedToken;
use crate::oauthaudit::{self, TokenRequest};
use crate::tls::{self, ClientIdentity};

/// Which local address non-zone probes originate from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceMode {
    /// Allowlisted source for restricted components (introspective mode
    /// only), external source otherwise.
    #[default]
    Auto,
    External,
    Allowlisted,
}

impl std::str::FromStr for SourceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(SourceMode::Auto),
            "external" => Ok(SourceMode::External),
            "allowlisted" => Ok(SourceMode::Allowlisted),
            other => Err(format!("unknown source {other:?} (expected auto, external or allowlisted)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub probe_timeout: Duration,
    pub source: SourceMode,
    pub enable_time_based: bool,
    /// Seconds the time-based payloads ask the database to sleep.
    pub time_based_delay_s: u64,
    pub corpus_path: Option<PathBuf>,
    pub lifetime_threshold_s: i64,
    pub allowed_algs: Vec<String>,
    pub key_exposure_paths: Vec<String>,
    pub clock_skew_s: i64,
    /// Records sampled for granularity; `None` scans the whole repository.
    pub log_sample: Option<usize>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            probe_timeout: Duration::from_millis(2000),
            source: SourceMode::Auto,
            enable_time_based: false,
            time_based_delay_s: 3,
            corpus_path: None,
            lifetime_threshold_s: 900,
            allowed_algs: ["RS256", "ES256", "PS256"].map(String::from).to_vec(),
            key_exposure_paths: ["/private.pem", "/.env", "/keys/", "/jwks.json"]
                .map(String::from)
                .to_vec(),
            clock_skew_s: 30,
            log_sample: Some(50),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("client identity: {0}")]
    Identity(tls::TlsSetupError),
    #[error("trust anchor: {0}")]
    TrustAnchor(tls::TlsSetupError),
}

/// Everything a check needs: the manifest, configuration, loaded
/// credentials and a cache of tokens already obtained.
pub struct AuditContext {
    pub manifest: TargetManifest,
    pub config: AuditConfig,
    identity: Option<ClientIdentity>,
    roots: Option<Arc<RootCertStore>>,
    tokens: Mutex<HashMap<(Option<String>, Vec<String>), Result<SignedToken, String>>>,
}

impl AuditContext {
    pub fn new(manifest: TargetManifest, config: AuditConfig) -> Result<Self, AuditError> {
        let client = &manifest.oauth_client;
        let identity = match (&client.certificate, &client.private_key) {
            (Some(c), Some(k)) => Some(ClientIdentity::load(c, k).map_err(AuditError::Identity)?),
            _ => None,
        };
        let roots = match &manifest.trust_anchor {
            Some(p) => Some(Arc::new(tls::load_roots(p).map_err(AuditError::TrustAnchor)?)),
            None => None,
        };
        Ok(AuditContext {
            manifest,
            config,
            identity,
            roots,
            tokens: Mutex::new(HashMap::new()),
        })
    }

    pub fn identity(&self) -> Option<&ClientIdentity> {
        self.identity.as_ref()
    }

    pub fn external_bind(&self) -> Option<IpAddr> {
        self.manifest.external_source
    }

    /// An allowlisted address the auditor may bind, introspective mode only.
    pub fn allowlisted_bind(&self) -> Option<IpAddr> {
        if self.manifest.is_introspective() {
            self.manifest.allowlist_sources.first().copied()
        } else {
            None
        }
    }

    pub fn bind_for(&self, component: &ComponentSpec) -> Option<IpAddr> {
        match self.config.source {
            SourceMode::External => self.external_bind(),
            SourceMode::Allowlisted => self.allowlisted_bind().or(self.external_bind()),
            SourceMode::Auto => match component.zone() {
                Zone::Restricted => self.allowlisted_bind().or(self.external_bind()),
                Zone::Public => self.external_bind(),
            },
        }
    }

    fn client(&self, bind: Option<IpAddr>, timeout: Duration) -> HttpClient {
        HttpClient::new(timeout)
            .bind(bind)
            .trust(self.roots.clone())
            .identity(self.identity.clone())
    }

    pub fn http_for(&self, component: &ComponentSpec) -> HttpClient {
        self.client(self.bind_for(component), self.config.probe_timeout)
    }

    pub fn http_for_with_timeout(&self, component: &ComponentSpec, timeout: Duration) -> HttpClient {
        self.client(self.bind_for(component), timeout)
    }

    /// Client acting as an outside party regardless of `--source`.
    pub fn http_external(&self) -> HttpClient {
        self.client(self.external_bind(), self.config.probe_timeout)
    }

    /// Token from the authorization server with the auditor's credentials,
    /// cached per (audience, scopes).
    pub async fn token(&self, audience: Option<&str>, scopes: &[&str]) -> Result<SignedToken, String> {
        let scope_key: Vec<String> = scopes
            .iter()
            .map(|s| s.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let key = (audience.map(str::to_string), scope_key);
        let mut cache = self.tokens.lock().await;
        if let Some(hit) = cache.get(&key) {
            return hit.clone();
        }
        let mut req = TokenRequest::client_credentials(&self.manifest.oauth_client);
        req.scope = Some(scopes.join(" "));
        req.audience = audience.map(str::to_string);
        let result = self.request_token(&req).await.map_err(|e| e.to_string());
        cache.insert(key, result.clone());
        result
    }

    /// Token suited to a token-accepting endpoint of `component`.
    pub async fn token_for(&self, component: &ComponentSpec, scope: &str) -> Result<SignedToken, String> {
        self.token(component.audience.as_deref(), &[scope]).await
    }

    pub async fn request_token(&self, req: &TokenRequest) -> Result<SignedToken, oauthaudit::TokenError> {
        match self.token_outcome(req).await? {
            oauthaudit::TokenOutcome::Issued(t) => Ok(t.token),
            oauthaudit::TokenOutcome::Rejected(r) => Err(oauthaudit::TokenError::Rejected(r)),
        }
    }

    /// Sends a token request to the manifest's authorization server.
    pub async fn token_outcome(
        &self,
        req: &TokenRequest,
    ) -> Result<oauthaudit::TokenOutcome, oauthaudit::TokenError> {
        let server = self.manifest.oauth_server();
        let endpoint = oauthaudit::token_endpoint(server)
            .ok_or_else(|| oauthaudit::TokenError::NoEndpoint(server.id.clone()))?;
        oauthaudit::request_token(&self.http_for(server), endpoint, req).await
    }
}

/// Runs one check and records how long it took.
pub(crate) async fn timed<F>(fut: F) -> CheckResult
where
    F: Future<Output = CheckResult>,
{
    let start = Instant::now();
    let mut r = fut.await;
    r.duration_ms = start.elapsed().as_millis() as u64;
    r
}

/// The subset of checks a module should execute.
#[derive(Debug, Clone)]
pub struct Selection(Option<BTreeSet<CheckId>>);

impl Selection {
    pub fn all() -> Self {
        Selection(None)
    }

    pub fn only(ids: impl IntoIterator<Item = CheckId>) -> Self {
        Selection(Some(ids.into_iter().collect()))
    }

    pub fn contains(&self, id: CheckId) -> bool {
        self.0.as_ref().map_or(true, |s| s.contains(&id))
    }
}
