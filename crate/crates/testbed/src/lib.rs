//! A self-contained mock UTM deployment: OAuth server, resource gateway,
//! two database nodes, hash-chained log repository, key-management
//! listener, admin console and a public portal, each on its own port from
//! `port_base`. Every weakness the scanner looks for can be switched on
//! independently with a [`Toggle`].
//!
//! | Port | Service | Transport | Reachable from |
//! |---|---|---|---|
//! | base+0 | oauth | HTTPS, optional client cert | anyone |
//! | base+1 | gateway | HTTPS | anyone |
//! | base+2, +3 | db node-1, node-2 | TLS 1.3, client cert required | 127.0.0.2 |
//! | base+4 | logs | HTTPS | 127.0.0.2 |
//! | base+5 | admin | HTTPS | 127.0.0.2 |
//! | base+6 | portal | HTTPS | anyone |
//! | base+7 | kms | TLS 1.3, client cert required | 127.0.0.2 |
//! | base+8 | control | HTTP, `POST /shutdown` | anyone |
//!
//! Source restriction is simulated on loopback: an auditor acting as an
//! allowlisted peer binds 127.0.0.2, an outsider 127.0.0.1.

mod gateway;
mod logrepo;
mod minisql;
mod oauth;
mod pki;
mod serve;
mod store;
mod toggles;
mod tokens;
mod web;

use std::collections::{BTreeSet, HashMap};
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rsa::pkcs8::{EncodePrivateKey, LineEnding};
use rustls::version::{TLS12, TLS13};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpSocket, TcpStream};
use tokio::sync::{watch, Notify};
use tokio::task::JoinHandle;
use tokio_rustls::TlsAcceptor;
use utmsec_manifest::{
    AuditMode, ComponentRole, ComponentSpec, Endpoint, OAuthClient, Profile as OnboardingProfile, Scheme,
    TargetManifest, DEFAULT_REQUIRED_LOG_FIELDS,
};

pub use toggles::{parse_toggles, toggle_matrix, Profile, Toggle, UnknownToggle, MATRIX_TOML};

use crate::logrepo::LogStore;
use crate::oauth::{Client, OAuthServer, StoredSecret};
use crate::pki::{ClientAuth, Pki};
use crate::serve::Allowlist;
use crate::store::AtRest;
use crate::toggles::Toggles;
use crate::tokens::{Issuer, SigningKeyKind, Verifier};

pub(crate) const RSA_KID: &str = "tb-rsa-1";
const HMAC_KID: &str = "tb-hs-1";

/// Ports used from `port_base` upwards.
pub const PORT_SPAN: u16 = 9;
pub const DEFAULT_PORT_BASE: u16 = 18440;
pub const DEFAULT_SEED: u64 = 0x5eed_0a11;

pub const CLIENT_ID: &str = "uss-alpha";
const CLIENT_SCOPES: [&str; 4] = ["isa.read", "isa.write", "logs.read", "logs.write"];
const EXTERNAL: IpAddr = IpAddr::V4(Ipv4Addr::new(127, 0, 0, 1));
const ALLOWLISTED: IpAddr = IpAddr::V4(Ipv4Addr::new(127, 0, 0, 2));
const DB_BANNER: &str = "UTMDB node ready\n";
const KMS_BANNER: &str = "UTMKMS ready\n";

#[derive(Debug, Clone)]
pub struct TestbedConfig {
    pub toggles: BTreeSet<Toggle>,
    pub port_base: u16,
    pub state_dir: PathBuf,
    /// Drives every generated secret and key except the TLS certificates.
    pub seed: u64,
}

impl TestbedConfig {
    pub fn new(port_base: u16, state_dir: impl Into<PathBuf>) -> Self {
        TestbedConfig { toggles: BTreeSet::new(), port_base, state_dir: state_dir.into(), seed: DEFAULT_SEED }
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.toggles.extend(profile.toggles());
        self
    }

    pub fn with_toggles(mut self, toggles: impl IntoIterator<Item = Toggle>) -> Self {
        self.toggles.extend(toggles);
        self
    }

    /// Adds comma-separated toggle names.
    pub fn with_toggle_list(self, list: &str) -> Result<Self, UnknownToggle> {
        Ok(self.with_toggles(parse_toggles(list)?))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error(transparent)]
    UnknownToggle(#[from] UnknownToggle),
    #[error("port base {0} leaves no room for {PORT_SPAN} consecutive ports")]
    PortRange(u16),
    #[error("port {port} is unavailable: {source}")]
    PortConflict { port: u16, source: io::Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("certificate generation failed: {0}")]
    Pki(#[from] rcgen::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TestbedError + '_ {
    move |source| TestbedError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), TestbedError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Binds with SO_REUSEADDR so a restart on the same ports does not trip
/// over connections lingering in TIME_WAIT.
fn bind(port: u16) -> Result<TcpListener, TestbedError> {
    let conflict = |source| TestbedError::PortConflict { port, source };
    let socket = TcpSocket::new_v4().map_err(conflict)?;
    socket.set_reuseaddr(true).map_err(conflict)?;
    socket.bind(SocketAddr::new(EXTERNAL, port)).map_err(conflict)?;
    socket.listen(1024).map_err(conflict)
}

struct Files {
    ca: PathBuf,
    client_cert: PathBuf,
    client_key: PathBuf,
    credentials: PathBuf,
    isa_store: PathBuf,
    signing_key: PathBuf,
    manifest: PathBuf,
}

impl Files {
    fn under(dir: &Path) -> Files {
        Files {
            ca: dir.join("pki/ca.pem"),
            client_cert: dir.join("pki/uss-alpha.pem"),
            client_key: dir.join("pki/uss-alpha-key.pem"),
            credentials: dir.join("oauth/clients.store"),
            isa_store: dir.join("db/isa.store"),
            signing_key: dir.join("kms/signing-key.pem"),
            manifest: dir.join("testbed.manifest"),
        }
    }
}

/// A running deployment. Dropping it aborts every service; [`Testbed::stop`]
/// shuts down gracefully.
pub struct Testbed {
    manifest: TargetManifest,
    manifest_path: PathBuf,
    port_base: u16,
    toggles: BTreeSet<Toggle>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    shutdown: Arc<Notify>,
}

impl Testbed {
    /// Binds every port, writes state files and the manifest under
    /// `state_dir`, then starts the services. Must run inside a tokio
    /// runtime.
    pub async fn start(config: TestbedConfig) -> Result<Testbed, TestbedError> {
        let base = config.port_base;
        if base == 0 || u32::from(base) + u32::from(PORT_SPAN) > 65_536 {
            return Err(TestbedError::PortRange(base));
        }
        let mut listeners = Vec::with_capacity(PORT_SPAN as usize);
        for port in base..base + PORT_SPAN {
            listeners.push(bind(port)?);
        }

        let on = |t| config.toggles.contains(&t);
        let toggles = Toggles::new(config.toggles.clone());
        std::fs::create_dir_all(&config.state_dir).map_err(io_err(&config.state_dir))?;
        let dir = std::fs::canonicalize(&config.state_dir).map_err(io_err(&config.state_dir))?;
        let files = Files::under(&dir);
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

        let pki = Pki::generate()?;
        write(&files.ca, &pki.ca_pem)?;
        write(&files.client_cert, &pki.client_pem)?;
        write(&files.client_key, &pki.client_key_pem)?;

        let client_secret = if on(Toggle::WeakSecret) {
            let mut raw = [0u8; 8];
            rng.fill_bytes(&mut raw);
            hex::encode(raw)
        } else {
            let mut raw = [0u8; 32];
            rng.fill_bytes(&mut raw);
            URL_SAFE_NO_PAD.encode(raw)
        };
        let stored = if on(Toggle::PlaintextSecretStore) {
            StoredSecret::Plain(client_secret.clone())
        } else {
            let mut salt = [0u8; 16];
            rng.fill_bytes(&mut salt);
            StoredSecret::hashed(&client_secret, salt)
        };
        write(&files.credentials, format!("{}\n", stored.render(CLIENT_ID)))?;

        let at_rest = if on(Toggle::NoAtRestEncryption) {
            AtRest::Clear
        } else if on(Toggle::AtRestAes128) {
            AtRest::Aes128Gcm
        } else {
            AtRest::Aes256Gcm
        };
        let (isa_file, data_key) = store::isa_store(&gateway::seed_rows(), at_rest, &mut rng);
        write(&files.isa_store, isa_file)?;
        if !data_key.is_empty() {
            write(&dir.join("kms/data-key.hex"), hex::encode(&data_key))?;
        }

        let rsa = pki::signing_key(config.seed);
        let (signer, hmac_secret) = if on(Toggle::WeakAlgHs256Default) {
            let mut raw = [0u8; 32];
            rng.fill_bytes(&mut raw);
            let secret = hex::encode(raw);
            write(&files.signing_key, format!("{secret}\n"))?;
            (Issuer { key: SigningKeyKind::Hmac(secret.clone().into_bytes()), kid: HMAC_KID }, Some(secret.into_bytes()))
        } else {
            let pem = rsa.to_pkcs8_pem(LineEnding::LF).expect("RSA key encodes");
            write(&files.signing_key, pem.as_bytes())?;
            (Issuer { key: SigningKeyKind::Rsa(rsa.clone()), kid: RSA_KID }, None)
        };

        let origin = |offset: u16| format!("https://127.0.0.1:{}", base + offset);
        let redirect_uri = format!("{}/callback", origin(6));
        let mut scopes: Vec<String> = CLIENT_SCOPES.iter().map(|s| s.to_string()).collect();
        if on(Toggle::OverScopedProfile) {
            scopes.push("dss.admin".into());
        }
        let mut grants = vec!["client_credentials"];
        if on(Toggle::EnablePasswordGrant) {
            grants.push("password");
        }
        let clients = vec![
            Client {
                id: CLIENT_ID.into(),
                secret: Some(stored),
                cert_thumbprint: Some(pki.client_thumbprint),
                scopes,
                grants,
                redirect_uris: Vec::new(),
            },
            Client {
                id: web::PORTAL_CLIENT.into(),
                secret: None,
                cert_thumbprint: None,
                scopes: vec!["isa.read".into()],
                grants: vec!["authorization_code"],
                redirect_uris: vec![redirect_uri.clone()],
            },
        ];
        let mut operator_password = [0u8; 18];
        rng.fill_bytes(&mut operator_password);
        let users = HashMap::from([("operator".to_string(), URL_SAFE_NO_PAD.encode(operator_password))]);
        let lifetime = if on(Toggle::LongExpiry) { 3600 } else { 300 };
        let oauth = Arc::new(OAuthServer::new(
            origin(0),
            signer,
            rsa.clone(),
            lifetime,
            vec![gateway::AUDIENCE.into(), logrepo::AUDIENCE.into()],
            clients,
            users,
            toggles.clone(),
        ));

        let verifier = Arc::new(Verifier::new(rsa.to_public_key(), hmac_secret, toggles.clone()));
        let log = Arc::new(LogStore::new(on(Toggle::CoarseLogs)));
        for (i, (action, resource)) in [("service.start", "gateway"), ("key.rotate", "kms"), ("isa.create", "isa/isa-0001")]
            .into_iter()
            .enumerate()
        {
            log.emit(&format!("2025-01-01T00:0{i}:00Z"), "operator", action, resource, "ok");
        }

        let manifest = build_manifest(base, &files, &client_secret, at_rest);
        write(&files.manifest, utmsec_manifest::render_toml(&manifest))?;

        let https = TlsAcceptor::from(pki.server_config(&[&TLS13, &TLS12], ClientAuth::None, true));
        let oauth_tls = TlsAcceptor::from(pki.server_config(&[&TLS13, &TLS12], ClientAuth::Optional, true));
        let mtls13 = TlsAcceptor::from(pki.server_config(&[&TLS13], ClientAuth::Required, false));
        let mtls12 = TlsAcceptor::from(pki.server_config(&[&TLS12], ClientAuth::Required, false));
        let restricted: Allowlist = Some(Arc::new(vec![ALLOWLISTED]));
        let db_allow = if on(Toggle::ExposeDbnode) { None } else { restricted.clone() };
        let (db1, db2) = if on(Toggle::PlaintextDbnode) {
            (None, None)
        } else if on(Toggle::Tls12Dbnode) {
            (Some(mtls13.clone()), Some(mtls12))
        } else {
            (Some(mtls13.clone()), Some(mtls13.clone()))
        };

        let (stop, stop_rx) = watch::channel(false);
        let shutdown = Arc::new(Notify::new());
        let control = {
            let shutdown = shutdown.clone();
            Router::new().route("/health", get(|| async { "ok" })).route(
                "/shutdown",
                post(move || {
                    shutdown.notify_one();
                    async { (axum::http::StatusCode::ACCEPTED, "stopping\n") }
                }),
            )
        };

        let mut l = listeners.into_iter();
        let mut next = || l.next().expect("one listener per port");
        let rx = || stop_rx.clone();
        let tasks = vec![
            tokio::spawn(serve::serve_http(next(), Some(oauth_tls), None, oauth::router(oauth.clone()), rx())),
            tokio::spawn(serve::serve_http(next(), Some(https.clone()), None, gateway::router(verifier.clone(), log.clone(), toggles.clone()), rx())),
            tokio::spawn(serve::serve_raw(next(), db1, db_allow.clone(), DB_BANNER, rx())),
            tokio::spawn(serve::serve_raw(next(), db2, db_allow, DB_BANNER, rx())),
            tokio::spawn(serve::serve_http(next(), Some(https.clone()), restricted.clone(), logrepo::router(log, verifier, toggles.clone()), rx())),
            tokio::spawn(serve::serve_http(next(), Some(https.clone()), restricted.clone(), web::admin_router(toggles.clone()), rx())),
            tokio::spawn(serve::serve_http(
                next(),
                Some(https),
                None,
                web::portal_router(oauth, format!("{}/authorize", origin(0)), redirect_uri, toggles),
                rx(),
            )),
            tokio::spawn(serve::serve_raw(next(), Some(mtls13), restricted, KMS_BANNER, rx())),
            tokio::spawn(serve::serve_http(next(), None, None, control, rx())),
        ];

        Ok(Testbed {
            manifest,
            manifest_path: files.manifest,
            port_base: base,
            toggles: config.toggles,
            stop,
            tasks,
            shutdown,
        })
    }

    pub fn manifest(&self) -> &TargetManifest {
        &self.manifest
    }

    pub fn manifest_path(&self) -> &Path {
        &self.manifest_path
    }

    pub fn port_base(&self) -> u16 {
        self.port_base
    }

    pub fn toggles(&self) -> &BTreeSet<Toggle> {
        &self.toggles
    }

    /// Resolves once someone posts to the control port's `/shutdown`.
    pub async fn shutdown_requested(&self) {
        self.shutdown.notified().await
    }

    /// Closes every listener and connection. Safe to call repeatedly.
    pub async fn stop(&mut self) {
        let _ = self.stop.send(true);
        for task in self.tasks.drain(..) {
            let _ = task.await;
        }
    }
}

impl Drop for Testbed {
    fn drop(&mut self) {
        let _ = self.stop.send(true);
        for task in &self.tasks {
            task.abort();
        }
    }
}

fn build_manifest(
    base: u16,
    files: &Files,
    client_secret: &str,
    at_rest: AtRest,
) -> TargetManifest {
    let host = "127.0.0.1";
    let ep = |scheme, offset: u16, name: &str, path: Option<&str>| {
        let e = Endpoint::new(scheme, host, base + offset).with_name(name);
        match path {
            Some(p) => e.with_path(p),
            None => e,
        }
    };
    let component = |id: &str, role, endpoints: Vec<Endpoint>| {
        let mut c = ComponentSpec::new(id, role);
        c.endpoints = endpoints;
        c
    };

    let mut oauth = component(
        "oauth",
        ComponentRole::OAuthServer,
        vec![
            ep(Scheme::Https, 0, "token", Some("/token")),
            ep(Scheme::Https, 0, "authorize", Some("/authorize")),
            ep(Scheme::Https, 0, "jwks", Some("/.well-known/jwks.json")),
        ],
    );
    oauth.declared_token_lifetime_s = Some(300);
    oauth.storage_path = Some(files.credentials.clone());

    let mut search = ep(Scheme::Https, 1, "isa-search", Some("/v1/isa"));
    search.required_scope = Some("isa.read".into());
    search.params.insert("owner".into(), CLIENT_ID.into());
    search.accept_marker = Some("\"count\"".into());
    let mut gw = component("gateway", ComponentRole::HttpsGateway, vec![search]);
    gw.audience = Some(gateway::AUDIENCE.into());

    let mut db = component(
        "db",
        ComponentRole::DbNode,
        vec![ep(Scheme::Tcp, 2, "node-1", None), ep(Scheme::Tcp, 3, "node-2", None)],
    );
    db.declared_encryption_at_rest = at_rest.declared();
    db.storage_path = Some(files.isa_store.clone());
    db.sentinels = vec![store::SENTINEL.into()];

    let mut read = ep(Scheme::Https, 4, "logs", Some("/logs"));
    read.required_scope = Some("logs.read".into());
    read.params.insert("tail".into(), "1".into());
    read.accept_marker = Some("\"records\"".into());
    let mut logs = component("logs", ComponentRole::LogRepository, vec![read]);
    logs.audience = Some(logrepo::AUDIENCE.into());

    let mut kms = component("kms", ComponentRole::KeyManagement, vec![ep(Scheme::Tcp, 7, "kms", None)]);
    kms.storage_path = Some(files.signing_key.clone());

    let admin = component("admin", ComponentRole::WebAppAdmin, vec![ep(Scheme::Https, 5, "home", Some("/"))]);
    let portal = component(
        "portal",
        ComponentRole::WebAppPublic,
        vec![ep(Scheme::Https, 6, "home", Some("/")), ep(Scheme::Https, 6, "login", Some("/login"))],
    );

    let scopes: Vec<String> = CLIENT_SCOPES.iter().map(|s| s.to_string()).collect();
    TargetManifest {
        mode: AuditMode::Introspective,
        required_log_fields: DEFAULT_REQUIRED_LOG_FIELDS.iter().map(|s| s.to_string()).collect(),
        allowlist_sources: vec![ALLOWLISTED],
        external_source: Some(EXTERNAL),
        declared_grant_types: vec!["client_credentials".into(), "authorization_code".into()],
        trust_anchor: Some(files.ca.clone()),
        oauth_client: OAuthClient {
            client_id: CLIENT_ID.into(),
            client_secret: Some(client_secret.into()),
            certificate: Some(files.client_cert.clone()),
            private_key: Some(files.client_key.clone()),
            scopes: scopes.clone(),
        },
        profiles: vec![OnboardingProfile { client_id: CLIENT_ID.into(), entitled_scopes: scopes }],
        components: vec![oauth, gw, db, logs, kms, admin, portal],
    }
}

/// A port base whose whole span is currently free on loopback. Successive
/// calls within one process never hand out overlapping ranges.
pub fn free_port_base() -> Option<u16> {
    static NEXT: AtomicU32 = AtomicU32::new(0);
    let _ = NEXT.compare_exchange(0, 20_000 + (std::process::id() % 1_500) * 20, Ordering::SeqCst, Ordering::SeqCst);
    for _ in 0..200 {
        let mut base = NEXT.fetch_add(u32::from(PORT_SPAN), Ordering::SeqCst);
        if base + u32::from(PORT_SPAN) > 60_000 {
            NEXT.store(20_000, Ordering::SeqCst);
            base = NEXT.fetch_add(u32::from(PORT_SPAN), Ordering::SeqCst);
        }
        let free = (base..base + u32::from(PORT_SPAN))
            .all(|p| std::net::TcpListener::bind((Ipv4Addr::LOCALHOST, p as u16)).is_ok());
        if free {
            return Some(base as u16);
        }
    }
    None
}

/// Asks a testbed started elsewhere (e.g. `utmsec testbed up`) to shut down.
pub async fn request_shutdown(port_base: u16) -> io::Result<()> {
    let port = port_base
        .checked_add(PORT_SPAN - 1)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "port base out of range"))?;
    let exchange = async {
        let mut s = TcpStream::connect((Ipv4Addr::LOCALHOST, port)).await?;
        s.write_all(
            format!("POST /shutdown HTTP/1.1\r\nHost: 127.0.0.1:{port}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n")
                .as_bytes(),
        )
        .await?;
        let mut reply = Vec::new();
        s.read_to_end(&mut reply).await?;
        Ok::<_, io::Error>(reply)
    };
    let reply = tokio::time::timeout(Duration::from_secs(5), exchange)
        .await
        .map_err(|_| io::Error::new(io::ErrorKind::TimedOut, "no answer from the control port"))??;
    if reply.starts_with(b"HTTP/1.1 202") {
        Ok(())
    } else {
        Err(io::Error::other("control port refused the shutdown request"))
    }
}
