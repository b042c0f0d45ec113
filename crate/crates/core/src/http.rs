//! Minimal HTTP/1.1 client over hyper with explicit control of the source
//! address, the TLS client identity and the timeout.

use std::io;
use std::net::IpAddr;
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http_body_util::{BodyExt, Full};
use hyper::Request;
use hyper_util::rt::TokioIo;
use rustls::RootCertStore;
use tokio::io::{AsyncRead, AsyncWrite};
use tokio_rustls::TlsConnector;

use crate::net::{connect_from, resolve, ConnectError};
use crate::tls::{self, ClientIdentity, ObservingVerifier, RecordingResolver, ServerTrust};

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("invalid URL {0}")]
    BadUrl(String),
    #[error(transparent)]
    Connect(#[from] ConnectError),
    #[error("TLS: {0}")]
    Tls(String),
    #[error("HTTP: {0}")]
    Protocol(String),
    #[error("request timed out")]
    Timeout,
    #[error("refusing to send credentials over plaintext {0}")]
    PlaintextCredentials(String),
}

impl HttpError {
    /// Whether the target could not be reached at all.
    pub fn is_unreachable(&self) -> bool {
        matches!(
            self,
            HttpError::Connect(ConnectError::Refused | ConnectError::Timeout | ConnectError::Other(_))
                | HttpError::Timeout
        )
    }
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    /// Present the client certificate during the TLS handshake.
    pub present_identity: bool,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest {
            method: "GET".into(),
            url: url.into(),
            headers: Vec::new(),
            body: Vec::new(),
            present_identity: false,
        }
    }

    pub fn post_form(url: impl Into<String>, pairs: &[(&str, &str)]) -> Self {
        let body = url::form_urlencoded::Serializer::new(String::new())
            .extend_pairs(pairs)
            .finish();
        HttpRequest {
            method: "POST".into(),
            url: url.into(),
            headers: vec![(
                "content-type".into(),
                "application/x-www-form-urlencoded".into(),
            )],
            body: body.into_bytes(),
            present_identity: false,
        }
    }

    pub fn json(method: &str, url: impl Into<String>, body: &serde_json::Value) -> Self {
        HttpRequest {
            method: method.into(),
            url: url.into(),
            headers: vec![("content-type".into(), "application/json".into())],
            body: serde_json::to_vec(body).expect("json value serializes"),
            present_identity: false,
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_ascii_lowercase(), value.into()));
        self
    }

    pub fn bearer(self, token: &str) -> Self {
        self.header("authorization", format!("Bearer {token}"))
    }

    pub fn with_identity(mut self) -> Self {
        self.present_identity = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    /// Whether the TLS server asked for a client certificate (https only).
    pub client_cert_requested: Option<bool>,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn header_all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.headers
            .iter()
            .filter(move |(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn json(&self) -> Option<serde_json::Value> {
        serde_json::from_slice(&self.body).ok()
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Clone)]
pub struct HttpClient {
    timeout: Duration,
    bind: Option<IpAddr>,
    roots: Option<Arc<RootCertStore>>,
    identity: Option<ClientIdentity>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("timeout", &self.timeout)
            .field("bind", &self.bind)
            .field("anchored", &self.roots.is_some())
            .field("identity", &self.identity.is_some())
            .finish()
    }
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        HttpClient {
            timeout,
            bind: None,
            roots: None,
            identity: None,
        }
    }

    pub fn bind(mut self, addr: Option<IpAddr>) -> Self {
        self.bind = addr;
        self
    }

    pub fn trust(mut self, roots: Option<Arc<RootCertStore>>) -> Self {
        self.roots = roots;
        self
    }

    pub fn identity(mut self, identity: Option<ClientIdentity>) -> Self {
        self.identity = identity;
        self
    }

    pub fn has_identity(&self) -> bool {
        self.identity.is_some()
    }

    pub async fn send(&self, req: HttpRequest) -> Result<HttpResponse, HttpError> {
        match tokio::time::timeout(self.timeout, self.send_inner(req)).await {
            Ok(r) => r,
            Err(_) => Err(HttpError::Timeout),
        }
    }

    async fn send_inner(&self, req: HttpRequest) -> Result<HttpResponse, HttpError> {
        let url = url::Url::parse(&req.url).map_err(|e| HttpError::BadUrl(format!("{}: {e}", req.url)))?;
        let host = match url.host() {
            Some(url::Host::Ipv6(a)) => a.to_string(),
            Some(h) => h.to_string(),
            None => return Err(HttpError::BadUrl(req.url.clone())),
        };
        let port = url
            .port_or_known_default()
            .ok_or_else(|| HttpError::BadUrl(req.url.clone()))?;
        let addr = resolve(&host, port).await?;
        let stream = connect_from(addr, self.bind, self.timeout).await?;

        let mut path = url.path().to_string();
        if let Some(q) = url.query() {
            path.push('?');
            path.push_str(q);
        }
        let authority = match url.port() {
            Some(p) => format!("{}:{p}", url.host_str().unwrap_or_default()),
            None => url.host_str().unwrap_or_default().to_string(),
        };

        match url.scheme() {
            "https" => {
                let trust = match &self.roots {
                    Some(r) => ServerTrust::Anchored(r.clone()),
                    None => ServerTrust::Observe(ObservingVerifier::new()),
                };
                let identity = if req.present_identity {
                    self.identity.as_ref()
                } else {
                    None
                };
                let resolver = RecordingResolver::new(identity);
                let config = tls::client_config(rustls::DEFAULT_VERSIONS, trust, resolver.clone())
                .map_err(|e| HttpError::Tls(e.to_string()))?;
                let name = tls::server_name(&host).map_err(HttpError::Tls)?;
                let tls = TlsConnector::from(Arc::new(config))
                    .connect(name, stream)
                    .await
                    .map_err(|e| match e.kind() {
                        // Address filters accept, then reset before the server speaks.
                        io::ErrorKind::ConnectionReset => HttpError::Connect(ConnectError::Refused),
                        _ => HttpError::Tls(e.to_string()),
                    })?;
                let mut resp = exchange(tls, &authority, &path, req).await?;
                resp.client_cert_requested = Some(resolver.was_requested());
                Ok(resp)
            }
            "http" => exchange(stream, &authority, &path, req).await,
            other => Err(HttpError::BadUrl(format!("unsupported scheme {other}"))),
        }
    }
}

async fn exchange<S>(
    stream: S,
    authority: &str,
    path: &str,
    req: HttpRequest,
) -> Result<HttpResponse, HttpError>
where
    S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
{
    let (mut sender, conn) = hyper::client::conn::http1::handshake(TokioIo::new(stream))
        .await
        .map_err(|e| HttpError::Protocol(e.to_string()))?;
    tokio::spawn(async move {
        let _ = conn.await;
    });

    let mut builder = Request::builder()
        .method(req.method.as_str())
        .uri(path)
        .header("host", authority)
        .header("user-agent", concat!("utmsec/", env!("CARGO_PKG_VERSION")));
    for (k, v) in &req.headers {
        builder = builder.header(k.as_str(), v.as_str());
    }
    let request = builder
        .body(Full::new(Bytes::from(req.body)))
        .map_err(|e| HttpError::Protocol(e.to_string()))?;
    let response = sender
        .send_request(request)
        .await
        .map_err(|e| HttpError::Protocol(e.to_string()))?;
    let status = response.status().as_u16();
    let headers = response
        .headers()
        .iter()
        .map(|(k, v)| (k.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
        .collect();
    let body = response
        .into_body()
        .collect()
        .await
        .map_err(|e| HttpError::Protocol(e.to_string()))?
        .to_bytes()
        .to_vec();
    Ok(HttpResponse {
        status,
        headers,
        body,
        client_cert_requested: None,
    })
}
