//! Authorization-server audit: token requests and OAUTH-01..06.

mod checks;
mod entropy;

use std::fmt;
use std::time::Duration;

use utmsec_manifest::{ComponentSpec, Endpoint, OAuthClient, Scheme};

use crate::http::{HttpClient, HttpError, HttpRequest};
use crate::jwtkit::{self, JwtError, SignedToken};

pub use checks::{check_oauth, polp_violation};
pub use entropy::{charset_size, estimate, SecretStrengthEstimate};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRequest {
    pub grant_type: String,
    pub client_id: String,
    pub client_secret: Option<String>,
    pub scope: Option<String>,
    pub audience: Option<String>,
    /// Present the manifest's client certificate in the TLS handshake.
    pub present_certificate: bool,
    /// Further form fields (username, password, code, ...).
    pub extra: Vec<(String, String)>,
}

impl TokenRequest {
    pub fn client_credentials(client: &OAuthClient) -> Self {
        TokenRequest {
            grant_type: "client_credentials".into(),
            client_id: client.client_id.clone(),
            client_secret: client.client_secret.clone(),
            scope: None,
            audience: None,
            present_certificate: client.has_certificate(),
            extra: Vec::new(),
        }
    }

    fn form(&self) -> Vec<(&str, &str)> {
        let mut form = vec![("grant_type", self.grant_type.as_str()), ("client_id", self.client_id.as_str())];
        if let Some(s) = &self.client_secret {
            form.push(("client_secret", s));
        }
        if let Some(s) = &self.scope {
            form.push(("scope", s));
        }
        if let Some(a) = &self.audience {
            form.push(("audience", a));
        }
        form.extend(self.extra.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        form
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedToken {
    pub token: SignedToken,
    /// Scope string from the response, falling back to the token claim.
    pub granted_scope: Vec<String>,
    pub certificate_presented: bool,
    pub certificate_requested: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub status: u16,
    pub error: String,
    pub description: Option<String>,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.status, self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenOutcome {
    Issued(Box<IssuedToken>),
    Rejected(Rejection),
}

#[derive(Debug, thiserror::Error)]
pub enum TokenError {
    #[error("authorization server {0} declares no token endpoint")]
    NoEndpoint(String),
    #[error("refusing to send client_secret over plaintext endpoint {0}")]
    PlaintextCredentials(String),
    #[error("token endpoint unreachable: {0}")]
    Transport(#[from] HttpError),
    #[error("success response without access_token (status {0})")]
    NonTokenBody(u16),
    #[error("issued token does not parse: {0}")]
    BadToken(#[from] JwtError),
    #[error("token request rejected: {0}")]
    Rejected(Rejection),
}

fn named<'a>(server: &'a ComponentSpec, name: &str, suffix: &str) -> Option<&'a Endpoint> {
    server.endpoint(name).or_else(|| {
        server
            .endpoints
            .iter()
            .find(|e| e.path.as_deref().is_some_and(|p| p.ends_with(suffix)))
    })
}

pub fn token_endpoint(server: &ComponentSpec) -> Option<&Endpoint> {
    named(server, "token", "/token")
}

pub fn authorize_endpoint(server: &ComponentSpec) -> Option<&Endpoint> {
    named(server, "authorize", "/authorize")
}

pub fn jwks_endpoint(server: &ComponentSpec) -> Option<&Endpoint> {
    named(server, "jwks", "jwks.json")
}

const MAX_RETRIES: u32 = 3;

/// Posts a form-encoded token request. HTTP 429 is retried with
/// exponential backoff up to three times.
pub async fn request_token(
    http: &HttpClient,
    endpoint: &Endpoint,
    req: &TokenRequest,
) -> Result<TokenOutcome, TokenError> {
    if endpoint.scheme != Scheme::Https && req.client_secret.is_some() {
        return Err(TokenError::PlaintextCredentials(endpoint.url()));
    }
    let mut attempt = 0;
    let resp = loop {
        let mut http_req = HttpRequest::post_form(endpoint.url(), &req.form());
        if req.present_certificate {
            http_req = http_req.with_identity();
        }
        let resp = http.send(http_req).await?;
        if resp.status == 429 && attempt < MAX_RETRIES {
            tokio::time::sleep(Duration::from_millis(100 << attempt)).await;
            attempt += 1;
            continue;
        }
        break resp;
    };
    let body = resp.json();
    if resp.is_success() {
        let access = body
            .as_ref()
            .and_then(|b| b.get("access_token"))
            .and_then(|t| t.as_str())
            .ok_or(TokenError::NonTokenBody(resp.status))?;
        let token = jwtkit::decode(access)?;
        let granted_scope = match body.as_ref().and_then(|b| b.get("scope")).and_then(|s| s.as_str()) {
            Some(s) => s.split_whitespace().map(str::to_string).collect(),
            None => token.scopes(),
        };
        return Ok(TokenOutcome::Issued(Box::new(IssuedToken {
            token,
            granted_scope,
            certificate_presented: req.present_certificate && http.has_identity(),
            certificate_requested: resp.client_cert_requested,
        })));
    }
    let field = |k: &str| body.as_ref().and_then(|b| b.get(k)).and_then(|v| v.as_str()).map(str::to_string);
    Ok(TokenOutcome::Rejected(Rejection {
        status: resp.status,
        error: field("error").unwrap_or_else(|| format!("http_{}", resp.status)),
        description: field("error_description"),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn secret_never_goes_over_plaintext() {
        let client = OAuthClient {
            client_id: "c".into(),
            client_secret: Some("s".into()),
            ..Default::default()
        };
        // Nothing listens on port 9; the guard fires before any connect.
        let ep = Endpoint::parse_url("http://127.0.0.1:9/token").unwrap();
        let http = HttpClient::new(Duration::from_millis(100));
        let err = request_token(&http, &ep, &TokenRequest::client_credentials(&client))
            .await
            .unwrap_err();
        assert!(matches!(err, TokenError::PlaintextCredentials(_)));
    }
}
