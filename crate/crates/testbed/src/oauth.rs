//! Authorization server: `POST /token`, `GET /authorize`,
//! `GET /.well-known/jwks.json`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::RngCore;
use rsa::pkcs8::{EncodePrivateKey, LineEnding};
use rsa::traits::{PrivateKeyParts, PublicKeyParts};
use rsa::RsaPrivateKey;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use url::Url;

use crate::serve::Peer;
use crate::tokens::{b64, now, Issuer};
use crate::toggles::{Toggle, Toggles};

pub(crate) const PBKDF2_ROUNDS: u32 = 50_000;
const CODE_TTL: Duration = Duration::from_secs(60);

/// How a client secret sits in the credential store.
#[derive(Clone)]
pub(crate) enum StoredSecret {
    Pbkdf2 { salt: [u8; 16], hash: [u8; 32] },
    Plain(String),
}

impl StoredSecret {
    pub fn hashed(secret: &str, salt: [u8; 16]) -> Self {
        StoredSecret::Pbkdf2 { salt, hash: pbkdf2_hash(secret, &salt) }
    }

    /// One credential-store line.
    pub fn render(&self, client_id: &str) -> String {
        match self {
            StoredSecret::Pbkdf2 { salt, hash } => format!(
                "{client_id}:pbkdf2-sha256${PBKDF2_ROUNDS}${}${}",
                hex::encode(salt),
                hex::encode(hash)
            ),
            StoredSecret::Plain(s) => format!("{client_id}:plain${s}"),
        }
    }

    fn matches(&self, presented: &str) -> bool {
        match self {
            StoredSecret::Pbkdf2 { salt, hash } => ct_eq(&pbkdf2_hash(presented, salt), hash),
            StoredSecret::Plain(s) => ct_eq(s.as_bytes(), presented.as_bytes()),
        }
    }
}

fn pbkdf2_hash(secret: &str, salt: &[u8]) -> [u8; 32] {
    pbkdf2::pbkdf2_hmac_array::<Sha256, 32>(secret.as_bytes(), salt, PBKDF2_ROUNDS)
}

fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Clone)]
pub(crate) struct Client {
    pub id: String,
    pub secret: Option<StoredSecret>,
    pub cert_thumbprint: Option<[u8; 32]>,
    pub scopes: Vec<String>,
    pub grants: Vec<&'static str>,
    pub redirect_uris: Vec<String>,
}

struct PendingCode {
    client_id: String,
    redirect_uri: String,
    challenge: String,
    scopes: Vec<String>,
    issued: Instant,
}

pub(crate) struct OAuthServer {
    pub issuer: String,
    pub signer: Issuer,
    pub rsa: RsaPrivateKey,
    pub lifetime_s: i64,
    pub audiences: Vec<String>,
    pub clients: HashMap<String, Client>,
    /// username to password, for the password grant.
    pub users: HashMap<String, String>,
    pub toggles: Toggles,
    codes: Mutex<HashMap<String, PendingCode>>,
    /// Digests of secrets already checked, so PBKDF2 runs once per secret.
    verified: Mutex<HashSet<[u8; 32]>>,
    jti: AtomicU64,
}

#[derive(Debug)]
pub(crate) struct OAuthError {
    status: StatusCode,
    code: &'static str,
    description: String,
}

fn err(status: StatusCode, code: &'static str, description: impl Into<String>) -> OAuthError {
    OAuthError { status, code, description: description.into() }
}

impl IntoResponse for OAuthError {
    fn into_response(self) -> Response {
        (
            self.status,
            [(header::CACHE_CONTROL, "no-store")],
            Json(json!({ "error": self.code, "error_description": self.description })),
        )
            .into_response()
    }
}

impl OAuthServer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        issuer: String,
        signer: Issuer,
        rsa: RsaPrivateKey,
        lifetime_s: i64,
        audiences: Vec<String>,
        clients: Vec<Client>,
        users: HashMap<String, String>,
        toggles: Toggles,
    ) -> Self {
        OAuthServer {
            issuer,
            signer,
            rsa,
            lifetime_s,
            audiences,
            clients: clients.into_iter().map(|c| (c.id.clone(), c)).collect(),
            users,
            toggles,
            codes: Mutex::new(HashMap::new()),
            verified: Mutex::new(HashSet::new()),
            jti: AtomicU64::new(1),
        }
    }

    fn authenticate(&self, form: &BTreeMap<String, String>, headers: &HeaderMap) -> Result<&Client, OAuthError> {
        let basic = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Basic "))
            .and_then(|b| STANDARD.decode(b.trim()).ok())
            .and_then(|b| String::from_utf8(b).ok())
            .and_then(|s| s.split_once(':').map(|(u, p)| (u.to_string(), p.to_string())));
        let (id, secret) = match basic {
            Some((u, p)) => (u, Some(p)),
            None => (
                form.get("client_id").cloned().unwrap_or_default(),
                form.get("client_secret").cloned(),
            ),
        };
        let invalid = || err(StatusCode::UNAUTHORIZED, "invalid_client", "client authentication failed");
        let client = self.clients.get(&id).ok_or_else(invalid)?;
        let stored = client.secret.as_ref().ok_or_else(invalid)?;
        let presented = secret.ok_or_else(invalid)?;
        let digest: [u8; 32] = Sha256::new()
            .chain_update(id.as_bytes())
            .chain_update([0])
            .chain_update(presented.as_bytes())
            .finalize()
            .into();
        if self.verified.lock().unwrap().contains(&digest) {
            return Ok(client);
        }
        if !stored.matches(&presented) {
            return Err(invalid());
        }
        self.verified.lock().unwrap().insert(digest);
        Ok(client)
    }

    fn scopes(&self, requested: Option<&String>, client: &Client) -> Result<Vec<String>, OAuthError> {
        let requested: Vec<String> = requested
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default();
        if requested.is_empty() {
            return Ok(client.scopes.clone());
        }
        match requested.iter().find(|s| !client.scopes.contains(s)) {
            Some(s) => Err(err(StatusCode::BAD_REQUEST, "invalid_scope", format!("scope {s} not registered for client"))),
            None => Ok(requested),
        }
    }

    fn audience(&self, requested: Option<&String>) -> Result<String, OAuthError> {
        let aud = requested.cloned().unwrap_or_else(|| self.audiences[0].clone());
        if self.audiences.contains(&aud) {
            Ok(aud)
        } else {
            Err(err(StatusCode::BAD_REQUEST, "invalid_target", format!("unknown audience {aud}")))
        }
    }

    fn issue(&self, sub: &str, aud: &str, scopes: &[String], cnf: Option<&[u8]>) -> Value {
        let iat = now();
        let mut claims = json!({
            "iss": self.issuer,
            "sub": sub,
            "aud": aud,
            "scope": scopes.join(" "),
            "iat": iat,
            "exp": iat + self.lifetime_s,
            "jti": format!("tb-{}", self.jti.fetch_add(1, Ordering::Relaxed)),
        });
        if let Some(der) = cnf {
            claims["cnf"] = json!({ "x5t#S256": b64(&Sha256::digest(der)) });
        }
        json!({
            "access_token": self.signer.sign(&claims),
            "token_type": "Bearer",
            "expires_in": self.lifetime_s,
            "scope": scopes.join(" "),
        })
    }

    fn client_credentials(&self, form: &BTreeMap<String, String>, headers: &HeaderMap, peer: &Peer) -> Result<Value, OAuthError> {
        let client = self.authenticate(form, headers)?;
        if !client.grants.contains(&"client_credentials") {
            return Err(err(StatusCode::BAD_REQUEST, "unauthorized_client", "grant not allowed for this client"));
        }
        if let Some(expected) = &client.cert_thumbprint {
            let presented = peer.cert.as_deref().map(|d| <[u8; 32]>::from(Sha256::digest(d)));
            if presented.as_ref() != Some(expected) && !self.toggles.on(Toggle::NoClientCertBinding) {
                return Err(err(StatusCode::UNAUTHORIZED, "invalid_client", "registered client certificate not presented"));
            }
        }
        let scopes = self.scopes(form.get("scope"), client)?;
        let aud = self.audience(form.get("audience"))?;
        Ok(self.issue(&client.id, &aud, &scopes, peer.cert.as_deref()))
    }

    fn password(&self, form: &BTreeMap<String, String>, headers: &HeaderMap) -> Result<Value, OAuthError> {
        let client = self.authenticate(form, headers)?;
        if !client.grants.contains(&"password") {
            return Err(err(StatusCode::BAD_REQUEST, "unauthorized_client", "grant not allowed for this client"));
        }
        let user = form.get("username").map(String::as_str).unwrap_or_default();
        let pass = form.get("password").map(String::as_str).unwrap_or_default();
        match self.users.get(user) {
            Some(p) if ct_eq(p.as_bytes(), pass.as_bytes()) => {}
            _ => return Err(err(StatusCode::BAD_REQUEST, "invalid_grant", "bad resource owner credentials")),
        }
        let scopes = self.scopes(form.get("scope"), client)?;
        let aud = self.audience(form.get("audience"))?;
        Ok(self.issue(user, &aud, &scopes, None))
    }

    /// Redeems an authorization code (PKCE S256). Also used in-process by
    /// the portal's callback.
    pub fn redeem(&self, code: &str, client_id: &str, redirect_uri: &str, verifier: &str) -> Result<Value, OAuthError> {
        let invalid = |why: &str| err(StatusCode::BAD_REQUEST, "invalid_grant", why.to_string());
        let pending = self.codes.lock().unwrap().remove(code).ok_or_else(|| invalid("unknown or used code"))?;
        if pending.issued.elapsed() > CODE_TTL {
            return Err(invalid("code expired"));
        }
        if pending.client_id != client_id || pending.redirect_uri != redirect_uri {
            return Err(invalid("code issued to another client or redirect_uri"));
        }
        if b64(&Sha256::digest(verifier.as_bytes())) != pending.challenge {
            return Err(invalid("PKCE verification failed"));
        }
        Ok(self.issue(client_id, &self.audiences[0], &pending.scopes, None))
    }

    fn jwks(&self) -> Value {
        let public = self.rsa.to_public_key();
        let enc = |n: &rsa::BigUint| b64(&n.to_bytes_be());
        let mut jwk = json!({
            "kty": "RSA",
            "use": "sig",
            "alg": "RS256",
            "kid": crate::RSA_KID,
            "n": enc(public.n()),
            "e": enc(public.e()),
        });
        if self.toggles.on(Toggle::JwksPrivateFields) {
            let primes = self.rsa.primes();
            jwk["d"] = enc(self.rsa.d()).into();
            jwk["p"] = enc(&primes[0]).into();
            jwk["q"] = enc(&primes[1]).into();
            if let (Some(dp), Some(dq)) = (self.rsa.dp(), self.rsa.dq()) {
                jwk["dp"] = enc(dp).into();
                jwk["dq"] = enc(dq).into();
            }
            if let Some(qi) = self.rsa.crt_coefficient() {
                jwk["qi"] = enc(&qi).into();
            }
        }
        json!({ "keys": [jwk] })
    }
}

fn parse_form(body: &[u8]) -> BTreeMap<String, String> {
    url::form_urlencoded::parse(body).into_owned().collect()
}

async fn token(
    State(srv): State<Arc<OAuthServer>>,
    Extension(peer): Extension<Peer>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Response {
    let form = parse_form(&body);
    let result = match form.get("grant_type").map(String::as_str) {
        Some("client_credentials") => srv.client_credentials(&form, &headers, &peer),
        Some("password") if srv.toggles.on(Toggle::EnablePasswordGrant) => srv.password(&form, &headers),
        Some("authorization_code") => {
            let f = |k: &str| form.get(k).map(String::as_str).unwrap_or_default();
            srv.redeem(f("code"), f("client_id"), f("redirect_uri"), f("code_verifier"))
        }
        Some(_) => Err(err(StatusCode::BAD_REQUEST, "unsupported_grant_type", "grant type not supported")),
        None => Err(err(StatusCode::BAD_REQUEST, "invalid_request", "grant_type missing")),
    };
    match result {
        Ok(v) => ([(header::CACHE_CONTROL, "no-store")], Json(v)).into_response(),
        Err(e) => e.into_response(),
    }
}

fn redirect(to: &str, pairs: &[(&str, &str)]) -> Response {
    let mut url = Url::parse(to).expect("registered redirect URIs parse");
    url.query_pairs_mut().extend_pairs(pairs);
    (StatusCode::FOUND, [(header::LOCATION, url.to_string())]).into_response()
}

/// Auto-approves: the testbed has no resource owner to ask.
async fn authorize(State(srv): State<Arc<OAuthServer>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let get = |k: &str| q.get(k).map(String::as_str);
    let Some(client) = get("client_id").and_then(|c| srv.clients.get(c)) else {
        return err(StatusCode::BAD_REQUEST, "invalid_client", "unknown client_id").into_response();
    };
    let redirect_uri = match get("redirect_uri") {
        None => client.redirect_uris.first().cloned(),
        Some(r) => client.redirect_uris.iter().find(|u| *u == r).cloned(),
    };
    let Some(redirect_uri) = redirect_uri else {
        return err(StatusCode::BAD_REQUEST, "invalid_request", "redirect_uri not registered").into_response();
    };
    let mut back: Vec<(&str, &str)> = Vec::new();
    if let Some(s) = get("state") {
        back.push(("state", s));
    }
    let fail = |code: &'static str, mut back: Vec<(&str, &str)>| {
        back.insert(0, ("error", code));
        redirect(&redirect_uri, &back)
    };
    if get("response_type") != Some("code") {
        return fail("unsupported_response_type", back);
    }
    if !client.grants.contains(&"authorization_code") {
        return fail("unauthorized_client", back);
    }
    let (Some(challenge), Some("S256")) = (get("code_challenge"), get("code_challenge_method")) else {
        return fail("invalid_request", back);
    };
    let scopes = match srv.scopes(q.get("scope"), client) {
        Ok(s) => s,
        Err(_) => return fail("invalid_scope", back),
    };
    let mut raw = [0u8; 24];
    rand::thread_rng().fill_bytes(&mut raw);
    let code = b64(&raw);
    srv.codes.lock().unwrap().insert(
        code.clone(),
        PendingCode {
            client_id: client.id.clone(),
            redirect_uri: redirect_uri.clone(),
            challenge: challenge.to_string(),
            scopes,
            issued: Instant::now(),
        },
    );
    back.insert(0, ("code", &code));
    redirect(&redirect_uri, &back)
}

async fn jwks(State(srv): State<Arc<OAuthServer>>) -> Response {
    Json(srv.jwks()).into_response()
}

async fn private_pem(State(srv): State<Arc<OAuthServer>>) -> Response {
    let pem = srv.rsa.to_pkcs8_pem(LineEnding::LF).expect("RSA key encodes");
    ([(header::CONTENT_TYPE, "application/x-pem-file")], pem.to_string()).into_response()
}

pub(crate) fn router(srv: Arc<OAuthServer>) -> Router {
    let mut r = Router::new()
        .route("/token", post(token))
        .route("/authorize", get(authorize))
        .route("/.well-known/jwks.json", get(jwks));
    if srv.toggles.on(Toggle::ExposePrivateKey) {
        r = r.route("/private.pem", get(private_pem));
    }
    r.with_state(srv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_secrets() {
        let h = StoredSecret::hashed("s3cret", [7; 16]);
        assert!(h.matches("s3cret"));
        assert!(!h.matches("s3cre"));
        let line = h.render("c");
        assert!(line.starts_with("c:pbkdf2-sha256$50000$"));
        assert!(!line.contains("s3cret"));
        assert_eq!(StoredSecret::Plain("x".into()).render("c"), "c:plain$x");
    }
}
