//! Browser-facing apps: a restricted admin console and a public portal
//! that logs users in through the authorization-code flow with PKCE.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use rand::RngCore;
use serde_json::Value;
use sha2::{Digest, Sha256};
use url::Url;

use crate::oauth::OAuthServer;
use crate::tokens::b64;
use crate::toggles::{Toggle, Toggles};

pub(crate) const PORTAL_CLIENT: &str = "uss-portal";
const LOGIN_COOKIE: &str = "portal_login";

fn with_headers(toggles: &Toggles, mut resp: Response) -> Response {
    if !toggles.on(Toggle::MissingSecurityHeaders) {
        let h = resp.headers_mut();
        h.insert(
            "content-security-policy",
            HeaderValue::from_static("default-src 'self'; frame-ancestors 'none'"),
        );
        h.insert("x-content-type-options", HeaderValue::from_static("nosniff"));
        h.insert("x-frame-options", HeaderValue::from_static("DENY"));
        h.insert("referrer-policy", HeaderValue::from_static("no-referrer"));
    }
    resp
}

pub(crate) fn admin_router(toggles: Toggles) -> Router {
    let page = move || {
        let toggles = toggles.clone();
        async move {
            let body = "<!doctype html><title>UTM admin</title><h1>Operator console</h1>\
                        <p>Subscriptions, participants and key rotation.</p>";
            with_headers(&toggles, Html(body).into_response())
        }
    };
    Router::new().route("/", get(page))
}

struct PendingLogin {
    state: Option<String>,
    verifier: String,
}

#[derive(Clone)]
struct Portal {
    oauth: Arc<OAuthServer>,
    authorize_url: String,
    redirect_uri: String,
    logins: Arc<Mutex<HashMap<String, PendingLogin>>>,
    toggles: Toggles,
}

fn random_token() -> String {
    let mut raw = [0u8; 24];
    rand::thread_rng().fill_bytes(&mut raw);
    b64(&raw)
}

fn cookie(headers: &HeaderMap, name: &str) -> Option<String> {
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|kv| kv.trim().split_once('='))
        .find(|(k, _)| *k == name)
        .map(|(_, v)| v.to_string())
}

async fn home(State(p): State<Portal>) -> Response {
    let script = if p.toggles.on(Toggle::InsecureCookieFlags) {
        "<script>const t = new URLSearchParams(location.hash.slice(1)).get('access_token');\
         if (t) localStorage.setItem('access_token', t);</script>"
    } else {
        ""
    };
    let body = format!(
        "<!doctype html><title>USS portal</title><h1>Flight planning portal</h1>\
         <p><a href=\"/login\">Sign in</a></p>{script}"
    );
    with_headers(&p.toggles, Html(body).into_response())
}

async fn login(State(p): State<Portal>) -> Response {
    let csrf = !p.toggles.on(Toggle::MissingCsrfState);
    let state = csrf.then(random_token);
    let verifier = random_token();
    let challenge = b64(&Sha256::digest(verifier.as_bytes()));
    let id = random_token();

    let mut url = Url::parse(&p.authorize_url).expect("authorize URL parses");
    {
        let mut q = url.query_pairs_mut();
        q.append_pair("response_type", "code");
        q.append_pair("client_id", PORTAL_CLIENT);
        q.append_pair("redirect_uri", &p.redirect_uri);
        q.append_pair("scope", "isa.read");
        if let Some(s) = &state {
            q.append_pair("state", s);
        }
        q.append_pair("code_challenge", &challenge);
        q.append_pair("code_challenge_method", "S256");
    }
    p.logins.lock().unwrap().insert(id.clone(), PendingLogin { state, verifier });
    let set = format!("{LOGIN_COOKIE}={id}; Path=/; Secure; HttpOnly; SameSite=Lax");
    let resp = (StatusCode::FOUND, [(header::LOCATION, url.to_string()), (header::SET_COOKIE, set)]).into_response();
    with_headers(&p.toggles, resp)
}

fn refuse(p: &Portal, why: &str) -> Response {
    with_headers(&p.toggles, (StatusCode::BAD_REQUEST, Html(format!("<p>Login failed: {why}</p>"))).into_response())
}

async fn callback(State(p): State<Portal>, headers: HeaderMap, Query(q): Query<HashMap<String, String>>) -> Response {
    let pending = cookie(&headers, LOGIN_COOKIE).and_then(|id| p.logins.lock().unwrap().remove(&id));
    let Some(pending) = pending else {
        return refuse(&p, "no login in progress");
    };
    if let Some(expected) = &pending.state {
        if q.get("state") != Some(expected) {
            return refuse(&p, "state mismatch");
        }
    }
    let Some(code) = q.get("code") else {
        return refuse(&p, "authorization server returned no code");
    };
    let token = match p.oauth.redeem(code, PORTAL_CLIENT, &p.redirect_uri, &pending.verifier) {
        Ok(v) => v.get("access_token").and_then(Value::as_str).unwrap_or_default().to_string(),
        Err(_) => return refuse(&p, "code redemption failed"),
    };
    let set = if p.toggles.on(Toggle::InsecureCookieFlags) {
        format!("session={token}; Path=/")
    } else {
        format!("session={token}; Path=/; Secure; HttpOnly; SameSite=Strict")
    };
    let resp = (StatusCode::FOUND, [(header::LOCATION, "/".to_string()), (header::SET_COOKIE, set)]).into_response();
    with_headers(&p.toggles, resp)
}

pub(crate) fn portal_router(oauth: Arc<OAuthServer>, authorize_url: String, redirect_uri: String, toggles: Toggles) -> Router {
    let portal = Portal {
        oauth,
        authorize_url,
        redirect_uri,
        logins: Arc::new(Mutex::new(HashMap::new())),
        toggles,
    };
    Router::new()
        .route("/", get(home))
        .route("/login", get(login))
        .route("/callback", get(callback))
        .with_state(portal)
}
