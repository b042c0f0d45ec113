//! Browser-less walk through a web application's authorization-code login.

use url::Url;
use utmsec_manifest::{ComponentSpec, Endpoint};

use crate::engine::AuditContext;
use crate::http::{HttpRequest, HttpResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SetCookie {
    pub name: String,
    pub value: String,
    pub attrs: Vec<String>,
}

impl SetCookie {
    pub fn parse(raw: &str) -> Option<SetCookie> {
        let mut parts = raw.split(';').map(str::trim);
        let (name, value) = parts.next()?.split_once('=')?;
        Some(SetCookie {
            name: name.trim().to_string(),
            value: value.trim().to_string(),
            attrs: parts.filter(|p| !p.is_empty()).map(str::to_string).collect(),
        })
    }

    pub fn has(&self, attr: &str) -> bool {
        self.attrs.iter().any(|a| a.eq_ignore_ascii_case(attr))
    }

    pub fn same_site(&self) -> Option<&str> {
        self.attrs.iter().find_map(|a| {
            let (k, v) = a.split_once('=')?;
            k.trim().eq_ignore_ascii_case("samesite").then_some(v.trim())
        })
    }

    /// Flags missing for a token-bearing cookie.
    pub fn missing_flags(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.has("Secure") {
            out.push("Secure");
        }
        if !self.has("HttpOnly") {
            out.push("HttpOnly");
        }
        if !self.same_site().is_some_and(|s| s.eq_ignore_ascii_case("strict")) {
            out.push("SameSite=Strict");
        }
        out
    }
}

pub(crate) fn set_cookies(resp: &HttpResponse) -> Vec<SetCookie> {
    resp.header_all("set-cookie").filter_map(SetCookie::parse).collect()
}

fn cookie_header(cookies: &[SetCookie]) -> String {
    cookies
        .iter()
        .map(|c| format!("{}={}", c.name, c.value))
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn query_param(url: &Url, name: &str) -> Option<String> {
    url.query_pairs().find(|(k, _)| k == name).map(|(_, v)| v.into_owned())
}

pub(crate) fn web_endpoint<'a>(web: &'a ComponentSpec, name: &str, path: &str) -> Option<&'a Endpoint> {
    web.endpoint(name)
        .or_else(|| web.endpoints.iter().find(|e| e.path.as_deref() == Some(path)))
}

/// State after the web application redirected to the authorization server.
#[derive(Debug, Clone)]
pub(crate) struct LoginStart {
    pub authorize_url: Url,
    pub cookies: Vec<SetCookie>,
    pub state: Option<String>,
    pub client_id: Option<String>,
    pub redirect_uri: Option<String>,
}

pub(crate) async fn start_login(ctx: &AuditContext, web: &ComponentSpec) -> Result<LoginStart, String> {
    let login = web_endpoint(web, "login", "/login")
        .ok_or_else(|| format!("{} declares no login endpoint", web.id))?;
    let resp = ctx
        .http_for(web)
        .send(HttpRequest::get(login.url()))
        .await
        .map_err(|e| format!("GET {}: {e}", login.label()))?;
    if !(300..400).contains(&resp.status) {
        return Err(format!("login answered {} instead of redirecting", resp.status));
    }
    let location = resp
        .header("location")
        .ok_or("login redirect has no Location")?;
    let authorize_url = Url::parse(location).map_err(|e| format!("login redirect target: {e}"))?;
    Ok(LoginStart {
        state: query_param(&authorize_url, "state"),
        client_id: query_param(&authorize_url, "client_id"),
        redirect_uri: query_param(&authorize_url, "redirect_uri"),
        cookies: set_cookies(&resp),
        authorize_url,
    })
}

/// Follows the authorization request; returns the callback URL the server
/// redirected to.
pub(crate) async fn authorize(ctx: &AuditContext, start: &LoginStart) -> Result<Url, String> {
    let server = ctx.manifest.oauth_server();
    let resp = ctx
        .http_for(server)
        .send(HttpRequest::get(start.authorize_url.as_str()))
        .await
        .map_err(|e| format!("authorize request: {e}"))?;
    let location = resp
        .header("location")
        .filter(|_| (300..400).contains(&resp.status))
        .ok_or_else(|| format!("authorize answered {} without redirect", resp.status))?;
    let cb = Url::parse(location).map_err(|e| format!("authorize redirect target: {e}"))?;
    if let Some(err) = query_param(&cb, "error") {
        return Err(format!("authorize returned error {err}"));
    }
    Ok(cb)
}

pub(crate) async fn callback(
    ctx: &AuditContext,
    web: &ComponentSpec,
    url: &Url,
    cookies: &[SetCookie],
) -> Result<HttpResponse, String> {
    let mut req = HttpRequest::get(url.as_str());
    if !cookies.is_empty() {
        req = req.header("cookie", cookie_header(cookies));
    }
    ctx.http_for(web)
        .send(req)
        .await
        .map_err(|e| format!("callback request: {e}"))
}

/// Replaces (or removes) the `state` query parameter.
pub(crate) fn with_state(url: &Url, state: Option<&str>) -> Url {
    let pairs: Vec<(String, String)> = url
        .query_pairs()
        .filter(|(k, _)| k != "state")
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    let mut out = url.clone();
    {
        let mut q = out.query_pairs_mut();
        q.clear();
        for (k, v) in &pairs {
            q.append_pair(k, v);
        }
        if let Some(s) = state {
            q.append_pair("state", s);
        }
    }
    out
}
