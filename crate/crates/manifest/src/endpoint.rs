use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Http,
    Https,
    Tcp,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Http => "http",
            Scheme::Https => "https",
            Scheme::Tcp => "tcp",
        }
    }

    pub fn is_http(self) -> bool {
        matches!(self, Scheme::Http | Scheme::Https)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(Scheme::Http),
            "https" => Ok(Scheme::Https),
            "tcp" => Ok(Scheme::Tcp),
            other => Err(format!("unsupported scheme {other:?} (expected http, https or tcp)")),
        }
    }
}

/// One network-reachable surface of a component.
///
/// `required_scope` marks the endpoint as token-accepting: it expects a bearer
/// token carrying that scope. `params` lists injectable query parameters with
/// a benign value the endpoint is known to answer for. `accept_marker`, when
/// present, must appear in a response body for the request to count as
/// accepted (services differ in how they signal rejection).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub name: Option<String>,
    pub scheme: Scheme,
    pub host: String,
    pub port: u16,
    pub path: Option<String>,
    pub required_scope: Option<String>,
    pub params: BTreeMap<String, String>,
    pub accept_marker: Option<String>,
}

impl Endpoint {
    pub fn new(scheme: Scheme, host: impl Into<String>, port: u16) -> Self {
        Endpoint {
            name: None,
            scheme,
            host: host.into(),
            port,
            path: None,
            required_scope: None,
            params: BTreeMap::new(),
            accept_marker: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    /// Parses `scheme://host:port[/path]`.
    pub fn parse_url(raw: &str) -> Result<Endpoint, String> {
        let (scheme, rest) = raw
            .split_once("://")
            .ok_or_else(|| format!("{raw:?} is not a URL of the form scheme://host:port[/path]"))?;
        let scheme: Scheme = scheme.parse()?;
        if rest.contains(['?', '#']) {
            return Err(format!("{raw:?}: query strings and fragments are not allowed"));
        }
        let (authority, path) = match rest.find('/') {
            Some(i) => (&rest[..i], Some(rest[i..].to_string())),
            None => (rest, None),
        };
        let (host, port) = split_host_port(authority)
            .ok_or_else(|| format!("{raw:?}: missing explicit port"))?;
        if host.is_empty() {
            return Err(format!("{raw:?}: empty host"));
        }
        let port: u32 = port
            .parse()
            .map_err(|_| format!("{raw:?}: port {port:?} is not a number"))?;
        if !(1..=65535).contains(&port) {
            return Err(format!("{raw:?}: port {port} outside 1-65535"));
        }
        let mut ep = Endpoint::new(scheme, host, port as u16);
        ep.path = path;
        Ok(ep)
    }

    /// `host:port`, bracketing IPv6 literals.
    pub fn authority(&self) -> String {
        if self.host.contains(':') {
            format!("[{}]:{}", self.host, self.port)
        } else {
            format!("{}:{}", self.host, self.port)
        }
    }

    pub fn origin(&self) -> String {
        format!("{}://{}", self.scheme, self.authority())
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.origin(), self.path.as_deref().unwrap_or(""))
    }

    /// Name when declared, URL otherwise.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.url())
    }

    pub fn accepts_token(&self) -> bool {
        self.required_scope.is_some()
    }
}

fn split_host_port(authority: &str) -> Option<(&str, &str)> {
    if let Some(rest) = authority.strip_prefix('[') {
        let (host, tail) = rest.split_once(']')?;
        let port = tail.strip_prefix(':')?;
        Some((host, port))
    } else {
        authority.rsplit_once(':')
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.url())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_https_with_path() {
        let ep = Endpoint::parse_url("https://127.0.0.1:18400/token").unwrap();
        assert_eq!(ep.scheme, Scheme::Https);
        assert_eq!(ep.host, "127.0.0.1");
        assert_eq!(ep.port, 18400);
        assert_eq!(ep.path.as_deref(), Some("/token"));
        assert_eq!(ep.url(), "https://127.0.0.1:18400/token");
    }

    #[test]
    fn parses_tcp_and_ipv6() {
        let ep = Endpoint::parse_url("tcp://[::1]:26257").unwrap();
        assert_eq!(ep.host, "::1");
        assert_eq!(ep.authority(), "[::1]:26257");
        assert_eq!(ep.url(), "tcp://[::1]:26257");
    }

    #[test]
    fn rejects_bad_ports_and_schemes() {
        assert!(Endpoint::parse_url("https://h:0/").unwrap_err().contains("outside"));
        assert!(Endpoint::parse_url("https://h:70000").unwrap_err().contains("outside"));
        assert!(Endpoint::parse_url("https://h").unwrap_err().contains("port"));
        assert!(Endpoint::parse_url("ftp://h:21").unwrap_err().contains("scheme"));
        assert!(Endpoint::parse_url("https://h:1/x?y=1").is_err());
    }
}
