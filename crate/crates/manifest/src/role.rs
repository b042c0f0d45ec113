use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The function a component serves in the federated deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentRole {
    OAuthServer,
    HttpsGateway,
    DbNode,
    LogRepository,
    KeyManagement,
    WebAppPublic,
    WebAppAdmin,
    UssMock,
}

/// Network visibility zone a component is expected to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Zone {
    Public,
    Restricted,
}

impl ComponentRole {
    pub const ALL: [ComponentRole; 8] = [
        ComponentRole::OAuthServer,
        ComponentRole::HttpsGateway,
        ComponentRole::DbNode,
        ComponentRole::LogRepository,
        ComponentRole::KeyManagement,
        ComponentRole::WebAppPublic,
        ComponentRole::WebAppAdmin,
        ComponentRole::UssMock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentRole::OAuthServer => "oauth-server",
            ComponentRole::HttpsGateway => "https-gateway",
            ComponentRole::DbNode => "db-node",
            ComponentRole::LogRepository => "log-repository",
            ComponentRole::KeyManagement => "key-management",
            ComponentRole::WebAppPublic => "web-app-public",
            ComponentRole::WebAppAdmin => "web-app-admin",
            ComponentRole::UssMock => "uss-mock",
        }
    }

    /// True for roles that serve a browser-facing web interface.
    pub fn is_web_app(self) -> bool {
        matches!(self, ComponentRole::WebAppPublic | ComponentRole::WebAppAdmin)
    }
}

impl fmt::Display for ComponentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ComponentRole::ALL.iter().map(|r| r.as_str()).collect();
                format!("unknown role {s:?} (expected one of {})", known.join(", "))
            })
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zone::Public => "public",
            Zone::Restricted => "restricted",
        })
    }
}

/// Zone each role must be placed in.
///
/// Authorization servers, gateways and public web applications have to be
/// reachable for the ecosystem to interoperate. Log repositories, key
/// management, database nodes and administrative web interfaces must only be
/// reachable from allowlisted sources. USS mocks stand in for external
/// suppliers and therefore sit in the public zone.
pub fn expected_zone(role: ComponentRole) -> Zone {
    match role {
        ComponentRole::OAuthServer
        | ComponentRole::HttpsGateway
        | ComponentRole::WebAppPublic
        | ComponentRole::UssMock => Zone::Public,
        ComponentRole::LogRepository
        | ComponentRole::KeyManagement
        | ComponentRole::DbNode
        | ComponentRole::WebAppAdmin => Zone::Restricted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zones_match_visibility_table() {
        assert_eq!(expected_zone(ComponentRole::OAuthServer), Zone::Public);
        assert_eq!(expected_zone(ComponentRole::HttpsGateway), Zone::Public);
        assert_eq!(expected_zone(ComponentRole::WebAppPublic), Zone::Public);
        assert_eq!(expected_zone(ComponentRole::DbNode), Zone::Restricted);
        assert_eq!(expected_zone(ComponentRole::LogRepository), Zone::Restricted);
        assert_eq!(expected_zone(ComponentRole::KeyManagement), Zone::Restricted);
        assert_eq!(expected_zone(ComponentRole::WebAppAdmin), Zone::Restricted);
    }

    #[test]
    fn role_names_round_trip() {
        for role in ComponentRole::ALL {
            assert_eq!(role.as_str().parse::<ComponentRole>().unwrap(), role);
        }
        assert!("dss".parse::<ComponentRole>().is_err());
    }
}
