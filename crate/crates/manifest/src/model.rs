use std::net::IpAddr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::endpoint::Endpoint;
use crate::role::{expected_zone, ComponentRole, Zone};

/// Fields every log record is expected to carry unless the manifest says
/// otherwise.
pub const DEFAULT_REQUIRED_LOG_FIELDS: [&str; 6] = [
    "timestamp",
    "actor_id",
    "token_subject",
    "action",
    "resource",
    "outcome",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    /// Black-box: only what the network shows.
    #[default]
    Remote,
    /// Authority-level access: storage paths and key stores may be read and
    /// allowlisted source addresses may be bound.
    Introspective,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSpec {
    pub id: String,
    pub role: ComponentRole,
    pub endpoints: Vec<Endpoint>,
    pub declared_encryption_at_rest: Option<String>,
    pub declared_token_lifetime_s: Option<u64>,
    pub storage_path: Option<PathBuf>,
    /// Audience value tokens for this component must carry.
    pub audience: Option<String>,
    /// Strings whose presence in clear at `storage_path` proves plaintext storage.
    pub sentinels: Vec<String>,
}

impl ComponentSpec {
    pub fn new(id: impl Into<String>, role: ComponentRole) -> Self {
        ComponentSpec {
            id: id.into(),
            role,
            endpoints: Vec::new(),
            declared_encryption_at_rest: None,
            declared_token_lifetime_s: None,
            storage_path: None,
            audience: None,
            sentinels: Vec::new(),
        }
    }

    pub fn zone(&self) -> Zone {
        expected_zone(self.role)
    }

    pub fn endpoint(&self, name: &str) -> Option<&Endpoint> {
        self.endpoints.iter().find(|e| e.name.as_deref() == Some(name))
    }
}

/// Credentials the auditor uses to obtain tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OAuthClient {
    pub client_id: String,
    pub client_secret: Option<String>,
    pub certificate: Option<PathBuf>,
    pub private_key: Option<PathBuf>,
    /// Scopes requested for ordinary audit traffic.
    pub scopes: Vec<String>,
}

impl OAuthClient {
    pub fn has_certificate(&self) -> bool {
        self.certificate.is_some() && self.private_key.is_some()
    }
}

/// Onboarding record: the scopes a client is entitled to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub client_id: String,
    pub entitled_scopes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetManifest {
    pub mode: AuditMode,
    pub required_log_fields: Vec<String>,
    pub allowlist_sources: Vec<IpAddr>,
    /// Local address probes bind to when acting as an outside party.
    pub external_source: Option<IpAddr>,
    pub declared_grant_types: Vec<String>,
    pub trust_anchor: Option<PathBuf>,
    pub oauth_client: OAuthClient,
    pub profiles: Vec<Profile>,
    pub components: Vec<ComponentSpec>,
}

impl TargetManifest {
    pub fn component(&self, id: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn by_role(&self, role: ComponentRole) -> impl Iterator<Item = &ComponentSpec> {
        self.components.iter().filter(move |c| c.role == role)
    }

    pub fn has_role(&self, role: ComponentRole) -> bool {
        self.by_role(role).next().is_some()
    }

    /// The single authorization server (guaranteed by validation).
    pub fn oauth_server(&self) -> &ComponentSpec {
        self.by_role(ComponentRole::OAuthServer)
            .next()
            .expect("validated manifest has an oauth-server")
    }

    pub fn is_introspective(&self) -> bool {
        self.mode == AuditMode::Introspective
    }

    /// Storage path of a component, only honoured in introspective mode.
    pub fn readable_storage<'a>(&self, component: &'a ComponentSpec) -> Option<&'a PathBuf> {
        if self.is_introspective() {
            component.storage_path.as_ref()
        } else {
            None
        }
    }
}
