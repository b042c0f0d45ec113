//! On-disk shape of the manifest. Both the TOML and the JSON rendering go
//! through these structs so the two stay the same schema.

use std::collections::{BTreeMap, HashSet};
use std::net::IpAddr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::endpoint::Endpoint;
use crate::model::{
    AuditMode, ComponentSpec, OAuthClient, Profile, TargetManifest, DEFAULT_REQUIRED_LOG_FIELDS,
};
use crate::role::ComponentRole;
use crate::ManifestError;

fn default_log_fields() -> Vec<String> {
    DEFAULT_REQUIRED_LOG_FIELDS.iter().map(|s| s.to_string()).collect()
}

fn default_grants() -> Vec<String> {
    vec!["client_credentials".to_string()]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawManifest {
    #[serde(default)]
    mode: AuditMode,
    #[serde(default = "default_log_fields")]
    required_log_fields: Vec<String>,
    #[serde(default)]
    allowlist_sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    external_source: Option<String>,
    #[serde(default = "default_grants")]
    declared_grant_types: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trust_anchor: Option<PathBuf>,
    oauth_client: RawClient,
    #[serde(default, rename = "profile", skip_serializing_if = "Vec::is_empty")]
    profiles: Vec<RawProfile>,
    #[serde(default, rename = "component")]
    components: Vec<RawComponent>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClient {
    client_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    client_secret: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    private_key: Option<PathBuf>,
    #[serde(default)]
    scopes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    client_id: String,
    entitled_scopes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    id: String,
    role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    declared_encryption_at_rest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    declared_token_lifetime_s: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    storage_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audience: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sentinels: Vec<String>,
    #[serde(default, rename = "endpoint")]
    endpoints: Vec<RawEndpoint>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    required_scope: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    accept_marker: Option<String>,
}

fn semantic(field: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::Semantic {
        field: field.into(),
        message: message.into(),
    }
}

fn parse_ip(field: String, raw: &str) -> Result<IpAddr, ManifestError> {
    raw.parse()
        .map_err(|_| semantic(field, format!("{raw:?} is not an IP address")))
}

impl RawManifest {
    pub(crate) fn into_manifest(self) -> Result<TargetManifest, ManifestError> {
        let allowlist_sources = self
            .allowlist_sources
            .iter()
            .enumerate()
            .map(|(i, s)| parse_ip(format!("allowlist_sources[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let external_source = self
            .external_source
            .as_deref()
            .map(|s| parse_ip("external_source".into(), s))
            .transpose()?;

        let client = self.oauth_client;
        if client.client_id.trim().is_empty() {
            return Err(semantic("oauth_client.client_id", "must not be empty"));
        }
        if client.certificate.is_some() != client.private_key.is_some() {
            return Err(semantic(
                "oauth_client.certificate",
                "certificate and private_key must be given together",
            ));
        }
        if client.client_secret.is_none() && client.certificate.is_none() {
            return Err(semantic(
                "oauth_client",
                "either client_secret or certificate+private_key is required",
            ));
        }
        if self.declared_grant_types.iter().any(|g| g.trim().is_empty()) {
            return Err(semantic("declared_grant_types", "grant type names must not be empty"));
        }

        let profiles = self
            .profiles
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                if p.client_id.trim().is_empty() {
                    Err(semantic(format!("profile[{i}].client_id"), "must not be empty"))
                } else {
                    Ok(Profile {
                        client_id: p.client_id,
                        entitled_scopes: p.entitled_scopes,
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut seen = HashSet::new();
        let mut components = Vec::with_capacity(self.components.len());
        for (i, raw) in self.components.into_iter().enumerate() {
            let field = |name: &str| format!("component[{i}].{name}");
            if raw.id.trim().is_empty() {
                return Err(semantic(field("id"), "must not be empty"));
            }
            if !seen.insert(raw.id.clone()) {
                return Err(semantic(field("id"), format!("duplicate id {:?}", raw.id)));
            }
            let role: ComponentRole = raw.role.parse().map_err(|e: String| semantic(field("role"), e))?;
            if raw.endpoints.is_empty() && role != ComponentRole::KeyManagement {
                return Err(semantic(
                    field("endpoint"),
                    format!("component {:?} declares no endpoints", raw.id),
                ));
            }
            let endpoints = raw
                .endpoints
                .into_iter()
                .enumerate()
                .map(|(j, e)| {
                    let mut ep = Endpoint::parse_url(&e.url)
                        .map_err(|m| semantic(format!("component[{i}].endpoint[{j}].url"), m))?;
                    ep.name = e.name;
                    ep.required_scope = e.required_scope;
                    ep.params = e.params;
                    ep.accept_marker = e.accept_marker;
                    Ok(ep)
                })
                .collect::<Result<Vec<_>, ManifestError>>()?;
            components.push(ComponentSpec {
                id: raw.id,
                role,
                endpoints,
                declared_encryption_at_rest: raw.declared_encryption_at_rest,
                declared_token_lifetime_s: raw.declared_token_lifetime_s,
                storage_path: raw.storage_path,
                audience: raw.audience,
                sentinels: raw.sentinels,
            });
        }

        let oauth_servers = components
            .iter()
            .filter(|c| c.role == ComponentRole::OAuthServer)
            .count();
        if oauth_servers != 1 {
            return Err(semantic(
                "component",
                format!("exactly one oauth-server component required, found {oauth_servers}"),
            ));
        }

        Ok(TargetManifest {
            mode: self.mode,
            required_log_fields: self.required_log_fields,
            allowlist_sources,
            external_source,
            declared_grant_types: self.declared_grant_types,
            trust_anchor: self.trust_anchor,
            oauth_client: OAuthClient {
                client_id: client.client_id,
                client_secret: client.client_secret,
                certificate: client.certificate,
                private_key: client.private_key,
                scopes: client.scopes,
            },
            profiles,
            components,
        })
    }

    pub(crate) fn from_manifest(m: &TargetManifest) -> RawManifest {
        RawManifest {
            mode: m.mode,
            required_log_fields: m.required_log_fields.clone(),
            allowlist_sources: m.allowlist_sources.iter().map(|a| a.to_string()).collect(),
            external_source: m.external_source.map(|a| a.to_string()),
            declared_grant_types: m.declared_grant_types.clone(),
            trust_anchor: m.trust_anchor.clone(),
            oauth_client: RawClient {
                client_id: m.oauth_client.client_id.clone(),
                client_secret: m.oauth_client.client_secret.clone(),
                certificate: m.oauth_client.certificate.clone(),
                private_key: m.oauth_client.private_key.clone(),
                scopes: m.oauth_client.scopes.clone(),
            },
            profiles: m
                .profiles
                .iter()
                .map(|p| RawProfile {
                    client_id: p.client_id.clone(),
                    entitled_scopes: p.entitled_scopes.clone(),
                })
                .collect(),
            components: m
                .components
                .iter()
                .map(|c| RawComponent {
                    id: c.id.clone(),
                    role: c.role.as_str().to_string(),
                    declared_encryption_at_rest: c.declared_encryption_at_rest.clone(),
                    declared_token_lifetime_s: c.declared_token_lifetime_s,
                    storage_path: c.storage_path.clone(),
                    audience: c.audience.clone(),
                    sentinels: c.sentinels.clone(),
                    endpoints: c
                        .endpoints
                        .iter()
                        .map(|e| RawEndpoint {
                            name: e.name.clone(),
                            url: e.url(),
                            required_scope: e.required_scope.clone(),
                            params: e.params.clone(),
                            accept_marker: e.accept_marker.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
