//! Declarative description of a deployment under audit.
//!
//! The manifest tells every probe which components exist, where they listen,
//! which credentials the auditor holds and what the deployment claims about
//! itself (encryption at rest, token lifetime, granted scopes). It is written
//! as TOML:
//!
//! ```toml
//! mode = "remote"                    # or "introspective"
//! allowlist_sources = ["10.0.0.5"]   # sources allowed to reach restricted services
//! declared_grant_types = ["client_credentials"]
//!
//! [oauth_client]
//! client_id = "uss-alpha"
//! client_secret = "..."              # and/or certificate + private_key (PEM paths)
//! scopes = ["isa.read"]
//!
//! [[component]]
//! id = "auth"
//! role = "oauth-server"
//!
//! [[component.endpoint]]
//! name = "token"
//! url = "https://auth.example:443/oauth/token"
//! ```
//!
//! [`render_json`] produces the same schema as JSON.

mod endpoint;
mod model;
mod raw;
mod role;

use std::path::{Path, PathBuf};

pub use endpoint::{Endpoint, Scheme};
pub use model::{
    AuditMode, ComponentSpec, OAuthClient, Profile, TargetManifest, DEFAULT_REQUIRED_LOG_FIELDS,
};
pub use role::{expected_zone, ComponentRole, Zone};

use raw::RawManifest;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest syntax error: {0}")]
    Syntax(String),
    #[error("invalid manifest field {field}: {message}")]
    Semantic { field: String, message: String },
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ManifestError {
    /// Offending field for semantic errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            ManifestError::Semantic { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// Parses manifest text (TOML). Defaults are applied and every structural
/// invariant is checked.
pub fn parse_manifest(bytes: &[u8]) -> Result<TargetManifest, ManifestError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ManifestError::Syntax(format!("manifest is not UTF-8: {e}")))?;
    let raw: RawManifest = toml::from_str(text).map_err(|e| ManifestError::Syntax(e.to_string()))?;
    raw.into_manifest()
}

/// Parses the JSON rendering.
pub fn parse_manifest_json(bytes: &[u8]) -> Result<TargetManifest, ManifestError> {
    let raw: RawManifest =
        serde_json::from_slice(bytes).map_err(|e| ManifestError::Syntax(e.to_string()))?;
    raw.into_manifest()
}

/// Reads a manifest file; relative paths inside it resolve against the
/// file's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<TargetManifest, ManifestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut manifest = if path.extension().is_some_and(|e| e == "json") {
        parse_manifest_json(&bytes)?
    } else {
        parse_manifest(&bytes)?
    };
    if let Some(base) = path.parent() {
        resolve_paths(&mut manifest, base);
    }
    Ok(manifest)
}

fn resolve_paths(m: &mut TargetManifest, base: &Path) {
    let fix = |p: &mut Option<PathBuf>| {
        if let Some(inner) = p {
            if inner.is_relative() {
                *inner = base.join(&*inner);
            }
        }
    };
    fix(&mut m.trust_anchor);
    fix(&mut m.oauth_client.certificate);
    fix(&mut m.oauth_client.private_key);
    for c in &mut m.components {
        fix(&mut c.storage_path);
    }
}

pub fn render_toml(manifest: &TargetManifest) -> String {
    toml::to_string(&RawManifest::from_manifest(manifest)).expect("manifest renders as TOML")
}

pub fn render_json(manifest: &TargetManifest) -> String {
    serde_json::to_string_pretty(&RawManifest::from_manifest(manifest))
        .expect("manifest renders as JSON")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[oauth_client]
client_id = "uss-alpha"
client_secret = "s3cret"

[[component]]
id = "auth"
role = "oauth-server"
[[component.endpoint]]
name = "token"
url = "https://127.0.0.1:8443/token"

[[component]]
id = "gw"
role = "https-gateway"
[[component.endpoint]]
url = "https://127.0.0.1:8444/v1/isa"
"#;

    #[test]
    fn minimal_manifest_gets_defaults() {
        let m = parse_manifest(MINIMAL.as_bytes()).unwrap();
        assert_eq!(m.components.len(), 2);
        assert_eq!(m.mode, AuditMode::Remote);
        assert_eq!(m.required_log_fields, DEFAULT_REQUIRED_LOG_FIELDS.map(String::from));
        assert_eq!(m.declared_grant_types, vec!["client_credentials"]);
        assert_eq!(m.oauth_server().id, "auth");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = MINIMAL.replace("id = \"gw\"", "id = \"dss-1\"").replace("id = \"auth\"", "id = \"dss-1\"");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
        assert_eq!(err.field(), Some("component[1].id"));
    }

    #[test]
    fn missing_oauth_server_is_rejected() {
        let text = MINIMAL.replace("oauth-server", "https-gateway");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("exactly one oauth-server"), "{err}");
    }

    #[test]
    fn bad_port_names_the_endpoint_field() {
        let text = MINIMAL.replace(":8444", ":0");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("component[1].endpoint[0].url"));
    }

    #[test]
    fn endpoint_less_component_only_allowed_for_key_management() {
        let extra = "\n[[component]]\nid = \"kms\"\nrole = \"key-management\"\n";
        assert!(parse_manifest(format!("{MINIMAL}{extra}").as_bytes()).is_ok());
        let extra = "\n[[component]]\nid = \"db\"\nrole = \"db-node\"\n";
        let err = parse_manifest(format!("{MINIMAL}{extra}").as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("component[2].endpoint"));
    }

    #[test]
    fn syntax_errors_are_distinguished() {
        let err = parse_manifest(b"[oauth_client\nclient_id=").unwrap_err();
        assert!(matches!(err, ManifestError::Syntax(_)));
        let err = parse_manifest(b"bogus_key = 1\n[oauth_client]\nclient_id='a'\nclient_secret='b'\n").unwrap_err();
        assert!(matches!(err, ManifestError::Syntax(_)), "{err}");
    }

    #[test]
    fn credentials_must_be_complete() {
        let text = MINIMAL.replace("client_secret = \"s3cret\"", "certificate = \"client.pem\"");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("oauth_client.certificate"));
        let text = MINIMAL.replace("client_secret = \"s3cret\"", "");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("oauth_client"));
    }

    #[test]
    fn json_and_toml_renderings_agree() {
        let m = parse_manifest(MINIMAL.as_bytes()).unwrap();
        assert_eq!(parse_manifest(render_toml(&m).as_bytes()).unwrap(), m);
        assert_eq!(parse_manifest_json(render_json(&m).as_bytes()).unwrap(), m);
    }
}
