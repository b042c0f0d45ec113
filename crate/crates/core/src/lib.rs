//! Security audit toolkit for InterUSS-style federated UTM deployments.
//!
//! A [`TargetManifest`] describes the deployment; [`engine::run_audit`]
//! executes the registry checks against it and returns a [`engine::Report`].

pub mod engine;
pub mod http;
pub mod jwtkit;
pub mod logaudit;
mod net;
pub mod netprobe;
pub mod oauthaudit;
pub mod sqliprobe;
mod tls;
pub mod tlsaudit;
pub mod webcheck;
mod webflow;

pub use net::SourceBinding;
pub use tls::ClientIdentity;
pub use utmsec_manifest as manifest;
pub use utmsec_manifest::TargetManifest;
