use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;

use proptest::prelude::*;
use utmsec_manifest::{
    parse_manifest, parse_manifest_json, render_json, render_toml, AuditMode, ComponentRole,
    ComponentSpec, Endpoint, OAuthClient, Profile, Scheme, TargetManifest,
};

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,10}"
}

fn endpoint() -> impl Strategy<Value = Endpoint> {
    (
        prop_oneof![Just(Scheme::Http), Just(Scheme::Https), Just(Scheme::Tcp)],
        prop_oneof![Just("127.0.0.1".to_string()), Just("::1".to_string()), ident()],
        1u16..=65535,
        proptest::option::of("/[a-z0-9/]{0,12}"),
        proptest::option::of(ident()),
        proptest::option::of("[a-z]{1,5}\\.[a-z]{1,5}"),
        proptest::collection::btree_map(ident(), "[ -~]{0,8}", 0..3),
        proptest::option::of(ident()),
    )
        .prop_map(|(scheme, host, port, path, name, scope, params, marker)| Endpoint {
            name,
            scheme,
            host,
            port,
            path,
            required_scope: scope,
            params: params.into_iter().collect::<BTreeMap<_, _>>(),
            accept_marker: marker,
        })
}

fn component(id: String, role: ComponentRole) -> impl Strategy<Value = ComponentSpec> {
    (
        proptest::collection::vec(endpoint(), 1..3),
        proptest::option::of(prop_oneof![Just("AES-256".to_string()), Just("AES-128".to_string())]),
        proptest::option::of(1u64..100_000),
        proptest::option::of("[a-z/]{1,12}".prop_map(PathBuf::from)),
        proptest::option::of(ident()),
        proptest::collection::vec("[A-Z_]{1,10}", 0..2),
    )
        .prop_map(move |(endpoints, enc, life, storage, aud, sentinels)| ComponentSpec {
            id: id.clone(),
            role,
            endpoints,
            declared_encryption_at_rest: enc,
            declared_token_lifetime_s: life,
            storage_path: storage,
            audience: aud,
            sentinels,
        })
}

fn manifest() -> impl Strategy<Value = TargetManifest> {
    let roles = proptest::collection::vec(
        proptest::sample::select(ComponentRole::ALL[1..].to_vec()),
        0..5,
    );
    (roles, any::<bool>(), proptest::option::of("[!-~]{1,40}"), any::<bool>())
        .prop_flat_map(|(roles, introspective, secret, with_cert)| {
            let mut comps = vec![component("auth".into(), ComponentRole::OAuthServer).boxed()];
            for (i, role) in roles.into_iter().enumerate() {
                comps.push(component(format!("c{i}"), role).boxed());
            }
            let secret = if secret.is_none() && !with_cert {
                Some("fallback".to_string())
            } else {
                secret
            };
            (
                comps,
                proptest::collection::vec(any::<[u8; 4]>(), 0..3),
                proptest::collection::vec(ident(), 1..4),
                Just((introspective, secret, with_cert)),
            )
        })
        .prop_map(|(components, sources, scopes, (introspective, secret, with_cert))| {
            TargetManifest {
                mode: if introspective { AuditMode::Introspective } else { AuditMode::Remote },
                required_log_fields: vec!["timestamp".into(), "actor_id".into()],
                allowlist_sources: sources
                    .into_iter()
                    .map(|o| IpAddr::V4(Ipv4Addr::from(o)))
                    .collect(),
                external_source: None,
                declared_grant_types: vec!["client_credentials".into()],
                trust_anchor: None,
                oauth_client: OAuthClient {
                    client_id: "uss".into(),
                    client_secret: secret,
                    certificate: with_cert.then(|| PathBuf::from("pki/client.pem")),
                    private_key: with_cert.then(|| PathBuf::from("pki/client.key")),
                    scopes: scopes.clone(),
                },
                profiles: vec![Profile {
                    client_id: "uss".into(),
                    entitled_scopes: scopes,
                }],
                components,
            }
        })
}

proptest! {
    #[test]
    fn parse_inverts_render(m in manifest()) {
        let toml = render_toml(&m);
        prop_assert_eq!(&parse_manifest(toml.as_bytes()).unwrap(), &m, "toml:\n{}", toml);
        let json = render_json(&m);
        prop_assert_eq!(&parse_manifest_json(json.as_bytes()).unwrap(), &m);
    }
}

#[test]
fn documented_example_parses() {
    let text = include_str!("../../../docs/example.manifest");
    let m = parse_manifest(text.as_bytes()).unwrap();
    assert_eq!(m.mode, AuditMode::Remote);
    assert_eq!(m.components.len(), 3);
    let dss = m.component("dss").unwrap();
    assert_eq!(dss.endpoints[0].params.len(), 1);
    assert_eq!(parse_manifest(render_toml(&m).as_bytes()).unwrap(), m);
}
