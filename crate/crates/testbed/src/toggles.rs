use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

macro_rules! toggles {
    ($($variant:ident => $name:literal, $what:literal;)*) => {
        /// A named, independently switchable weakness.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Toggle {
            $($variant,)*
        }

        impl Toggle {
            pub const ALL: &'static [Toggle] = &[$(Toggle::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Toggle::$variant => $name,)*
                }
            }

            pub fn description(self) -> &'static str {
                match self {
                    $(Toggle::$variant => $what,)*
                }
            }
        }
    };
}

toggles! {
    PlaintextDbnode => "plaintext-dbnode", "database nodes talk plaintext instead of mTLS";
    Tls12Dbnode => "tls12-dbnode", "node-2 serves TLS 1.2";
    ExposeDbnode => "expose-dbnode", "database nodes accept any source address";
    AcceptNoneAlg => "accept-none-alg", "resource servers accept alg=none tokens";
    AcceptAlgConfusion => "accept-alg-confusion", "HS256 tokens keyed with the RSA public key PEM are accepted";
    SkipSignatureCheck => "skip-signature-check", "token signatures are not verified";
    AcceptExpired => "accept-expired", "exp is not enforced";
    LongExpiry => "long-expiry", "tokens live 3600 s";
    WeakAlgHs256Default => "weak-alg-hs256-default", "tokens are signed HS256 with a shared secret";
    ExposePrivateKey => "expose-private-key", "signing key served at /private.pem";
    JwksPrivateFields => "jwks-private-fields", "JWKS includes private RSA members";
    NoScopeCheck => "no-scope-check", "resource servers ignore scope";
    NoAudienceCheck => "no-audience-check", "resource servers ignore aud";
    InsecureCookieFlags => "insecure-cookie-flags", "portal session cookie lacks flags and the page keeps tokens in localStorage";
    EnablePasswordGrant => "enable-password-grant", "token endpoint serves the password grant";
    WeakSecret => "weak-secret", "client secret is 16 hex characters";
    PlaintextSecretStore => "plaintext-secret-store", "credential store keeps secrets in clear";
    OverScopedProfile => "over-scoped-profile", "client registered with dss.admin beyond its entitlement";
    NoClientCertBinding => "no-client-cert-binding", "tokens issued without the registered client certificate";
    MissingCsrfState => "missing-csrf-state", "portal login sends and checks no state";
    StringConcatQuery => "string-concat-query", "ISA search builds SQL by string concatenation";
    NoAtRestEncryption => "no-at-rest-encryption", "ISA store written in clear";
    AtRestAes128 => "at-rest-aes128", "ISA store encrypted with AES-128-GCM";
    AllowLogDelete => "allow-log-delete", "log records can be deleted";
    AllowLogOverwrite => "allow-log-overwrite", "log records can be overwritten";
    BrokenHashChain => "broken-hash-chain", "appends with an arbitrary link are accepted";
    CoarseLogs => "coarse-logs", "log records omit actor_id and token_subject";
    PublicLogRead => "public-log-read", "log repository readable without a token";
    MissingSecurityHeaders => "missing-security-headers", "web apps send no security headers";
}

impl fmt::Display for Toggle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown toggle {0:?} (see `utmsec testbed toggles`)")]
pub struct UnknownToggle(pub String);

impl FromStr for Toggle {
    type Err = UnknownToggle;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Toggle::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| UnknownToggle(s.to_string()))
    }
}

/// Parses comma-separated toggle names; blanks are ignored.
pub fn parse_toggles(list: &str) -> Result<BTreeSet<Toggle>, UnknownToggle> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Secure,
    PaperPoc,
    AllVulnerable,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Secure, Profile::PaperPoc, Profile::AllVulnerable];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Secure => "secure",
            Profile::PaperPoc => "paper-poc",
            Profile::AllVulnerable => "all-vulnerable",
        }
    }

    pub fn toggles(self) -> BTreeSet<Toggle> {
        match self {
            Profile::Secure => BTreeSet::new(),
            Profile::PaperPoc => [
                Toggle::PlaintextDbnode,
                Toggle::EnablePasswordGrant,
                Toggle::ExposePrivateKey,
            ]
            .into(),
            Profile::AllVulnerable => Toggle::ALL.iter().copied().collect(),
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown profile {s:?} (expected secure, paper-poc or all-vulnerable)"))
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const MATRIX_TOML: &str = include_str!("../data/toggle-matrix.toml");

#[derive(Deserialize)]
struct MatrixFile {
    toggles: BTreeMap<String, Vec<String>>,
}

/// Toggle name to the check ids it flips, from the shipped fixture.
pub fn toggle_matrix() -> BTreeMap<String, Vec<String>> {
    toml::from_str::<MatrixFile>(MATRIX_TOML)
        .expect("shipped toggle matrix parses")
        .toggles
}

/// Lookup helper the services consult.
#[derive(Debug, Clone, Default)]
pub(crate) struct Toggles(BTreeSet<Toggle>);

impl Toggles {
    pub fn new(set: BTreeSet<Toggle>) -> Self {
        Toggles(set)
    }

    pub fn on(&self, t: Toggle) -> bool {
        self.0.contains(&t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_covers_every_toggle_once() {
        let m = toggle_matrix();
        let names: BTreeSet<&str> = Toggle::ALL.iter().map(|t| t.name()).collect();
        let keys: BTreeSet<&str> = m.keys().map(String::as_str).collect();
        assert_eq!(names, keys);
        assert!(m.values().all(|v| !v.is_empty()));
    }

    #[test]
    fn names_round_trip() {
        for t in Toggle::ALL {
            assert_eq!(t.name().parse::<Toggle>().unwrap(), *t);
        }
        assert_eq!("foo".parse::<Toggle>(), Err(UnknownToggle("foo".into())));
        assert_eq!(parse_toggles(" weak-secret, ,coarse-logs").unwrap().len(), 2);
        assert!(parse_toggles("weak-secret,nope").is_err());
    }

    #[test]
    fn profiles() {
        assert!(Profile::Secure.toggles().is_empty());
        let poc: Vec<&str> = Profile::PaperPoc.toggles().iter().map(|t| t.name()).collect();
        assert_eq!(poc, ["plaintext-dbnode", "expose-private-key", "enable-password-grant"]);
        assert_eq!(Profile::AllVulnerable.toggles().len(), Toggle::ALL.len());
        assert_eq!("paper-poc".parse::<Profile>(), Ok(Profile::PaperPoc));
    }
}
