use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Component area a check belongs to, in registry order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Area {
    Net,
    Db,
    Oauth,
    Jwt,
    Web,
    Log,
}

impl Area {
    pub const ALL: [Area; 6] = [Area::Net, Area::Db, Area::Oauth, Area::Jwt, Area::Web, Area::Log];

    pub fn as_str(self) -> &'static str {
        match self {
            Area::Net => "NET",
            Area::Db => "DB",
            Area::Oauth => "OAUTH",
            Area::Jwt => "JWT",
            Area::Web => "WEB",
            Area::Log => "LOG",
        }
    }

    /// Number of checks registered for the area.
    pub fn size(self) -> u8 {
        match self {
            Area::Net => 2,
            Area::Db => 4,
            Area::Oauth => 6,
            Area::Jwt => 10,
            Area::Web => 1,
            Area::Log => 4,
        }
    }
}

/// Stable identifier `<AREA>-<NN>`. Ordering follows the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CheckId {
    area: Area,
    num: u8,
}

impl CheckId {
    pub const fn new_unchecked(area: Area, num: u8) -> Self {
        CheckId { area, num }
    }

    pub fn new(area: Area, num: u8) -> Option<Self> {
        (1..=area.size()).contains(&num).then_some(CheckId { area, num })
    }

    pub fn area(self) -> Area {
        self.area
    }

    pub fn number(self) -> u8 {
        self.num
    }

    pub fn all() -> impl Iterator<Item = CheckId> {
        Area::ALL
            .into_iter()
            .flat_map(|a| (1..=a.size()).map(move |n| CheckId { area: a, num: n }))
    }

    pub fn info(self) -> &'static CheckInfo {
        REGISTRY
            .iter()
            .find(|c| c.id == self)
            .expect("every CheckId is registered")
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}", self.area.as_str(), self.num)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("unknown check id {0:?}")]
pub struct UnknownCheck(pub String);

impl FromStr for CheckId {
    type Err = UnknownCheck;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || UnknownCheck(s.to_string());
        let (area, num) = s.trim().split_once('-').ok_or_else(err)?;
        let area = Area::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(area))
            .ok_or_else(err)?;
        let num: u8 = num.parse().map_err(|_| err())?;
        CheckId::new(area, num).ok_or_else(err)
    }
}

impl Serialize for CheckId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CheckId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Critical,
    High,
    Medium,
    Low,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Critical => "CRITICAL",
            Severity::High => "HIGH",
            Severity::Medium => "MEDIUM",
            Severity::Low => "LOW",
        })
    }
}

/// Static description of one registry entry.
#[derive(Debug)]
pub struct CheckInfo {
    pub id: CheckId,
    pub title: &'static str,
    pub severity: Severity,
    pub remediation: &'static str,
}

macro_rules! check {
    ($area:ident, $n:literal, $sev:ident, $title:literal, $fix:literal) => {
        CheckInfo {
            id: CheckId::new_unchecked(Area::$area, $n),
            title: $title,
            severity: Severity::$sev,
            remediation: $fix,
        }
    };
}

/// The canonical registry, one entry per testing-guide item.
pub static REGISTRY: [CheckInfo; 27] = [
    check!(Net, 1, High,
        "Restricted-access services sit on a private network or behind an IP allowlist",
        "Move log repositories, key management, database nodes and admin interfaces onto an isolated network, or allow only the addresses the ecosystem strictly needs."),
    check!(Net, 2, Low,
        "Public-access services are reachable from the public network",
        "Expose the authorization server, HTTPS gateways and public web applications so participants can interoperate."),
    check!(Db, 1, High,
        "Database node channels implement mTLS",
        "Require mutually authenticated TLS 1.3 on every inter-node channel and reject peers without a cluster certificate."),
    check!(Db, 2, Critical,
        "HTTPS gateways resist SQL injection",
        "Use parameterized queries in every gateway query path; never concatenate request input into SQL."),
    check!(Db, 3, Medium,
        "Database storage has data-at-rest protection",
        "Enable encryption at rest for every database node store."),
    check!(Db, 4, Medium,
        "Data-at-rest encryption algorithm is secure",
        "Configure AES-256 for encryption at rest."),
    check!(Oauth, 1, High,
        "Authorization server implements mTLS (sender-constrained tokens)",
        "Authenticate clients with mutual TLS and bind issued tokens to the client certificate."),
    check!(Oauth, 2, High,
        "Profiles' permission scopes follow least privilege (PoLP)",
        "Grant each client only the scopes its onboarding profile is entitled to."),
    check!(Oauth, 3, Medium,
        "client_secret has sufficient entropy",
        "Generate client secrets with a cryptographically secure generator and at least 256 bits of entropy."),
    check!(Oauth, 4, High,
        "client_secret is stored with a hash algorithm",
        "Store only a salted hash of each client secret (e.g. PBKDF2, Argon2); never keep it in plaintext."),
    check!(Oauth, 5, High,
        "No insecure authorization flows (grant types) are enabled",
        "Disable every grant type the ecosystem does not need; require PKCE for authorization_code and never enable password or implicit grants."),
    check!(Oauth, 6, High,
        "Web interface authorization flow resists web attacks (CSRF)",
        "Bind an unpredictable state value to the user session and reject callbacks whose state does not match."),
    check!(Jwt, 1, Medium,
        "Tokens do not have a long expiration time",
        "Issue short-lived tokens (5 to 15 minutes), or sender-constrained tokens when longer lifetimes are unavoidable."),
    check!(Jwt, 2, High,
        "Expired tokens are not accepted",
        "Validate the exp claim on every token-accepting service."),
    check!(Jwt, 3, Medium,
        "Token signature algorithm is robust",
        "Sign tokens with an asymmetric algorithm such as RS256, ES256 or PS256."),
    check!(Jwt, 4, Critical,
        "Signing private key is not exposed",
        "Keep the signing key in key management, remove it from served paths and never publish private JWK members."),
    check!(Jwt, 5, Critical,
        "Services validate token signatures",
        "Reject tokens whose signature is missing or does not verify."),
    check!(Jwt, 6, Critical,
        "Services reject the 'none' algorithm",
        "Pin the accepted algorithm list on every verifier and never accept alg=none."),
    check!(Jwt, 7, Critical,
        "Services resist algorithm confusion",
        "Pin the verification algorithm to the key type; never verify HMAC signatures with a public key."),
    check!(Jwt, 8, High,
        "Services validate the scope claim",
        "Check that the token scope covers the requested action on every service."),
    check!(Jwt, 9, High,
        "Services validate the audience (aud) claim",
        "Reject tokens whose aud claim does not name the receiving service."),
    check!(Jwt, 10, Low,
        "Web interface stores tokens safely",
        "Keep tokens in session storage or in cookies flagged Secure, HttpOnly and SameSite=Strict; never in local storage."),
    check!(Web, 1, Low,
        "Web applications tested individually with a well-known methodology",
        "Assess each web application manually against an established web security testing methodology; ship CSP, X-Frame-Options and nosniff headers."),
    check!(Log, 1, Medium,
        "Log granularity meets compliance requirements",
        "Record every required field (actor, token subject, action, resource, outcome, time) on each log entry."),
    check!(Log, 2, High,
        "Log storage enforces a WORM policy",
        "Store logs on write-once, read-many media; reject overwrite and delete operations."),
    check!(Log, 3, High,
        "Logs resist malicious data corruption (hash chaining)",
        "Hash-chain log records, verify links on append and alert on any broken link."),
    check!(Log, 4, High,
        "Logs are protected from improper external access",
        "Require authorization for every log read and keep the repository off external networks."),
];
