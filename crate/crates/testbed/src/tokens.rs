//! Token minting and the resource servers' validation rules.

use std::time::{SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use rsa::pkcs1v15::{Signature, SigningKey, VerifyingKey};
use rsa::pkcs8::{EncodePublicKey, LineEnding};
use rsa::signature::{SignatureEncoding, Signer as _, Verifier as _};
use rsa::{RsaPrivateKey, RsaPublicKey};
use serde_json::{json, Map, Value};
use sha2::Sha256;

use crate::toggles::{Toggle, Toggles};

pub(crate) fn now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

pub(crate) fn b64(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

fn hmac(key: &[u8], msg: &[u8]) -> Hmac<Sha256> {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC takes any key length");
    mac.update(msg);
    mac
}

pub(crate) enum SigningKeyKind {
    Rsa(RsaPrivateKey),
    Hmac(Vec<u8>),
}

pub(crate) struct Issuer {
    pub key: SigningKeyKind,
    pub kid: &'static str,
}

impl Issuer {
    pub fn alg(&self) -> &'static str {
        match self.key {
            SigningKeyKind::Rsa(_) => "RS256",
            SigningKeyKind::Hmac(_) => "HS256",
        }
    }

    pub fn sign(&self, claims: &Value) -> String {
        let header = json!({ "alg": self.alg(), "typ": "JWT", "kid": self.kid });
        let input = format!(
            "{}.{}",
            b64(header.to_string().as_bytes()),
            b64(claims.to_string().as_bytes())
        );
        let sig = match &self.key {
            SigningKeyKind::Rsa(k) => SigningKey::<Sha256>::new(k.clone()).sign(input.as_bytes()).to_vec(),
            SigningKeyKind::Hmac(s) => hmac(s, input.as_bytes()).finalize().into_bytes().to_vec(),
        };
        format!("{input}.{}", b64(&sig))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Reject {
    Malformed,
    Algorithm,
    Signature,
    Expired,
    Audience,
    Scope,
}

impl Reject {
    pub fn status(self) -> u16 {
        if self == Reject::Scope {
            403
        } else {
            401
        }
    }

    pub fn code(self) -> &'static str {
        if self == Reject::Scope {
            "insufficient_scope"
        } else {
            "invalid_token"
        }
    }

    pub fn reason(self) -> &'static str {
        match self {
            Reject::Malformed => "malformed token",
            Reject::Algorithm => "algorithm not accepted",
            Reject::Signature => "bad signature",
            Reject::Expired => "token expired",
            Reject::Audience => "wrong audience",
            Reject::Scope => "missing scope",
        }
    }
}

pub(crate) struct Verifier {
    public: RsaPublicKey,
    /// SPKI PEM text, what a confused verifier keys HMAC with.
    public_pem: String,
    hmac_secret: Option<Vec<u8>>,
    toggles: Toggles,
}

impl Verifier {
    pub fn new(public: RsaPublicKey, hmac_secret: Option<Vec<u8>>, toggles: Toggles) -> Self {
        let public_pem = public.to_public_key_pem(LineEnding::LF).expect("RSA public key encodes");
        Verifier { public, public_pem, hmac_secret, toggles }
    }

    fn signature_ok(&self, alg: &str, input: &[u8], sig: &[u8]) -> Result<(), Reject> {
        let skip = self.toggles.on(Toggle::SkipSignatureCheck);
        let hmac_ok = |key: &[u8]| hmac(key, input).verify_slice(sig).is_ok();
        match (alg, &self.hmac_secret) {
            ("none", _) if self.toggles.on(Toggle::AcceptNoneAlg) => Ok(()),
            ("HS256", Some(secret)) => (skip || hmac_ok(secret)).then_some(()).ok_or(Reject::Signature),
            ("RS256", None) => {
                if skip {
                    return Ok(());
                }
                let sig = Signature::try_from(sig).map_err(|_| Reject::Signature)?;
                VerifyingKey::<Sha256>::new(self.public.clone())
                    .verify(input, &sig)
                    .map_err(|_| Reject::Signature)
            }
            ("HS256", None) if self.toggles.on(Toggle::AcceptAlgConfusion) => {
                hmac_ok(self.public_pem.as_bytes()).then_some(()).ok_or(Reject::Signature)
            }
            _ => Err(Reject::Algorithm),
        }
    }

    /// Validates a bearer token for `audience` and `scope`, returning its claims.
    pub fn verify(&self, token: &str, audience: &str, scope: &str) -> Result<Map<String, Value>, Reject> {
        let parts: Vec<&str> = token.split('.').collect();
        let [h, p, s] = parts[..] else {
            return Err(Reject::Malformed);
        };
        let json = |part: &str| -> Result<Map<String, Value>, Reject> {
            let bytes = URL_SAFE_NO_PAD.decode(part).map_err(|_| Reject::Malformed)?;
            match serde_json::from_slice(&bytes) {
                Ok(Value::Object(m)) => Ok(m),
                _ => Err(Reject::Malformed),
            }
        };
        let header = json(h)?;
        let claims = json(p)?;
        let sig = URL_SAFE_NO_PAD.decode(s).map_err(|_| Reject::Malformed)?;
        let alg = header.get("alg").and_then(Value::as_str).ok_or(Reject::Malformed)?;
        self.signature_ok(alg, format!("{h}.{p}").as_bytes(), &sig)?;

        let exp = claims.get("exp").and_then(Value::as_i64).ok_or(Reject::Malformed)?;
        if now() >= exp && !self.toggles.on(Toggle::AcceptExpired) {
            return Err(Reject::Expired);
        }
        let aud_ok = match claims.get("aud") {
            Some(Value::String(a)) => a == audience,
            Some(Value::Array(a)) => a.iter().any(|v| v.as_str() == Some(audience)),
            _ => false,
        };
        if !aud_ok && !self.toggles.on(Toggle::NoAudienceCheck) {
            return Err(Reject::Audience);
        }
        let scope_ok = claims
            .get("scope")
            .and_then(Value::as_str)
            .is_some_and(|s| s.split_whitespace().any(|x| x == scope));
        if !scope_ok && !self.toggles.on(Toggle::NoScopeCheck) {
            return Err(Reject::Scope);
        }
        Ok(claims)
    }
}
