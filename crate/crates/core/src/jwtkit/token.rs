use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde_json::{Map, Value};

use super::JwtError;

pub(crate) fn b64(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub(crate) fn unb64(part: &str, what: &'static str) -> Result<Vec<u8>, JwtError> {
    URL_SAFE_NO_PAD
        .decode(part)
        .map_err(|e| JwtError::Base64 { part: what, message: e.to_string() })
}

/// A compact JWS split into its three parts.
///
/// The encoded header and claims are kept verbatim so a decoded token
/// re-encodes to exactly the bytes it came from; `header` and `claims` are
/// the parsed views. Tokens built by [`SignedToken::assemble`] serialize
/// the maps in insertion order.
#[derive(Clone, PartialEq, Eq)]
pub struct SignedToken {
    pub header: Map<String, Value>,
    pub claims: Map<String, Value>,
    pub signature: Vec<u8>,
    header_b64: String,
    claims_b64: String,
    original_compact: String,
}

impl fmt::Debug for SignedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignedToken")
            .field("header", &self.header)
            .field("claims", &self.claims)
            .field("signature_len", &self.signature.len())
            .finish()
    }
}

impl SignedToken {
    pub fn assemble(header: Map<String, Value>, claims: Map<String, Value>, signature: Vec<u8>) -> Self {
        let header_b64 = b64(&serde_json::to_vec(&header).expect("map serializes"));
        let claims_b64 = b64(&serde_json::to_vec(&claims).expect("map serializes"));
        let original_compact = format!("{header_b64}.{claims_b64}.{}", b64(&signature));
        SignedToken {
            header,
            claims,
            signature,
            header_b64,
            claims_b64,
            original_compact,
        }
    }

    /// Same header and claims, different signature bytes.
    pub fn with_signature(&self, signature: Vec<u8>) -> Self {
        SignedToken {
            original_compact: format!("{}.{}.{}", self.header_b64, self.claims_b64, b64(&signature)),
            signature,
            header: self.header.clone(),
            claims: self.claims.clone(),
            header_b64: self.header_b64.clone(),
            claims_b64: self.claims_b64.clone(),
        }
    }

    /// `<header_b64>.<claims_b64>`, the JWS signing input.
    pub fn signing_input(&self) -> String {
        format!("{}.{}", self.header_b64, self.claims_b64)
    }

    pub fn compact(&self) -> &str {
        &self.original_compact
    }

    pub fn alg(&self) -> Option<&str> {
        self.header.get("alg").and_then(Value::as_str)
    }

    pub fn kid(&self) -> Option<&str> {
        self.header.get("kid").and_then(Value::as_str)
    }

    fn int_claim(&self, name: &str) -> Option<i64> {
        self.claims.get(name).and_then(Value::as_i64)
    }

    pub fn exp(&self) -> Option<i64> {
        self.int_claim("exp")
    }

    pub fn iat(&self) -> Option<i64> {
        self.int_claim("iat")
    }

    pub fn sub(&self) -> Option<&str> {
        self.claims.get("sub").and_then(Value::as_str)
    }

    pub fn scopes(&self) -> Vec<String> {
        match self.claims.get("scope") {
            Some(Value::String(s)) => s.split_whitespace().map(str::to_string).collect(),
            Some(Value::Array(a)) => a.iter().filter_map(Value::as_str).map(str::to_string).collect(),
            _ => Vec::new(),
        }
    }

    pub fn audiences(&self) -> Vec<String> {
        match self.claims.get("aud") {
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Array(a)) => a.iter().filter_map(Value::as_str).map(str::to_string).collect(),
            _ => Vec::new(),
        }
    }

    /// `exp - iat` when both are present.
    pub fn lifetime_s(&self) -> Option<i64> {
        Some(self.exp()? - self.iat()?)
    }
}

impl fmt::Display for SignedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.original_compact)
    }
}

pub fn decode(compact: &str) -> Result<SignedToken, JwtError> {
    let parts: Vec<&str> = compact.split('.').collect();
    if parts.len() != 3 {
        return Err(JwtError::PartCount(parts.len()));
    }
    let parse_map = |raw: Vec<u8>, what: &'static str| -> Result<Map<String, Value>, JwtError> {
        match serde_json::from_slice::<Value>(&raw) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(JwtError::NotAMapping(what)),
            Err(e) => Err(JwtError::Json { part: what, message: e.to_string() }),
        }
    };
    let header = parse_map(unb64(parts[0], "header")?, "header")?;
    let claims = parse_map(unb64(parts[1], "claims")?, "claims")?;
    let signature = unb64(parts[2], "signature")?;
    Ok(SignedToken {
        header,
        claims,
        signature,
        header_b64: parts[0].to_string(),
        claims_b64: parts[1].to_string(),
        original_compact: compact.to_string(),
    })
}

pub fn encode(token: &SignedToken) -> String {
    token.original_compact.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn none_header_decodes() {
        let t = decode("eyJhbGciOiJub25lIn0.e30.").unwrap();
        assert_eq!(t.alg(), Some("none"));
        assert!(t.claims.is_empty());
        assert!(t.signature.is_empty());
    }

    #[test]
    fn part_count_is_enforced() {
        let e = decode("eyJhbGciOiJub25lIn0.e30").unwrap_err();
        assert_eq!(e.to_string(), "expected 3 parts, found 2");
        assert!(matches!(decode("a.b.c.d"), Err(JwtError::PartCount(4))));
    }

    #[test]
    fn rejects_padding_and_non_mappings() {
        assert!(matches!(decode("eyJhbGciOiJub25lIn0=.e30."), Err(JwtError::Base64 { .. })));
        // "[]"
        assert!(matches!(decode("W10.e30."), Err(JwtError::NotAMapping("header"))));
        // "1"
        assert!(matches!(decode("e30.MQ."), Err(JwtError::NotAMapping("claims"))));
    }

    #[test]
    fn decode_keeps_original_bytes() {
        // Whitespace inside the JSON survives a round trip.
        let header = b64(br#"{ "alg" : "HS256" }"#);
        let compact = format!("{header}.e30.AQID");
        let t = decode(&compact).unwrap();
        assert_eq!(encode(&t), compact);
        assert_eq!(t.signature, vec![1, 2, 3]);
    }

    #[test]
    fn claim_accessors() {
        let claims = json!({"iat": 100, "exp": 400, "scope": "a b", "aud": ["x", "y"]});
        let t = SignedToken::assemble(
            json!({"alg": "RS256"}).as_object().unwrap().clone(),
            claims.as_object().unwrap().clone(),
            vec![],
        );
        assert_eq!(t.lifetime_s(), Some(300));
        assert_eq!(t.scopes(), ["a", "b"]);
        assert_eq!(t.audiences(), ["x", "y"]);
        assert!(t.compact().ends_with('.'));
    }
}
