use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use rsa::pkcs1::{DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPublicKey};
use rsa::pkcs1v15::{Signature, SigningKey, VerifyingKey};
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePublicKey, LineEnding};
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, RsaPrivateKey, RsaPublicKey};
use serde_json::Value;
use sha2::Sha256;

use super::token::SignedToken;
use super::JwtError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    RsaPublic,
    RsaPrivate,
    HmacSecret,
}

/// Key bytes exactly as obtained. For RSA keys any PEM or DER encoding is
/// accepted; for HMAC the bytes are the secret itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub kind: KeyKind,
    pub bytes: Vec<u8>,
}

impl KeyMaterial {
    pub fn rsa_public(bytes: impl Into<Vec<u8>>) -> Self {
        KeyMaterial { kind: KeyKind::RsaPublic, bytes: bytes.into() }
    }

    pub fn rsa_private(bytes: impl Into<Vec<u8>>) -> Self {
        KeyMaterial { kind: KeyKind::RsaPrivate, bytes: bytes.into() }
    }

    pub fn hmac(secret: impl Into<Vec<u8>>) -> Self {
        KeyMaterial { kind: KeyKind::HmacSecret, bytes: secret.into() }
    }
}

pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC takes keys of any length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

pub fn parse_private_key(bytes: &[u8]) -> Result<RsaPrivateKey, JwtError> {
    let bad = || JwtError::Key("not an RSA private key in PKCS#8 or PKCS#1 PEM/DER".into());
    if let Ok(text) = std::str::from_utf8(bytes) {
        if let Ok(k) = RsaPrivateKey::from_pkcs8_pem(text) {
            return Ok(k);
        }
        if let Ok(k) = RsaPrivateKey::from_pkcs1_pem(text) {
            return Ok(k);
        }
    }
    RsaPrivateKey::from_pkcs8_der(bytes)
        .or_else(|_| RsaPrivateKey::from_pkcs1_der(bytes))
        .map_err(|_| bad())
}

pub fn parse_public_key(bytes: &[u8]) -> Result<RsaPublicKey, JwtError> {
    let bad = || JwtError::Key("not an RSA public key in SPKI or PKCS#1 PEM/DER".into());
    if let Ok(text) = std::str::from_utf8(bytes) {
        let text = text.trim();
        if let Ok(k) = RsaPublicKey::from_public_key_pem(text) {
            return Ok(k);
        }
        if let Ok(k) = RsaPublicKey::from_pkcs1_pem(text) {
            return Ok(k);
        }
    }
    RsaPublicKey::from_public_key_der(bytes)
        .or_else(|_| RsaPublicKey::from_pkcs1_der(bytes))
        .map_err(|_| bad())
}

/// RSA public key from a JWK (`kty` = RSA, `n`, `e`).
pub fn rsa_public_from_jwk(jwk: &Value) -> Option<RsaPublicKey> {
    if jwk.get("kty")?.as_str()? != "RSA" {
        return None;
    }
    let num = |name: &str| {
        let raw = URL_SAFE_NO_PAD.decode(jwk.get(name)?.as_str()?).ok()?;
        Some(BigUint::from_bytes_be(&raw))
    };
    RsaPublicKey::new(num("n")?, num("e")?).ok()
}

pub fn public_jwk(key: &RsaPublicKey, kid: &str) -> Value {
    serde_json::json!({
        "kty": "RSA",
        "use": "sig",
        "alg": "RS256",
        "kid": kid,
        "n": URL_SAFE_NO_PAD.encode(key.n().to_bytes_be()),
        "e": URL_SAFE_NO_PAD.encode(key.e().to_bytes_be()),
    })
}

/// Byte encodings of a public key that a confused verifier might use as its
/// HMAC secret, most common first.
pub fn public_key_encodings(key: &RsaPublicKey) -> Vec<(&'static str, Vec<u8>)> {
    let spki = key
        .to_public_key_pem(LineEnding::LF)
        .expect("RSA public key encodes");
    let pkcs1 = key.to_pkcs1_pem(LineEnding::LF).expect("RSA public key encodes");
    let der = key.to_public_key_der().expect("RSA public key encodes");
    vec![
        ("spki-pem", spki.as_bytes().to_vec()),
        ("spki-pem-trimmed", spki.trim_end().as_bytes().to_vec()),
        ("pkcs1-pem", pkcs1.as_bytes().to_vec()),
        ("spki-der", der.as_bytes().to_vec()),
    ]
}

pub fn sign_rs256(key: &RsaPrivateKey, message: &[u8]) -> Vec<u8> {
    SigningKey::<Sha256>::new(key.clone()).sign(message).to_vec()
}

pub fn verify_rs256(token: &SignedToken, key: &RsaPublicKey) -> bool {
    let Ok(sig) = Signature::try_from(token.signature.as_slice()) else {
        return false;
    };
    VerifyingKey::<Sha256>::new(key.clone())
        .verify(token.signing_input().as_bytes(), &sig)
        .is_ok()
}

pub fn verify_hs256(token: &SignedToken, secret: &[u8]) -> bool {
    let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("HMAC takes keys of any length");
    mac.update(token.signing_input().as_bytes());
    mac.verify_slice(&token.signature).is_ok()
}
