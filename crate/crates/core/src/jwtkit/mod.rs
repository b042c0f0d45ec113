//! JWT parsing, forging and the JWT-01..10 battery.

mod battery;
mod forge;
mod keys;
mod token;

pub use battery::{endpoint_request, is_accepted, replay, run_jwt_battery, AcceptanceVerdict, JwtSettings};
pub use forge::{forge, Mutation};
pub use keys::{
    hmac_sha256, parse_private_key, parse_public_key, public_jwk, public_key_encodings,
    rsa_public_from_jwk, sign_rs256, verify_hs256, verify_rs256, KeyKind, KeyMaterial,
};
pub use token::{decode, encode, SignedToken};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JwtError {
    #[error("expected 3 parts, found {0}")]
    PartCount(usize),
    #[error("{part} is not valid Base64URL: {message}")]
    Base64 { part: &'static str, message: String },
    #[error("{part} is not valid JSON: {message}")]
    Json { part: &'static str, message: String },
    #[error("{0} is not a JSON object")]
    NotAMapping(&'static str),
    #[error("missing key material: {0}")]
    MissingKey(String),
    #[error("bad key: {0}")]
    Key(String),
    #[error("unsupported algorithm {0:?}")]
    UnsupportedAlg(String),
    #[error("token has no signature to modify")]
    EmptySignature,
}
