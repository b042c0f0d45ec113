//! Builds an RS256 token offline and prints every forged variant next to
//! whether it still verifies under the real key.
//!
//!     cargo run -p utmsec --example jwt_forge

use rand::SeedableRng;
use rsa::pkcs8::{EncodePrivateKey, LineEnding};
use serde_json::json;
use utmsec::jwtkit::{
    decode, forge, public_key_encodings, sign_rs256, verify_hs256, verify_rs256, KeyMaterial, Mutation, SignedToken,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let key = rsa::RsaPrivateKey::new(&mut rand::rngs::StdRng::seed_from_u64(1), 2048)?;
    let public = key.to_public_key();
    let header = json!({"alg": "RS256", "typ": "JWT", "kid": "demo"});
    let claims = json!({"sub": "uss-alpha", "aud": "dss", "scope": "dss.read.isa", "exp": 4_102_444_800i64});
    let unsigned = SignedToken::assemble(
        header.as_object().unwrap().clone(),
        claims.as_object().unwrap().clone(),
        Vec::new(),
    );
    let token = unsigned.with_signature(sign_rs256(&key, unsigned.signing_input().as_bytes()));
    println!("original  {}", token.compact());

    let pem = key.to_pkcs8_pem(LineEnding::LF)?.as_bytes().to_vec();
    let mut mutations = vec![
        Mutation::SetAlgNone,
        Mutation::StripSignature,
        Mutation::FlipSignatureBit(0),
        Mutation::SetExpiry(0),
        Mutation::AddScope("dss.admin".into()),
        Mutation::SetAudience("elsewhere".into()),
        Mutation::ResignWith(KeyMaterial::rsa_private(pem)),
    ];
    let encodings = public_key_encodings(&public);
    mutations.extend(encodings.iter().map(|(_, b)| Mutation::AlgConfusionHs256(b.clone())));

    for m in &mutations {
        let forged = forge(&token, m)?;
        let compact = forged.compact().to_string();
        let reparsed = decode(&compact)?;
        let rs = verify_rs256(&reparsed, &public);
        let hs = encodings.iter().find(|(_, b)| verify_hs256(&reparsed, b)).map(|(n, _)| *n);
        println!("{:<28} alg={:<6} rs256={rs:<5} hs256-with-public-key={hs:?}", m.to_string(), reparsed.alg().unwrap_or("-"));
    }
    Ok(())
}
