//! On-disk state the introspective checks read.

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes128Gcm, Aes256Gcm, Nonce};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::RngCore;

use crate::gateway::Isa;

pub(crate) const SENTINEL: &str = "ISA_RECORD";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AtRest {
    Aes256Gcm,
    Aes128Gcm,
    Clear,
}

impl AtRest {
    pub fn header(self) -> &'static str {
        match self {
            AtRest::Aes256Gcm => "AES-256-GCM",
            AtRest::Aes128Gcm => "AES-128-GCM",
            AtRest::Clear => "NONE",
        }
    }

    /// What the deployment declares in its manifest.
    pub fn declared(self) -> Option<String> {
        (self != AtRest::Clear).then(|| self.header().to_string())
    }
}

fn plaintext(rows: &[Isa]) -> String {
    rows.iter()
        .map(|r| format!("{SENTINEL} {}\n", serde_json::to_string(r).expect("rows serialize")))
        .collect()
}

/// Renders the ISA table file; returns it with the data key (empty when
/// stored in clear).
pub(crate) fn isa_store(rows: &[Isa], mode: AtRest, rng: &mut impl RngCore) -> (Vec<u8>, Vec<u8>) {
    let body = plaintext(rows);
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let (key, sealed) = match mode {
        AtRest::Clear => return (format!("ALG=NONE\n{body}").into_bytes(), Vec::new()),
        AtRest::Aes256Gcm => {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            let c = Aes256Gcm::new_from_slice(&key).expect("32-byte key");
            (key.to_vec(), c.encrypt(Nonce::from_slice(&nonce), body.as_bytes()))
        }
        AtRest::Aes128Gcm => {
            let mut key = [0u8; 16];
            rng.fill_bytes(&mut key);
            let c = Aes128Gcm::new_from_slice(&key).expect("16-byte key");
            (key.to_vec(), c.encrypt(Nonce::from_slice(&nonce), body.as_bytes()))
        }
    };
    let sealed = sealed.expect("AES-GCM encryption does not fail on small inputs");
    let file = format!(
        "ALG={}\nNONCE={}\n{}\n",
        mode.header(),
        hex::encode(nonce),
        STANDARD.encode(sealed)
    );
    (file.into_bytes(), key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::seed_rows;
    use rand::SeedableRng;

    fn contains(hay: &[u8], needle: &str) -> bool {
        hay.windows(needle.len()).any(|w| w == needle.as_bytes())
    }

    #[test]
    fn sentinel_visible_only_in_clear() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        let (clear, key) = isa_store(&seed_rows(), AtRest::Clear, &mut rng);
        assert!(clear.starts_with(b"ALG=NONE\n") && contains(&clear, SENTINEL) && key.is_empty());
        for mode in [AtRest::Aes256Gcm, AtRest::Aes128Gcm] {
            let (sealed, key) = isa_store(&seed_rows(), mode, &mut rng);
            assert!(!contains(&sealed, SENTINEL));
            assert!(sealed.starts_with(format!("ALG={}\n", mode.header()).as_bytes()));
            let text = String::from_utf8(sealed).unwrap();
            let mut lines = text.lines().skip(1);
            let nonce = hex::decode(lines.next().unwrap().strip_prefix("NONCE=").unwrap()).unwrap();
            let ct = STANDARD.decode(lines.next().unwrap()).unwrap();
            let opened = match mode {
                AtRest::Aes256Gcm => Aes256Gcm::new_from_slice(&key).unwrap().decrypt(Nonce::from_slice(&nonce), ct.as_slice()),
                _ => Aes128Gcm::new_from_slice(&key).unwrap().decrypt(Nonce::from_slice(&nonce), ct.as_slice()),
            }
            .unwrap();
            assert!(contains(&opened, SENTINEL));
        }
        assert_eq!(AtRest::Clear.declared(), None);
    }
}
