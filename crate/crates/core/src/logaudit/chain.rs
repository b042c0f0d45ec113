use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const GENESIS: [u8; 32] = [0; 32];

/// Fields sorted by name, `name=value`, joined with `\n`.
pub fn canonical_bytes(fields: &BTreeMap<String, String>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, (k, v)) in fields.iter().enumerate() {
        if i > 0 {
            out.push(b'\n');
        }
        out.extend_from_slice(k.as_bytes());
        out.push(b'=');
        out.extend_from_slice(v.as_bytes());
    }
    out
}

pub fn link_for(prev: &[u8; 32], fields: &BTreeMap<String, String>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(canonical_bytes(fields));
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub fields: BTreeMap<String, String>,
    #[serde(with = "hex_link")]
    pub link: Vec<u8>,
}

mod hex_link {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    /// Undecodable links become empty and fail verification at their seq.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        Ok(hex::decode(s).unwrap_or_default())
    }
}

/// A contiguous run of records. `anchor` is the link preceding the first
/// record: genesis for a full chain, the prior record's link for a page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogChain {
    pub anchor: [u8; 32],
    pub records: Vec<LogRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verification {
    Ok,
    Broken { first_broken_seq: u64 },
}

impl LogChain {
    pub fn new() -> Self {
        LogChain { anchor: GENESIS, records: Vec::new() }
    }

    pub fn head(&self) -> [u8; 32] {
        self.records
            .last()
            .and_then(|r| r.link.as_slice().try_into().ok())
            .unwrap_or(self.anchor)
    }

    pub fn next_seq(&self) -> u64 {
        self.records.last().map_or(1, |r| r.seq + 1)
    }

    pub fn append(&mut self, fields: BTreeMap<String, String>) -> &LogRecord {
        let link = link_for(&self.head(), &fields);
        let seq = self.next_seq();
        self.records.push(LogRecord { seq, fields, link: link.to_vec() });
        self.records.last().unwrap()
    }
}

impl Default for LogChain {
    fn default() -> Self {
        Self::new()
    }
}

/// Checks record `i` against the stored link of its predecessor.
fn record_ok(chain: &LogChain, i: usize) -> bool {
    let rec = &chain.records[i];
    let (prev, expected_seq) = if i == 0 {
        (chain.anchor, None)
    } else {
        let p = &chain.records[i - 1];
        match <[u8; 32]>::try_from(p.link.as_slice()) {
            Ok(l) => (l, Some(p.seq + 1)),
            // A malformed predecessor is already reported at its own seq.
            Err(_) => return true,
        }
    };
    if expected_seq.is_some_and(|s| s != rec.seq) {
        return false;
    }
    rec.link.as_slice() == link_for(&prev, &rec.fields)
}

/// Every record is checked against the stored link of its predecessor, so
/// a single modified record breaks exactly at its own seq. Verification
/// splits into segments checked on separate threads when the chain is long.
pub fn verify_chain(chain: &LogChain) -> Verification {
    const SEGMENT: usize = 4096;
    let n = chain.records.len();
    let first_bad = if n <= SEGMENT {
        (0..n).find(|&i| !record_ok(chain, i))
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(SEGMENT)
                .map(|start| {
                    s.spawn(move || (start..(start + SEGMENT).min(n)).find(|&i| !record_ok(chain, i)))
                })
                .collect();
            handles.into_iter().find_map(|h| h.join().expect("verifier thread"))
        })
    };
    match first_bad {
        None => Verification::Ok,
        Some(i) => Verification::Broken { first_broken_seq: chain.records[i].seq },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn canonical_form_sorts_names() {
        let f = fields(&[("b", "2"), ("a", "1"), ("c", "x=y")]);
        assert_eq!(canonical_bytes(&f), b"a=1\nb=2\nc=x=y");
        assert_eq!(canonical_bytes(&BTreeMap::new()), b"");
    }

    #[test]
    fn empty_chain_verifies() {
        assert_eq!(verify_chain(&LogChain::new()), Verification::Ok);
    }

    #[test]
    fn mutation_breaks_at_its_seq() {
        let mut c = LogChain::new();
        for i in 0..100 {
            c.append(fields(&[("action", "read"), ("n", &i.to_string())]));
        }
        assert_eq!(verify_chain(&c), Verification::Ok);
        c.records[56].fields.insert("action".into(), "delete".into());
        assert_eq!(verify_chain(&c), Verification::Broken { first_broken_seq: 57 });
    }

    #[test]
    fn removal_and_reorder_are_detected() {
        let mut c = LogChain::new();
        for i in 0..10 {
            c.append(fields(&[("n", &i.to_string())]));
        }
        let mut gap = c.clone();
        gap.records.remove(4);
        assert_eq!(verify_chain(&gap), Verification::Broken { first_broken_seq: 6 });
        let mut swapped = c.clone();
        swapped.records.swap(2, 3);
        assert!(matches!(verify_chain(&swapped), Verification::Broken { .. }));
    }

    #[test]
    fn segmented_matches_sequential() {
        let mut c = LogChain::new();
        for i in 0..10_000 {
            c.append(fields(&[("n", &i.to_string())]));
        }
        assert_eq!(verify_chain(&c), Verification::Ok);
        c.records[9_000].link[0] ^= 1;
        c.records[5_000].fields.insert("n".into(), "x".into());
        assert_eq!(verify_chain(&c), Verification::Broken { first_broken_seq: 5_001 });
    }

    #[test]
    fn page_with_anchor_verifies() {
        let mut c = LogChain::new();
        for i in 0..20 {
            c.append(fields(&[("n", &i.to_string())]));
        }
        let anchor: [u8; 32] = c.records[9].link.as_slice().try_into().unwrap();
        let page = LogChain { anchor, records: c.records[10..].to_vec() };
        assert_eq!(verify_chain(&page), Verification::Ok);
    }
}
