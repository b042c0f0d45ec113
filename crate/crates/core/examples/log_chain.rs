//! Builds a hash-chained log, tampers with one record and locates it.
//!
//!     cargo run -p utmsec --example log_chain -- [records] [tamper-seq]

use std::collections::BTreeMap;

use utmsec::logaudit::{verify_chain, LogChain};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("a number"));
    let n = args.next().unwrap_or(100);
    let target = args.next().unwrap_or(n / 2 + 7).clamp(1, n);

    let mut chain = LogChain::new();
    for i in 1..=n {
        let fields: BTreeMap<String, String> = [
            ("action", if i % 3 == 0 { "isa.delete" } else { "isa.create" }.to_string()),
            ("actor_id", "uss-alpha".to_string()),
            ("timestamp", format!("2025-01-01T00:{:02}:{:02}Z", i / 60 % 60, i % 60)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        chain.append(fields);
    }
    println!("{n} records, head {}", hex::encode(chain.head()));
    println!("untouched: {:?}", verify_chain(&chain));

    let rec = &mut chain.records[(target - 1) as usize];
    rec.fields.insert("actor_id".into(), "someone-else".into());
    println!("after editing seq {target}: {:?}", verify_chain(&chain));
}
