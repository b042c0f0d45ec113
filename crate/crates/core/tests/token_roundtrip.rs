use proptest::prelude::*;
use serde_json::{Map, Value};
use utmsec::jwtkit::{decode, encode, SignedToken};

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        "[ -~]{0,24}".prop_map(Value::from),
        prop::collection::vec("[a-z.:]{1,12}", 0..4).prop_map(Value::from),
    ]
}

fn object() -> impl Strategy<Value = Map<String, Value>> {
    prop::collection::btree_map("[a-z_]{1,10}", json_leaf(), 0..8).prop_map(|m| m.into_iter().collect())
}

prop_compose! {
    fn token()(alg in prop::sample::select(vec!["RS256", "HS256", "none", "ES256"]),
               mut header in object(),
               claims in object(),
               sig in prop::collection::vec(any::<u8>(), 0..300)) -> SignedToken {
        header.insert("alg".into(), alg.into());
        SignedToken::assemble(header, claims, sig)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decode_inverts_encode(t in token()) {
        let compact = encode(&t);
        let back = decode(&compact).unwrap();
        prop_assert_eq!(&back.header, &t.header);
        prop_assert_eq!(&back.claims, &t.claims);
        prop_assert_eq!(&back.signature, &t.signature);
        prop_assert_eq!(encode(&back), compact);
    }
}
