use std::collections::BTreeSet;

pub const THRESHOLD: f64 = 0.15;

/// Substrings that betray a database error in a response body.
pub const ERROR_SIGNATURES: [&str; 14] = [
    "sql syntax",
    "syntax error",
    "unterminated quoted string",
    "unclosed quotation mark",
    "quoted string not properly terminated",
    "sqlstate",
    "sqlite3::",
    "sqlite_error",
    "ora-0",
    "pg::syntaxerror",
    "mysql_fetch",
    "odbc sql server driver",
    "unexpected end of sql",
    "invalid input syntax for",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSummary {
    pub status: u16,
    pub length: usize,
    pub tokens: BTreeSet<String>,
    pub error_hits: Vec<&'static str>,
}

impl ResponseSummary {
    pub fn of(status: u16, body: &[u8]) -> Self {
        let text = String::from_utf8_lossy(body).to_lowercase();
        let tokens = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        let error_hits = ERROR_SIGNATURES
            .iter()
            .copied()
            .filter(|s| text.contains(s))
            .collect();
        ResponseSummary { status, length: body.len(), tokens, error_hits }
    }
}

/// 0 for identical responses, 1 for a status mismatch; otherwise the mean
/// of the normalized length delta and the token-set Jaccard distance.
pub fn distance(a: &ResponseSummary, b: &ResponseSummary) -> f64 {
    if a.status != b.status {
        return 1.0;
    }
    let max = a.length.max(b.length);
    let len_delta = if max == 0 {
        0.0
    } else {
        a.length.abs_diff(b.length) as f64 / max as f64
    };
    let union = a.tokens.union(&b.tokens).count();
    let jaccard = if union == 0 {
        1.0
    } else {
        a.tokens.intersection(&b.tokens).count() as f64 / union as f64
    };
    0.5 * len_delta + 0.5 * (1.0 - jaccard)
}

/// True variant looks like the baseline, false variant does not.
pub fn boolean_hit(baseline: &ResponseSummary, t: &ResponseSummary, f: &ResponseSummary) -> bool {
    distance(baseline, t) <= THRESHOLD && distance(baseline, f) > THRESHOLD
}

/// Error signatures in `probe` that the baseline does not show.
pub fn new_error_signatures(baseline: &ResponseSummary, probe: &ResponseSummary) -> Vec<&'static str> {
    probe
        .error_hits
        .iter()
        .copied()
        .filter(|s| !baseline.error_hits.contains(s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(status: u16, body: &str) -> ResponseSummary {
        ResponseSummary::of(status, body.as_bytes())
    }

    #[test]
    fn metric_basics() {
        let a = s(200, r#"{"items":[{"id":"isa-1","owner":"uss-alpha"}],"count":1}"#);
        assert_eq!(distance(&a, &a), 0.0);
        assert_eq!(distance(&a, &s(500, "x")), 1.0);
        let empty = s(200, r#"{"items":[],"count":0}"#);
        assert!(distance(&a, &empty) > THRESHOLD);
        assert!(boolean_hit(&a, &a, &empty));
        assert!(!boolean_hit(&a, &empty, &empty));
        assert!(!boolean_hit(&empty, &empty, &empty));
    }

    #[test]
    fn error_signatures_are_differential() {
        let base = s(200, "ok");
        let err = s(500, "SQL syntax error near 'x'");
        assert_eq!(new_error_signatures(&base, &err), ["sql syntax", "syntax error"]);
        assert!(new_error_signatures(&err, &err).is_empty());
    }

    fn listing(n: usize) -> String {
        let items: Vec<String> = (0..n)
            .map(|i| format!(r#"{{"id":"isa-{i}","owner":"uss-alpha","altitude":{}}}"#, 100 + i))
            .collect();
        format!(r#"{{"items":[{}],"count":{n}}}"#, items.join(","))
    }

    proptest! {
        // Whitespace padding shifts only the length term; the verdict
        // holds while that shift stays below the threshold.
        #[test]
        fn verdict_stable_under_padding(n in 2usize..8, pad_t in 0usize..40, pad_f in 0usize..40) {
            let base_body = listing(n);
            let base = s(200, &base_body);
            let t = s(200, &format!("{base_body}{}", " ".repeat(pad_t)));
            let f = s(200, &format!(r#"{{"items":[],"count":0}}{}"#, " ".repeat(pad_f)));
            prop_assume!(pad_t as f64 / (base_body.len() + pad_t) as f64 * 0.5 < THRESHOLD);
            prop_assert!(boolean_hit(&base, &t, &f));
            // A padded baseline does not change the verdict either.
            let padded_base = s(200, &format!("{base_body}{}", " ".repeat(pad_t / 2)));
            prop_assert!(boolean_hit(&padded_base, &t, &f));
        }
    }
}
