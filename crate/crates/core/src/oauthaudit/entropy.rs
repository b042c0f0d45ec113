/// Structural strength estimate of a secret: `length × log2(charset_size)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecretStrengthEstimate {
    pub length: usize,
    pub charset_size: u32,
    pub estimated_bits: f64,
}

impl SecretStrengthEstimate {
    pub fn from_parts(length: usize, charset_size: u32) -> Self {
        let estimated_bits = if length == 0 || charset_size <= 1 {
            0.0
        } else {
            length as f64 * f64::from(charset_size).log2()
        };
        SecretStrengthEstimate { length, charset_size, estimated_bits }
    }
}

/// Infers the alphabet from the character classes present.
///
/// A secret made only of hex digits in a single letter case is treated as
/// hex (16). Otherwise the sizes of the observed classes are summed:
/// lowercase 26, uppercase 26, digits 10, `-`/`_` 2, `+`/`/` 2, any other
/// printable symbol 28 (the rest of printable ASCII), non-ASCII 128.
pub fn charset_size(secret: &str) -> u32 {
    if secret.is_empty() {
        return 0;
    }
    let hexdigit = |c: char| c.is_ascii_digit() || ('a'..='f').contains(&c);
    let hexdigit_upper = |c: char| c.is_ascii_digit() || ('A'..='F').contains(&c);
    let has_alpha = secret.chars().any(|c| c.is_ascii_alphabetic());
    if has_alpha && (secret.chars().all(hexdigit) || secret.chars().all(hexdigit_upper)) {
        return 16;
    }
    let mut lower = false;
    let mut upper = false;
    let mut digit = false;
    let mut url = false;
    let mut std64 = false;
    let mut symbol = false;
    let mut other = false;
    for c in secret.chars() {
        match c {
            'a'..='z' => lower = true,
            'A'..='Z' => upper = true,
            '0'..='9' => digit = true,
            '-' | '_' => url = true,
            '+' | '/' => std64 = true,
            c if c.is_ascii_graphic() || c == ' ' => symbol = true,
            _ => other = true,
        }
    }
    [
        (lower, 26),
        (upper, 26),
        (digit, 10),
        (url, 2),
        (std64, 2),
        (symbol, 28),
        (other, 128),
    ]
    .iter()
    .filter(|(present, _)| *present)
    .map(|(_, n)| n)
    .sum()
}

pub fn estimate(secret: &str) -> SecretStrengthEstimate {
    SecretStrengthEstimate::from_parts(secret.chars().count(), charset_size(secret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes() {
        assert_eq!(charset_size("deadbeef00"), 16);
        assert_eq!(charset_size("DEADBEEF00"), 16);
        assert_eq!(charset_size("DeadBeef00"), 62);
        assert_eq!(charset_size("0123456789"), 10);
        assert_eq!(charset_size("abc-_XYZ09"), 64);
        assert_eq!(charset_size("abc+/XYZ09"), 64);
        assert_eq!(charset_size("a!"), 54);
        assert_eq!(charset_size(""), 0);
    }

    #[test]
    fn zero_for_degenerate_inputs() {
        assert_eq!(estimate("").estimated_bits, 0.0);
    }
}
