//! Deterministic street-address normalization used to join tests to parcels.

use alloc::string::String;
use alloc::vec::Vec;

const SUFFIXES: &[(&str, &str)] = &[
    ("STREET", "ST"),
    ("STR", "ST"),
    ("AVENUE", "AVE"),
    ("AV", "AVE"),
    ("AVEN", "AVE"),
    ("BOULEVARD", "BLVD"),
    ("BLV", "BLVD"),
    ("ROAD", "RD"),
    ("DRIVE", "DR"),
    ("DRV", "DR"),
    ("LANE", "LN"),
    ("COURT", "CT"),
    ("PLACE", "PL"),
    ("TERRACE", "TER"),
    ("PARKWAY", "PKWY"),
    ("HIGHWAY", "HWY"),
    ("CIRCLE", "CIR"),
    ("TRAIL", "TRL"),
    ("SQUARE", "SQ"),
];

const DIRECTIONS: &[(&str, &str)] = &[
    ("NORTH", "N"),
    ("SOUTH", "S"),
    ("EAST", "E"),
    ("WEST", "W"),
    ("NORTHEAST", "NE"),
    ("NORTHWEST", "NW"),
    ("SOUTHEAST", "SE"),
    ("SOUTHWEST", "SW"),
];

/// Tokens that start a unit designator; the designator and its identifier are dropped.
const UNIT_WORDS: &[&str] = &[
    "APT",
    "APARTMENT",
    "UNIT",
    "STE",
    "SUITE",
    "LOT",
    "RM",
    "ROOM",
    "FL",
    "FLOOR",
];

fn canonical(token: &str) -> &str {
    SUFFIXES
        .iter()
        .chain(DIRECTIONS)
        .find(|(long, _)| *long == token)
        .map(|(_, short)| *short)
        .unwrap_or(token)
}

/// Uppercase, strip punctuation, collapse whitespace, abbreviate street
/// suffixes and directions, and drop unit designators.
///
/// ```
/// use aquarisk_core::address::normalize_address;
/// assert_eq!(normalize_address("123 N. Saginaw Street, Apt 4"), "123 N SAGINAW ST");
/// ```
pub fn normalize_address(raw: &str) -> String {
    let mut cleaned = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c.is_ascii_alphanumeric() {
            cleaned.push(c.to_ascii_uppercase());
        } else if c == '#' {
            // `#4` is a unit number; keep the marker as its own token
            cleaned.push_str(" # ");
        } else if c.is_whitespace() || c.is_ascii_punctuation() {
            cleaned.push(' ');
        }
        // any other (non-ASCII) character is dropped
    }

    let tokens: Vec<&str> = cleaned.split_whitespace().collect();
    let mut out: Vec<&str> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i];
        if t == "#" || UNIT_WORDS.contains(&t) {
            // skip the designator and the identifier following it
            i += 2;
            continue;
        }
        out.push(canonical(t));
        i += 1;
    }
    out.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_common_forms() {
        assert_eq!(
            normalize_address("123 N. Saginaw Street, Apt 4"),
            "123 N SAGINAW ST"
        );
        assert_eq!(normalize_address("123  n saginaw st"), "123 N SAGINAW ST");
    }

    #[test]
    fn empty_and_punctuation_only() {
        assert_eq!(normalize_address(""), "");
        assert_eq!(normalize_address(" ,.;  "), "");
    }

    #[test]
    fn units_and_directions() {
        assert_eq!(normalize_address("45 West Court Street #2B"), "45 W CT ST");
        assert_eq!(normalize_address("9 Pierson Rd Unit 12"), "9 PIERSON RD");
        assert_eq!(normalize_address("701 E. Boulevard Drive"), "701 E BLVD DR");
    }

    proptest! {
        #[test]
        fn idempotent(s in "[ -~]{0,40}") {
            let once = normalize_address(&s);
            prop_assert_eq!(normalize_address(&once), once);
        }

        #[test]
        fn idempotent_on_address_like(num in 1u32..9999, dir in "(N|S|n\\.|North|)", street in "[A-Za-z]{1,10}",
                                      suf in "(Street|St\\.|AVENUE|ave|Rd|)", unit in "(, Apt [0-9]|# ?[0-9A-Z]{1,2}|)") {
            let raw = alloc::format!("{num} {dir} {street} {suf}{unit}");
            let once = normalize_address(&raw);
            prop_assert_eq!(normalize_address(&once), once.clone());
            prop_assert!(!once.contains("  "));
        }
    }
}
