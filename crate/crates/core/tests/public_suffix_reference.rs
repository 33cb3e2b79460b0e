//! Runs the public suffix list's own reference cases against the full list.

use trackscope_core::domain::{registrable_domain, SuffixList};

const LIST: &str = include_str!("fixtures/public_suffix_full.dat");
const CASES: &str = include_str!("fixtures/psl_tests.txt");

fn cases() -> Vec<(&'static str, Option<&'static str>)> {
    CASES
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("//"))
        .map(|l| {
            let (input, expected) = l.split_once(' ').expect("two columns");
            (input, (expected != "null").then_some(expected))
        })
        .collect()
}

#[test]
fn reference_cases() {
    let list = SuffixList::parse(LIST, "full");
    assert!(list.len() > 9000);
    let mut failures = Vec::new();
    let mut checked = 0;
    for (input, expected) in cases() {
        // the null-input and punycode cases exercise IDNA conversion, which
        // is out of scope: hostnames arrive already ASCII-encoded
        if input == "null" || input.contains("xn--") {
            continue;
        }
        checked += 1;
        let got = registrable_domain(input, &list).ok().map(|d| d.value);
        if got.as_deref() != expected {
            failures.push(format!("{input}: expected {expected:?}, got {got:?}"));
        }
    }
    assert!(checked > 60, "only {checked} cases ran");
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
