//! The checked-in header must declare every exported symbol.

const HEADER: &str = include_str!("../include/levylan.h");
const SOURCE: &str = include_str!("../src/lib.rs");

#[test]
fn header_declares_every_export() {
    let names: Vec<&str> = SOURCE
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .filter_map(|rest| rest.split('(').next())
        .collect();
    assert!(names.len() >= 10, "{names:?}");
    for n in names {
        assert!(HEADER.contains(&format!("{n}(")), "{n} missing from levylan.h");
    }
}

#[test]
fn status_codes_match() {
    for (name, code) in [("LEVYLAN_STATUS_OK", 0), ("LEVYLAN_STATUS_NULL_POINTER", 1), ("LEVYLAN_STATUS_BUFFER_TOO_SMALL", 7)] {
        assert!(HEADER.contains(&format!("{name} = {code}")), "{name}");
    }
}
