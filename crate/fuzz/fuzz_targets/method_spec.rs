#![no_main]

use cate::harness::{parse_outcome, parse_propensity, parse_regression, MethodSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = MethodSpec::parse(text);
        let _ = parse_regression(text);
        let _ = parse_propensity(text);
        let _ = parse_outcome(text);
    }
});
