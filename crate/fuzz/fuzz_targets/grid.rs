#![no_main]

use cate::harness::{parse_grid, MAX_GRID};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(grid) = parse_grid(text) {
            assert!(!grid.is_empty() && grid.len() <= MAX_GRID);
            assert!(grid.iter().all(|v| v.is_finite()));
        }
    }
});
