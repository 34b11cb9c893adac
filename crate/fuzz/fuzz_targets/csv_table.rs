#![no_main]

use cate::data::{read_csv_from, write_csv_to};
use libfuzzer_sys::fuzz_target;

// Anything that parses must survive a write and re-read unchanged.
fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_csv_from(data) {
        let mut out = Vec::new();
        write_csv_to(&table, &mut out).expect("write parsed table");
        let again = read_csv_from(out.as_slice()).expect("re-read written table");
        assert_eq!(table, again);
    }
});
