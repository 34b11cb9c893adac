#![no_main]

use cate::data::{read_results_from, write_results_to};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_results_from(data) {
        let mut out = Vec::new();
        write_results_to(&records, &mut out).expect("write parsed records");
        let again = read_results_from(out.as_slice()).expect("re-read written records");
        assert_eq!(records.len(), again.len());
    }
});
