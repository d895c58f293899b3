#![no_main]

use libfuzzer_sys::fuzz_target;
use robustnet::harness::parse_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_csv(data);
});
