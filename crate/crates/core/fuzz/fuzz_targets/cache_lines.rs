#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = sdr_cir::cot::parse_cache(data);
});
