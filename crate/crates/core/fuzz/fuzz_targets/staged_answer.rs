#![no_main]

use libfuzzer_sys::fuzz_target;
use sdr_cir::cot::{assistant_text, parse_staged_answer};

fuzz_target!(|data: &str| {
    let _ = parse_staged_answer(data);
    if let Ok(text) = assistant_text(data) {
        let _ = parse_staged_answer(&text);
    }
});
