#![no_main]

use libfuzzer_sys::fuzz_target;
use sdr_cir::eval::parse_queries;
use sdr_cir::eval::queries::to_json_lines;

fuzz_target!(|data: &str| {
    if let Ok(queries) = parse_queries(data) {
        let again = parse_queries(&to_json_lines(&queries)).expect("re-serialized queries rejected");
        assert_eq!(again.len(), queries.len());
    }
});
