#![no_main]

use libfuzzer_sys::fuzz_target;
use sdr_cir::EmbeddingStore;

fuzz_target!(|data: &[u8]| {
    let Ok(store) = EmbeddingStore::from_bytes(data, "fuzz") else {
        return;
    };
    // Anything accepted must survive a re-encode.
    let again = EmbeddingStore::from_bytes(&store.to_bytes(), "fuzz").expect("re-encoded store rejected");
    assert_eq!(again.dim(), store.dim());
    assert_eq!(again.ids(), store.ids());
});
