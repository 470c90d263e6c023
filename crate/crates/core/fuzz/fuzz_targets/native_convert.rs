#![no_main]

use libfuzzer_sys::fuzz_target;
use sdr_cir::eval::{convert_native, NativeFormat};

fuzz_target!(|data: &str| {
    for format in [
        NativeFormat::Cirr,
        NativeFormat::Circo,
        NativeFormat::FashionIq { category: None },
        NativeFormat::FashionIq {
            category: Some("dress".into()),
        },
    ] {
        let _ = convert_native(data, &format);
    }
});
