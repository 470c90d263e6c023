//! Replays the checked-in fuzz corpus through the same entry points the fuzz
//! targets use, so seeds keep working without a nightly toolchain.

use std::path::PathBuf;

use sdr_cir::cot::{assistant_text, parse_cache, parse_staged_answer};
use sdr_cir::eval::{convert_native, parse_description_set, parse_queries, NativeFormat};
use sdr_cir::EmbeddingStore;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).expect("text seed is not UTF-8")
}

#[test]
fn sdre_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("sdre_decode") {
        match EmbeddingStore::from_bytes(&bytes, &name) {
            Ok(store) => {
                accepted += 1;
                let again = EmbeddingStore::from_bytes(&store.to_bytes(), &name).unwrap();
                assert_eq!(again.ids(), store.ids(), "{name}");
            }
            Err(e) => assert!(e.is_format_error(), "{name}: {e}"),
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn staged_answer_seeds() {
    for (name, bytes) in seeds("staged_answer") {
        let t = text(&bytes);
        let direct = parse_staged_answer(t);
        let via_body = assistant_text(t).map(|m| parse_staged_answer(&m));
        match name.as_str() {
            "plain" | "fenced" => assert!(direct.is_ok(), "{name}"),
            "chat_body" => assert!(matches!(via_body, Ok(Ok(_))), "{name}"),
            _ => assert!(direct.is_err(), "{name}"),
        }
    }
}

#[test]
fn query_seeds() {
    for (name, bytes) in seeds("query_lines") {
        let r = parse_queries(text(&bytes));
        assert_eq!(r.is_ok(), name == "two_queries", "{name}: {r:?}");
    }
}

#[test]
fn cache_seeds() {
    for (name, bytes) in seeds("cache_lines") {
        let r = parse_cache(text(&bytes));
        match name.as_str() {
            "one_entry" | "torn_tail" => assert_eq!(r.unwrap().len(), 1, "{name}"),
            _ => assert!(r.is_err(), "{name}"),
        }
    }
}

#[test]
fn native_seeds() {
    for (name, bytes) in seeds("native_convert") {
        let format = match name.as_str() {
            "cirr" | "cirr_test_split" => NativeFormat::Cirr,
            "circo" => NativeFormat::Circo,
            _ => NativeFormat::FashionIq {
                category: Some("dress".into()),
            },
        };
        let r = convert_native(text(&bytes), &format);
        assert_eq!(r.is_ok(), name != "cirr_test_split", "{name}: {r:?}");
    }
}

#[test]
fn description_set_seeds() {
    for (name, bytes) in seeds("description_set") {
        let r = parse_description_set(text(&bytes));
        match name.as_str() {
            "two" => assert_eq!(r.unwrap().len(), 2),
            "later_wins" => assert_eq!(r.unwrap()["q0"], "b"),
            _ => assert!(r.is_err(), "{name}"),
        }
    }
}
