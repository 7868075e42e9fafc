#![no_main]

use ehi_core::format::{parse_space, space_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(space) = parse_space(data) {
        // whatever parses must serialize and parse back to the same text
        let text = space_to_json(&space);
        let again = parse_space(text.as_bytes()).expect("serialized space parses");
        assert_eq!(space_to_json(&again), text);
    }
});
