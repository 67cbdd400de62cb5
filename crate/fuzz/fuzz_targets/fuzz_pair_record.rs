// Fuzz target: single pair record parser (the `solve --pair` input path).
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let mut vocab = diffged::graph::LabelVocabulary::new();
        let _ = diffged::dataset::parse_pair_record(text, &mut vocab);
    }
});
