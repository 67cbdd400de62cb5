// Fuzz target: line-delimited pair dataset parser.
//
// Run with:
//   cargo +nightly fuzz run fuzz_dataset
//
// The parser must never panic on arbitrary input; errors are fine.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = diffged::dataset::parse_dataset(std::io::BufReader::new(data));
});
