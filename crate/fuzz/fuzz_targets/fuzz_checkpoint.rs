// Fuzz target: checkpoint container decoding and parameter reconstruction.
//
// Exercises JSON parsing plus the block-name/shape/finiteness validation and
// schedule rebuild. Must never panic or over-allocate on hostile input.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ckpt) = diffged::training::Checkpoint::from_json(text) {
            let _ = ckpt.to_params();
            let _ = ckpt.schedule();
            let _ = ckpt.vocabulary();
        }
    }
});
