#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    ambient_lab::fuzzing::denoiser_json(data);
});
