#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Decoding untrusted bytes must return Ok or Err, never panic or
    // over-allocate.
    if let Ok(tensor) = sinomar::io::marf::decode(data) {
        // re-encoding a decoded tensor must succeed
        let _ = sinomar::io::marf::encode(&tensor, sinomar::io::marf::Dtype::F64);
    }
});
