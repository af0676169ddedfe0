#![no_main]
use libfuzzer_sys::fuzz_target;

use sinomar::ct::{render_phantom, PhantomSpec};
use sinomar::io::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = Config::parse(text) else { return };
    let Ok(spec) = PhantomSpec::from_config(&cfg) else { return };
    // keep rasterization bounded; validate() rejects out-of-FOV shapes
    if spec.ellipses.len() + spec.metal.len() <= 16 {
        let _ = render_phantom(&spec, 16, 16, 1.0);
    }
});
