#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = sinomar::io::config::Config::parse(text) {
            // exercise the typed accessors over whatever parsed
            for section in cfg.sections() {
                let _ = section.get_f64("x");
                let _ = section.get_usize_list("list");
                let _ = section.get_bool("flag");
            }
        }
    }
});
