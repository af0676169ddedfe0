#![no_main]
use libfuzzer_sys::fuzz_target;

use sinomar::eval::ExperimentConfig;
use sinomar::io::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = Config::parse(text) else { return };
    if let Ok(parsed) = ExperimentConfig::from_config(&cfg) {
        // a config that parses must echo back through its own writer
        let echoed = parsed.to_config_string();
        let reparsed = Config::parse(&echoed).expect("echoed config must parse");
        ExperimentConfig::from_config(&reparsed).expect("echoed config must validate");
    }
});
