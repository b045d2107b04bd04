#![no_main]

use libfuzzer_sys::fuzz_target;
use shrinkdetect::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml_str(text) {
        // anything accepted must survive a round trip
        let again = cfg.to_toml_string().expect("serialize");
        let back = RunConfig::from_toml_str(&again).expect("reparse");
        assert_eq!(back.to_toml_string().unwrap(), again);
        if let Some(sw) = &cfg.sweep {
            let _ = sw.grid();
        }
    }
});
