#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = rsnl_cli::config::parse_config(text, Path::new("fuzz.toml")) {
            // anything that validates must yield a usable run configuration
            cfg.rsnl_config().validate().expect("validated config");
        }
    }
});
