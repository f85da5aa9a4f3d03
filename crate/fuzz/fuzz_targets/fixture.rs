#![no_main]

use libfuzzer_sys::fuzz_target;
use rsnl::simulators::Fixture;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(f) = Fixture::parse(text) {
            let again = Fixture::parse(&f.to_toml()).expect("re-encoded fixture parses");
            assert_eq!(f.values.len(), again.values.len());
        }
    }
});
