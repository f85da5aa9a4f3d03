#![no_main]

use libfuzzer_sys::fuzz_target;
use rsnl::mcmc::{parse_chains_csv, write_chains_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok((names, chains)) = parse_chains_csv(data) {
        let mut out = Vec::new();
        write_chains_csv(&chains, &names, &mut out).expect("parsed chains re-encode");
        let (names2, chains2) = parse_chains_csv(out.as_slice()).expect("re-encoded chains parse");
        assert_eq!(names, names2);
        assert_eq!(chains.num_draws(), chains2.num_draws());
    }
});
