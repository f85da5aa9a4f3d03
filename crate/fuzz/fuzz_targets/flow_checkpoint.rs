#![no_main]

use libfuzzer_sys::fuzz_target;
use rsnl::flow::{decode_flow, encode_flow};

fuzz_target!(|data: &[u8]| {
    if let Ok(flow) = decode_flow(data) {
        let bytes = encode_flow(&flow);
        let again = decode_flow(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(encode_flow(&again), bytes);
        let x = vec![0.1; flow.summary_dim()];
        let c = vec![-0.2; flow.context_dim()];
        let _ = flow.log_prob(&x, &c);
    }
});
