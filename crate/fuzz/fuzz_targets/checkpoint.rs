#![no_main]

use libfuzzer_sys::fuzz_target;
use nmt_coverage::model::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(store) = decode_checkpoint(data) else {
        return;
    };
    // Anything accepted must survive a re-encode unchanged.
    let bytes = encode_checkpoint(&store);
    let again = decode_checkpoint(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(encode_checkpoint(&again), bytes);
});
