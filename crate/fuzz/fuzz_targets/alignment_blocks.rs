#![no_main]

use libfuzzer_sys::fuzz_target;
use nmt_coverage::metrics::{parse_alignment_blocks, write_alignment_blocks};

fuzz_target!(|text: &str| {
    let Ok(blocks) = parse_alignment_blocks(text) else {
        return;
    };
    let written = write_alignment_blocks(&blocks);
    let again = parse_alignment_blocks(&written).expect("written blocks parse");
    assert_eq!(write_alignment_blocks(&again), written);
    for r in &again {
        assert!(r.sure().is_subset(r.possible()));
    }
});
