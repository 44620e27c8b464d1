#![no_main]

use libfuzzer_sys::fuzz_target;
use nmt_coverage::attention::{parse_traces, write_traces};

fuzz_target!(|text: &str| {
    let Ok(traces) = parse_traces(text) else {
        return;
    };
    let written = write_traces(&traces);
    let again = parse_traces(&written).expect("written traces parse");
    assert_eq!(write_traces(&again), written);
});
