#![no_main]

use libfuzzer_sys::fuzz_target;
use nmt_coverage::corpus::{gen_toy_corpus, ToyTaskSpec};

fuzz_target!(|text: &str| {
    let Ok(spec) = ToyTaskSpec::from_json(text) else {
        return;
    };
    // Keep generation cheap; the parser already saw the full values.
    let small = ToyTaskSpec {
        alphabet_size: spec.alphabet_size.min(64),
        size: spec.size.min(4),
        min_len: spec.min_len.min(16),
        max_len: spec.max_len.min(16),
        ..spec
    };
    let Ok(corpus) = gen_toy_corpus(&small) else {
        return;
    };
    for pair in &corpus.pairs {
        assert_eq!(pair.target.len(), pair.fertility.iter().sum::<usize>());
        assert_eq!(pair.links.len(), pair.target.len());
    }
});
