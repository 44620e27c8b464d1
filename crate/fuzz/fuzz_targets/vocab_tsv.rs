#![no_main]

use libfuzzer_sys::fuzz_target;
use nmt_coverage::corpus::Vocabulary;

fuzz_target!(|text: &str| {
    let Ok(vocab) = Vocabulary::from_tsv(text) else {
        return;
    };
    let tsv = vocab.to_tsv();
    let again = Vocabulary::from_tsv(&tsv).expect("written vocabulary parses");
    assert_eq!(again.to_tsv(), tsv);
    for id in 0..vocab.len() {
        let token = vocab.token_of(id).expect("dense ids");
        assert_eq!(vocab.id_of(token), Some(id));
    }
});
