use std::fs;
use std::path::Path;

use super::{CorpusError, SentencePair, Vocabulary};

/// Longest sentence (in words, excluding `EOS`) kept for training.
pub const DEFAULT_MAX_LEN: usize = 80;

fn io_err(path: &Path, err: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        err,
    }
}

/// One whitespace-tokenized sentence per line.
pub fn read_lines(path: &Path) -> Result<Vec<Vec<String>>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn write_lines(path: &Path, sentences: &[Vec<String>]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub type RawPair = (Vec<String>, Vec<String>);

pub fn read_parallel(source: &Path, target: &Path) -> Result<Vec<RawPair>, CorpusError> {
    let src = read_lines(source)?;
    let tgt = read_lines(target)?;
    if src.len() != tgt.len() {
        return Err(CorpusError::ParallelMismatch {
            source_lines: src.len(),
            target_lines: tgt.len(),
        });
    }
    Ok(src.into_iter().zip(tgt).collect())
}

/// Encodes raw pairs, dropping any whose either side exceeds `max_len` words.
pub fn encode_pairs(
    source_vocab: &Vocabulary,
    target_vocab: &Vocabulary,
    raw: &[RawPair],
    max_len: usize,
) -> Vec<SentencePair> {
    raw.iter()
        .filter(|(s, t)| s.len() <= max_len && t.len() <= max_len)
        .map(|(s, t)| SentencePair::new(source_vocab.encode(s), target_vocab.encode(t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EOS;

    #[test]
    fn parallel_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("source.txt");
        let t = dir.path().join("target.txt");
        let src = vec![vec!["a".to_string(), "b".to_string()], vec![]];
        let tgt = vec![
            vec!["x".to_string()],
            vec!["y".to_string(), "z".to_string()],
        ];
        write_lines(&s, &src).unwrap();
        write_lines(&t, &tgt).unwrap();
        let pairs = read_parallel(&s, &t).unwrap();
        assert_eq!(pairs, src.into_iter().zip(tgt).collect::<Vec<_>>());

        write_lines(&t, &[vec!["x".to_string()]]).unwrap();
        assert!(matches!(
            read_parallel(&s, &t),
            Err(CorpusError::ParallelMismatch { .. })
        ));
    }

    #[test]
    fn long_pairs_are_filtered() {
        let v = Vocabulary::build(["a"], 5).unwrap();
        let raw = vec![
            (vec!["a".to_string(); 3], vec!["a".to_string()]),
            (vec!["a".to_string()], vec!["a".to_string(); 2]),
        ];
        let pairs = encode_pairs(&v, &v, &raw, 2);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].target, vec![4, 4, EOS]);
    }
}
