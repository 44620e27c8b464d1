use std::collections::HashMap;

use super::CorpusError;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Bijective token/id map. Ids `0..4` are the reserved specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::reserved_only()
    }
}

impl Vocabulary {
    pub fn reserved_only() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    /// Keeps the `cap - 4` most frequent tokens, ties broken lexicographically.
    pub fn build<'t>(
        tokens: impl IntoIterator<Item = &'t str>,
        cap: usize,
    ) -> Result<Self, CorpusError> {
        if cap < 5 {
            return Err(CorpusError::CapTooSmall(cap));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            if !RESERVED.contains(&t) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut vocab = Self::reserved_only();
        for (tok, _) in ranked.into_iter().take(cap - RESERVED.len()) {
            vocab.index.insert(tok.to_string(), vocab.tokens.len());
            vocab.tokens.push(tok.to_string());
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Maps tokens to ids (unknown → `UNK`) and appends `EOS`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id_of(t.as_ref()).unwrap_or(UNK))
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Inverse of [`encode`](Self::encode): stops at `EOS`, drops `PAD`/`BOS`.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .filter(|&&id| id != PAD && id != BOS)
            .map(|&id| self.token_of(id).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    /// `token<TAB>id` lines in id order.
    pub fn to_tsv(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}\t{i}\n"))
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let err = |line: usize, reason: &str| CorpusError::VocabFormat {
            line,
            reason: reason.to_string(),
        };
        let mut entries: Vec<(String, usize, usize)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| err(n + 1, "missing tab"))?;
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(err(n + 1, "token must be non-empty without whitespace"));
            }
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| err(n + 1, "id is not an integer"))?;
            entries.push((tok.to_string(), id, n + 1));
        }
        entries.sort_by_key(|e| e.1);
        let mut tokens = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (expected, (tok, id, line)) in entries.into_iter().enumerate() {
            if id != expected {
                return Err(err(line, "ids must be dense and unique starting at 0"));
            }
            if id < RESERVED.len() && tok != RESERVED[id] {
                return Err(err(line, "reserved ids 0..4 must hold the special tokens"));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(err(line, "duplicate token"));
            }
            tokens.push(tok);
        }
        if tokens.len() < RESERVED.len() {
            return Err(err(0, "special tokens missing"));
        }
        Ok(Self { tokens, index })
    }
}
