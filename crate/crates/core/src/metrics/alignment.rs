use std::collections::BTreeSet;
use std::fmt;

use super::MetricsError;

/// Alignment link between target position `tgt` and source position `src`
/// (both 0-based in memory, 1-based in files).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub tgt: usize,
    pub src: usize,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.tgt + 1, self.src + 1)
    }
}

/// Sure and possible reference links; `sure ⊆ possible` always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentReference {
    sure: BTreeSet<Link>,
    possible: BTreeSet<Link>,
}

impl AlignmentReference {
    pub fn new(
        sure: impl IntoIterator<Item = Link>,
        possible: impl IntoIterator<Item = Link>,
    ) -> Self {
        let sure: BTreeSet<Link> = sure.into_iter().collect();
        let mut possible: BTreeSet<Link> = possible.into_iter().collect();
        possible.extend(sure.iter().copied());
        Self { sure, possible }
    }

    pub fn sure_only(links: impl IntoIterator<Item = Link>) -> Self {
        Self::new(links, [])
    }

    pub fn sure(&self) -> &BTreeSet<Link> {
        &self.sure
    }

    pub fn possible(&self) -> &BTreeSet<Link> {
        &self.possible
    }

    /// Number of sure links per source position, for positions `0..src_len`.
    pub fn source_fertility(&self, src_len: usize) -> Vec<usize> {
        let mut f = vec![0; src_len];
        for l in &self.sure {
            if l.src < src_len {
                f[l.src] += 1;
            }
        }
        f
    }
}

/// Parses blocks of `i-j S` / `i-j P` lines (1-based `i` = target,
/// `j` = source; a missing label means sure). Every block is terminated by a
/// blank line, so an empty block is a lone blank line.
pub fn parse_alignment_blocks(text: &str) -> Result<Vec<AlignmentReference>, MetricsError> {
    let mut blocks = Vec::new();
    let mut sure = Vec::new();
    let mut possible = Vec::new();
    let mut pending = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            blocks.push(AlignmentReference::new(sure.drain(..), possible.drain(..)));
            pending = false;
            continue;
        }
        let err = |reason: &str| MetricsError::Parse {
            line: n + 1,
            reason: reason.to_string(),
        };
        let mut fields = line.split_whitespace();
        let pair = fields.next().ok_or_else(|| err("empty line"))?;
        let label = fields.next().unwrap_or("S");
        if fields.next().is_some() {
            return Err(err("trailing fields"));
        }
        let (i, j) = pair.split_once('-').ok_or_else(|| err("expected i-j"))?;
        let i: usize = i
            .parse()
            .map_err(|_| err("target index is not an integer"))?;
        let j: usize = j
            .parse()
            .map_err(|_| err("source index is not an integer"))?;
        if i == 0 || j == 0 {
            return Err(err("indices are 1-based"));
        }
        let link = Link {
            tgt: i - 1,
            src: j - 1,
        };
        match label {
            "S" => sure.push(link),
            "P" => possible.push(link),
            _ => return Err(err("label must be S or P")),
        }
        pending = true;
    }
    if pending {
        blocks.push(AlignmentReference::new(sure, possible));
    }
    Ok(blocks)
}

pub fn write_alignment_blocks(refs: &[AlignmentReference]) -> String {
    let mut out = String::new();
    for r in refs {
        for l in r.possible() {
            let label = if r.sure().contains(l) { "S" } else { "P" };
            out.push_str(&format!("{l} {label}\n"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels_and_blocks() {
        let text = "1-1 S\n2-3 P\n\n\n1-2\n";
        let blocks = parse_alignment_blocks(text).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].sure().len(), 1);
        assert_eq!(blocks[0].possible().len(), 2);
        assert!(blocks[1].possible().is_empty());
        assert!(blocks[2].sure().contains(&Link { tgt: 0, src: 1 }));
        assert_eq!(
            parse_alignment_blocks(&write_alignment_blocks(&blocks)).unwrap(),
            blocks
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["0-1 S\n", "1_1 S\n", "1-1 X\n", "a-1\n", "1-1 S extra\n"] {
            assert!(parse_alignment_blocks(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn sure_is_subset_of_possible() {
        let r = AlignmentReference::new([Link { tgt: 0, src: 0 }], [Link { tgt: 1, src: 1 }]);
        assert!(r.sure().is_subset(r.possible()));
        assert_eq!(r.source_fertility(3), vec![1, 0, 0]);
    }
}
