//! Text dump of attention weights and final coverage per decoded sentence.
//!
//! ```text
//! # sentence 0
//! source<TAB>w1 w2 w3
//! output<TAB>w1_0 w2_0
//! variant<TAB>linguistic-plain
//! alpha<TAB>2<TAB>3
//! 0.9<TAB>0.05<TAB>0.05
//! 0.1<TAB>0.8<TAB>0.1
//! coverage<TAB>3<TAB>1
//! 1<TAB>...
//! ```
//!
//! Blocks are separated by a blank line; the coverage section is omitted
//! for the baseline.

use thiserror::Error;

use crate::model::CoverageVariant;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
#[error("trace line {line}: {reason}")]
pub struct TraceError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub source: Vec<String>,
    pub output: Vec<String>,
    pub variant: CoverageVariant,
    /// `I × J`.
    pub alpha: Tensor,
    /// Final coverage, `J × d`.
    pub coverage: Option<Tensor>,
}

fn write_matrix(out: &mut String, tag: &str, m: &Tensor) {
    let (r, c) = (m.rows(), m.cols());
    out.push_str(&format!("{tag}\t{r}\t{c}\n"));
    for i in 0..r {
        let row: Vec<String> = m.row_slice(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
}

pub fn write_traces(traces: &[AttentionTrace]) -> String {
    let mut out = String::new();
    for (k, t) in traces.iter().enumerate() {
        out.push_str(&format!("# sentence {k}\n"));
        out.push_str(&format!("source\t{}\n", t.source.join(" ")));
        out.push_str(&format!("output\t{}\n", t.output.join(" ")));
        out.push_str(&format!("variant\t{}\n", t.variant));
        write_matrix(&mut out, "alpha", &t.alpha);
        if let Some(c) = &t.coverage {
            write_matrix(&mut out, "coverage", c);
        }
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), TraceError> {
        match self.inner.next() {
            Some((i, l)) => Ok((i + 1, l)),
            None => Err(TraceError {
                line: 0,
                reason: format!("unexpected end of input, expected {what}"),
            }),
        }
    }
}

fn err(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError {
        line,
        reason: reason.into(),
    }
}

fn tokens(line: usize, text: &str, tag: &str) -> Result<Vec<String>, TraceError> {
    let rest = text
        .strip_prefix(tag)
        .and_then(|r| r.strip_prefix('\t'))
        .ok_or_else(|| err(line, format!("expected `{tag}` line")))?;
    Ok(rest.split_whitespace().map(str::to_string).collect())
}

/// Upper bound on matrix cells accepted from a header, to keep malformed
/// input from requesting huge allocations.
const MAX_CELLS: usize = 1 << 24;

fn matrix(
    lines: &mut Lines<'_>,
    line: usize,
    header: &str,
    tag: &str,
) -> Result<Tensor, TraceError> {
    let mut parts = header.split('\t');
    if parts.next() != Some(tag) {
        return Err(err(line, format!("expected `{tag}` header")));
    }
    let mut dim = || -> Result<usize, TraceError> {
        parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| err(line, format!("bad `{tag}` dimensions")))
    };
    let (r, c) = (dim()?, dim()?);
    if r.checked_mul(c).is_none_or(|cells| cells > MAX_CELLS) {
        return Err(err(line, "matrix too large"));
    }
    let mut data = Vec::with_capacity(r * c);
    for _ in 0..r {
        let (ln, text) = lines.next("matrix row")?;
        let row: Result<Vec<f64>, _> = if c == 0 && text.is_empty() {
            Ok(vec![])
        } else {
            text.split('\t').map(str::parse::<f64>).collect()
        };
        let row = row.map_err(|e| err(ln, e.to_string()))?;
        if row.len() != c {
            return Err(err(ln, format!("expected {c} values, found {}", row.len())));
        }
        data.extend(row);
    }
    Tensor::matrix(r, c, data).map_err(|e| err(line, e.to_string()))
}

pub fn parse_traces(text: &str) -> Result<Vec<AttentionTrace>, TraceError> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let mut out = Vec::new();
    loop {
        while lines.inner.peek().is_some_and(|(_, l)| l.trim().is_empty()) {
            lines.inner.next();
        }
        if lines.inner.peek().is_none() {
            return Ok(out);
        }
        let (ln, header) = lines.next("sentence header")?;
        if !header.starts_with("# sentence") {
            return Err(err(ln, "expected `# sentence` header"));
        }
        let (ln, text) = lines.next("source line")?;
        let source = tokens(ln, text, "source")?;
        let (ln, text) = lines.next("output line")?;
        let output = tokens(ln, text, "output")?;
        let (ln, text) = lines.next("variant line")?;
        let variant = match tokens(ln, text, "variant")?.as_slice() {
            [name] => name.parse::<CoverageVariant>().map_err(|e| err(ln, e))?,
            _ => return Err(err(ln, "expected one variant name")),
        };
        let (ln, text) = lines.next("alpha header")?;
        let alpha = matrix(&mut lines, ln, text, "alpha")?;
        if alpha.cols() != source.len() || alpha.rows() != output.len() {
            return Err(err(
                ln,
                "alpha dimensions disagree with source/output lengths",
            ));
        }
        let coverage = match lines.inner.peek() {
            Some((_, l)) if l.starts_with("coverage") => {
                let (ln, text) = lines.next("coverage header")?;
                let c = matrix(&mut lines, ln, text, "coverage")?;
                if c.rows() != source.len() {
                    return Err(err(ln, "coverage rows disagree with source length"));
                }
                Some(c)
            }
            _ => None,
        };
        out.push(AttentionTrace {
            source,
            output,
            variant,
            alpha,
            coverage,
        });
    }
}
