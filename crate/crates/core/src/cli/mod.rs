//! The `nmt-coverage` command line: toy data generation, training,
//! translation, forced alignment, scoring and parameter accounting.

mod config;

pub use config::{ConfigFile, ModelOverrides, Overrides, RunConfig, DEFAULT_BEAM};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::attention::{parse_traces, write_traces, AttentionTrace};
use crate::corpus::{
    encode_pairs, gen_toy_corpus, read_lines, read_parallel, write_lines, ToyCorpus, ToyTaskSpec,
    Vocabulary, DEFAULT_MAX_LEN,
};
use crate::inference::{beam_decode, extract_alignment, greedy_decode, max_decode_len};
use crate::metrics::{
    bleu, corpus_aer, corpus_saer, coverage_diagnostics, mean_diagnostics, parse_alignment_blocks,
    write_alignment_blocks, AlignmentReference, DiagnosticsInput, MetricsReport,
    SoftAlignmentMatrix,
};
use crate::model::{
    count_parameters, decode_checkpoint, encode_checkpoint, CoverageVariant, ModelConfig,
    ParameterStore, Preset,
};
use crate::seed::{self, Stream};
use crate::train::train_loop;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const SOURCE_VOCAB_FILE: &str = "src.vocab";
pub const TARGET_VOCAB_FILE: &str = "tgt.vocab";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Parser)]
#[command(
    name = "nmt-coverage",
    version,
    about = "Attention-based translation with coverage"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration (`preset`, `model`, `train`, `beam`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub preset: Option<Preset>,
    #[arg(long, global = true)]
    pub variant: Option<CoverageVariant>,
    /// Coverage vector size d.
    #[arg(long, global = true)]
    pub cov_dim: Option<usize>,
    /// Upper bound N on predicted fertility.
    #[arg(long = "fertility-N", global = true)]
    pub fertility_n: Option<f64>,
    /// Weight of the fertility penalty.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub beam: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write attention and coverage traces here (translate).
    #[arg(long, global = true)]
    pub dump_attention: Option<PathBuf>,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            preset: self.preset,
            variant: self.variant,
            cov_dim: self.cov_dim,
            fertility_n: self.fertility_n,
            lambda: self.lambda,
            beam: self.beam,
            seed: self.seed,
            dump_attention: self.dump_attention.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic parallel corpus with ground-truth alignments.
    GenData {
        /// Toy task description (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        dev_size: usize,
        #[arg(long, default_value_t = 100)]
        test_size: usize,
    },
    /// Train a model; writes checkpoint, vocabularies and a CSV report.
    Train {
        /// Prefix of `<prefix>.src` / `<prefix>.tgt` training files.
        #[arg(long)]
        train: PathBuf,
        /// Prefix of the dev files used for early stopping.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Drop pairs with more words than this on either side.
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Translate one tokenized sentence per line.
    Translate {
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, conflicts_with = "beam")]
        greedy: bool,
    },
    /// Force-align reference pairs and emit hard links and soft matrices.
    Align {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Hard links, one block per sentence.
        #[arg(long)]
        links: PathBuf,
        /// Soft attention matrices in trace format.
        #[arg(long)]
        soft: PathBuf,
    },
    /// BLEU, AER, SAER and coverage diagnostics as JSON.
    Score {
        #[arg(long, requires = "references")]
        candidates: Option<PathBuf>,
        #[arg(long, requires = "candidates")]
        references: Option<PathBuf>,
        /// Reference alignments with sure/possible links.
        #[arg(long)]
        alignments: Option<PathBuf>,
        /// Hard links produced by `align`.
        #[arg(long, requires = "alignments")]
        links: Option<PathBuf>,
        /// Soft matrices produced by `align`.
        #[arg(long, requires = "alignments")]
        soft: Option<PathBuf>,
        /// Trace dumped by `translate --dump-attention`, for diagnostics.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter counts, with the coverage increment broken down.
    Params {
        #[arg(long)]
        json: bool,
        /// Also list every tensor.
        #[arg(long)]
        verbose: bool,
    },
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let run = RunConfig::resolve(&cli.global.overrides())?;
    match &cli.command {
        Command::GenData {
            spec,
            out,
            dev_size,
            test_size,
        } => gen_data(cli.global.seed, spec, out, *dev_size, *test_size),
        Command::Train {
            train,
            dev,
            out,
            max_len,
            quiet,
        } => train_command(&run, train, dev.as_deref(), out, *max_len, *quiet),
        Command::Translate {
            model,
            input,
            output,
            greedy,
        } => translate(&run, model, input, output.as_deref(), *greedy),
        Command::Align {
            model,
            source,
            target,
            links,
            soft,
        } => align(model, source, target, links, soft),
        Command::Score {
            candidates,
            references,
            alignments,
            links,
            soft,
            trace,
            out,
        } => {
            let report = score(ScoreInputs {
                candidates: candidates.as_deref(),
                references: references.as_deref(),
                alignments: alignments.as_deref(),
                links: links.as_deref(),
                soft: soft.as_deref(),
                trace: trace.as_deref(),
            })?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            emit(out.as_deref(), &json)
        }
        Command::Params { json, verbose } => {
            print!("{}", params_text(&run.model, *json, *verbose)?);
            Ok(())
        }
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_split(out: &Path, name: &str, corpus: &ToyCorpus) -> Result<()> {
    let prefix = out.join(name);
    write_lines(&with_ext(&prefix, "src"), &corpus.sources())?;
    write_lines(&with_ext(&prefix, "tgt"), &corpus.targets())?;
    let align = with_ext(&prefix, "align");
    fs::write(&align, write_alignment_blocks(&corpus.references()))
        .with_context(|| format!("writing {}", align.display()))
}

fn gen_data(seed: Option<u64>, spec: &Path, out: &Path, dev: usize, test: usize) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let mut spec = ToyTaskSpec::from_json(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let root = spec.seed;
    for (k, (name, size)) in [("train", spec.size), ("dev", dev), ("test", test)]
        .into_iter()
        .enumerate()
    {
        let split = ToyTaskSpec {
            size,
            seed: seed::derive(root, Stream::Data, k as u64),
            ..spec.clone()
        };
        write_split(out, name, &gen_toy_corpus(&split)?)?;
    }
    Ok(())
}

fn train_command(
    run: &RunConfig,
    train: &Path,
    dev: Option<&Path>,
    out: &Path,
    max_len: usize,
    quiet: bool,
) -> Result<()> {
    let raw = read_parallel(&with_ext(train, "src"), &with_ext(train, "tgt"))?;
    let src_words: Vec<String> = raw.iter().flat_map(|p| p.0.iter().cloned()).collect();
    let tgt_words: Vec<String> = raw.iter().flat_map(|p| p.1.iter().cloned()).collect();
    let src_vocab = Vocabulary::build(src_words.iter().map(String::as_str), run.model.src_vocab)?;
    let tgt_vocab = Vocabulary::build(tgt_words.iter().map(String::as_str), run.model.tgt_vocab)?;
    let train_pairs = encode_pairs(&src_vocab, &tgt_vocab, &raw, max_len);
    let dev_pairs = match dev {
        Some(d) => {
            let raw = read_parallel(&with_ext(d, "src"), &with_ext(d, "tgt"))?;
            encode_pairs(&src_vocab, &tgt_vocab, &raw, usize::MAX)
        }
        None => Vec::new(),
    };
    if train_pairs.is_empty() {
        bail!("no training pairs within {max_len} words");
    }
    let model = ModelConfig {
        src_vocab: src_vocab.len(),
        tgt_vocab: tgt_vocab.len(),
        ..run.model.clone()
    };
    let store = ParameterStore::init(&model, run.train.seed)?;
    let outcome = train_loop(store, &train_pairs, &dev_pairs, &run.train, |e, _| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  train {:.4}  dev {:.4}  {:.1}s  {:.0} words/s",
                e.epoch, e.train_nll, e.dev_nll, e.seconds, e.words_per_sec
            );
        }
        true
    })?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
    };
    put(CHECKPOINT_FILE, &encode_checkpoint(&outcome.best))?;
    put(SOURCE_VOCAB_FILE, src_vocab.to_tsv().as_bytes())?;
    put(TARGET_VOCAB_FILE, tgt_vocab.to_tsv().as_bytes())?;
    put(REPORT_FILE, outcome.report.to_csv().as_bytes())?;
    if !quiet {
        eprintln!(
            "best epoch {} (dev {:.4}); wrote {}",
            outcome.report.best_epoch,
            outcome.report.best_dev_nll().unwrap_or(f64::NAN),
            out.display()
        );
    }
    Ok(())
}

/// Trained parameters and vocabularies from a `train` output directory.
pub struct LoadedModel {
    pub store: ParameterStore,
    pub source: Vocabulary,
    pub target: Vocabulary,
}

pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let read = |name: &str| -> Result<Vec<u8>> {
        let p = dir.join(name);
        fs::read(&p).with_context(|| format!("reading {}", p.display()))
    };
    let store = decode_checkpoint(&read(CHECKPOINT_FILE)?)?;
    let vocab = |name: &str| -> Result<Vocabulary> {
        let text =
            String::from_utf8(read(name)?).with_context(|| format!("{name} is not UTF-8"))?;
        Ok(Vocabulary::from_tsv(&text)?)
    };
    let source = vocab(SOURCE_VOCAB_FILE)?;
    let target = vocab(TARGET_VOCAB_FILE)?;
    let cfg = store.config();
    if cfg.src_vocab != source.len() || cfg.tgt_vocab != target.len() {
        bail!(
            "vocabulary sizes {}/{} do not match the checkpoint ({}/{})",
            source.len(),
            target.len(),
            cfg.src_vocab,
            cfg.tgt_vocab
        );
    }
    Ok(LoadedModel {
        store,
        source,
        target,
    })
}

fn translate(
    run: &RunConfig,
    model: &Path,
    input: &Path,
    output: Option<&Path>,
    greedy: bool,
) -> Result<()> {
    let m = load_model(model)?;
    let mut lines = Vec::new();
    let mut traces = Vec::new();
    for words in read_lines(input)? {
        let src = m.source.encode(&words);
        let limit = max_decode_len(&m.store, src.len());
        let best = if greedy {
            greedy_decode(&m.store, &src, limit)?
        } else {
            beam_decode(&m.store, &src, run.beam, limit)?.swap_remove(0)
        };
        let out = m.target.decode(&best.tokens);
        if run.dump_attention.is_some() {
            let mut source: Vec<String> = words.clone();
            source.push(crate::corpus::RESERVED[crate::corpus::EOS].to_string());
            let mut output = out.clone();
            if best.finished {
                output.push(crate::corpus::RESERVED[crate::corpus::EOS].to_string());
            }
            traces.push(AttentionTrace {
                source,
                output,
                variant: m.store.config().variant,
                alpha: best.record.alpha.clone(),
                coverage: m
                    .store
                    .config()
                    .variant
                    .has_coverage()
                    .then(|| best.coverage.values.clone()),
            });
        }
        lines.push(out);
    }
    if let Some(p) = &run.dump_attention {
        fs::write(p, write_traces(&traces)).with_context(|| format!("writing {}", p.display()))?;
    }
    match output {
        Some(p) => write_lines(p, &lines)?,
        None => {
            for l in &lines {
                println!("{}", l.join(" "));
            }
        }
    }
    Ok(())
}

fn align(
    model: &Path,
    source: &Path,
    target: &Path,
    links_out: &Path,
    soft_out: &Path,
) -> Result<()> {
    let m = load_model(model)?;
    let raw = read_parallel(source, target)?;
    let pairs = encode_pairs(&m.source, &m.target, &raw, usize::MAX);
    let eos = crate::corpus::RESERVED[crate::corpus::EOS].to_string();
    let mut refs = Vec::with_capacity(pairs.len());
    let mut traces = Vec::with_capacity(pairs.len());
    for ((src_words, tgt_words), pair) in raw.iter().zip(&pairs) {
        let out = crate::train::sequence_nll(&m.store, pair)?;
        // The final row belongs to EOS and is not a word alignment.
        let (links, soft) = extract_alignment(&out.record.alpha, tgt_words.len())?;
        refs.push(AlignmentReference::sure_only(links));
        let mut source = src_words.clone();
        source.push(eos.clone());
        let alpha = crate::tensor::Tensor::matrix(soft.rows(), soft.cols(), soft.data().to_vec())?;
        traces.push(AttentionTrace {
            source,
            output: tgt_words.clone(),
            variant: m.store.config().variant,
            alpha,
            coverage: m
                .store
                .config()
                .variant
                .has_coverage()
                .then_some(out.coverage.values),
        });
    }
    fs::write(links_out, write_alignment_blocks(&refs))
        .with_context(|| format!("writing {}", links_out.display()))?;
    fs::write(soft_out, write_traces(&traces))
        .with_context(|| format!("writing {}", soft_out.display()))?;
    Ok(())
}

/// Files read by the `score` command; every input is optional.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreInputs<'a> {
    pub candidates: Option<&'a Path>,
    pub references: Option<&'a Path>,
    pub alignments: Option<&'a Path>,
    pub links: Option<&'a Path>,
    pub soft: Option<&'a Path>,
    pub trace: Option<&'a Path>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn score(inputs: ScoreInputs<'_>) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    if let (Some(c), Some(r)) = (inputs.candidates, inputs.references) {
        let cands = read_lines(c)?;
        let refs = read_lines(r)?;
        report.bleu = Some(bleu(&cands, &refs)?);
        report.sentences = cands.len();
    }
    let gold = match inputs.alignments {
        Some(p) => {
            Some(parse_alignment_blocks(&read_text(p)?).with_context(|| p.display().to_string())?)
        }
        None => None,
    };
    if let (Some(gold), Some(p)) = (&gold, inputs.links) {
        let hyp =
            parse_alignment_blocks(&read_text(p)?).with_context(|| p.display().to_string())?;
        let links: Vec<_> = hyp.iter().map(|h| h.sure().clone()).collect();
        report.aer = Some(corpus_aer(&links, gold)?);
        report.sentences = report.sentences.max(links.len());
    }
    if let (Some(gold), Some(p)) = (&gold, inputs.soft) {
        let traces = parse_traces(&read_text(p)?).with_context(|| p.display().to_string())?;
        let matrices: Vec<SoftAlignmentMatrix> =
            traces.iter().map(soft_without_eos).collect::<Result<_>>()?;
        report.saer = Some(corpus_saer(&matrices, gold)?);
        report.saer_interpretation = Some("sum-of-entries/elementwise-product".into());
        report.sentences = report.sentences.max(matrices.len());
    }
    if let Some(p) = inputs.trace {
        let traces = parse_traces(&read_text(p)?).with_context(|| p.display().to_string())?;
        let mut items = Vec::with_capacity(traces.len());
        for (k, t) in traces.iter().enumerate() {
            // The source EOS column is not a word and has no fertility.
            let words = strip_eos(&t.source).len();
            let fert = gold
                .as_ref()
                .and_then(|g| g.get(k))
                .map(|g| g.source_fertility(words));
            let output = strip_eos(&t.output);
            let linguistic = match &t.coverage {
                Some(c) if t.variant.is_linguistic() => {
                    let head = c
                        .data()
                        .get(..words)
                        .context("coverage shorter than source")?;
                    Some(crate::tensor::Tensor::matrix(words, 1, head.to_vec())?)
                }
                _ => None,
            };
            items.push(coverage_diagnostics(&DiagnosticsInput {
                alpha: &t.alpha,
                source_len: words,
                output,
                reference_fertility: fert.as_deref(),
                model_fertility: None,
                linguistic_coverage: linguistic.as_ref(),
            }));
        }
        report.diagnostics = mean_diagnostics(&items);
        report.sentences = report.sentences.max(items.len());
    }
    Ok(report)
}

fn strip_eos(tokens: &[String]) -> &[String] {
    match tokens.last() {
        Some(t) if t == crate::corpus::RESERVED[crate::corpus::EOS] => &tokens[..tokens.len() - 1],
        _ => tokens,
    }
}

/// Soft matrix of a trace with the `EOS` row and column removed, matching
/// the word positions of reference alignments.
fn soft_without_eos(t: &AttentionTrace) -> Result<SoftAlignmentMatrix> {
    let rows = strip_eos(&t.output).len();
    let cols = strip_eos(&t.source).len();
    let (_, soft) = extract_alignment(&t.alpha, rows)?;
    let data = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| soft.at(i, j))
        .collect();
    Ok(SoftAlignmentMatrix::new(rows, cols, data)?)
}

/// Coverage-only parameter increments listed for the full-size
/// configuration: `(variant, d, value, label)`.
pub const REPORTED_INCREMENTS: &[(CoverageVariant, usize, usize, &str)] = &[
    (CoverageVariant::LinguisticPlain, 1, 1_000, "+1K"),
    (CoverageVariant::LinguisticFertility, 1, 3_000, "+3K"),
    (CoverageVariant::NnTanh, 1, 4_000, "+4K"),
    (CoverageVariant::NnGru, 1, 10_000, "+10K"),
    (CoverageVariant::NnGru, 10, 100_000, "+100K"),
];

/// Relative tolerance when comparing with [`REPORTED_INCREMENTS`].
pub const INCREMENT_TOLERANCE: f64 = 0.05;

pub fn reported_increment(cfg: &ModelConfig) -> Option<(usize, &'static str)> {
    let full = ModelConfig::preset(Preset::Paper, cfg.variant);
    if cfg.emb_dim != full.emb_dim || cfg.hidden_dim != full.hidden_dim {
        return None;
    }
    REPORTED_INCREMENTS
        .iter()
        .find(|(v, d, _, _)| *v == cfg.variant && *d == cfg.cov_dim)
        .map(|&(_, _, value, label)| (value, label))
}

pub fn params_text(cfg: &ModelConfig, json: bool, verbose: bool) -> Result<String> {
    let count = count_parameters(cfg);
    let reported = reported_increment(cfg);
    if json {
        let mut v = serde_json::to_value(&count)?;
        if !verbose {
            v.as_object_mut().map(|o| o.remove("per_tensor"));
        }
        v["variant"] = serde_json::json!(cfg.variant);
        v["cov_dim"] = serde_json::json!(cfg.cov_dim);
        if let Some((value, label)) = reported {
            let rel = (count.coverage as f64 - value as f64).abs() / value as f64;
            v["reported_increment"] = serde_json::json!({"label": label, "value": value, "relative_error": rel,
                "matches": rel <= INCREMENT_TOLERANCE});
        }
        return Ok(serde_json::to_string_pretty(&v)? + "\n");
    }
    let mut s = String::new();
    use std::fmt::Write;
    writeln!(
        s,
        "variant {} (d={}, m={}, n={}, source vocab {}, target vocab {})",
        cfg.variant, cfg.cov_dim, cfg.emb_dim, cfg.hidden_dim, cfg.src_vocab, cfg.tgt_vocab
    )?;
    if verbose {
        for (name, size) in &count.per_tensor {
            writeln!(s, "  {name:<12} {size:>12}")?;
        }
    }
    writeln!(s, "total parameters      {:>12}", count.total)?;
    writeln!(
        s,
        "coverage increment    {:>12}  ({} without biases)",
        count.coverage, count.coverage_without_bias
    )?;
    if count.fertility > 0 {
        writeln!(
            s,
            "  fertility model     {:>12}  ({} without biases)",
            count.fertility, count.fertility_without_bias
        )?;
    }
    if count.gating > 0 {
        writeln!(
            s,
            "  gating              {:>12}  ({} without biases)",
            count.gating, count.gating_without_bias
        )?;
    }
    if let Some((value, label)) = reported {
        let rel = (count.coverage as f64 - value as f64).abs() / value as f64;
        let verdict = if rel <= INCREMENT_TOLERANCE {
            format!("matches reported increment ({label})")
        } else {
            format!("DIFFERS from reported increment ({label})")
        };
        writeln!(s, "{verdict}: {value}, off by {:.2}%", rel * 100.0)?;
    }
    Ok(s)
}
