//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! (written straight to stderr so it shows even when output is captured).

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nmt_coverage::attention::{
    attention_scores_baseline, attention_scores_with_coverage, prepare_source,
    update_linguistic_coverage,
};
use nmt_coverage::cli::{reported_increment, INCREMENT_TOLERANCE};
use nmt_coverage::corpus::EOS;
use nmt_coverage::inference::{beam_decode, greedy_decode, score_sequence};
use nmt_coverage::metrics::{aer, bleu, saer, AlignmentReference, Link, SoftAlignmentMatrix};
use nmt_coverage::model::{
    count_parameters, CoverageVariant, ModelConfig, Net, ParameterStore, Preset,
};
use nmt_coverage::tensor::{Tape, Tensor};
use nmt_coverage::train::sequence_nll;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    let line = format!(
        "acceptance {id} {name}: {} ({detail})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

#[test]
fn criterion_1_parameter_increments() {
    let cases = [
        (CoverageVariant::LinguisticPlain, 1),
        (CoverageVariant::LinguisticFertility, 1),
        (CoverageVariant::NnGru, 1),
        (CoverageVariant::NnGru, 10),
        (CoverageVariant::NnTanh, 1),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (variant, d) in cases {
        let cfg = ModelConfig {
            cov_dim: d,
            ..ModelConfig::preset(Preset::Paper, variant)
        };
        let count = count_parameters(&cfg);
        let (value, label) = reported_increment(&cfg).expect("listed configuration");
        let rel = (count.coverage as f64 - value as f64).abs() / value as f64;
        ok &= rel <= INCREMENT_TOLERANCE;
        detail.push(format!(
            "{variant} d={d} {} vs {label} ({:.2}%)",
            count.coverage,
            rel * 100.0
        ));
    }
    // Sub-parts: fertility model ≈ 2K, gating ≈ 6K per unit of d.
    let fert = count_parameters(&ModelConfig::preset(
        Preset::Paper,
        CoverageVariant::LinguisticFertility,
    ));
    let fert_rel = (fert.fertility as f64 - 2000.0).abs() / 2000.0;
    let gru = count_parameters(&ModelConfig {
        cov_dim: 1,
        ..ModelConfig::preset(Preset::Paper, CoverageVariant::NnGru)
    });
    let gate_rel = (gru.gating as f64 - 6000.0).abs() / 6000.0;
    ok &= fert_rel <= INCREMENT_TOLERANCE && gate_rel <= INCREMENT_TOLERANCE;
    detail.push(format!(
        "fertility part {}, gating part {}",
        fert.fertility, gru.gating
    ));
    verdict(1, "parameter increments", ok, &detail.join("; "));
    assert!(ok, "{detail:?}");
}

#[test]
fn criterion_2_whole_model_gradients() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (variant, d) in common::variant_grid() {
        let cfg = common::check_config(variant, d);
        let store = common::lively_store(&cfg, 11 + d as u64, 3.0);
        let pair = common::pair(4, 5, 5);
        let mut lambdas = vec![0.0];
        if variant == CoverageVariant::LinguisticFertility {
            lambdas.push(0.7);
        }
        for lambda in lambdas {
            let report = common::whole_model_check(&store, &pair, lambda);
            worst = worst.max(report.max_rel_error());
            if !report.passed {
                failures.push(format!("{variant} d={d} λ={lambda}: {report:?}"));
            }
        }
    }
    let ok = failures.is_empty();
    verdict(
        2,
        "whole-model gradients",
        ok,
        &format!(
            "max relative error {worst:.2e}, {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(ok, "{failures:#?}");
}

/// Coverage store sharing every translation tensor with `base`.
fn coverage_store_over(
    base: &ParameterStore,
    variant: CoverageVariant,
    cov_dim: usize,
    seed: u64,
) -> ParameterStore {
    let cfg = ModelConfig {
        cov_dim,
        ..base.config().with_variant(variant)
    };
    let mut store = ParameterStore::init(&cfg, seed).unwrap();
    for spec in base.specs() {
        *store.get_mut(&spec.name).unwrap() = base.get(&spec.name).unwrap().clone();
    }
    store
}

#[test]
fn criterion_3_reduction_to_baseline() {
    let cfg = common::check_config(CoverageVariant::None, 1);
    let base = common::lively_store(&cfg, 21, 2.0);
    let pair = common::pair(5, 6, 3);
    let base_nll = sequence_nll(&base, &pair).unwrap().loss;
    let mut ok = true;
    let mut detail = Vec::new();
    for (variant, d) in common::variant_grid()
        .into_iter()
        .filter(|(v, _)| v.has_coverage())
    {
        let mut store = coverage_store_over(&base, variant, d, 40 + d as u64);
        // C = 0 with nonzero V_a: scores are bitwise equal.
        let mut tape = Tape::new();
        let net = Net::bind(&store, &mut tape);
        let h = net.encode(&mut tape, &pair.source, None).unwrap();
        let ctx = prepare_source(&mut tape, &net, h, None).unwrap();
        let t = net.init_state(&mut tape, h).unwrap();
        let zeros = tape.constant(Tensor::zeros(&[pair.source.len(), store.config().cov_dim]));
        let b = attention_scores_baseline(&mut tape, &net, &ctx, t).unwrap();
        let c = attention_scores_with_coverage(&mut tape, &net, &ctx, t, zeros).unwrap();
        let scores_equal = tape.value(b).data() == tape.value(c).data();
        drop(tape);

        // V_a = 0: the whole forward NLL is bitwise equal.
        store.get_mut("cov.v_a").unwrap().data_mut().fill(0.0);
        let nll = sequence_nll(&store, &pair).unwrap().loss;
        let nll_equal = nll.to_bits() == base_nll.to_bits();
        ok &= scores_equal && nll_equal;
        detail.push(format!(
            "{variant} d={d}: scores {scores_equal}, nll {nll_equal}"
        ));
    }
    verdict(3, "reduction to baseline", ok, &detail.join(", "));
    assert!(ok, "{detail:?}");
}

#[test]
fn criterion_4_linguistic_coverage_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_sum = 0.0f64;
    let mut worst_partial = 0.0f64;
    for _ in 0..100 {
        let j = rng.gen_range(1..=10);
        let steps = rng.gen_range(1..=10);
        let alphas: Vec<Vec<f64>> = (0..steps)
            .map(|_| {
                let raw: Vec<f64> = (0..j).map(|_| rng.gen_range(0.0f64..4.0).exp()).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / z).collect()
            })
            .collect();
        let phi: Vec<f64> = (0..j).map(|_| rng.gen_range(0.05..2.0)).collect();

        let mut tape = Tape::new();
        let mut plain = tape.constant(Tensor::zeros(&[j, 1]));
        let mut fert = tape.constant(Tensor::zeros(&[j, 1]));
        let phi_var = tape.constant(Tensor::matrix(j, 1, phi.clone()).unwrap());
        let mut partial = vec![0.0; j];
        for (i, row) in alphas.iter().enumerate() {
            let a = tape.constant(Tensor::row(row.clone()));
            plain = update_linguistic_coverage(&mut tape, plain, a, None).unwrap();
            fert = update_linguistic_coverage(&mut tape, fert, a, Some(phi_var)).unwrap();
            for (p, &v) in partial.iter_mut().zip(row) {
                *p += v;
            }
            let total: f64 = tape.value(plain).data().iter().sum();
            worst_sum = worst_sum.max((total - (i + 1) as f64).abs());
            for k in 0..j {
                let scaled = tape.value(fert).data()[k] * phi[k];
                worst_partial = worst_partial.max((scaled - partial[k]).abs());
                worst_partial = worst_partial.max((tape.value(plain).data()[k] - partial[k]).abs());
            }
        }
    }
    let ok = worst_sum < 1e-9 && worst_partial < 1e-9;
    verdict(
        4,
        "linguistic coverage algebra",
        ok,
        &format!("row-sum error {worst_sum:.1e}, partial-sum error {worst_partial:.1e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_metric_goldens() {
    let l = |tgt: usize, src: usize| Link { tgt, src };
    let sure = AlignmentReference::sure_only([l(0, 0), l(1, 1)]);
    let a: BTreeSet<Link> = [l(0, 0), l(1, 2)].into();
    let aer_value = aer(&a, &sure);
    let soft = SoftAlignmentMatrix::new(2, 2, vec![0.6, 0.4, 0.4, 0.6]).unwrap();
    let saer_value = saer(&soft, &sure).unwrap();
    let toks = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let hand = bleu(&[toks("a b c d e")], &[toks("a b c d f")]).unwrap();
    let corpus = vec![toks("the cat sat on the mat"), toks("a b c d")];
    let self_match = bleu(&corpus, &corpus).unwrap();
    let ok = aer_value == 0.5
        && (saer_value - 0.4).abs() < 1e-12
        && (hand - 0.6687).abs() <= 1e-4
        && self_match == 1.0;
    verdict(
        5,
        "metric goldens",
        ok,
        &format!("AER {aer_value}, SAER {saer_value}, BLEU {hand:.6}, self-match {self_match}"),
    );
    assert!(ok);
}

/// Highest-probability output among all sequences the search can produce:
/// those ending in the first `EOS` within `max_len`, plus unfinished ones of
/// exactly `max_len` tokens.
fn brute_force(
    store: &ParameterStore,
    source: &[usize],
    vocab: usize,
    max_len: usize,
) -> (Vec<usize>, f64) {
    let mut best: (Vec<usize>, f64) = (Vec::new(), f64::NEG_INFINITY);
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        for y in 0..vocab {
            let mut seq = prefix.clone();
            seq.push(y);
            if y == EOS || seq.len() == max_len {
                let score = score_sequence(store, source, &seq).unwrap();
                if score > best.1 {
                    best = (seq, score);
                }
            } else {
                stack.push(seq);
            }
        }
    }
    best
}

fn random_store(cfg: &ModelConfig, seed: u64) -> ParameterStore {
    common::lively_store(cfg, seed, 12.0)
}

#[test]
fn criterion_6_search_oracle() {
    let start = Instant::now();
    let (vocab, max_len) = (3usize, 4usize);
    let width = vocab.pow(max_len as u32);
    let mut exhaustive_ok = 0;
    let mut worst_gap = 0.0f64;
    let mut greedy_suboptimal = 0;
    for draw in 0..20u64 {
        let variant = CoverageVariant::ALL[draw as usize % CoverageVariant::ALL.len()];
        let cfg = ModelConfig {
            tgt_vocab: vocab,
            cov_dim: if variant.is_neural() { 2 } else { 1 },
            ..common::check_config(variant, 1)
        };
        let store = random_store(&cfg, 600 + draw);
        let source = common::pair(4, 2, draw).source;
        let (oracle, oracle_score) = brute_force(&store, &source, vocab, max_len);
        let best = &beam_decode(&store, &source, width, max_len).unwrap()[0];
        let mut found = best.tokens.clone();
        if best.finished {
            found.push(EOS);
        }
        worst_gap = worst_gap.max((best.log_prob - oracle_score).abs());
        if greedy_decode(&store, &source, max_len).unwrap().log_prob < oracle_score - 1e-9 {
            greedy_suboptimal += 1;
        }
        if found == oracle && (best.log_prob - oracle_score).abs() < 1e-9 {
            exhaustive_ok += 1;
        }
    }
    let mut greedy_ok = 0;
    for draw in 0..100u64 {
        let variant = CoverageVariant::ALL[draw as usize % CoverageVariant::ALL.len()];
        let cfg = common::check_config(variant, if variant.is_neural() { 3 } else { 1 });
        let store = random_store(&cfg, 900 + draw);
        let source = common::pair(2 + draw as usize % 5, 2, draw).source;
        let max_len = store.config().max_decode_len(source.len());
        let g = greedy_decode(&store, &source, max_len).unwrap();
        let b = beam_decode(&store, &source, 1, max_len).unwrap().remove(0);
        if g.tokens == b.tokens && g.finished == b.finished && g.log_prob == b.log_prob {
            greedy_ok += 1;
        }
    }
    let ok = exhaustive_ok == 20 && greedy_ok == 100;
    verdict(
        6,
        "search oracle",
        ok,
        &format!(
            "exhaustive {exhaustive_ok}/20 (max score gap {worst_gap:.1e}, greedy suboptimal on {greedy_suboptimal}), beam 1 = greedy {greedy_ok}/100, {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// Command-line pipeline.

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_nmt-coverage")
}

fn cli(args: &[&str]) -> String {
    let out = Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "nmt-coverage {}\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Best `(epoch, dev_nll)` from a training report.
fn best_dev(report: &Path) -> (usize, f64) {
    let text = std::fs::read_to_string(report).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[0].parse().unwrap(), cols[2].parse().unwrap())
        })
        .fold(
            (0, f64::INFINITY),
            |best: (usize, f64), row: (usize, f64)| {
                if row.1 < best.1 {
                    row
                } else {
                    best
                }
            },
        )
}

struct Pipeline<'a> {
    dir: &'a Path,
    data: PathBuf,
    config: PathBuf,
    seed: u64,
    beam: usize,
}

impl Pipeline<'_> {
    /// Trains, translates, force-aligns and scores one variant; returns the
    /// model directory and the parsed metrics report.
    fn run(&self, variant: CoverageVariant) -> (PathBuf, Value) {
        let tag = format!("{}_{}", variant.name(), self.seed);
        let model = self.dir.join(format!("model_{tag}"));
        let seed = self.seed.to_string();
        let beam = self.beam.to_string();
        let global = [
            "--config",
            p(&self.config),
            "--seed",
            &seed,
            "--variant",
            variant.name(),
        ];
        let data = |name: &str| self.data.join(name);
        let (train, dev) = (data("train"), data("dev"));
        let mut args = global.to_vec();
        args.extend([
            "train",
            "--quiet",
            "--train",
            p(&train),
            "--dev",
            p(&dev),
            "--out",
            p(&model),
        ]);
        cli(&args);
        let hyp = self.dir.join(format!("hyp_{tag}.txt"));
        let trace = self.dir.join(format!("trace_{tag}.txt"));
        let links = self.dir.join(format!("links_{tag}.txt"));
        let soft = self.dir.join(format!("soft_{tag}.txt"));
        let metrics = self.dir.join(format!("metrics_{tag}.json"));
        cli(&[
            "--beam",
            &beam,
            "--dump-attention",
            p(&trace),
            "translate",
            "--model",
            p(&model),
            "--input",
            p(&data("test.src")),
            "--output",
            p(&hyp),
        ]);
        cli(&[
            "align",
            "--model",
            p(&model),
            "--source",
            p(&data("test.src")),
            "--target",
            p(&data("test.tgt")),
            "--links",
            p(&links),
            "--soft",
            p(&soft),
        ]);
        cli(&[
            "score",
            "--candidates",
            p(&hyp),
            "--references",
            p(&data("test.tgt")),
            "--alignments",
            p(&data("test.align")),
            "--links",
            p(&links),
            "--soft",
            p(&soft),
            "--trace",
            p(&trace),
            "--out",
            p(&metrics),
        ]);
        let report = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
        (model, report)
    }
}

fn gen_data(dir: &Path, name: &str, spec: &str, seed: u64, held_out: usize) -> PathBuf {
    let spec = write(dir, &format!("{name}.json"), spec);
    let out = dir.join(name);
    let held_out = held_out.to_string();
    cli(&[
        "--seed",
        &seed.to_string(),
        "gen-data",
        "--spec",
        p(&spec),
        "--out",
        p(&out),
        "--dev-size",
        &held_out,
        "--test-size",
        &held_out,
    ]);
    out
}

const COPY_TASK: &str = r#"{"alphabet_size": 20, "fertility_classes": [1], "reversed": false, "noise": 0.0, "size": 200, "seed": 42}"#;

#[test]
fn criterion_7_desk_scale_training() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = gen_data(dir.path(), "copy", COPY_TASK, 42, 100);
    let config = write(
        dir.path(),
        "run.json",
        r#"{"preset": "desk", "train": {"max_epochs": 300, "patience": 300, "target_dev_nll": 0.05}}"#,
    );
    let pipeline = Pipeline {
        dir: dir.path(),
        data,
        config,
        seed: 42,
        beam: 5,
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for variant in CoverageVariant::ALL {
        let (model, report) = pipeline.run(variant);
        let (epoch, dev) = best_dev(&model.join("report.csv"));
        let test_bleu = report["bleu"].as_f64().unwrap();
        let pass = dev < 0.1 && epoch <= 300 && test_bleu > 0.9;
        ok &= pass;
        detail.push(format!(
            "{variant}: dev {dev:.3} @{epoch}, BLEU {test_bleu:.3}"
        ));
    }
    detail.push(format!("{:.0}s", start.elapsed().as_secs_f64()));
    verdict(7, "desk-scale training", ok, &detail.join(", "));
    assert!(ok, "{detail:?}");
}

const FERTILITY_TASK: &str = r#"{"alphabet_size": 20, "fertility_classes": [1, 2], "reversed": true, "noise": 0.0, "size": 1000, "seed": 1, "min_len": 12, "max_len": 20}"#;
// Half the desk widths and small batches: nine runs must fit the time budget
// on one core, and attention on the reversal task only forms after enough
// updates.
const FERTILITY_RUN: &str = r#"{"preset": "desk", "model": {"emb_dim": 16, "hidden_dim": 32},
    "train": {"max_epochs": 40, "patience": 40, "batch_size": 2, "epsilon": 1e-4}}"#;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn criterion_8_coverage_effect() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "run.json", FERTILITY_RUN);
    let variants = [
        CoverageVariant::None,
        CoverageVariant::LinguisticFertility,
        CoverageVariant::NnGru,
    ];
    let mut deficit = vec![Vec::new(); variants.len()];
    let mut aers = vec![Vec::new(); variants.len()];
    let mut bleus = vec![Vec::new(); variants.len()];
    for seed in 1..=3u64 {
        let data = gen_data(
            dir.path(),
            &format!("fert_{seed}"),
            FERTILITY_TASK,
            seed,
            50,
        );
        let pipeline = Pipeline {
            dir: dir.path(),
            data,
            config: config.clone(),
            seed,
            beam: 5,
        };
        for (k, &variant) in variants.iter().enumerate() {
            let (_, report) = pipeline.run(variant);
            deficit[k].push(report["diagnostics"]["coverage_deficit"].as_f64().unwrap());
            aers[k].push(report["aer"].as_f64().unwrap());
            bleus[k].push(report["bleu"].as_f64().unwrap());
        }
    }
    let d: Vec<f64> = deficit.iter().cloned().map(median).collect();
    let a: Vec<f64> = aers.iter().cloned().map(median).collect();
    let b: Vec<f64> = bleus.iter().cloned().map(median).collect();
    let ok = (1..variants.len()).all(|k| d[k] <= d[0] && a[k] <= a[0]);
    let detail = variants
        .iter()
        .enumerate()
        .map(|(k, v)| {
            format!(
                "{v}: deficit {:.4}, AER {:.4}, BLEU {:.3}",
                d[k], a[k], b[k]
            )
        })
        .chain([format!("{:.0}s", start.elapsed().as_secs_f64())])
        .collect::<Vec<_>>()
        .join(", ");
    verdict(8, "coverage effect (median of 3 seeds)", ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"alphabet_size": 8, "fertility_classes": [1, 2], "reversed": true, "noise": 0.1, "size": 40, "seed": 9}"#;
    let config = write(
        dir.path(),
        "run.json",
        r#"{"preset": "desk", "train": {"max_epochs": 4, "batch_size": 8}}"#,
    );
    let mut ok = true;
    let mut detail = Vec::new();
    for variant in [CoverageVariant::LinguisticFertility, CoverageVariant::NnGru] {
        let mut runs = Vec::new();
        for attempt in 0..2 {
            let sub = dir.path().join(format!("{}_{attempt}", variant.name()));
            std::fs::create_dir_all(&sub).unwrap();
            let data = gen_data(&sub, "data", spec, 9, 10);
            let pipeline = Pipeline {
                dir: &sub,
                data,
                config: config.clone(),
                seed: 9,
                beam: 3,
            };
            let (model, report) = pipeline.run(variant);
            runs.push((std::fs::read(model.join("model.ckpt")).unwrap(), report));
        }
        let same_ckpt = runs[0].0 == runs[1].0;
        let same_report = runs[0].1 == runs[1].1;
        ok &= same_ckpt && same_report;
        detail.push(format!(
            "{variant}: checkpoint {} ({} bytes), metrics {}",
            if same_ckpt { "identical" } else { "differs" },
            runs[0].0.len(),
            if same_report { "identical" } else { "differ" }
        ));
    }
    verdict(9, "determinism", ok, &detail.join(", "));
    assert!(ok, "{detail:?}");
}
