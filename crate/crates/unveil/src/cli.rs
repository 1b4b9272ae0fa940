//! Command-line surface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use unveil_core::layout::DEFAULT_CONFIDENCE_THRESHOLD;
use unveil_core::metrics::evaluate_run;
use unveil_core::search::CorpusIndex;
use unveil_core::synth::gen_ocr_fixtures;
use unveil_core::train::TrainingRun;
use unveil_core::{ModelKind, ModelParams};

use crate::checkpoint::{load_model, save_model};
use crate::config::{ExperimentConfig, JudgeMode};
use crate::error::{Error, Result};
use crate::io::{self, Corpus, IndexLine, PageText};
use crate::pipeline::{self, Dataset};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  internal contract violation
  2  usage or configuration error (unknown subcommand, flag or config key; invalid value)
  3  input/output error (missing or unreadable file)
  4  format or schema error in an input file
  5  dimension mismatch between data, checkpoints or indexes
  6  numeric failure (non-finite loss or zero-norm embedding)

Errors are printed to stderr as one line: `error[<code>]: <message>`.";

#[derive(Debug, Parser)]
#[command(name = "unveil", version, about = "Teacher-student retrieval distillation on toy dual encoders", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config JSON; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Teacher,
    Student,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OcrFormat {
    Jsonl,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, query splits and optional OCR pages.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Also write this many OCR fixture pages with their expected text.
        #[arg(long, default_value_t = 0)]
        ocr_pages: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Stage 1: train teacher and/or student independently with in-batch InfoNCE.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Training queries with gold positives.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelChoice::Both)]
        model: ModelChoice,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Stage 2: distil a frozen teacher into the student.
    Distill {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Embed a corpus with a checkpoint's document encoder.
    Index {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact top-k search, optionally fused with a second model.
    Search {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tag: Option<String>,
        /// Second model for hybrid interpolation.
        #[arg(long, requires = "hybrid_index")]
        hybrid_checkpoint: Option<PathBuf>,
        #[arg(long, requires = "hybrid_checkpoint")]
        hybrid_index: Option<PathBuf>,
        /// Weight of the primary model in the hybrid score.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Recall@k and MRR@k of a run file.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Corpus with document text, needed for answer judging.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        judge: Option<JudgeArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Distillation ablations (full, no_reweight, no_align, no_soft, no_distill) per seed.
    ///
    /// With stage-1 checkpoints and data files the variants share those
    /// models; without them every configured seed gets fresh synthetic data
    /// and fresh stage-1 models.
    Ablate {
        #[arg(long, requires_all = ["queries", "test_queries", "teacher", "student"])]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        queries: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        test_queries: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        teacher: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        student: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Layout-preserving text assembly from OCR boxes.
    AssembleOcr {
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = OcrFormat::Jsonl)]
        format: OcrFormat,
    },
    /// Synthesize, train, distil, search and evaluate in one go.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JudgeArg {
    Gold,
    Answers,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    io::write_text(path, contents)
}

fn save_training(dir: &Path, name: &str, run: &TrainingRun, seed: u64) -> Result<()> {
    save_model(&dir.join(format!("{name}.ckpt.json")), &run.params, seed)?;
    write(&dir.join(format!("{name}_loss.csv")), &io::loss_csv(run))
}

fn expect_kind(path: &Path, model: &ModelParams, kind: ModelKind) -> Result<()> {
    if model.kind == kind {
        Ok(())
    } else {
        Err(Error::format(path, 1, format!("expected a {} checkpoint, found {}", kind.as_str(), model.kind.as_str())))
    }
}

fn read_index(path: &Path) -> Result<CorpusIndex> {
    let lines: Vec<IndexLine> = io::read_jsonl(path)?;
    let dim = lines.first().map_or(0, |l| l.embedding.len());
    let mut ids = Vec::with_capacity(lines.len());
    let mut emb = Vec::with_capacity(lines.len() * dim);
    for (i, l) in lines.into_iter().enumerate() {
        if l.embedding.len() != dim {
            return Err(unveil_core::Error::Dimension {
                context: "index embedding",
                expected: dim,
                found: l.embedding.len(),
            })
            .map_err(|e| Error::format(path, i + 1, e.to_string()));
        }
        ids.push(l.id);
        emb.extend(l.embedding);
    }
    if ids.is_empty() {
        return Err(unveil_core::Error::EmptyCorpus.into());
    }
    Ok(CorpusIndex::new(ids, dim, emb)?)
}

fn index_to_jsonl(index: &CorpusIndex) -> String {
    io::to_jsonl((0..index.len()).map(|i| IndexLine {
        id: index.doc_ids()[i].clone(),
        embedding: index.embedding(i).to_vec(),
    }))
}

fn metrics_json(report: &unveil_core::metrics::MetricsReport, seed: u64, run: &str) -> String {
    io::metrics_to_json(report, &[("seed", json!(seed)), ("run", json!(run))])
}

/// Executes one command and returns its stdout summary.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth { out, ocr_pages, config } => {
            let cfg = config.load()?;
            let data = pipeline::synthesize(&cfg)?;
            write_dataset(&out, &data)?;
            write(&out.join("synth.json"), &(cfg.to_json() + "\n"))?;
            if ocr_pages > 0 {
                let fixtures = gen_ocr_fixtures(cfg.seed, ocr_pages)?;
                let pages: Vec<_> = fixtures.iter().map(|f| f.page.clone()).collect();
                write(&out.join("ocr.jsonl"), &io::ocr_pages_to_jsonl(&pages))?;
                write(
                    &out.join("ocr_expected.jsonl"),
                    &io::to_jsonl(fixtures.iter().map(|f| PageText {
                        page_id: f.page.page_id.clone(),
                        text: f.expected.clone(),
                    })),
                )?;
            }
            Ok(format!(
                "synth: {} docs, {} train / {} test queries -> {}",
                data.corpus.docs.len(),
                data.train.len(),
                data.test.len(),
                out.display()
            ))
        }
        Command::Train { corpus, queries, model, out, config } => {
            let cfg = config.load()?;
            let corpus = io::read_corpus(&corpus)?;
            let queries = io::read_queries(&queries)?;
            let kinds: &[ModelKind] = match model {
                ModelChoice::Teacher => &[ModelKind::Teacher],
                ModelChoice::Student => &[ModelKind::Student],
                ModelChoice::Both => &[ModelKind::Teacher, ModelKind::Student],
            };
            let mut summary = Vec::new();
            for &kind in kinds {
                let init = pipeline::init_model(&cfg, kind, &corpus, &queries)?;
                let run = pipeline::train_stage1(init, &corpus, &queries, &cfg.stage1_config())?;
                save_training(&out, kind.as_str(), &run, cfg.seed)?;
                let last = run.trace.last().map_or(f64::NAN, |e| e.total);
                summary.push(format!("{}: {} steps, final loss {last:.6}", kind.as_str(), run.trace.len()));
            }
            Ok(format!("train: {}", summary.join("; ")))
        }
        Command::Distill { corpus, queries, teacher, student, out, config } => {
            let cfg = config.load()?;
            let corpus = io::read_corpus(&corpus)?;
            let queries = io::read_queries(&queries)?;
            let (t, _) = load_model(&teacher)?;
            expect_kind(&teacher, &t, ModelKind::Teacher)?;
            let (s, _) = load_model(&student)?;
            expect_kind(&student, &s, ModelKind::Student)?;
            let run = pipeline::distill(&t, s, &corpus, &queries, &cfg.distill_config())?;
            save_training(&out, "student_distilled", &run, cfg.seed)?;
            let last = run.trace.last().map_or(f64::NAN, |e| e.total);
            Ok(format!("distill: {} steps, final loss {last:.6}", run.trace.len()))
        }
        Command::Index { checkpoint, corpus, out } => {
            let (model, _) = load_model(&checkpoint)?;
            let corpus = io::read_corpus(&corpus)?;
            let index = pipeline::build_index(&model, &corpus)?;
            write(&out, &index_to_jsonl(&index))?;
            Ok(format!("index: {} docs x {} dims -> {}", index.len(), index.dim(), out.display()))
        }
        Command::Search {
            checkpoint,
            index,
            queries,
            out,
            k,
            tag,
            hybrid_checkpoint,
            hybrid_index,
            alpha,
            config,
        } => {
            let cfg = config.load()?;
            let k = k.unwrap_or(cfg.eval.k);
            let (model, seed) = load_model(&checkpoint)?;
            let idx = read_index(&index)?;
            let queries = io::read_queries(&queries)?;
            let qids: Vec<&str> = queries.iter().map(|q| q.id.as_str()).collect();
            let embedded = pipeline::embed_queries(&model, &queries)?;
            let run = match (hybrid_checkpoint, hybrid_index) {
                (Some(hc), Some(hi)) => {
                    let (other, _) = load_model(&hc)?;
                    let other_idx = read_index(&hi)?;
                    let other_q = pipeline::embed_queries(&other, &queries)?;
                    let alpha = alpha.unwrap_or(cfg.eval.alpha);
                    let tag = tag.unwrap_or_else(|| pipeline::run_tag("hybrid", seed));
                    pipeline::hybrid_run(&idx, &embedded, &other_idx, &other_q, &qids, alpha, k, cfg.workers, &tag)?
                }
                _ => {
                    let tag = tag.unwrap_or_else(|| pipeline::run_tag(model.kind.as_str(), seed));
                    pipeline::search_run(&idx, &qids, &embedded, k, cfg.workers, &tag)?
                }
            };
            write(&out, &io::run_to_string(&run))?;
            Ok(format!("search: {} queries, {} entries -> {}", queries.len(), run.len(), out.display()))
        }
        Command::Eval { run, queries, corpus, k, judge, out, config } => {
            let cfg = config.load()?;
            let k = k.unwrap_or(cfg.eval.k);
            let mode = match judge {
                Some(JudgeArg::Gold) => JudgeMode::Gold,
                Some(JudgeArg::Answers) => JudgeMode::Answers,
                None => cfg.eval.judge,
            };
            let entries = io::read_run(&run)?;
            let queries = io::read_queries(&queries)?;
            let corpus = match corpus {
                Some(p) => io::read_corpus(&p)?,
                None if mode == JudgeMode::Answers => {
                    return Err(Error::Config("answer judging needs --corpus with document text".into()))
                }
                None => Corpus::default(),
            };
            let judged = pipeline::judgments(&corpus, &queries, mode)?;
            let report = evaluate_run(&entries, &judged, k)?;
            let tag = entries.first().map_or("", |e| e.tag.as_str());
            let text = metrics_json(&report, cfg.seed, tag);
            if let Some(out) = out {
                write(&out, &text)?;
            }
            Ok(text.trim_end().to_string())
        }
        Command::Ablate {
            corpus,
            queries,
            test_queries,
            teacher,
            student,
            out,
            config,
        } => {
            let cfg = config.load()?;
            let rows = match (corpus, queries, test_queries, teacher, student) {
                (Some(c), Some(q), Some(tq), Some(t), Some(s)) => {
                    let data = Dataset {
                        corpus: io::read_corpus(&c)?,
                        train: io::read_queries(&q)?,
                        test: io::read_queries(&tq)?,
                    };
                    let (tm, _) = load_model(&t)?;
                    expect_kind(&t, &tm, ModelKind::Teacher)?;
                    let (sm, _) = load_model(&s)?;
                    expect_kind(&s, &sm, ModelKind::Student)?;
                    let mut rows = Vec::new();
                    for &seed in &cfg.ablation_seeds {
                        rows.extend(pipeline::ablate(&cfg, &data, &tm, &sm, seed)?);
                    }
                    rows
                }
                _ => pipeline::ablate_seeds(&cfg, &cfg.ablation_seeds)?,
            };
            let csv = pipeline::ablation_csv(&rows);
            write(&out, &csv)?;
            Ok(csv.trim_end().to_string())
        }
        Command::AssembleOcr { input, out, threshold, format } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!("threshold must lie in [0, 1], got {threshold}")));
            }
            let pages = io::read_ocr_pages(&input)?;
            let text = match format {
                OcrFormat::Jsonl => io::to_jsonl(pages.iter().map(|p| PageText {
                    page_id: p.page_id.clone(),
                    text: p.assemble(threshold),
                })),
                OcrFormat::Text => pages.iter().map(|p| p.assemble(threshold)).collect(),
            };
            match out {
                Some(out) => {
                    write(&out, &text)?;
                    Ok(format!("assemble-ocr: {} pages -> {}", pages.len(), out.display()))
                }
                None => Ok(text.strip_suffix('\n').unwrap_or(&text).to_string()),
            }
        }
        Command::Pipeline { out, config } => {
            let cfg = config.load()?;
            run_full_pipeline(&cfg, &out)
        }
    }
}

fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    write(&dir.join("corpus.jsonl"), &io::corpus_to_jsonl(&data.corpus))?;
    write(&dir.join("queries_train.jsonl"), &io::queries_to_jsonl(&data.train))?;
    write(&dir.join("queries_test.jsonl"), &io::queries_to_jsonl(&data.test))
}

/// Writes every artifact of the full pipeline under `out`.
pub fn run_full_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let data = pipeline::synthesize(cfg)?;
    let outcome = pipeline::run_pipeline(cfg, &data)?;
    write_dataset(&out.join("data"), &data)?;
    write(&out.join("config.json"), &(cfg.to_json() + "\n"))?;
    let ckpt = out.join("checkpoints");
    save_training(&ckpt, "teacher", &outcome.teacher, cfg.seed)?;
    save_training(&ckpt, "student", &outcome.student_pre, cfg.seed)?;
    save_training(&ckpt, "student_distilled", &outcome.distilled, cfg.seed)?;
    let mut lines = Vec::new();
    for name in pipeline::RUN_NAMES {
        let run = &outcome.runs[name];
        write(&out.join("runs").join(format!("{name}.run")), &io::run_to_string(run))?;
        let m = &outcome.metrics[name];
        write(&out.join("metrics").join(format!("{name}.json")), &metrics_json(m, cfg.seed, &pipeline::run_tag(name, cfg.seed)))?;
        lines.push(format!("{name:<18} recall@{k}={:.4} mrr@{k}={:.4}", m.recall_at_k, m.mrr_at_k, k = m.k));
    }
    let summary = json!({
        "seed": cfg.seed,
        "alignment_cosine_pre": outcome.alignment_pre,
        "alignment_cosine_post": outcome.alignment_post,
        "recall": pipeline::RUN_NAMES.iter().map(|n| (n.to_string(), json!(outcome.metrics[n].recall_at_k))).collect::<serde_json::Map<_, _>>(),
        "mrr": pipeline::RUN_NAMES.iter().map(|n| (n.to_string(), json!(outcome.metrics[n].mrr_at_k))).collect::<serde_json::Map<_, _>>(),
    });
    write(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"))?;
    lines.push(format!(
        "alignment cosine   pre={:.4} post={:.4}",
        outcome.alignment_pre, outcome.alignment_post
    ));
    Ok(lines.join("\n"))
}
