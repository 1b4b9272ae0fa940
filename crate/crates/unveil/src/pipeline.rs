//! End-to-end orchestration: data, two-stage training, retrieval runs,
//! evaluation and ablations.

use std::collections::BTreeMap;

use unveil_core::loss::cosine_sim;
use unveil_core::metrics::{evaluate_run, Judgment, Judgments, MetricsReport};
use unveil_core::search::{hybrid_interpolate, to_run_entries, CorpusIndex, RunEntry};
use unveil_core::synth::{gen_corpus, gen_queries};
use unveil_core::train::{self, TrainConfig, TrainingPair, TrainingRun};
use unveil_core::{ModelKind, ModelParams, QueryRecord};

use crate::config::{ExperimentConfig, JudgeMode};
use crate::error::Result;
use crate::io::Corpus;
use crate::parallel::{score_batch, search_batch};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub corpus: Corpus,
    pub train: Vec<QueryRecord>,
    pub test: Vec<QueryRecord>,
}

pub fn synthesize(cfg: &ExperimentConfig) -> Result<Dataset> {
    let sc = cfg.synth_config();
    let synth = gen_corpus(&sc)?;
    let queries = gen_queries(&sc, &synth)?;
    let texts = synth.docs.iter().map(|d| d.id.clone()).zip(synth.doc_texts.iter().cloned()).collect();
    Ok(Dataset {
        corpus: Corpus {
            docs: synth.docs,
            texts,
        },
        train: queries.train,
        test: queries.test,
    })
}

/// Fresh model sized for the data. Teacher and student draw from distinct
/// seeds derived from the root seed.
pub fn init_model(cfg: &ExperimentConfig, kind: ModelKind, corpus: &Corpus, queries: &[QueryRecord]) -> Result<ModelParams> {
    let first_doc = corpus.docs.first().ok_or(unveil_core::Error::EmptyCorpus)?;
    let query_dim = queries
        .first()
        .map(|q| q.features.len())
        .ok_or_else(|| unveil_core::Error::Data("no queries".into()))?;
    let doc_dim = kind.doc_input(first_doc)?.len();
    let seed = cfg.seed.wrapping_mul(2).wrapping_add(u64::from(kind == ModelKind::Student));
    Ok(ModelParams::init(kind, seed, &cfg.model.dims(query_dim), &cfg.model.dims(doc_dim))?)
}

/// Pairs every query with its first gold document.
pub fn training_pairs<'a>(corpus: &'a Corpus, queries: &'a [QueryRecord]) -> Result<Vec<TrainingPair<'a>>> {
    let positions = corpus.positions();
    queries
        .iter()
        .map(|q| {
            let id = q
                .positives
                .first()
                .ok_or_else(|| unveil_core::Error::Data(format!("query {} has no positive document", q.id)))?;
            let &pos = positions
                .get(id.as_str())
                .ok_or_else(|| unveil_core::Error::Data(format!("query {} names unknown document {id}", q.id)))?;
            Ok(TrainingPair {
                query: &q.features,
                doc: &corpus.docs[pos],
            })
        })
        .collect()
}

pub fn train_stage1(init: ModelParams, corpus: &Corpus, queries: &[QueryRecord], config: &TrainConfig) -> Result<TrainingRun> {
    Ok(train::train_stage1(init, &training_pairs(corpus, queries)?, config)?)
}

pub fn distill(
    teacher: &ModelParams,
    student: ModelParams,
    corpus: &Corpus,
    queries: &[QueryRecord],
    config: &TrainConfig,
) -> Result<TrainingRun> {
    Ok(train::distill(teacher, student, &training_pairs(corpus, queries)?, config)?)
}

/// Embeds every document with the model's own document view.
pub fn build_index(model: &ModelParams, corpus: &Corpus) -> Result<CorpusIndex> {
    Ok(unveil_core::search::build_index(&corpus.docs, model.kind, &model.doc)?)
}

pub fn embed_queries(model: &ModelParams, queries: &[QueryRecord]) -> Result<Vec<Vec<f64>>> {
    queries
        .iter()
        .map(|q| Ok(model.encode_query(&q.features)?.into_inner()))
        .collect()
}

/// Top-`k` run of one model.
pub fn search_run(index: &CorpusIndex, query_ids: &[&str], embeddings: &[Vec<f64>], k: usize, workers: usize, tag: &str) -> Result<Vec<RunEntry>> {
    let hits = search_batch(index, embeddings, k, workers)?;
    Ok(query_ids
        .iter()
        .zip(&hits)
        .flat_map(|(qid, h)| to_run_entries(qid, h, index.doc_ids(), tag))
        .collect())
}

/// Fused run `alpha * a + (1 - alpha) * b`. Both indexes must list the same
/// documents in the same order.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_run(
    index_a: &CorpusIndex,
    queries_a: &[Vec<f64>],
    index_b: &CorpusIndex,
    queries_b: &[Vec<f64>],
    query_ids: &[&str],
    alpha: f64,
    k: usize,
    workers: usize,
    tag: &str,
) -> Result<Vec<RunEntry>> {
    if index_a.doc_ids() != index_b.doc_ids() {
        return Err(unveil_core::Error::Data("hybrid runs need both indexes over the same documents".into()).into());
    }
    let scores_a = score_batch(index_a, queries_a, workers)?;
    let scores_b = score_batch(index_b, queries_b, workers)?;
    let mut out = Vec::new();
    for ((qid, a), b) in query_ids.iter().zip(&scores_a).zip(&scores_b) {
        let hits = hybrid_interpolate(index_a.doc_ids(), a, b, alpha, k)?;
        out.extend(to_run_entries(qid, &hits, index_a.doc_ids(), tag));
    }
    Ok(out)
}

pub fn judgments(corpus: &Corpus, queries: &[QueryRecord], mode: JudgeMode) -> Result<Judgments> {
    let mut j = Judgments::default();
    for q in queries {
        let judgment = match mode {
            JudgeMode::Gold => Judgment::gold(q.positives.iter().cloned()),
            JudgeMode::Answers => Judgment::answers(&q.answers),
        }
        .map_err(|e| unveil_core::Error::Data(format!("query {}: {e}", q.id)))?;
        j.queries.insert(q.id.clone(), judgment);
    }
    if mode == JudgeMode::Answers {
        j.doc_text = corpus.texts.clone();
    }
    Ok(j)
}

/// Mean cosine between student and teacher document embeddings over an
/// evenly spaced sample of `sample` documents.
pub fn alignment_cosine(teacher: &ModelParams, student: &ModelParams, corpus: &Corpus, sample: usize) -> Result<f64> {
    let n = corpus.docs.len();
    let sample = sample.clamp(1, n.max(1));
    let mut total = 0.0;
    for i in 0..sample {
        let doc = &corpus.docs[i * n / sample];
        total += cosine_sim(&student.encode_doc(doc)?, &teacher.encode_doc(doc)?)?;
    }
    Ok(total / sample as f64)
}

/// Retrieval over the test queries for one trained model.
pub struct Retriever {
    pub index: CorpusIndex,
    pub queries: Vec<Vec<f64>>,
}

impl Retriever {
    pub fn new(model: &ModelParams, corpus: &Corpus, queries: &[QueryRecord]) -> Result<Self> {
        Ok(Self {
            index: build_index(model, corpus)?,
            queries: embed_queries(model, queries)?,
        })
    }

    pub fn run(&self, query_ids: &[&str], k: usize, workers: usize, tag: &str) -> Result<Vec<RunEntry>> {
        search_run(&self.index, query_ids, &self.queries, k, workers, tag)
    }
}

pub const RUN_NAMES: [&str; 4] = ["teacher", "student_pre", "student_distilled", "hybrid"];

pub fn run_tag(name: &str, seed: u64) -> String {
    format!("unveil-{name}-s{seed}")
}

/// Everything the full pipeline produces.
pub struct Outcome {
    pub teacher: TrainingRun,
    pub student_pre: TrainingRun,
    pub distilled: TrainingRun,
    pub runs: BTreeMap<&'static str, Vec<RunEntry>>,
    pub metrics: BTreeMap<&'static str, MetricsReport>,
    pub alignment_pre: f64,
    pub alignment_post: f64,
}

/// Stage 1 for both models, distillation, then runs and metrics on the
/// test split for the teacher, both students and the hybrid of the
/// pre-distillation student with the teacher.
pub fn run_pipeline(cfg: &ExperimentConfig, data: &Dataset) -> Result<Outcome> {
    cfg.validate()?;
    let stage1 = cfg.stage1_config();
    let teacher_init = init_model(cfg, ModelKind::Teacher, &data.corpus, &data.train)?;
    let student_init = init_model(cfg, ModelKind::Student, &data.corpus, &data.train)?;
    let teacher = train_stage1(teacher_init, &data.corpus, &data.train, &stage1)?;
    let student_pre = train_stage1(student_init, &data.corpus, &data.train, &stage1)?;
    let distilled = distill(&teacher.params, student_pre.params.clone(), &data.corpus, &data.train, &cfg.distill_config())?;

    let qids: Vec<&str> = data.test.iter().map(|q| q.id.as_str()).collect();
    let judged = judgments(&data.corpus, &data.test, cfg.eval.judge)?;
    let (k, workers) = (cfg.eval.k, cfg.workers);
    let t = Retriever::new(&teacher.params, &data.corpus, &data.test)?;
    let sp = Retriever::new(&student_pre.params, &data.corpus, &data.test)?;
    let sd = Retriever::new(&distilled.params, &data.corpus, &data.test)?;

    let mut runs = BTreeMap::new();
    runs.insert("teacher", t.run(&qids, k, workers, &run_tag("teacher", cfg.seed))?);
    runs.insert("student_pre", sp.run(&qids, k, workers, &run_tag("student_pre", cfg.seed))?);
    runs.insert("student_distilled", sd.run(&qids, k, workers, &run_tag("student_distilled", cfg.seed))?);
    runs.insert(
        "hybrid",
        hybrid_run(&sp.index, &sp.queries, &t.index, &t.queries, &qids, cfg.eval.alpha, k, workers, &run_tag("hybrid", cfg.seed))?,
    );
    let metrics = runs
        .iter()
        .map(|(name, run)| Ok((*name, evaluate_run(run, &judged, k)?)))
        .collect::<Result<_>>()?;
    let alignment_pre = alignment_cosine(&teacher.params, &student_pre.params, &data.corpus, cfg.eval.alignment_sample)?;
    let alignment_post = alignment_cosine(&teacher.params, &distilled.params, &data.corpus, cfg.eval.alignment_sample)?;
    Ok(Outcome {
        teacher,
        student_pre,
        distilled,
        runs,
        metrics,
        alignment_pre,
        alignment_post,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Full,
    NoReweight,
    NoAlign,
    NoSoft,
    NoDistill,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::NoReweight, Variant::NoAlign, Variant::NoSoft, Variant::NoDistill];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoReweight => "no_reweight",
            Variant::NoAlign => "no_align",
            Variant::NoSoft => "no_soft",
            Variant::NoDistill => "no_distill",
        }
    }

    /// Distillation settings of the variant; components are removed
    /// cumulatively, so `no_align` and `no_soft` also drop re-weighting.
    /// `None` means no distillation at all.
    pub fn apply(self, base: &TrainConfig) -> Option<TrainConfig> {
        let mut c = *base;
        match self {
            Variant::Full => {}
            Variant::NoReweight => c.use_reweight = false,
            Variant::NoAlign => {
                c.use_reweight = false;
                c.use_align = false;
            }
            Variant::NoSoft => {
                c.use_reweight = false;
                c.use_soft = false;
            }
            Variant::NoDistill => return None,
        }
        Some(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub metrics: MetricsReport,
}

/// Every variant distilled from the same stage-1 models with the same seed.
pub fn ablate(
    cfg: &ExperimentConfig,
    data: &Dataset,
    teacher: &ModelParams,
    student: &ModelParams,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let base = cfg.with_seed(seed).distill_config();
    let qids: Vec<&str> = data.test.iter().map(|q| q.id.as_str()).collect();
    let judged = judgments(&data.corpus, &data.test, cfg.eval.judge)?;
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let model = match variant.apply(&base) {
            Some(c) => distill(teacher, student.clone(), &data.corpus, &data.train, &c)?.params,
            None => student.clone(),
        };
        let run = Retriever::new(&model, &data.corpus, &data.test)?.run(&qids, cfg.eval.k, cfg.workers, variant.as_str())?;
        rows.push(AblationRow {
            variant,
            seed,
            metrics: evaluate_run(&run, &judged, cfg.eval.k)?,
        });
    }
    Ok(rows)
}

/// Full per-seed ablation: fresh data and stage-1 models for every seed.
pub fn ablate_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let c = cfg.with_seed(seed);
        let data = synthesize(&c)?;
        let stage1 = c.stage1_config();
        let teacher = train_stage1(init_model(&c, ModelKind::Teacher, &data.corpus, &data.train)?, &data.corpus, &data.train, &stage1)?;
        let student = train_stage1(init_model(&c, ModelKind::Student, &data.corpus, &data.train)?, &data.corpus, &data.train, &stage1)?;
        rows.extend(ablate(&c, &data, &teacher.params, &student.params, seed)?);
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let k = rows.first().map_or(10, |r| r.metrics.k);
    let mut out = format!("variant,seed,recall_at_{k},mrr_at_{k}\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.variant.as_str(), r.seed, r.metrics.recall_at_k, r.metrics.mrr_at_k));
    }
    out
}

/// Mean Recall@k per variant.
pub fn mean_recall(rows: &[AblationRow]) -> BTreeMap<Variant, f64> {
    let mut acc: BTreeMap<Variant, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.variant).or_default();
        e.0 += r.metrics.recall_at_k;
        e.1 += 1;
    }
    acc.into_iter().map(|(v, (s, n))| (v, s / n as f64)).collect()
}
