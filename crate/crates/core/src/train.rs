//! Two-stage training: independent in-batch contrastive training of each
//! model, then distillation of a frozen teacher into the student.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{EncoderParams, FeatureRecord, ForwardTrace, ModelParams};
use crate::error::{Error, Result};
use crate::loss::{self, DistillBatch, DistillOptions, StudentGrads};
use crate::optim::{optimizer_step, Optimizer, OptimizerState};
use crate::vector::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau_soft: f64,
    pub tau_weight: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub align_normalized: bool,
    pub include_hard_in_distill: bool,
    pub use_align: bool,
    pub use_soft: bool,
    pub use_reweight: bool,
}

impl Default for TrainConfig {
    /// Batch 16, 2 epochs, learning rate 2e-5, Adam.
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 2,
            learning_rate: 2e-5,
            tau_soft: 1.0,
            tau_weight: 1.0,
            seed: 0,
            optimizer: Optimizer::adam(),
            align_normalized: false,
            include_hard_in_distill: false,
            use_align: true,
            use_soft: true,
            use_reweight: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be >= 2 for in-batch negatives"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be finite and >= 0"));
        }
        for (value, name) in [(self.tau_soft, "tau_soft"), (self.tau_weight, "tau_weight")] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(alloc::format!("{name} must be positive and finite")));
            }
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            let unit = |b: f64| (0.0..1.0).contains(&b);
            if !unit(beta1) || !unit(beta2) || !(eps > 0.0) {
                return Err(Error::config("adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        if !self.use_align && !self.use_soft && !self.include_hard_in_distill {
            return Err(Error::config("distillation objective has no active term"));
        }
        Ok(())
    }

    pub fn distill_options(&self) -> DistillOptions {
        DistillOptions {
            tau_soft: self.tau_soft,
            tau_weight: self.tau_weight,
            align_normalized: self.align_normalized,
            include_hard: self.include_hard_in_distill,
            use_align: self.use_align,
            use_soft: self.use_soft,
            use_reweight: self.use_reweight,
        }
    }
}

/// A query and its positive document.
#[derive(Debug, Clone, Copy)]
pub struct TrainingPair<'a> {
    pub query: &'a [f64],
    pub doc: &'a FeatureRecord,
}

/// Shuffles pair indices with a generator keyed by `(seed, epoch)` and cuts
/// them into batches. A trailing batch with a single pair is dropped.
pub fn make_batches(num_pairs: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..num_pairs).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Independent,
    Distill,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Independent => "independent",
            Stage::Distill => "distill",
        }
    }
}

/// Loss values of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub epoch: usize,
    pub batch: usize,
    pub hard: f64,
    pub align: f64,
    pub soft: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub stage: Stage,
    pub trace: Vec<TraceEntry>,
    pub params: ModelParams,
}

impl TrainingRun {
    /// Mean of `f` over the steps of one epoch.
    pub fn epoch_mean(&self, epoch: usize, f: impl Fn(&TraceEntry) -> f64) -> Option<f64> {
        let values: Vec<f64> = self.trace.iter().filter(|e| e.epoch == epoch).map(f).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

struct Encoded {
    traces: Vec<ForwardTrace>,
    embeddings: Vec<EmbeddingVector>,
}

fn encode_traced(params: &EncoderParams, inputs: impl Iterator<Item = Result<Vec<f64>>>) -> Result<Encoded> {
    let mut traces = Vec::new();
    let mut embeddings = Vec::new();
    for input in inputs {
        let trace = params.forward_trace(&input?)?;
        embeddings.push(EmbeddingVector::new(trace.output().to_vec())?);
        traces.push(trace);
    }
    Ok(Encoded { traces, embeddings })
}

/// Parameter gradients and optimiser state for one model.
struct Learner {
    query_state: OptimizerState,
    doc_state: OptimizerState,
}

impl Learner {
    fn new(model: &ModelParams) -> Self {
        Self {
            query_state: OptimizerState::new(&model.query),
            doc_state: OptimizerState::new(&model.doc),
        }
    }

    /// Backpropagates embedding gradients (in index order) and takes one step.
    fn apply(
        &mut self,
        model: &mut ModelParams,
        queries: &Encoded,
        docs: &Encoded,
        grads: &StudentGrads,
        config: &TrainConfig,
    ) -> Result<()> {
        let mut query_grads = model.query.zeros_like();
        for (trace, g) in queries.traces.iter().zip(&grads.queries) {
            model.query.backward_into(trace, g, &mut query_grads)?;
        }
        let mut doc_grads = model.doc.zeros_like();
        for (trace, g) in docs.traces.iter().zip(&grads.docs) {
            model.doc.backward_into(trace, g, &mut doc_grads)?;
        }
        optimizer_step(&mut model.query, &query_grads, &mut self.query_state, config.optimizer, config.learning_rate)?;
        optimizer_step(&mut model.doc, &doc_grads, &mut self.doc_state, config.optimizer, config.learning_rate)?;
        Ok(())
    }
}

fn check_pairs(pairs: &[TrainingPair<'_>]) -> Result<()> {
    if pairs.len() < 2 {
        return Err(Error::Data(alloc::format!(
            "need at least 2 training pairs, got {}",
            pairs.len()
        )));
    }
    Ok(())
}

/// Stage 1: in-batch InfoNCE on one model, starting from `init`.
pub fn train_stage1(init: ModelParams, pairs: &[TrainingPair<'_>], config: &TrainConfig) -> Result<TrainingRun> {
    config.validate()?;
    check_pairs(pairs)?;
    let mut model = init;
    let mut learner = Learner::new(&model);
    let mut trace = Vec::new();
    for epoch in 0..config.epochs {
        let batches = make_batches(pairs.len(), config.batch_size, config.seed, epoch as u64);
        for (b, batch) in batches.iter().enumerate() {
            let queries = encode_traced(&model.query, batch.iter().map(|&i| Ok(pairs[i].query.to_vec())))?;
            let docs = encode_traced(&model.doc, batch.iter().map(|&i| model.kind.doc_input(pairs[i].doc)))?;
            let (loss, grads) = loss::in_batch_infonce_with_grad(&queries.embeddings, &docs.embeddings)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    stage: Stage::Independent.as_str(),
                    epoch,
                    batch: b,
                });
            }
            learner.apply(&mut model, &queries, &docs, &grads, config)?;
            trace.push(TraceEntry {
                step: trace.len(),
                epoch,
                batch: b,
                hard: loss,
                align: 0.0,
                soft: 0.0,
                total: loss,
            });
        }
    }
    Ok(TrainingRun {
        stage: Stage::Independent,
        trace,
        params: model,
    })
}

/// Stage 2: optimises the student against the frozen teacher.
pub fn distill(
    teacher: &ModelParams,
    student: ModelParams,
    pairs: &[TrainingPair<'_>],
    config: &TrainConfig,
) -> Result<TrainingRun> {
    config.validate()?;
    check_pairs(pairs)?;
    let opts = config.distill_options();

    // teacher is frozen: its embeddings never change
    let mut teacher_queries = Vec::with_capacity(pairs.len());
    let mut teacher_docs = Vec::with_capacity(pairs.len());
    for pair in pairs {
        teacher_queries.push(teacher.encode_query(pair.query)?);
        teacher_docs.push(teacher.encode_doc(pair.doc)?);
    }

    let mut model = student;
    let mut learner = Learner::new(&model);
    let mut trace = Vec::new();
    for epoch in 0..config.epochs {
        let batches = make_batches(pairs.len(), config.batch_size, config.seed, epoch as u64);
        for (b, batch) in batches.iter().enumerate() {
            let queries = encode_traced(&model.query, batch.iter().map(|&i| Ok(pairs[i].query.to_vec())))?;
            let docs = encode_traced(&model.doc, batch.iter().map(|&i| model.kind.doc_input(pairs[i].doc)))?;
            let t_q: Vec<EmbeddingVector> = batch.iter().map(|&i| teacher_queries[i].clone()).collect();
            let t_d: Vec<EmbeddingVector> = batch.iter().map(|&i| teacher_docs[i].clone()).collect();
            let distill_batch = DistillBatch {
                teacher_queries: &t_q,
                teacher_docs: &t_d,
                student_queries: &queries.embeddings,
                student_docs: &docs.embeddings,
            };
            let (breakdown, grads) = loss::grad_total_distill_loss(&distill_batch, &opts)?;
            if !breakdown.objective.is_finite() {
                return Err(Error::NonFiniteLoss {
                    stage: Stage::Distill.as_str(),
                    epoch,
                    batch: b,
                });
            }
            learner.apply(&mut model, &queries, &docs, &grads, config)?;
            trace.push(TraceEntry {
                step: trace.len(),
                epoch,
                batch: b,
                hard: breakdown.hard,
                align: breakdown.align,
                soft: breakdown.soft,
                total: breakdown.total,
            });
        }
    }
    Ok(TrainingRun {
        stage: Stage::Distill,
        trace,
        params: model,
    })
}
