//! Similarity and loss functions for contrastive training and distillation,
//! with analytic gradients with respect to every student embedding.
//!
//! Notation used below: a batch holds `n` (query, positive document) pairs;
//! every query is scored against all `n` documents of its batch, so each
//! similarity row has `K = n` entries and the positive of query `i` is
//! document `i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vector::{dot, l2_norm, EmbeddingVector};

/// Probability floor applied to the student distribution inside the KL term.
pub const KL_STUDENT_FLOOR: f64 = 1e-12;

/// Cosine similarity with an explicit error on zero-norm inputs.
pub fn cosine_sim(q: &[f64], d: &[f64]) -> Result<f64> {
    Error::check_dim("cosine operands", q.len(), d.len())?;
    let (nq, nd) = (l2_norm(q), l2_norm(d));
    if nq == 0.0 || nd == 0.0 {
        return Err(Error::DegenerateEmbedding(None));
    }
    Ok(cosine_from_parts(dot(q, d), nq, nd))
}

/// `dot / (|q| |d|)`; the one place the cosine division happens, shared by search.
#[inline]
pub fn cosine_from_parts(dot: f64, q_norm: f64, d_norm: f64) -> f64 {
    dot / (q_norm * d_norm)
}

/// Cosine plus its gradients with respect to both operands.
fn cosine_with_grad(q: &[f64], d: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let c = cosine_sim(q, d)?;
    let (nq, nd) = (l2_norm(q), l2_norm(d));
    let inv = 1.0 / (nq * nd);
    let (cq, cd) = (c / (nq * nq), c / (nd * nd));
    let gq = q.iter().zip(d).map(|(qi, di)| di * inv - cq * qi).collect();
    let gd = q.iter().zip(d).map(|(qi, di)| qi * inv - cd * di).collect();
    Ok((c, gq, gd))
}

/// One query's similarities to its candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub query_index: usize,
    pub values: Vec<f64>,
}

impl SimilarityRow {
    pub fn new(query_index: usize, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("similarity row needs K >= 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity row"));
        }
        Ok(Self {
            query_index,
            values,
        })
    }
}

/// `S[i][j] = cos(queries[i], docs[j])`.
pub fn similarity_matrix(
    queries: &[EmbeddingVector],
    docs: &[EmbeddingVector],
) -> Result<Vec<Vec<f64>>> {
    queries
        .iter()
        .map(|q| docs.iter().map(|d| cosine_sim(q, d)).collect())
        .collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

fn softmax(values: &[f64], tau: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| libm::exp((v - max) / tau)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_positives(k: usize, positives: &[usize]) -> Result<()> {
    if positives.is_empty() {
        return Err(Error::contract("InfoNCE needs at least one positive"));
    }
    if let Some(bad) = positives.iter().find(|&&p| p >= k) {
        return Err(Error::contract(alloc::format!(
            "positive index {bad} out of range for K = {k}"
        )));
    }
    Ok(())
}

/// `-Σ_{p ∈ positives} log softmax(sims)[p]`.
pub fn infonce_loss(sims: &[f64], positives: &[usize]) -> Result<f64> {
    check_positives(sims.len(), positives)?;
    let lse = log_sum_exp(sims);
    Ok(positives.iter().map(|&p| lse - sims[p]).sum())
}

/// InfoNCE and its gradient with respect to the similarity row.
pub fn infonce_with_grad(sims: &[f64], positives: &[usize]) -> Result<(f64, Vec<f64>)> {
    let loss = infonce_loss(sims, positives)?;
    let p = softmax(sims, 1.0);
    let count = positives.len() as f64;
    let mut grad: Vec<f64> = p.iter().map(|pj| count * pj).collect();
    for &pos in positives {
        grad[pos] -= 1.0;
    }
    Ok((loss, grad))
}

fn check_same_shape(a: &[EmbeddingVector], b: &[EmbeddingVector], what: &'static str) -> Result<()> {
    Error::check_dim(what, a.len(), b.len())?;
    for (x, y) in a.iter().zip(b) {
        Error::check_dim(what, x.dim(), y.dim())?;
    }
    Ok(())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over pairs of `‖d_t − d_s‖² + ‖q_t − q_s‖²` on raw embeddings.
pub fn align_loss(
    teacher_docs: &[EmbeddingVector],
    student_docs: &[EmbeddingVector],
    teacher_queries: &[EmbeddingVector],
    student_queries: &[EmbeddingVector],
) -> Result<f64> {
    let n = teacher_docs.len();
    if n == 0 {
        return Err(Error::contract("alignment needs at least one pair"));
    }
    check_same_shape(teacher_docs, student_docs, "aligned documents")?;
    check_same_shape(teacher_queries, student_queries, "aligned queries")?;
    Error::check_dim("aligned pairs", n, teacher_queries.len())?;
    let sum: f64 = (0..n)
        .map(|i| {
            squared_distance(&teacher_docs[i], &student_docs[i])
                + squared_distance(&teacher_queries[i], &student_queries[i])
        })
        .sum();
    Ok(sum / n as f64)
}

/// A temperature-softened distribution over a query's candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelDistribution {
    pub probs: Vec<f64>,
    pub temperature: f64,
}

impl SoftLabelDistribution {
    /// Wraps an explicit probability vector (entries ≥ 0, sum 1 within 1e-9).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::contract("probabilities must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::contract(alloc::format!("probabilities sum to {sum}")));
        }
        Ok(Self {
            probs,
            temperature: 1.0,
        })
    }
}

/// `softmax(sims / tau)` with the max shift.
pub fn soft_distribution(sims: &[f64], tau: f64) -> Result<SoftLabelDistribution> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::config("temperature must be positive and finite"));
    }
    if sims.is_empty() {
        return Err(Error::contract("similarity row needs K >= 1"));
    }
    Ok(SoftLabelDistribution {
        probs: softmax(sims, tau),
        temperature: tau,
    })
}

/// `KL(t ‖ s) = Σ tᵢ ln(tᵢ / max(sᵢ, 1e-12))`, zero-mass teacher entries skipped.
pub fn kl_divergence(t: &SoftLabelDistribution, s: &SoftLabelDistribution) -> Result<f64> {
    kl_raw(&t.probs, &s.probs)
}

fn kl_raw(t: &[f64], s: &[f64]) -> Result<f64> {
    Error::check_dim("KL operands", t.len(), s.len())?;
    let kl: f64 = t
        .iter()
        .zip(s)
        .filter(|(ti, _)| **ti > 0.0)
        .map(|(ti, si)| ti * libm::log(ti / si.max(KL_STUDENT_FLOOR)))
        .sum();
    // rounding can leave a tiny negative residue when t == s
    Ok(kl.max(0.0))
}

/// Gradient of `KL(t ‖ softmax(S/τ))` with respect to the raw student row `S`.
///
/// With `b_k = s_k ∂KL/∂s_k` (`-t_k`, or 0 where the floor is active) the
/// gradient is `(b_j - s_j Σ b) / τ`. `Σ b` is written as `-(1 - clamped mass)`
/// rather than summed, so `t == s` gives an exactly zero gradient.
fn kl_grad_wrt_student_sims(t: &[f64], s: &[f64], tau: f64) -> Vec<f64> {
    let floored = |tk: f64, sk: f64| tk > 0.0 && sk <= KL_STUDENT_FLOOR;
    let clamped_mass: f64 = t.iter().zip(s).filter(|(tk, sk)| floored(**tk, **sk)).map(|(tk, _)| tk).sum();
    let active_mass = 1.0 - clamped_mass;
    t.iter()
        .zip(s)
        .map(|(tj, sj)| {
            let bj = if *tj > 0.0 && !floored(*tj, *sj) { -tj } else { 0.0 };
            (bj + sj * active_mass) / tau
        })
        .collect()
}

/// Softmax over per-instance KL values; larger disagreement, larger weight.
pub fn adaptive_weights(kl_values: &[f64], tau_weight: f64) -> Result<Vec<f64>> {
    if kl_values.is_empty() {
        return Err(Error::contract("adaptive weights need n >= 1"));
    }
    if !(tau_weight > 0.0) || !tau_weight.is_finite() {
        return Err(Error::config("tau_weight must be positive and finite"));
    }
    if kl_values.iter().any(|k| !k.is_finite() || *k < 0.0) {
        return Err(Error::contract("KL values must be finite and non-negative"));
    }
    Ok(softmax(kl_values, tau_weight))
}

/// Which terms of the distillation objective are active, and how they are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillOptions {
    pub tau_soft: f64,
    pub tau_weight: f64,
    /// Align L2-normalised embeddings instead of raw ones.
    pub align_normalized: bool,
    /// Add the student's in-batch InfoNCE to the optimised objective.
    pub include_hard: bool,
    pub use_align: bool,
    pub use_soft: bool,
    /// Off: uniform weights `1/n`.
    pub use_reweight: bool,
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self {
            tau_soft: 1.0,
            tau_weight: 1.0,
            align_normalized: false,
            include_hard: false,
            use_align: true,
            use_soft: true,
            use_reweight: true,
        }
    }
}

/// Embeddings of one in-batch distillation step. Index `i` of the query
/// lists and of the document lists belong to the same training pair.
#[derive(Debug, Clone, Copy)]
pub struct DistillBatch<'a> {
    pub teacher_queries: &'a [EmbeddingVector],
    pub teacher_docs: &'a [EmbeddingVector],
    pub student_queries: &'a [EmbeddingVector],
    pub student_docs: &'a [EmbeddingVector],
}

impl DistillBatch<'_> {
    fn validate(&self) -> Result<usize> {
        let n = self.teacher_queries.len();
        if n == 0 {
            return Err(Error::contract("distillation batch is empty"));
        }
        for (len, what) in [
            (self.teacher_docs.len(), "teacher documents"),
            (self.student_queries.len(), "student queries"),
            (self.student_docs.len(), "student documents"),
        ] {
            Error::check_dim(what, n, len)?;
        }
        check_same_shape(self.teacher_docs, self.student_docs, "teacher/student documents")?;
        check_same_shape(self.teacher_queries, self.student_queries, "teacher/student queries")?;
        Ok(n)
    }
}

/// Per-batch values of every loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Mean in-batch InfoNCE of the student.
    pub hard: f64,
    /// Mean per-pair alignment (the averaged form).
    pub align: f64,
    /// Mean per-query KL(teacher ‖ student).
    pub soft: f64,
    pub weights: Vec<f64>,
    pub align_terms: Vec<f64>,
    pub soft_terms: Vec<f64>,
    /// `Σ wᵢ (alignᵢ + softᵢ)` over the enabled terms.
    pub total: f64,
    /// What the optimiser minimises: `total`, plus `hard` when enabled.
    pub objective: f64,
}

/// Gradients of the distillation objective with respect to the student's
/// embeddings. The teacher is frozen and receives none.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentGrads {
    pub queries: Vec<Vec<f64>>,
    pub docs: Vec<Vec<f64>>,
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding(None));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Alignment term for one pair of vectors and its gradient w.r.t. the student vector.
fn align_pair(teacher: &[f64], student: &[f64], normalized: bool) -> Result<(f64, Vec<f64>)> {
    if !normalized {
        let loss = squared_distance(teacher, student);
        let grad = teacher.iter().zip(student).map(|(t, s)| 2.0 * (s - t)).collect();
        return Ok((loss, grad));
    }
    let (ut, us) = (unit(teacher)?, unit(student)?);
    let loss = squared_distance(&ut, &us);
    // d/ds |u(s) - ut|^2 = (I - us usᵀ) 2(us - ut) / |s|
    let r: Vec<f64> = us.iter().zip(&ut).map(|(a, b)| 2.0 * (a - b)).collect();
    let proj = dot(&us, &r);
    let norm = l2_norm(student);
    let grad = r.iter().zip(&us).map(|(ri, ui)| (ri - proj * ui) / norm).collect();
    Ok((loss, grad))
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

struct Forward {
    breakdown: LossBreakdown,
    student_sims: Vec<Vec<f64>>,
    teacher_probs: Vec<Vec<f64>>,
    student_probs: Vec<Vec<f64>>,
    align_grads_q: Vec<Vec<f64>>,
    align_grads_d: Vec<Vec<f64>>,
}

fn distill_forward(batch: &DistillBatch<'_>, opts: &DistillOptions) -> Result<Forward> {
    let n = batch.validate()?;
    let teacher_sims = similarity_matrix(batch.teacher_queries, batch.teacher_docs)?;
    let student_sims = similarity_matrix(batch.student_queries, batch.student_docs)?;

    let mut teacher_probs = Vec::with_capacity(n);
    let mut student_probs = Vec::with_capacity(n);
    let mut soft_terms = Vec::with_capacity(n);
    for (t_row, s_row) in teacher_sims.iter().zip(&student_sims) {
        let t = soft_distribution(t_row, opts.tau_soft)?;
        let s = soft_distribution(s_row, opts.tau_soft)?;
        soft_terms.push(kl_divergence(&t, &s)?);
        teacher_probs.push(t.probs);
        student_probs.push(s.probs);
    }

    let mut align_terms = Vec::with_capacity(n);
    let mut align_grads_q = Vec::with_capacity(n);
    let mut align_grads_d = Vec::with_capacity(n);
    for i in 0..n {
        let (ld, gd) = align_pair(&batch.teacher_docs[i], &batch.student_docs[i], opts.align_normalized)?;
        let (lq, gq) = align_pair(
            &batch.teacher_queries[i],
            &batch.student_queries[i],
            opts.align_normalized,
        )?;
        align_terms.push(ld + lq);
        align_grads_d.push(gd);
        align_grads_q.push(gq);
    }

    let weights = if opts.use_reweight {
        adaptive_weights(&soft_terms, opts.tau_weight)?
    } else {
        uniform(n)
    };

    let mut total = 0.0;
    for i in 0..n {
        let mut term = 0.0;
        if opts.use_align {
            term += align_terms[i];
        }
        if opts.use_soft {
            term += soft_terms[i];
        }
        total += weights[i] * term;
    }

    let mut hard = 0.0;
    for (i, row) in student_sims.iter().enumerate() {
        hard += infonce_loss(row, &[i])?;
    }
    hard /= n as f64;

    let objective = if opts.include_hard { total + hard } else { total };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let breakdown = LossBreakdown {
        hard,
        align: mean(&align_terms),
        soft: mean(&soft_terms),
        weights,
        align_terms,
        soft_terms,
        total,
        objective,
    };
    Ok(Forward {
        breakdown,
        student_sims,
        teacher_probs,
        student_probs,
        align_grads_q,
        align_grads_d,
    })
}

/// Per-instance alignment and soft-label terms combined under adaptive weights.
pub fn total_distill_loss(batch: &DistillBatch<'_>, opts: &DistillOptions) -> Result<LossBreakdown> {
    Ok(distill_forward(batch, opts)?.breakdown)
}

/// Exact gradient of `objective` with respect to every student embedding.
/// The weights are treated as constants.
pub fn grad_total_distill_loss(
    batch: &DistillBatch<'_>,
    opts: &DistillOptions,
) -> Result<(LossBreakdown, StudentGrads)> {
    let fwd = distill_forward(batch, opts)?;
    let n = fwd.breakdown.weights.len();
    let dim = batch.student_queries[0].dim();

    // d objective / d S[i][j]
    let mut sim_grads = vec![vec![0.0; n]; n];
    if opts.use_soft {
        for i in 0..n {
            let w = fwd.breakdown.weights[i];
            let g = kl_grad_wrt_student_sims(&fwd.teacher_probs[i], &fwd.student_probs[i], opts.tau_soft);
            for (dst, gj) in sim_grads[i].iter_mut().zip(g) {
                *dst += w * gj;
            }
        }
    }
    if opts.include_hard {
        for (i, row) in fwd.student_sims.iter().enumerate() {
            let (_, g) = infonce_with_grad(row, &[i])?;
            for (dst, gj) in sim_grads[i].iter_mut().zip(g) {
                *dst += gj / n as f64;
            }
        }
    }

    let mut queries = vec![vec![0.0; dim]; n];
    let mut docs = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            let g = sim_grads[i][j];
            if g == 0.0 {
                continue;
            }
            let (_, gq, gd) = cosine_with_grad(&batch.student_queries[i], &batch.student_docs[j])?;
            for (dst, v) in queries[i].iter_mut().zip(&gq) {
                *dst += g * v;
            }
            for (dst, v) in docs[j].iter_mut().zip(&gd) {
                *dst += g * v;
            }
        }
    }
    if opts.use_align {
        for i in 0..n {
            let w = fwd.breakdown.weights[i];
            for (dst, v) in queries[i].iter_mut().zip(&fwd.align_grads_q[i]) {
                *dst += w * v;
            }
            for (dst, v) in docs[i].iter_mut().zip(&fwd.align_grads_d[i]) {
                *dst += w * v;
            }
        }
    }
    Ok((fwd.breakdown, StudentGrads { queries, docs }))
}

/// Mean in-batch InfoNCE (positive of query `i` is document `i`) and its
/// gradients with respect to the query and document embeddings.
pub fn in_batch_infonce_with_grad(
    queries: &[EmbeddingVector],
    docs: &[EmbeddingVector],
) -> Result<(f64, StudentGrads)> {
    let n = queries.len();
    if n == 0 {
        return Err(Error::contract("in-batch InfoNCE needs at least one pair"));
    }
    Error::check_dim("in-batch documents", n, docs.len())?;
    let dim = queries[0].dim();
    let mut loss = 0.0;
    let mut gq_all = vec![vec![0.0; dim]; n];
    let mut gd_all = vec![vec![0.0; dim]; n];
    let scale = 1.0 / n as f64;
    for (i, q) in queries.iter().enumerate() {
        let mut row = Vec::with_capacity(n);
        let mut parts = Vec::with_capacity(n);
        for d in docs {
            let (c, gq, gd) = cosine_with_grad(q, d)?;
            row.push(c);
            parts.push((gq, gd));
        }
        let (l, g) = infonce_with_grad(&row, &[i])?;
        loss += l * scale;
        for (j, (gq, gd)) in parts.iter().enumerate() {
            let gij = g[j] * scale;
            for (dst, v) in gq_all[i].iter_mut().zip(gq) {
                *dst += gij * v;
            }
            for (dst, v) in gd_all[j].iter_mut().zip(gd) {
                *dst += gij * v;
            }
        }
    }
    Ok((
        loss,
        StudentGrads {
            queries: gq_all,
            docs: gd_all,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_sim(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::DegenerateEmbedding(None)));
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 0.0]), Err(Error::DegenerateEmbedding(None)));
    }

    #[test]
    fn infonce_examples() {
        let l = infonce_loss(&[0.3; 4], &[2]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        // -ln(e / (e + 3)), evaluated independently
        let l = infonce_loss(&[1.0, 0.0, 0.0, 0.0], &[0]).unwrap();
        assert!((l - 0.743_668_380_628_679_2).abs() < 1e-12, "{l}");
        assert_eq!(infonce_loss(&[0.42], &[0]).unwrap(), 0.0);
    }

    #[test]
    fn infonce_contract_errors() {
        assert!(matches!(infonce_loss(&[0.1, 0.2], &[]), Err(Error::Contract(_))));
        assert!(matches!(infonce_loss(&[0.1, 0.2], &[2]), Err(Error::Contract(_))));
    }

    #[test]
    fn align_examples() {
        let z = ev(&[0.0, 0.0]);
        let t = [ev(&[1.0, 2.0])];
        assert_eq!(align_loss(&t, &t, &t, &t).unwrap(), 0.0);

        let td = [ev(&[1.0, 1.0])];
        let sd = [z.clone()];
        let q = [ev(&[0.5, 0.5])];
        assert_eq!(align_loss(&td, &sd, &q, &q).unwrap(), 2.0);

        let base = align_loss(&[ev(&[1.0, -2.0])], &[ev(&[0.5, 0.25])], &[ev(&[3.0, 1.0])], &[ev(&[2.0, 2.0])]).unwrap();
        let doubled = align_loss(&[ev(&[2.0, -4.0])], &[ev(&[1.0, 0.5])], &[ev(&[6.0, 2.0])], &[ev(&[4.0, 4.0])]).unwrap();
        assert_eq!(doubled, 4.0 * base);
    }

    #[test]
    fn align_contract_errors() {
        let a = [ev(&[1.0, 0.0])];
        let b = [ev(&[1.0, 0.0, 0.0])];
        assert!(align_loss(&a, &b, &a, &a).is_err());
        assert!(matches!(align_loss(&[], &[], &[], &[]), Err(Error::Contract(_))));
        let two = [ev(&[1.0, 0.0]), ev(&[0.0, 1.0])];
        assert!(align_loss(&two, &two, &a, &a).is_err());
    }

    #[test]
    fn soft_distribution_examples() {
        let u = soft_distribution(&[0.2; 5], 0.3).unwrap();
        assert!(u.probs.iter().all(|p| (p - 0.2).abs() < 1e-15));

        let p = soft_distribution(&[1.0, 2.0, 3.0], 1.0).unwrap().probs;
        let expected = [0.090_030_573_2, 0.244_728_471_1, 0.665_240_955_8];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }

        let p = soft_distribution(&[0.0, 2f64.ln()], 1.0).unwrap().probs;
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);

        assert!(matches!(soft_distribution(&[1.0], 0.0), Err(Error::Config(_))));
        assert!(matches!(soft_distribution(&[1.0], -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn kl_examples() {
        let t = soft_distribution(&[0.1, 0.7, -0.3], 1.0).unwrap();
        assert!(kl_divergence(&t, &t).unwrap() < 1e-12);

        let t = SoftLabelDistribution::from_probs(vec![1.0, 0.0]).unwrap();
        let s = SoftLabelDistribution::from_probs(vec![0.5, 0.5]).unwrap();
        assert!((kl_divergence(&t, &s).unwrap() - 0.693_147_180_6).abs() < 1e-10);

        let short = SoftLabelDistribution::from_probs(vec![1.0]).unwrap();
        assert!(kl_divergence(&t, &short).is_err());
    }

    #[test]
    fn kl_with_floored_student() {
        let t = SoftLabelDistribution::from_probs(vec![0.5, 0.5]).unwrap();
        let s = SoftLabelDistribution::from_probs(vec![1.0, 0.0]).unwrap();
        let expected = 0.5 * (0.5f64).ln() + 0.5 * (0.5 / 1e-12f64).ln();
        assert!((kl_divergence(&t, &s).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn adaptive_weight_examples() {
        let w = adaptive_weights(&[0.4; 4], 1.0).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));

        let w = adaptive_weights(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);

        // flattening towards uniform as tau_weight grows
        let spread: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&tau| {
                let w = adaptive_weights(&[5.0, 0.0], tau).unwrap();
                w[0] - w[1]
            })
            .collect();
        assert!(spread[0] > spread[1] && spread[1] > spread[2] && spread[2] > 0.0);
    }

    #[test]
    fn adaptive_weight_errors() {
        assert!(matches!(adaptive_weights(&[0.1, -0.1], 1.0), Err(Error::Contract(_))));
        assert!(matches!(adaptive_weights(&[f64::NAN], 1.0), Err(Error::Contract(_))));
        assert!(matches!(adaptive_weights(&[f64::INFINITY], 1.0), Err(Error::Contract(_))));
        assert!(matches!(adaptive_weights(&[], 1.0), Err(Error::Contract(_))));
        assert!(matches!(adaptive_weights(&[0.1], 0.0), Err(Error::Config(_))));
    }

    fn batch_of(t_q: &[EmbeddingVector], t_d: &[EmbeddingVector], s_q: &[EmbeddingVector], s_d: &[EmbeddingVector]) -> (LossBreakdown, StudentGrads) {
        let batch = DistillBatch {
            teacher_queries: t_q,
            teacher_docs: t_d,
            student_queries: s_q,
            student_docs: s_d,
        };
        grad_total_distill_loss(&batch, &DistillOptions::default()).unwrap()
    }

    #[test]
    fn identical_models_have_zero_total_and_gradient() {
        let q = [ev(&[1.0, 0.2, -0.3]), ev(&[0.1, 0.9, 0.4]), ev(&[-0.5, 0.5, 1.0])];
        let d = [ev(&[0.8, 0.1, 0.0]), ev(&[0.0, 1.0, 0.3]), ev(&[-0.2, 0.4, 0.9])];
        let (b, g) = batch_of(&q, &d, &q, &d);
        assert_eq!(b.total, 0.0);
        assert!(g.queries.iter().chain(&g.docs).all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn misaligned_instance_gets_larger_weight() {
        let q = [ev(&[1.0, 0.0]), ev(&[0.0, 1.0])];
        let d = [ev(&[1.0, 0.1]), ev(&[0.1, 1.0])];
        let s_q = [ev(&[1.0, 0.0]), ev(&[1.0, 0.2])];
        let (b, _) = batch_of(&q, &d, &s_q, &d);
        assert_eq!(b.soft_terms[0] < b.soft_terms[1], true);
        assert!(b.weights[1] > 0.5);
    }

    #[test]
    fn inconsistent_batch_rejected() {
        let one = [ev(&[1.0, 0.0])];
        let two = [ev(&[1.0, 0.0]), ev(&[0.0, 1.0])];
        let batch = DistillBatch {
            teacher_queries: &two,
            teacher_docs: &one,
            student_queries: &two,
            student_docs: &two,
        };
        assert!(total_distill_loss(&batch, &DistillOptions::default()).is_err());
    }
}
