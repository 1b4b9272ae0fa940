//! Toy dual encoders.
//!
//! An encoder is a stack of affine layers with `tanh` on every hidden layer
//! and the identity on the last one. The last layer's output is the pooled
//! representation. Three encoders exist per model: the query encoder, and a
//! document encoder that either sees the visual view only (student) or the
//! concatenation `[visual ‖ text]` (teacher).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vector::EmbeddingVector;

/// One affine layer; `weight` is row-major `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config("layer dimensions must be positive"));
        }
        Error::check_dim("layer weight", in_dim * out_dim, weight.len())?;
        Error::check_dim("layer bias", out_dim, bias.len())?;
        if !weight.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let mut acc = self.bias[o];
            for (w, x) in self.row(o).iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Parameters of one encoder: tanh on hidden layers, identity on the last.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    layers: Vec<Layer>,
}

impl EncoderParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("encoder needs at least one layer"));
        }
        for pair in layers.windows(2) {
            Error::check_dim("layer chaining", pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(Self { layers })
    }

    /// Xavier-uniform weights, zero biases. `layer_dims` lists the input
    /// width followed by each layer's output width.
    pub fn init(seed: u64, layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config("layer_dims needs at least 2 entries"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::config("layer_dims entries must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = xavier_bound(fan_in, fan_out);
                let weight = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weight,
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::new(layers)
    }

    /// Single identity layer with zero bias.
    pub fn identity(dim: usize) -> Self {
        let mut layer = Layer::zeros(dim, dim);
        for i in 0..dim {
            layer.weight[i * dim + i] = 1.0;
        }
        Self {
            layers: vec![layer],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Every trainable slice in a fixed order (weight then bias, layer by layer).
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &EncoderParams) {
        for (dst, src) in self.slices_mut().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("encoder input", self.input_dim(), input.len())?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i != last {
                next.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer input, for a later [`backward`](Self::backward).
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        Error::check_dim("encoder input", self.input_dim(), input.len())?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.apply(&activations[i], &mut out);
            if i != last {
                out.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        grad_output: &[f64],
        grads: &mut EncoderParams,
    ) -> Result<Vec<f64>> {
        Error::check_dim("trace depth", self.layers.len() + 1, trace.activations.len())?;
        Error::check_dim("input activation", self.input_dim(), trace.activations[0].len())?;
        Error::check_dim("grad_output", self.embedding_dim(), grad_output.len())?;
        Error::check_dim("gradient layers", self.layers.len(), grads.layers.len())?;
        let last = self.layers.len() - 1;
        let mut upstream = grad_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i != last {
                // d tanh(z) = 1 - tanh(z)^2, tanh(z) is the stored output
                for (g, h) in upstream.iter_mut().zip(&trace.activations[i + 1]) {
                    *g *= 1.0 - h * h;
                }
            }
            let input = &trace.activations[i];
            let grad_layer = &mut grads.layers[i];
            Error::check_dim("gradient layer", layer.weight.len(), grad_layer.weight.len())?;
            for (o, g) in upstream.iter().enumerate() {
                grad_layer.bias[o] += g;
                let row = &mut grad_layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, x) in row.iter_mut().zip(input) {
                    *w += g * x;
                }
            }
            let mut down = vec![0.0; layer.in_dim];
            for (o, g) in upstream.iter().enumerate() {
                for (d, w) in down.iter_mut().zip(layer.row(o)) {
                    *d += w * g;
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }

    pub fn backward(&self, input: &[f64], grad_output: &[f64]) -> Result<EncoderGrad> {
        let trace = self.forward_trace(input)?;
        let mut params = self.zeros_like();
        let input = self.backward_into(&trace, grad_output, &mut params)?;
        Ok(EncoderGrad { params, input })
    }
}

pub(crate) fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Layer inputs recorded by a forward pass; the last entry is the output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        &self.activations[self.activations.len() - 1]
    }
}

/// Gradients of every parameter and of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub params: EncoderParams,
    pub input: Vec<f64>,
}

/// A document (or any retrievable item) as seen by the encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub visual: Vec<f64>,
    pub text: Option<Vec<f64>>,
}

impl FeatureRecord {
    pub fn new(id: impl Into<String>, visual: Vec<f64>, text: Option<Vec<f64>>) -> Self {
        Self {
            id: id.into(),
            visual,
            text,
        }
    }

    /// `[visual ‖ text]`, the teacher's input.
    pub fn teacher_input(&self) -> Result<Vec<f64>> {
        let text = self.text.as_ref().ok_or_else(|| Error::MissingTextView {
            id: self.id.clone(),
        })?;
        let mut joined = Vec::with_capacity(self.visual.len() + text.len());
        joined.extend_from_slice(&self.visual);
        joined.extend_from_slice(text);
        Ok(joined)
    }
}

/// A query with its features and, when known, its judgments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryRecord {
    pub id: String,
    pub features: Vec<f64>,
    pub positives: Vec<String>,
    pub answers: Vec<String>,
}

/// Which document view an encoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    /// Visual-textual: `[visual ‖ text]`.
    Teacher,
    /// Visual-only.
    Student,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Teacher => "teacher",
            ModelKind::Student => "student",
        }
    }

    /// Input vector the document encoder of this kind consumes.
    pub fn doc_input(self, doc: &FeatureRecord) -> Result<Vec<f64>> {
        match self {
            ModelKind::Teacher => doc.teacher_input(),
            ModelKind::Student => Ok(doc.visual.clone()),
        }
    }
}

/// The parameter set of one retrieval model: its own query and document encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub query: EncoderParams,
    pub doc: EncoderParams,
}

impl ModelParams {
    /// Fresh Xavier-initialised model. Query and doc encoders use distinct
    /// seeds derived from `seed`.
    pub fn init(
        kind: ModelKind,
        seed: u64,
        query_dims: &[usize],
        doc_dims: &[usize],
    ) -> Result<Self> {
        let query = EncoderParams::init(seed.wrapping_mul(2).wrapping_add(1), query_dims)?;
        let doc = EncoderParams::init(seed.wrapping_mul(2).wrapping_add(2), doc_dims)?;
        Error::check_dim("query/doc embedding", query.embedding_dim(), doc.embedding_dim())?;
        Ok(Self { kind, query, doc })
    }

    pub fn encode_query(&self, features: &[f64]) -> Result<EmbeddingVector> {
        encode_query(&self.query, features)
    }

    pub fn encode_doc(&self, doc: &FeatureRecord) -> Result<EmbeddingVector> {
        match self.kind {
            ModelKind::Teacher => encode_doc_teacher(&self.doc, doc),
            ModelKind::Student => encode_doc_student(&self.doc, doc),
        }
    }
}

pub fn encode_query(params: &EncoderParams, query_features: &[f64]) -> Result<EmbeddingVector> {
    EmbeddingVector::new(params.forward(query_features)?)
}

/// Visual view only; `doc.text` is never read.
pub fn encode_doc_student(params: &EncoderParams, doc: &FeatureRecord) -> Result<EmbeddingVector> {
    EmbeddingVector::new(params.forward(&doc.visual)?)
}

pub fn encode_doc_teacher(params: &EncoderParams, doc: &FeatureRecord) -> Result<EmbeddingVector> {
    EmbeddingVector::new(params.forward(&doc.teacher_input()?)?)
}

pub fn encoder_backward(
    params: &EncoderParams,
    input: &[f64],
    grad_output: &[f64],
) -> Result<EncoderGrad> {
    params.backward(input, grad_output)
}

pub fn init_params(seed: u64, layer_dims: &[usize]) -> Result<EncoderParams> {
    EncoderParams::init(seed, layer_dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Straight-line re-evaluation of the layer formula, independent of `Layer::apply`.
    fn oracle_forward(params: &EncoderParams, x: &[f64]) -> Vec<f64> {
        let n = params.layers().len();
        let mut h = x.to_vec();
        for (li, l) in params.layers().iter().enumerate() {
            let mut z = vec![0.0; l.out_dim];
            for o in 0..l.out_dim {
                let mut s = 0.0;
                for i in 0..l.in_dim {
                    s += l.weight[o * l.in_dim + i] * h[i];
                }
                z[o] = s + l.bias[o];
                if li + 1 < n {
                    z[o] = std::primitive::f64::tanh(z[o]);
                }
            }
            h = z;
        }
        h
    }

    fn random_input(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_query_encoder() {
        let p = EncoderParams::identity(2);
        assert_eq!(encode_query(&p, &[1.0, 2.0]).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_hidden_layer_gives_zero_output() {
        let p = EncoderParams::new(vec![
            Layer::new(3, 4, vec![0.0; 12], vec![0.0; 4]).unwrap(),
            Layer::new(4, 2, vec![0.7; 8], vec![0.0; 2]).unwrap(),
        ])
        .unwrap();
        assert_eq!(encode_query(&p, &[5.0, -2.0, 9.0]).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_matches_straightline_oracle() {
        for (seed, dims) in [(1u64, vec![4, 6, 4]), (2, vec![8, 5, 3, 8]), (3, vec![8, 8])] {
            let p = EncoderParams::init(seed, &dims).unwrap();
            let x = random_input(seed + 100, dims[0]);
            let got = p.forward(&x).unwrap();
            assert!(close(&got, &oracle_forward(&p, &x), 1e-12), "dims {dims:?}");
        }
    }

    #[test]
    fn query_dimension_mismatch_rejected() {
        let p = EncoderParams::identity(3);
        assert!(matches!(
            encode_query(&p, &[1.0]),
            Err(Error::Dimension { expected: 3, found: 1, .. })
        ));
    }

    #[test]
    fn student_identity_and_text_blindness() {
        let p = EncoderParams::identity(2);
        let doc = FeatureRecord::new("d", vec![0.5, -0.5], None);
        assert_eq!(encode_doc_student(&p, &doc).unwrap().as_slice(), &[0.5, -0.5]);

        let p = EncoderParams::init(5, &[8, 6, 4]).unwrap();
        let bare = FeatureRecord::new("d", random_input(9, 8), None);
        let mut with_text = bare.clone();
        with_text.text = Some(vec![3.0; 5]);
        let a = encode_doc_student(&p, &bare).unwrap();
        assert_eq!(a, encode_doc_student(&p, &with_text).unwrap());
        assert!(close(&a, &oracle_forward(&p, &bare.visual), 1e-12));
    }

    #[test]
    fn teacher_concatenates_views() {
        let p = EncoderParams::identity(2);
        let doc = FeatureRecord::new("d", vec![1.0], Some(vec![2.0]));
        assert_eq!(encode_doc_teacher(&p, &doc).unwrap().as_slice(), &[1.0, 2.0]);

        let p = EncoderParams::init(11, &[8, 7, 4]).unwrap();
        let visual = random_input(12, 4);
        let zero_text = FeatureRecord::new("z", visual.clone(), Some(vec![0.0; 4]));
        let mut padded = visual.clone();
        padded.extend([0.0; 4]);
        assert_eq!(
            encode_doc_teacher(&p, &zero_text).unwrap().as_slice(),
            p.forward(&padded).unwrap().as_slice()
        );

        let doc = FeatureRecord::new("r", visual, Some(random_input(13, 4)));
        let got = encode_doc_teacher(&p, &doc).unwrap();
        assert!(close(&got, &oracle_forward(&p, &doc.teacher_input().unwrap()), 1e-12));
    }

    #[test]
    fn teacher_requires_text_view() {
        let p = EncoderParams::identity(2);
        let doc = FeatureRecord::new("d7", vec![1.0, 2.0], None);
        assert_eq!(
            encode_doc_teacher(&p, &doc),
            Err(Error::MissingTextView { id: "d7".into() })
        );
        let short = FeatureRecord::new("d8", vec![1.0, 2.0], Some(vec![1.0]));
        assert!(matches!(encode_doc_teacher(&p, &short), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = EncoderParams::init(3, &[4, 5, 3]).unwrap();
        let g = encoder_backward(&p, &random_input(4, 4), &[0.0; 3]).unwrap();
        assert!(g.params.slices().all(|s| s.iter().all(|v| *v == 0.0)));
        assert!(g.input.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let p = EncoderParams::init(8, &[3, 2]).unwrap();
        let x = [0.5, -1.0, 2.0];
        let g = [1.5, -0.25];
        let grad = encoder_backward(&p, &x, &g).unwrap();
        let layer = &grad.params.layers()[0];
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(layer.weight[o * 3 + i], g[o] * x[i]);
            }
            assert_eq!(layer.bias[o], g[o]);
        }
    }

    #[test]
    fn backward_shape_mismatch_rejected() {
        let p = EncoderParams::init(8, &[3, 4, 2]).unwrap();
        assert!(matches!(
            encoder_backward(&p, &[1.0, 2.0, 3.0], &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            encoder_backward(&p, &[1.0], &[1.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn init_is_deterministic_bounded_and_zero_bias() {
        let a = init_params(42, &[4, 3]).unwrap();
        assert_eq!(a, init_params(42, &[4, 3]).unwrap());
        assert_ne!(a, init_params(43, &[4, 3]).unwrap());
        let bound = (6.0f64 / 7.0).sqrt();
        let layer = &a.layers()[0];
        assert!(layer.weight.iter().all(|w| w.abs() <= bound));
        assert!(layer.bias.iter().all(|b| *b == 0.0));
        let deep = init_params(1, &[16, 12, 8]).unwrap();
        assert!(deep.layers().iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(init_params(0, &[]), Err(Error::Config(_))));
        assert!(matches!(init_params(0, &[4]), Err(Error::Config(_))));
        assert!(matches!(init_params(0, &[4, 0, 2]), Err(Error::Config(_))));
    }

    #[test]
    fn forward_is_pure() {
        let p = EncoderParams::init(21, &[6, 6, 6]).unwrap();
        let x = random_input(22, 6);
        let first = p.forward(&x).unwrap();
        let _ = p.forward(&random_input(23, 6)).unwrap();
        assert_eq!(first, p.forward(&x).unwrap());
    }
}
