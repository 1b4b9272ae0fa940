//! Versioned JSON checkpoints. Floats are written with 17 significant digits
//! so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use unveil_core::{EncoderParams, Layer, ModelKind, ModelParams};

use crate::error::{Error, Result};
use crate::io::{read_text, write_text};

pub const FORMAT_VERSION: u32 = 1;

fn push_float(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("string write");
}

fn push_floats(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_float(out, *v);
    }
    out.push(']');
}

/// `{"format_version", "layer_dims", "activation", "layers": [{"weight", "bias"}]}`.
pub fn encoder_to_json(params: &EncoderParams) -> String {
    let mut out = String::new();
    let dims: Vec<String> = params.layer_dims().iter().map(ToString::to_string).collect();
    write!(
        out,
        "{{\"format_version\":{FORMAT_VERSION},\"layer_dims\":[{}],\"activation\":\"tanh\",\"layers\":[",
        dims.join(",")
    )
    .expect("string write");
    for (li, layer) in params.layers().iter().enumerate() {
        if li > 0 {
            out.push(',');
        }
        out.push_str("\n  {\"weight\":[");
        for o in 0..layer.out_dim {
            if o > 0 {
                out.push(',');
            }
            push_floats(&mut out, layer.row(o));
        }
        out.push_str("],\"bias\":");
        push_floats(&mut out, &layer.bias);
        out.push('}');
    }
    out.push_str("]}");
    out
}

/// A model checkpoint: both encoders plus the seed that produced them.
pub fn model_to_json(model: &ModelParams, seed: u64) -> String {
    format!(
        "{{\"format_version\":{FORMAT_VERSION},\"kind\":\"{}\",\"seed\":{seed},\n\"query\":{},\n\"doc\":{}}}\n",
        model.kind.as_str(),
        encoder_to_json(&model.query),
        encoder_to_json(&model.doc)
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EncoderDoc {
    format_version: u32,
    layer_dims: Vec<usize>,
    activation: String,
    layers: Vec<LayerDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    kind: String,
    seed: u64,
    query: EncoderDoc,
    doc: EncoderDoc,
}

fn check_version(v: u32) -> std::result::Result<(), String> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(format!("unsupported format_version {v} (expected {FORMAT_VERSION})"))
    }
}

fn encoder_from_doc(doc: EncoderDoc) -> std::result::Result<EncoderParams, String> {
    check_version(doc.format_version)?;
    if doc.activation != "tanh" {
        return Err(format!("unsupported activation {:?}", doc.activation));
    }
    if doc.layer_dims.len() != doc.layers.len() + 1 {
        return Err(format!("{} layer_dims for {} layers", doc.layer_dims.len(), doc.layers.len()));
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (li, l) in doc.layers.into_iter().enumerate() {
        let (in_dim, out_dim) = (doc.layer_dims[li], doc.layer_dims[li + 1]);
        if l.weight.len() != out_dim || l.weight.iter().any(|r| r.len() != in_dim) {
            return Err(format!("layer {li} weight is not {out_dim}x{in_dim}"));
        }
        let weight = l.weight.into_iter().flatten().collect();
        layers.push(Layer::new(in_dim, out_dim, weight, l.bias).map_err(|e| format!("layer {li}: {e}"))?);
    }
    EncoderParams::new(layers).map_err(|e| e.to_string())
}

pub fn encoder_from_json(text: &str) -> std::result::Result<EncoderParams, String> {
    encoder_from_doc(serde_json::from_str(text).map_err(|e| e.to_string())?)
}

/// Parsed model and the seed recorded with it.
pub fn model_from_json(text: &str) -> std::result::Result<(ModelParams, u64), String> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
    check_version(doc.format_version)?;
    let kind = match doc.kind.as_str() {
        "teacher" => ModelKind::Teacher,
        "student" => ModelKind::Student,
        other => return Err(format!("unknown model kind {other:?}")),
    };
    let query = encoder_from_doc(doc.query)?;
    let doc_enc = encoder_from_doc(doc.doc)?;
    if query.embedding_dim() != doc_enc.embedding_dim() {
        return Err("query and doc encoders disagree on embedding_dim".into());
    }
    Ok((
        ModelParams {
            kind,
            query,
            doc: doc_enc,
        },
        doc.seed,
    ))
}

pub fn save_model(path: &Path, model: &ModelParams, seed: u64) -> Result<()> {
    write_text(path, &model_to_json(model, seed))
}

pub fn load_model(path: &Path) -> Result<(ModelParams, u64)> {
    model_from_json(&read_text(path)?).map_err(|m| Error::format(path, 1, m))
}
