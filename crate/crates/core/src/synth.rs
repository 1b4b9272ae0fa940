//! Seeded synthetic corpora, queries and OCR pages.
//!
//! Generative model: topic centres `c_t ~ N(0, I)` in a latent space; doc
//! `i` belongs to topic `i mod num_topics` and owns the latent
//! `z_i = c_t + doc_spread·ξ`. Its views are fixed linear projections plus
//! Gaussian noise:
//!
//! ```text
//! visual = P_v z + visual_noise·η      text = P_t z + text_noise·η'
//! ```
//!
//! A query picks a document, perturbs its latent by `query_noise` and is
//! observed through a third projection `P_q` (width `text_dim`). Projection
//! entries are `N(0, 1/latent_dim)`.
//!
//! Every random component draws from its own ChaCha stream, and
//! per-record noise is keyed by the record index, so each record is a pure
//! function of `(config, index)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::{FeatureRecord, QueryRecord};
use crate::error::{Error, Result};
use crate::layout::{OcrBox, OcrPage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Text view less noisy than the visual view.
    TextRich,
    /// Visual view less noisy than the text view.
    VisualRich,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::TextRich => "text_rich",
            Regime::VisualRich => "visual_rich",
        }
    }

    /// `(visual_noise, text_noise)` of the preset.
    pub fn noise(self) -> (f64, f64) {
        match self {
            Regime::TextRich => (0.6, 0.1),
            Regime::VisualRich => (0.1, 0.6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub num_topics: usize,
    pub corpus_size: usize,
    pub num_queries: usize,
    pub visual_dim: usize,
    pub text_dim: usize,
    pub latent_dim: usize,
    /// Std-dev of a document's latent around its topic centre.
    pub doc_spread: f64,
    pub visual_noise: f64,
    pub text_noise: f64,
    pub query_noise: f64,
    pub regime: Regime,
    pub seed: u64,
}

impl SynthConfig {
    /// 50 topics, 2,000 docs, 500 queries, 32-dim views, query noise 0.2,
    /// view noise from the regime.
    pub fn preset(regime: Regime, seed: u64) -> Self {
        let (visual_noise, text_noise) = regime.noise();
        Self {
            num_topics: 50,
            corpus_size: 2000,
            num_queries: 500,
            visual_dim: 32,
            text_dim: 32,
            latent_dim: 8,
            doc_spread: 0.6,
            visual_noise,
            text_noise,
            query_noise: 0.2,
            regime,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.num_topics, "num_topics"),
            (self.corpus_size, "corpus_size"),
            (self.num_queries, "num_queries"),
            (self.visual_dim, "visual_dim"),
            (self.text_dim, "text_dim"),
            (self.latent_dim, "latent_dim"),
        ];
        if let Some((_, name)) = positive.iter().find(|(v, _)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.corpus_size < self.num_topics {
            return Err(Error::config("corpus_size must be >= num_topics"));
        }
        if self.num_queries > self.corpus_size {
            return Err(Error::config("num_queries must be <= corpus_size (one gold doc each, no repeats)"));
        }
        for (v, name) in [
            (self.doc_spread, "doc_spread"),
            (self.visual_noise, "visual_noise"),
            (self.text_noise, "text_noise"),
            (self.query_noise, "query_noise"),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

// stream ids
const STREAM_TOPICS: u64 = 1;
const STREAM_PROJECTIONS: u64 = 2;
const STREAM_QUERY_SAMPLE: u64 = 3;
const STREAM_RECORD_BASE: u64 = 1 << 32;
const STREAM_QUERY_BASE: u64 = 1 << 40;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Projection {
    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Self {
        let scale = 1.0 / libm::sqrt(cols as f64);
        let values = (0..rows * cols).map(|_| scale * gaussian(rng)).collect();
        Self { rows, cols, values }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.values
            .chunks_exact(self.cols)
            .map(|row| crate::vector::dot(row, x))
            .collect()
    }
}

/// A generated corpus together with its generative state.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub docs: Vec<FeatureRecord>,
    /// Searchable text per document (for answer-containment judging).
    pub doc_texts: Vec<String>,
    pub topics: Vec<usize>,
    pub latents: Vec<Vec<f64>>,
    pub visual_projection: Projection,
    pub text_projection: Projection,
    pub query_projection: Projection,
}

pub fn doc_id(i: usize) -> String {
    format!("doc{i:05}")
}

fn item_label(i: usize) -> String {
    format!("item {}", doc_id(i))
}

pub fn gen_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let c = config;
    let mut topic_rng = rng(c.seed, STREAM_TOPICS);
    let centres: Vec<Vec<f64>> = (0..c.num_topics)
        .map(|_| (0..c.latent_dim).map(|_| gaussian(&mut topic_rng)).collect())
        .collect();
    let mut proj_rng = rng(c.seed, STREAM_PROJECTIONS);
    let visual_projection = Projection::random(&mut proj_rng, c.visual_dim, c.latent_dim);
    let text_projection = Projection::random(&mut proj_rng, c.text_dim, c.latent_dim);
    let query_projection = Projection::random(&mut proj_rng, c.text_dim, c.latent_dim);

    let mut docs = Vec::with_capacity(c.corpus_size);
    let mut doc_texts = Vec::with_capacity(c.corpus_size);
    let mut topics = Vec::with_capacity(c.corpus_size);
    let mut latents = Vec::with_capacity(c.corpus_size);
    for i in 0..c.corpus_size {
        let topic = i % c.num_topics;
        let mut r = rng(c.seed, STREAM_RECORD_BASE + i as u64);
        let latent: Vec<f64> = centres[topic]
            .iter()
            .map(|m| m + c.doc_spread * gaussian(&mut r))
            .collect();
        let mut visual = visual_projection.apply(&latent);
        visual.iter_mut().for_each(|v| *v += c.visual_noise * gaussian(&mut r));
        let mut text = text_projection.apply(&latent);
        text.iter_mut().for_each(|v| *v += c.text_noise * gaussian(&mut r));
        docs.push(FeatureRecord::new(doc_id(i), visual, Some(text)));
        doc_texts.push(format!("topic {topic:03} {}", item_label(i)));
        topics.push(topic);
        latents.push(latent);
    }
    Ok(SynthCorpus {
        config: *config,
        docs,
        doc_texts,
        topics,
        latents,
        visual_projection,
        text_projection,
        query_projection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthQueries {
    pub train: Vec<QueryRecord>,
    pub test: Vec<QueryRecord>,
}

/// Number of training queries in an 80/20 split.
pub fn train_split_size(num_queries: usize) -> usize {
    num_queries * 4 / 5
}

/// One query per sampled document (no repeats), split 80/20.
pub fn gen_queries(config: &SynthConfig, corpus: &SynthCorpus) -> Result<SynthQueries> {
    config.validate()?;
    Error::check_dim("corpus size", config.corpus_size, corpus.docs.len())?;
    let mut order: Vec<usize> = (0..corpus.docs.len()).collect();
    let mut sample_rng = rng(config.seed, STREAM_QUERY_SAMPLE);
    let (picked, _) = order.partial_shuffle(&mut sample_rng, config.num_queries);
    let picked = picked.to_vec();

    let mut queries: Vec<QueryRecord> = picked
        .iter()
        .enumerate()
        .map(|(qi, &di)| {
            let mut r = rng(config.seed, STREAM_QUERY_BASE + qi as u64);
            let latent: Vec<f64> = corpus.latents[di]
                .iter()
                .map(|z| z + config.query_noise * gaussian(&mut r))
                .collect();
            QueryRecord {
                id: format!("q{qi:05}"),
                features: corpus.query_projection.apply(&latent),
                positives: alloc::vec![doc_id(di)],
                answers: alloc::vec![item_label(di)],
            }
        })
        .collect();
    let test = queries.split_off(train_split_size(config.num_queries));
    Ok(SynthQueries {
        train: queries,
        test,
    })
}

/// An OCR page with the text it must assemble to.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrFixture {
    pub page: OcrPage,
    pub expected: String,
}

const FIXTURE_CHAR_WIDTH: f64 = 8.0;
const FIXTURE_LINE_HEIGHT: f64 = 16.0;
const FIXTURE_MARGIN: f64 = 24.0;

fn fixture_word(r: &mut ChaCha8Rng) -> String {
    let len = r.random_range(1..=8);
    (0..len)
        .map(|_| {
            let c = r.random_range(0..36u8);
            if c < 26 {
                (b'a' + c) as char
            } else {
                (b'0' + c - 26) as char
            }
        })
        .collect()
}

/// Pages of word boxes on a fixed character grid with known gaps.
///
/// Every kept box is exactly `8 px × chars` wide and `16 px` tall, so the
/// estimated character width and line height are exact. Horizontal gaps are
/// whole multiples of the character width; vertical gaps between lines are
/// `(g + 0.5)` line heights with at most ±3 px of per-box vertical jitter, so
/// the expected spacing can be written down while the page is built.
/// Distractor boxes with confidence at or below 0.6 (including exactly 0.6)
/// are scattered over the page and must not appear in the output. Box order
/// within the page is shuffled.
pub fn gen_ocr_fixtures(seed: u64, num_pages: usize) -> Result<Vec<OcrFixture>> {
    if num_pages == 0 {
        return Err(Error::config("num_pages must be >= 1"));
    }
    let (cw, lh) = (FIXTURE_CHAR_WIDTH, FIXTURE_LINE_HEIGHT);
    let mut pages = Vec::with_capacity(num_pages);
    for p in 0..num_pages {
        let mut r = rng(seed, STREAM_RECORD_BASE + p as u64);
        let mut boxes = Vec::new();
        let mut expected = String::new();
        let mut base_y = FIXTURE_MARGIN;
        let mut max_x: f64 = 0.0;
        let num_lines = r.random_range(1..=6);
        for line in 0..num_lines {
            if line > 0 {
                let blank = r.random_range(0..=4usize);
                base_y += lh + (blank as f64 + 0.5) * lh;
                for _ in 0..1 + blank.min(3) {
                    expected.push('\n');
                }
            }
            let mut x = FIXTURE_MARGIN + r.random_range(0..6) as f64 * cw;
            let words = r.random_range(1..=5);
            for w in 0..words {
                if w > 0 {
                    let spaces = r.random_range(1..=4usize);
                    x += spaces as f64 * cw;
                    for _ in 0..spaces {
                        expected.push(' ');
                    }
                }
                let text = fixture_word(&mut r);
                let width = text.len() as f64 * cw;
                let jitter = r.random_range(-3..=3) as f64;
                let confidence = [0.61, 0.75, 0.99][r.random_range(0..3)];
                boxes.push(OcrBox::new([x, base_y + jitter, x + width, base_y + jitter + lh], text.clone(), confidence)?);
                expected.push_str(&text);
                x += width;
                max_x = max_x.max(x);
            }
        }
        expected.push('\n');
        let width = max_x + FIXTURE_MARGIN;
        let height = base_y + lh + FIXTURE_MARGIN;
        for (i, confidence) in [0.6, 0.3, 0.55].into_iter().enumerate().take(r.random_range(1..=3)) {
            let x0 = r.random_range(0.0..width - 4.0 * cw);
            let y0 = r.random_range(0.0..height - lh);
            boxes.push(OcrBox::new([x0, y0, x0 + 3.0 * cw, y0 + lh], format!("LOW{i}"), confidence)?);
        }
        boxes.shuffle(&mut r);
        pages.push(OcrFixture {
            page: OcrPage {
                page_id: format!("synthetic-{p:03}"),
                width,
                height,
                boxes,
            },
            expected,
        });
    }
    Ok(pages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::DEFAULT_CONFIDENCE_THRESHOLD;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            num_topics: 5,
            corpus_size: 40,
            num_queries: 12,
            visual_dim: 6,
            text_dim: 4,
            latent_dim: 3,
            ..SynthConfig::preset(Regime::TextRich, seed)
        }
    }

    #[test]
    fn presets_follow_regime() {
        let t = SynthConfig::preset(Regime::TextRich, 0);
        assert!(t.text_noise < t.visual_noise);
        let v = SynthConfig::preset(Regime::VisualRich, 0);
        assert!(v.visual_noise < v.text_noise);
        assert_eq!((t.num_topics, t.corpus_size, t.num_queries, t.visual_dim, t.text_dim), (50, 2000, 500, 32, 32));
        assert_eq!((t.visual_noise, t.text_noise, t.query_noise), (0.6, 0.1, 0.2));
    }

    #[test]
    fn corpus_is_deterministic() {
        assert_eq!(gen_corpus(&small(3)).unwrap(), gen_corpus(&small(3)).unwrap());
        assert_ne!(gen_corpus(&small(3)).unwrap().docs, gen_corpus(&small(4)).unwrap().docs);
    }

    #[test]
    fn shapes_match_config() {
        let c = small(1);
        let corpus = gen_corpus(&c).unwrap();
        assert_eq!(corpus.docs.len(), 40);
        for d in &corpus.docs {
            assert_eq!(d.visual.len(), 6);
            assert_eq!(d.text.as_ref().unwrap().len(), 4);
        }
    }

    #[test]
    fn zero_noise_views_are_exact_projections() {
        let c = SynthConfig {
            visual_noise: 0.0,
            text_noise: 0.0,
            ..small(8)
        };
        let corpus = gen_corpus(&c).unwrap();
        for (d, z) in corpus.docs.iter().zip(&corpus.latents) {
            for (row, v) in corpus.visual_projection.values.chunks(c.latent_dim).zip(&d.visual) {
                let expected: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
                assert_eq!(*v, expected);
            }
            let text = d.text.as_ref().unwrap();
            for (row, v) in corpus.text_projection.values.chunks(c.latent_dim).zip(text) {
                let expected: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
                assert_eq!(*v, expected);
            }
        }
    }

    #[test]
    fn queries_reference_corpus_and_split() {
        let c = small(2);
        let corpus = gen_corpus(&c).unwrap();
        let q = gen_queries(&c, &corpus).unwrap();
        assert_eq!((q.train.len(), q.test.len()), (9, 3));
        let ids: alloc::collections::BTreeSet<&str> = corpus.docs.iter().map(|d| d.id.as_str()).collect();
        for query in q.train.iter().chain(&q.test) {
            assert_eq!(query.positives.len(), 1);
            assert!(ids.contains(query.positives[0].as_str()));
            assert_eq!(query.features.len(), c.text_dim);
        }
        assert_eq!(q, gen_queries(&c, &corpus).unwrap());
        assert_eq!(train_split_size(500), 400);
        assert_eq!(train_split_size(7), 5);
    }

    #[test]
    fn zero_noise_query_lands_on_its_document_latent() {
        let c = SynthConfig { query_noise: 0.0, ..small(5) };
        let corpus = gen_corpus(&c).unwrap();
        let q = gen_queries(&c, &corpus).unwrap();
        for query in q.train.iter().chain(&q.test) {
            let gold: usize = query.positives[0][3..].parse().unwrap();
            // an oracle encoder: the latent whose projection reproduces the query exactly
            let nearest = (0..corpus.latents.len())
                .min_by(|&a, &b| {
                    let da = dist(&corpus.query_projection.apply(&corpus.latents[a]), &query.features);
                    let db = dist(&corpus.query_projection.apply(&corpus.latents[b]), &query.features);
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest, gold);
            assert_eq!(corpus.query_projection.apply(&corpus.latents[gold]), query.features);
        }
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(gen_corpus(&SynthConfig { corpus_size: 3, ..small(0) }).is_err());
        assert!(gen_corpus(&SynthConfig { visual_noise: -1.0, ..small(0) }).is_err());
        assert!(gen_corpus(&SynthConfig { latent_dim: 0, ..small(0) }).is_err());
    }

    #[test]
    fn ocr_fixtures_assemble_to_expected_text() {
        let fixtures = gen_ocr_fixtures(17, 25).unwrap();
        assert_eq!(fixtures, gen_ocr_fixtures(17, 25).unwrap());
        for f in &fixtures {
            f.page.validate().unwrap();
            assert!(f.page.boxes.iter().any(|b| b.confidence <= 0.6));
            assert_eq!(f.page.assemble(DEFAULT_CONFIDENCE_THRESHOLD), f.expected, "{}", f.page.page_id);
        }
        assert!(gen_ocr_fixtures(1, 0).is_err());
    }
}
