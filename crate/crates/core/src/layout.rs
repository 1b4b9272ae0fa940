//! Layout-preserving assembly of OCR output.
//!
//! Recognised boxes are filtered by confidence, grouped into lines by
//! vertical overlap, and written out with spaces and blank lines sized from
//! the horizontal and vertical gaps between them.
//!
//! Rules:
//! * a box is kept iff `confidence > threshold` (default 0.6)
//! * two boxes are on the same line iff their vertical overlap is at least
//!   half the smaller box height; lines are the connected components of
//!   that relation
//! * lines go top to bottom by mean top edge, boxes left to right by `x0`
//!   (ties: `y0`, then text, then input order)
//! * `char_width` = median of `width / max(1, chars)`, `line_height` =
//!   median box height, both over all kept boxes
//! * between boxes of a line: `max(1, round(gap_x / char_width))` spaces
//! * between lines: `1 + min(3, floor(gap_y / line_height))` newlines
//! * the text ends with exactly one newline
//!
//! Multi-column pages are not detected; columns sharing a baseline
//! interleave on the same line.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.6;

/// One recognised text region, axis-aligned, `y` growing downward.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub text: String,
    pub confidence: f64,
}

impl OcrBox {
    pub fn new(bbox: [f64; 4], text: impl Into<String>, confidence: f64) -> Result<Self> {
        let [x0, y0, x1, y1] = bbox;
        if !bbox.iter().all(|v| v.is_finite()) || !(x0 < x1) || !(y0 < y1) {
            return Err(Error::Data(alloc::format!("box {bbox:?} must have positive width and height")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Data(alloc::format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            x0,
            y0,
            x1,
            y1,
            text: text.into(),
            confidence,
        })
    }

    /// Axis-aligned bounding rectangle of a (possibly rotated) quadrilateral.
    pub fn from_quad(points: &[[f64; 2]], text: impl Into<String>, confidence: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("quadrilateral has no points".into()));
        }
        let fold = |f: fn(f64, f64) -> f64, axis: usize, init: f64| points.iter().map(|p| p[axis]).fold(init, f);
        let bbox = [
            fold(f64::min, 0, f64::INFINITY),
            fold(f64::min, 1, f64::INFINITY),
            fold(f64::max, 0, f64::NEG_INFINITY),
            fold(f64::max, 1, f64::NEG_INFINITY),
        ];
        Self::new(bbox, text, confidence)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    fn vertical_overlap(&self, other: &OcrBox) -> f64 {
        self.y1.min(other.y1) - self.y0.max(other.y0)
    }

    /// At least half the smaller height overlaps vertically.
    pub fn shares_line_with(&self, other: &OcrBox) -> bool {
        self.vertical_overlap(other) >= 0.5 * self.height().min(other.height())
    }
}

/// One page of OCR output.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrPage {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub boxes: Vec<OcrBox>,
}

impl OcrPage {
    /// Boxes may stick out of the page by at most this many pixels.
    pub const BOUNDS_TOLERANCE: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !(self.height > 0.0) {
            return Err(Error::Data(alloc::format!("page {} needs positive size", self.page_id)));
        }
        let tol = Self::BOUNDS_TOLERANCE;
        for b in &self.boxes {
            if b.x0 < -tol || b.y0 < -tol || b.x1 > self.width + tol || b.y1 > self.height + tol {
                return Err(Error::Data(alloc::format!(
                    "box {:?} lies outside page {} ({} x {})",
                    b.text,
                    self.page_id,
                    self.width,
                    self.height
                )));
            }
        }
        Ok(())
    }

    /// Filter, order and assemble the page's text.
    pub fn assemble(&self, threshold: f64) -> String {
        assemble_layout(&order_boxes(filter_confidence(&self.boxes, threshold)))
    }
}

/// Boxes with confidence strictly above `threshold`, in input order.
pub fn filter_confidence(boxes: &[OcrBox], threshold: f64) -> Vec<OcrBox> {
    boxes.iter().filter(|b| b.confidence > threshold).cloned().collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn box_order(a: &(usize, OcrBox), b: &(usize, OcrBox)) -> Ordering {
    a.1.x0
        .total_cmp(&b.1.x0)
        .then(a.1.y0.total_cmp(&b.1.y0))
        .then_with(|| a.1.text.cmp(&b.1.text))
        .then(a.0.cmp(&b.0))
}

/// Groups boxes into lines (top to bottom), each sorted left to right.
pub fn order_boxes(boxes: Vec<OcrBox>) -> Vec<Vec<OcrBox>> {
    let n = boxes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if boxes[i].shares_line_with(&boxes[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<(usize, OcrBox)>> = Vec::new();
    let mut slot: Vec<Option<usize>> = alloc::vec![None; n];
    for (i, b) in boxes.into_iter().enumerate() {
        let root = find(&mut parent, i);
        let g = *slot[root].get_or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push((i, b));
    }
    for g in &mut groups {
        g.sort_by(box_order);
    }
    let mean_top = |g: &Vec<(usize, OcrBox)>| g.iter().map(|(_, b)| b.y0).sum::<f64>() / g.len() as f64;
    groups.sort_by(|a, b| mean_top(a).total_cmp(&mean_top(b)).then_with(|| box_order(&a[0], &b[0])));
    groups
        .into_iter()
        .map(|g| g.into_iter().map(|(_, b)| b).collect())
        .collect()
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Estimated `(char_width, line_height)` over all boxes.
pub fn layout_metrics(lines: &[Vec<OcrBox>]) -> Option<(f64, f64)> {
    let boxes: Vec<&OcrBox> = lines.iter().flatten().collect();
    if boxes.is_empty() {
        return None;
    }
    let char_width = median(
        boxes
            .iter()
            .map(|b| b.width() / b.text.chars().count().max(1) as f64)
            .collect(),
    );
    let line_height = median(boxes.iter().map(|b| b.height()).collect());
    Some((char_width, line_height))
}

pub fn spaces_for_gap(gap_x: f64, char_width: f64) -> usize {
    let n = libm::round(gap_x / char_width);
    if n >= 1.0 {
        n as usize
    } else {
        1
    }
}

pub fn newlines_for_gap(gap_y: f64, line_height: f64) -> usize {
    let blank = libm::floor(gap_y / line_height).clamp(0.0, 3.0);
    1 + blank as usize
}

/// Writes ordered lines as text whose spacing mirrors the page geometry.
pub fn assemble_layout(lines: &[Vec<OcrBox>]) -> String {
    let Some((char_width, line_height)) = layout_metrics(lines) else {
        return String::new();
    };
    let mut out = String::new();
    let mut prev_bottom: Option<f64> = None;
    for line in lines.iter().filter(|l| !l.is_empty()) {
        let top = line.iter().map(|b| b.y0).fold(f64::INFINITY, f64::min);
        let bottom = line.iter().map(|b| b.y1).fold(f64::NEG_INFINITY, f64::max);
        if let Some(prev) = prev_bottom {
            out.extend(core::iter::repeat_n('\n', newlines_for_gap(top - prev, line_height)));
        }
        for (i, b) in line.iter().enumerate() {
            if i > 0 {
                let gap = b.x0 - line[i - 1].x1;
                out.extend(core::iter::repeat_n(' ', spaces_for_gap(gap, char_width)));
            }
            out.push_str(&b.text);
        }
        prev_bottom = Some(bottom);
    }
    out.push('\n');
    out
}
