//! Straight-line reference implementations used as test oracles. Nothing
//! here calls into the crate's loss or encoder code.
#![allow(dead_code)]

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

pub fn softmax(v: &[f64], tau: f64) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = v.iter().map(|x| ((x - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn kl(t: &[f64], s: &[f64]) -> f64 {
    t.iter()
        .zip(s)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b.max(1e-12)).ln())
        .sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Mean in-batch InfoNCE, positive of query i is doc i.
pub fn hard(q: &[Vec<f64>], d: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let mut total = 0.0;
    for i in 0..n {
        let row: Vec<f64> = d.iter().map(|dj| cos(&q[i], dj)).collect();
        total += -softmax(&row, 1.0)[i].ln();
    }
    total / n as f64
}

#[derive(Clone, Copy, Debug)]
pub struct Opts {
    pub tau_soft: f64,
    pub tau_weight: f64,
    pub normalized: bool,
    pub include_hard: bool,
    pub use_align: bool,
    pub use_soft: bool,
    pub use_reweight: bool,
}

pub struct Terms {
    pub align: Vec<f64>,
    pub soft: Vec<f64>,
}

pub fn terms(tq: &[Vec<f64>], td: &[Vec<f64>], sq: &[Vec<f64>], sd: &[Vec<f64>], o: &Opts) -> Terms {
    let n = tq.len();
    let mut align = Vec::new();
    let mut soft = Vec::new();
    for i in 0..n {
        let t_row: Vec<f64> = td.iter().map(|d| cos(&tq[i], d)).collect();
        let s_row: Vec<f64> = sd.iter().map(|d| cos(&sq[i], d)).collect();
        soft.push(kl(&softmax(&t_row, o.tau_soft), &softmax(&s_row, o.tau_soft)));
        let a = if o.normalized {
            sq_dist(&unit(&td[i]), &unit(&sd[i])) + sq_dist(&unit(&tq[i]), &unit(&sq[i]))
        } else {
            sq_dist(&td[i], &sd[i]) + sq_dist(&tq[i], &sq[i])
        };
        align.push(a);
    }
    Terms { align, soft }
}

pub fn weights(terms: &Terms, o: &Opts) -> Vec<f64> {
    let n = terms.soft.len();
    if o.use_reweight {
        softmax(&terms.soft, o.tau_weight)
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// The distillation objective with the weights held at `w`.
pub fn objective(tq: &[Vec<f64>], td: &[Vec<f64>], sq: &[Vec<f64>], sd: &[Vec<f64>], w: &[f64], o: &Opts) -> f64 {
    let t = terms(tq, td, sq, sd, o);
    let mut total = 0.0;
    for i in 0..w.len() {
        let mut term = 0.0;
        if o.use_align {
            term += t.align[i];
        }
        if o.use_soft {
            term += t.soft[i];
        }
        total += w[i] * term;
    }
    if o.include_hard {
        total += hard(sq, sd);
    }
    total
}

/// Central difference of `f` at every coordinate of `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Dense MLP forward: `layers` = (weight row-major out×in, bias); tanh on hidden layers.
pub fn mlp(layers: &[(Vec<f64>, Vec<f64>)], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (li, (w, b)) in layers.iter().enumerate() {
        let out = b.len();
        let inp = h.len();
        let mut z = vec![0.0; out];
        for o in 0..out {
            z[o] = b[o] + (0..inp).map(|i| w[o * inp + i] * h[i]).sum::<f64>();
            if li + 1 < layers.len() {
                z[o] = z[o].tanh();
            }
        }
        h = z;
    }
    h
}
