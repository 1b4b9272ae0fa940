//! Analytic gradients against central finite differences (h = 1e-6, f64).

#[path = "support/oracle.rs"]
mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unveil_core::encoder::{encoder_backward, EncoderParams, Layer};
use unveil_core::loss::{self, DistillBatch, DistillOptions};
use unveil_core::EmbeddingVector;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;
/// Gradient entries smaller than this are compared in absolute terms.
const FLOOR: f64 = 1e-3;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn to_layers(p: &EncoderParams) -> Vec<(Vec<f64>, Vec<f64>)> {
    p.layers().iter().map(|l| (l.weight.clone(), l.bias.clone())).collect()
}

fn with_biases(p: EncoderParams, rng: &mut ChaCha8Rng) -> EncoderParams {
    let layers = p
        .layers()
        .iter()
        .map(|l| Layer::new(l.in_dim, l.out_dim, l.weight.clone(), rand_vec(rng, l.out_dim)).unwrap())
        .collect();
    EncoderParams::new(layers).unwrap()
}

#[test]
fn encoder_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..40 {
        let dims: Vec<usize> = (0..3).map(|_| rng.random_range(1..=16)).collect();
        let params = with_biases(EncoderParams::init(case, &dims).unwrap(), &mut rng);
        let x = rand_vec(&mut rng, dims[0]);
        let g = rand_vec(&mut rng, dims[2]);
        let analytic = encoder_backward(&params, &x, &g).unwrap();
        let layers = to_layers(&params);
        let scalar = |layers: &[(Vec<f64>, Vec<f64>)], x: &[f64]| oracle::dot(&g, &oracle::mlp(layers, x));

        let numeric_input = oracle::central_diff(&x, H, |xp| scalar(&layers, xp));
        for (a, n) in analytic.input.iter().zip(&numeric_input) {
            worst = worst.max(oracle::rel_err(*a, *n, FLOOR));
        }
        for (li, grad_layer) in analytic.params.layers().iter().enumerate() {
            let numeric_w = oracle::central_diff(&layers[li].0, H, |w| {
                let mut l = layers.clone();
                l[li].0 = w.to_vec();
                scalar(&l, &x)
            });
            let numeric_b = oracle::central_diff(&layers[li].1, H, |b| {
                let mut l = layers.clone();
                l[li].1 = b.to_vec();
                scalar(&l, &x)
            });
            for (a, n) in grad_layer.weight.iter().zip(&numeric_w).chain(grad_layer.bias.iter().zip(&numeric_b)) {
                worst = worst.max(oracle::rel_err(*a, *n, FLOOR));
            }
        }
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}

struct Instance {
    tq: Vec<Vec<f64>>,
    td: Vec<Vec<f64>>,
    sq: Vec<Vec<f64>>,
    sd: Vec<Vec<f64>>,
}

fn instance(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Instance {
    let gen = |rng: &mut ChaCha8Rng| (0..n).map(|_| rand_vec(rng, dim)).collect::<Vec<_>>();
    Instance {
        tq: gen(rng),
        td: gen(rng),
        sq: gen(rng),
        sd: gen(rng),
    }
}

fn ev(v: &[Vec<f64>]) -> Vec<EmbeddingVector> {
    v.iter().map(|x| EmbeddingVector::new(x.clone()).unwrap()).collect()
}

fn as_oracle(o: &DistillOptions) -> oracle::Opts {
    oracle::Opts {
        tau_soft: o.tau_soft,
        tau_weight: o.tau_weight,
        normalized: o.align_normalized,
        include_hard: o.include_hard,
        use_align: o.use_align,
        use_soft: o.use_soft,
        use_reweight: o.use_reweight,
    }
}

/// Worst relative error of the distillation gradient on one instance.
fn distill_grad_error(inst: &Instance, opts: &DistillOptions) -> f64 {
    let (tq, td, sq, sd) = (ev(&inst.tq), ev(&inst.td), ev(&inst.sq), ev(&inst.sd));
    let batch = DistillBatch {
        teacher_queries: &tq,
        teacher_docs: &td,
        student_queries: &sq,
        student_docs: &sd,
    };
    let (breakdown, grads) = loss::grad_total_distill_loss(&batch, opts).unwrap();
    let o = as_oracle(opts);
    let w = oracle::weights(&oracle::terms(&inst.tq, &inst.td, &inst.sq, &inst.sd, &o), &o);
    let mut worst: f64 = 0.0;
    for i in 0..inst.sq.len() {
        let numeric_q = oracle::central_diff(&inst.sq[i], H, |x| {
            let mut sq = inst.sq.clone();
            sq[i] = x.to_vec();
            oracle::objective(&inst.tq, &inst.td, &sq, &inst.sd, &w, &o)
        });
        let numeric_d = oracle::central_diff(&inst.sd[i], H, |x| {
            let mut sd = inst.sd.clone();
            sd[i] = x.to_vec();
            oracle::objective(&inst.tq, &inst.td, &inst.sq, &sd, &w, &o)
        });
        for (a, n) in grads.queries[i].iter().zip(&numeric_q).chain(grads.docs[i].iter().zip(&numeric_d)) {
            worst = worst.max(oracle::rel_err(*a, *n, FLOOR));
        }
    }
    let reference = oracle::objective(&inst.tq, &inst.td, &inst.sq, &inst.sd, &w, &o);
    assert!((breakdown.objective - reference).abs() < 1e-12, "{} vs {reference}", breakdown.objective);
    worst
}

#[test]
fn distillation_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let variants = [
        DistillOptions::default(),
        DistillOptions { tau_soft: 0.5, tau_weight: 2.0, ..Default::default() },
        DistillOptions { align_normalized: true, ..Default::default() },
        DistillOptions { include_hard: true, ..Default::default() },
        DistillOptions { use_reweight: false, ..Default::default() },
        DistillOptions { use_reweight: false, use_align: false, ..Default::default() },
        DistillOptions { use_reweight: false, use_soft: false, ..Default::default() },
    ];
    for opts in &variants {
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let n = rng.random_range(1..=8);
            let dim = rng.random_range(1..=16);
            worst = worst.max(distill_grad_error(&instance(&mut rng, n, dim), opts));
        }
        assert!(worst < TOL, "{opts:?}: worst relative error {worst:e}");
    }
}

#[test]
fn three_pair_six_dim_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let err = distill_grad_error(&instance(&mut rng, 3, 6), &DistillOptions::default());
    assert!(err < TOL, "{err:e}");
}

#[test]
fn total_matches_straightline_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let inst = instance(&mut rng, 4, 8);
    let (tq, td, sq, sd) = (ev(&inst.tq), ev(&inst.td), ev(&inst.sq), ev(&inst.sd));
    let batch = DistillBatch {
        teacher_queries: &tq,
        teacher_docs: &td,
        student_queries: &sq,
        student_docs: &sd,
    };
    let opts = DistillOptions::default();
    let got = loss::total_distill_loss(&batch, &opts).unwrap();
    let o = as_oracle(&opts);
    let terms = oracle::terms(&inst.tq, &inst.td, &inst.sq, &inst.sd, &o);
    let w = oracle::weights(&terms, &o);
    let expected = oracle::objective(&inst.tq, &inst.td, &inst.sq, &inst.sd, &w, &o);
    assert!((got.total - expected).abs() < 1e-12);
    for i in 0..4 {
        assert!((got.weights[i] - w[i]).abs() < 1e-12);
        assert!((got.align_terms[i] - terms.align[i]).abs() < 1e-12);
        assert!((got.soft_terms[i] - terms.soft[i]).abs() < 1e-12);
    }
    let recomposed: f64 = (0..4).map(|i| got.weights[i] * (got.align_terms[i] + got.soft_terms[i])).sum();
    assert!((got.total - recomposed).abs() < 1e-9);
    assert!((got.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn in_batch_infonce_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let n = rng.random_range(1..=8);
        let dim = rng.random_range(1..=16);
        let q: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut rng, dim)).collect();
        let d: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut rng, dim)).collect();
        let (l, grads) = loss::in_batch_infonce_with_grad(&ev(&q), &ev(&d)).unwrap();
        assert!((l - oracle::hard(&q, &d)).abs() < 1e-12);
        for i in 0..n {
            let nq = oracle::central_diff(&q[i], H, |x| {
                let mut qq = q.clone();
                qq[i] = x.to_vec();
                oracle::hard(&qq, &d)
            });
            let nd = oracle::central_diff(&d[i], H, |x| {
                let mut dd = d.clone();
                dd[i] = x.to_vec();
                oracle::hard(&q, &dd)
            });
            for (a, num) in grads.queries[i].iter().zip(&nq).chain(grads.docs[i].iter().zip(&nd)) {
                worst = worst.max(oracle::rel_err(*a, *num, FLOOR));
            }
        }
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn aligned_student_has_zero_align_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = instance(&mut rng, 5, 7);
    let (tq, td) = (ev(&inst.tq), ev(&inst.td));
    let batch = DistillBatch {
        teacher_queries: &tq,
        teacher_docs: &td,
        student_queries: &tq,
        student_docs: &td,
    };
    let opts = DistillOptions { use_soft: false, ..Default::default() };
    let (b, g) = loss::grad_total_distill_loss(&batch, &opts).unwrap();
    assert_eq!(b.total, 0.0);
    assert!(g.queries.iter().chain(&g.docs).flatten().all(|v| *v == 0.0));
}
