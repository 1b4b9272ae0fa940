//! First-order optimisers over [`EncoderParams`].

use alloc::vec::Vec;

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

/// Moment estimates for one parameter tensor set.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    step: u64,
    m: EncoderParams,
    v: EncoderParams,
}

impl OptimizerState {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

fn same_shape(a: &EncoderParams, b: &EncoderParams) -> bool {
    a.layers().len() == b.layers().len()
        && a.layers()
            .iter()
            .zip(b.layers())
            .all(|(x, y)| x.in_dim == y.in_dim && x.out_dim == y.out_dim)
}

/// One update of `params` in place.
pub fn optimizer_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut OptimizerState,
    optimizer: Optimizer,
    learning_rate: f64,
) -> Result<()> {
    if !same_shape(params, grads) || !same_shape(params, &state.m) {
        return Err(Error::contract("gradient shape does not match parameters"));
    }
    state.step += 1;
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.slices_mut().zip(grads.slices()) {
                for (pi, gi) in p.iter_mut().zip(g) {
                    *pi -= learning_rate * gi;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let t = state.step as f64;
            let c1 = 1.0 - libm::pow(beta1, t);
            let c2 = 1.0 - libm::pow(beta2, t);
            let ms: Vec<&mut [f64]> = state.m.slices_mut().collect();
            let vs: Vec<&mut [f64]> = state.v.slices_mut().collect();
            for (((p, g), m), v) in params.slices_mut().zip(grads.slices()).zip(ms).zip(vs) {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    p[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + eps);
                }
            }
        }
    }
    Ok(())
}
