use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterSet;
use crate::numerics::DenseMatrix;

/// Glorot-uniform matrix: i.i.d. `U[−a, a]` with `a = √(6 / (rows + cols))`.
pub fn glorot_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for each parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: ParameterSet>(params: &P) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .blocks()
            .iter()
            .map(|b| DenseMatrix::zeros(b.rows(), b.cols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam step descending along `grads`:
///
/// ```text
/// m ← β1·m + (1 − β1)·g        v ← β2·v + (1 − β2)·g²
/// p ← p − lr · m̂ / (√v̂ + eps)   m̂ = m / (1 − β1ᵗ), v̂ = v / (1 − β2ᵗ)
/// ```
///
/// Nothing is modified if any gradient entry is non-finite.
pub fn adam_step<P: ParameterSet>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let g_blocks = grads.blocks();
    let mut p_blocks = params.blocks_mut();
    if g_blocks.len() != p_blocks.len() || state.m.len() != p_blocks.len() {
        return Err(Error::shape("adam_step", "block counts differ"));
    }
    for (b, (p, g)) in p_blocks.iter().zip(&g_blocks).enumerate() {
        if p.shape() != g.shape() || state.m[b].shape() != p.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("block {} shapes differ", P::NAMES[b]),
            ));
        }
        if let Some(k) = g.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "gradient of {} entry {k} is {} at step {}",
                P::NAMES[b],
                g.as_slice()[k],
                state.t + 1
            )));
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    for (b, (p, g)) in p_blocks.iter_mut().zip(&g_blocks).enumerate() {
        let m = state.m[b].as_mut_slice();
        let v = state.v[b].as_mut_slice();
        for (k, (pk, &gk)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *pk -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
