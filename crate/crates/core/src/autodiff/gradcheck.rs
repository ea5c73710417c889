use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

use super::{Tape, Var};

/// Worst disagreement found in one parameter block.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub block: usize,
    pub max_rel_error: f64,
    /// `(row, col)` of the worst entry.
    pub worst_entry: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub h: f64,
    pub tol: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error < self.tol)
    }
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h`, entry by entry, using the relative error
/// `|g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
///
/// `f` receives a fresh tape with one parameter leaf per block and must
/// return a `1 x 1` loss. Gradient checks are only meaningful away from
/// ReLU kinks; callers keep pre-activations clear of zero.
pub fn gradient_check<F>(params: &[DenseMatrix], h: f64, tol: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::input(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let eval = |blocks: &[DenseMatrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = blocks.iter().map(|b| tape.param(b.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("loss evaluated to {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|b| tape.param(b.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<DenseMatrix> = vars.iter().map(|&v| grads.wrt(&tape, v)).collect();

    let mut work: Vec<DenseMatrix> = params.to_vec();
    let mut blocks = Vec::with_capacity(params.len());
    for (b, g_ad) in analytic.iter().enumerate() {
        if !g_ad.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite analytic gradient in block {b}"
            )));
        }
        let mut worst = BlockCheck {
            block: b,
            max_rel_error: 0.0,
            worst_entry: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
        };
        let cols = params[b].cols();
        for k in 0..params[b].len() {
            let original = params[b].as_slice()[k];
            work[b].as_mut_slice()[k] = original + h;
            let plus = eval(&work)?;
            work[b].as_mut_slice()[k] = original - h;
            let minus = eval(&work)?;
            work[b].as_mut_slice()[k] = original;

            let fd = (plus - minus) / (2.0 * h);
            let ad = g_ad.as_slice()[k];
            let rel = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8);
            if rel > worst.max_rel_error {
                worst.max_rel_error = rel;
                worst.worst_entry = (k / cols.max(1), k % cols.max(1));
                worst.analytic = ad;
                worst.numeric = fd;
            }
        }
        blocks.push(worst);
    }
    Ok(GradCheckReport { h, tol, blocks })
}
