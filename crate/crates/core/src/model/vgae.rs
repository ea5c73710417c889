use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::numerics::{dot, sigmoid, DenseMatrix};

use super::npgnn::{
    encode_on_tape, reparameterize_on_tape, ContextInput, ElboTerms, NodeGaussianStats,
};
use super::{EncoderActivation, ParameterSet, ReconTarget, VgaeParams};

/// Training graph and reconstruction target for the baseline.
#[derive(Debug, Clone, Copy)]
pub struct VgaeBatch<'a> {
    pub input: &'a ContextInput,
    pub target: &'a ReconTarget,
}

/// Per-node Gaussians from the shared two-layer GCN encoder.
pub fn vgae_encode(
    input: &ContextInput,
    params: &VgaeParams,
    act: EncoderActivation,
) -> Result<NodeGaussianStats> {
    check(input, params)?;
    let mut tape = Tape::new();
    let x = tape.constant((*input.features).clone());
    let [w1, w_mu, w_sigma] =
        [&params.w1, &params.w_mu, &params.w_sigma].map(|w| tape.constant(w.clone()));
    let xw1 = tape.matmul(x, w1)?;
    let (mu, ls) = encode_on_tape(&mut tape, &input.adjacency, xw1, w_mu, w_sigma, act)?;
    Ok(NodeGaussianStats {
        mu: tape.value(mu).clone(),
        log_sigma: tape.value(ls).clone(),
    })
}

fn check(input: &ContextInput, params: &VgaeParams) -> Result<()> {
    let n = input.num_nodes();
    if input.adjacency.shape() != (n, n) || input.features.cols() != params.w1.rows() {
        return Err(Error::shape(
            "vgae_encode",
            format!(
                "adjacency {:?}, features {:?}, W1 {:?}",
                input.adjacency.shape(),
                input.features.shape(),
                params.w1.shape()
            ),
        ));
    }
    Ok(())
}

struct VgaeNodes {
    loss: Var,
    bce: Var,
    kl: Var,
}

/// `−ELBO` with per-node latents `Z = μ + σ ⊙ ε`, inner-product decoder
/// `σ(z_i · z_j)` and standard-normal prior. The KL sum over nodes is
/// divided by `n²`, putting it on the same per-entry scale as the
/// reconstruction term.
fn build(
    tape: &mut Tape,
    vars: &[Var],
    batch: &VgaeBatch<'_>,
    act: EncoderActivation,
    epsilon: &DenseMatrix,
) -> Result<VgaeNodes> {
    let n = batch.input.num_nodes();
    if batch.target.targets.shape() != (n, n) {
        return Err(Error::shape(
            "vgae_elbo",
            "reconstruction target does not match the graph",
        ));
    }
    let x = tape.constant((*batch.input.features).clone());
    let xw1 = tape.matmul(x, vars[0])?;
    let (mu, ls) = encode_on_tape(tape, &batch.input.adjacency, xw1, vars[1], vars[2], act)?;
    let z = reparameterize_on_tape(tape, mu, ls, epsilon)?;
    let zt = tape.transpose(z);
    let logits = tape.matmul(z, zt)?;
    let t = batch.target;
    let bce = tape.weighted_bce_with_logits(logits, &t.targets, t.pos_weight, t.norm)?;

    // KL(N(μ, σ²) ‖ N(0, 1)) = Σ −log σ + (σ² + μ²)/2 − ½
    let two_ls = tape.scale(ls, 2.0);
    let var = tape.exp(two_ls);
    let mu_sq = tape.mul(mu, mu)?;
    let second = tape.add(var, mu_sq)?;
    let second = tape.scale(second, 0.5);
    let neg_ls = tape.scale(ls, -1.0);
    let terms = tape.add(neg_ls, second)?;
    let terms = tape.add_scalar(terms, -0.5);
    let kl_sum = tape.sum(terms);
    let kl = tape.scale(kl_sum, 1.0 / (n * n) as f64);
    let loss = tape.add(bce, kl)?;
    Ok(VgaeNodes { loss, bce, kl })
}

/// `−ELBO` of the baseline on a caller-owned tape, parameter handles in
/// [`VgaeParams::NAMES`] order.
pub fn vgae_neg_elbo_on_tape(
    tape: &mut Tape,
    params: &[Var],
    batch: &VgaeBatch<'_>,
    act: EncoderActivation,
    epsilon: &DenseMatrix,
) -> Result<Var> {
    if params.len() != VgaeParams::NAMES.len() {
        return Err(Error::input(format!(
            "expected {} parameter handles, got {}",
            VgaeParams::NAMES.len(),
            params.len()
        )));
    }
    Ok(build(tape, params, batch, act, epsilon)?.loss)
}

fn terms(tape: &Tape, nodes: &VgaeNodes) -> Result<ElboTerms> {
    let t = ElboTerms {
        elbo: -tape.scalar(nodes.loss),
        recon: -tape.scalar(nodes.bce),
        kl: tape.scalar(nodes.kl),
    };
    if !t.elbo.is_finite() {
        return Err(Error::Numeric(format!("ELBO evaluated to {}", t.elbo)));
    }
    Ok(t)
}

/// Single-sample lower bound; `epsilon` is `n x d`.
pub fn vgae_elbo(
    params: &VgaeParams,
    batch: &VgaeBatch<'_>,
    act: EncoderActivation,
    epsilon: &DenseMatrix,
) -> Result<ElboTerms> {
    check(batch.input, params)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let nodes = build(&mut tape, &vars, batch, act, epsilon)?;
    terms(&tape, &nodes)
}

/// Lower bound with the gradient of `−ELBO` for each encoder block.
pub fn vgae_elbo_with_grads(
    params: &VgaeParams,
    batch: &VgaeBatch<'_>,
    act: EncoderActivation,
    epsilon: &DenseMatrix,
) -> Result<(ElboTerms, VgaeParams)> {
    check(batch.input, params)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let nodes = build(&mut tape, &vars, batch, act, epsilon)?;
    let t = terms(&tape, &nodes)?;
    let grads = tape.backward(nodes.loss)?;
    let blocks = vars.iter().map(|&v| grads.wrt(&tape, v)).collect();
    Ok((t, VgaeParams::from_blocks(blocks)?))
}

/// `σ(μ_i · μ_j)` for each pair, using posterior means as embeddings.
pub fn vgae_scores(mu: &DenseMatrix, pairs: &[Edge]) -> Result<Vec<f64>> {
    let n = mu.rows();
    pairs
        .iter()
        .map(|&(i, j)| {
            if i >= n || j >= n {
                return Err(Error::input(format!(
                    "pair ({i}, {j}) out of range for {n} nodes"
                )));
            }
            Ok(sigmoid(dot(mu.row(i), mu.row(j))))
        })
        .collect()
}
