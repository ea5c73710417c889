use std::sync::Arc;

use crate::autodiff::{weighted_bce, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Edge, Graph, SubgraphRef};
use crate::numerics::{dot, sigmoid, Axis, DenseMatrix, ReduceOp, SparseMatrix};

use super::{EncoderActivation, ModelParams, ParameterSet, ReconTarget};

/// Normalised adjacency and features of a graph fed to the encoder.
#[derive(Debug, Clone)]
pub struct ContextInput {
    pub adjacency: Arc<SparseMatrix>,
    pub features: Arc<DenseMatrix>,
}

impl ContextInput {
    pub fn from_graph(g: &Graph) -> Self {
        ContextInput {
            adjacency: Arc::new(g.normalized_adjacency()),
            features: g.shared_features(),
        }
    }

    /// Every node of `g` with its features, but only `edges` as structure.
    pub fn from_edges(g: &Graph, edges: &[Edge]) -> Result<Self> {
        Ok(ContextInput {
            adjacency: Arc::new(normalize_adjacency(edges, g.num_nodes())?),
            features: g.shared_features(),
        })
    }

    /// Only the subgraph's nodes, their induced edges and their features.
    pub fn from_subgraph(sub: &SubgraphRef<'_>) -> Result<Self> {
        Ok(ContextInput {
            adjacency: Arc::new(normalize_adjacency(sub.induced_edges(), sub.num_nodes())?),
            features: Arc::new(sub.features()),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

/// Per-node Gaussian parameters produced by the encoder (`m x d` each).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGaussianStats {
    pub mu: DenseMatrix,
    pub log_sigma: DenseMatrix,
}

/// Diagonal Gaussian over the global latent (`1 x d` each).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mu: DenseMatrix,
    pub log_sigma: DenseMatrix,
}

impl LatentGaussian {
    pub fn dim(&self) -> usize {
        self.mu.cols()
    }
}

/// Node embeddings `U`; edge logits are inner products of its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    pub u: DenseMatrix,
}

impl DecoderOutput {
    pub fn num_nodes(&self) -> usize {
        self.u.rows()
    }

    pub fn logit(&self, i: usize, j: usize) -> f64 {
        dot(self.u.row(i), self.u.row(j))
    }
}

/// Parameter handles on a tape, in [`ModelParams::NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NpgnnVars {
    pub w1: Var,
    pub w_mu: Var,
    pub w_sigma: Var,
    pub w2: Var,
    pub b1: Var,
    pub w3: Var,
    pub b2: Var,
}

impl NpgnnVars {
    pub fn from_slice(v: &[Var]) -> Self {
        NpgnnVars {
            w1: v[0],
            w_mu: v[1],
            w_sigma: v[2],
            w2: v[3],
            b1: v[4],
            w3: v[5],
            b2: v[6],
        }
    }
}

fn check_encoder_input(a_bar: &SparseMatrix, x: &DenseMatrix, feature_dim: usize) -> Result<()> {
    let m = x.rows();
    if a_bar.shape() != (m, m) {
        return Err(Error::shape(
            "encode",
            format!("adjacency {:?} for {m} nodes", a_bar.shape()),
        ));
    }
    if x.cols() != feature_dim {
        return Err(Error::shape(
            "encode",
            format!("{} features, weights expect {feature_dim}", x.cols()),
        ));
    }
    Ok(())
}

/// Two-layer GCN with shared first layer:
/// `μ = act(Ā·ReLU(Ā·X·W1)·Wμ)`, `log σ = act(Ā·ReLU(Ā·X·W1)·Wσ)`.
/// `xw1` is `X·W1`, passed in so callers encoding the same features twice
/// compute it once.
pub(crate) fn encode_on_tape(
    tape: &mut Tape,
    a_bar: &Arc<SparseMatrix>,
    xw1: Var,
    w_mu: Var,
    w_sigma: Var,
    act: EncoderActivation,
) -> Result<(Var, Var)> {
    let pre = tape.sparse_matmul(a_bar, xw1)?;
    let hidden = tape.relu(pre);
    let propagated = tape.sparse_matmul(a_bar, hidden)?;
    let mu_pre = tape.matmul(propagated, w_mu)?;
    let ls_pre = tape.matmul(propagated, w_sigma)?;
    Ok((act.apply(tape, mu_pre), act.apply(tape, ls_pre)))
}

/// `σ(σ([X | z]·W2 + b1)·W3 + b2)`.
pub(crate) fn decode_on_tape(tape: &mut Tape, x: Var, z: Var, vars: &NpgnnVars) -> Result<Var> {
    let xt = tape.concat_broadcast_row(x, z)?;
    let h = tape.matmul(xt, vars.w2)?;
    let h = tape.add_row_bias(h, vars.b1)?;
    let h = tape.sigmoid(h);
    let u = tape.matmul(h, vars.w3)?;
    let u = tape.add_row_bias(u, vars.b2)?;
    Ok(tape.sigmoid(u))
}

/// `z = μ + exp(log σ) ⊙ ε`.
pub(crate) fn reparameterize_on_tape(
    tape: &mut Tape,
    mu: Var,
    log_sigma: Var,
    eps: &DenseMatrix,
) -> Result<Var> {
    if tape.value(mu).shape() != eps.shape() {
        return Err(Error::shape(
            "sample_latent",
            format!(
                "epsilon {:?} for latent {:?}",
                eps.shape(),
                tape.value(mu).shape()
            ),
        ));
    }
    let sigma = tape.exp(log_sigma);
    let e = tape.constant(eps.clone());
    let noise = tape.mul(sigma, e)?;
    tape.add(mu, noise)
}

/// Closed-form `KL(N(μq, σq²) ‖ N(μp, σp²))` summed over dimensions:
/// `Σ log σp − log σq + (σq² + (μq − μp)²) / 2σp² − ½`. The variance ratio
/// is formed as `exp(2(log σq − log σp))` so identical arguments give
/// exactly zero.
pub(crate) fn kl_on_tape(
    tape: &mut Tape,
    mu_q: Var,
    ls_q: Var,
    mu_p: Var,
    ls_p: Var,
) -> Result<Var> {
    let log_ratio = tape.sub(ls_p, ls_q)?;
    let neg_two_log_ratio = tape.scale(log_ratio, -2.0);
    let var_ratio = tape.exp(neg_two_log_ratio);
    let diff = tape.sub(mu_q, mu_p)?;
    let diff_sq = tape.mul(diff, diff)?;
    let neg_two_ls_p = tape.scale(ls_p, -2.0);
    let inv_var_p = tape.exp(neg_two_ls_p);
    let mean_term = tape.mul(diff_sq, inv_var_p)?;
    let ratio = tape.add(var_ratio, mean_term)?;
    let half_ratio = tape.scale(ratio, 0.5);
    let terms = tape.add(log_ratio, half_ratio)?;
    let terms = tape.add_scalar(terms, -0.5);
    Ok(tape.sum(terms))
}

/// Runs the encoder on one graph.
pub fn encode(
    a_bar: &Arc<SparseMatrix>,
    x: &DenseMatrix,
    params: &ModelParams,
    act: EncoderActivation,
) -> Result<NodeGaussianStats> {
    check_encoder_input(a_bar, x, params.feature_dim())?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let w1 = tape.constant(params.w1.clone());
    let w_mu = tape.constant(params.w_mu.clone());
    let w_sigma = tape.constant(params.w_sigma.clone());
    let xw1 = tape.matmul(xv, w1)?;
    let (mu, ls) = encode_on_tape(&mut tape, a_bar, xw1, w_mu, w_sigma, act)?;
    Ok(NodeGaussianStats {
        mu: tape.value(mu).clone(),
        log_sigma: tape.value(ls).clone(),
    })
}

/// Averages per-node statistics into the global latent Gaussian.
pub fn aggregate(stats: &NodeGaussianStats) -> Result<LatentGaussian> {
    if stats.mu.rows() == 0 {
        return Err(Error::input("cannot aggregate an empty context"));
    }
    if stats.mu.shape() != stats.log_sigma.shape() {
        return Err(Error::shape("aggregate", "mu and log_sigma disagree"));
    }
    Ok(LatentGaussian {
        mu: stats.mu.reduce(Axis::Rows, ReduceOp::Mean),
        log_sigma: stats.log_sigma.reduce(Axis::Rows, ReduceOp::Mean),
    })
}

/// Reparameterised draw `μ + exp(log σ) ⊙ ε`.
pub fn sample_latent(lg: &LatentGaussian, epsilon: &DenseMatrix) -> Result<DenseMatrix> {
    if epsilon.shape() != lg.mu.shape() {
        return Err(Error::shape(
            "sample_latent",
            format!("{:?} vs {:?}", epsilon.shape(), lg.mu.shape()),
        ));
    }
    let mut z = lg.mu.clone();
    for ((zv, &ls), &e) in z
        .as_mut_slice()
        .iter_mut()
        .zip(lg.log_sigma.as_slice())
        .zip(epsilon.as_slice())
    {
        *zv += ls.exp() * e;
    }
    Ok(z)
}

/// MLP decoder over features with `z` appended to every row.
pub fn decode(
    x_full: &DenseMatrix,
    z: &DenseMatrix,
    params: &ModelParams,
) -> Result<DecoderOutput> {
    if z.shape() != (1, params.latent_dim()) || x_full.cols() != params.feature_dim() {
        return Err(Error::shape(
            "decode",
            format!(
                "features {:?}, z {:?} for weights {:?}",
                x_full.shape(),
                z.shape(),
                params.w2.shape()
            ),
        ));
    }
    let mut tape = Tape::new();
    let vars = NpgnnVars::from_slice(
        &params
            .blocks()
            .into_iter()
            .map(|b| tape.constant(b.clone()))
            .collect::<Vec<_>>(),
    );
    let x = tape.constant(x_full.clone());
    let zv = tape.constant(z.clone());
    let u = decode_on_tape(&mut tape, x, zv, &vars)?;
    Ok(DecoderOutput {
        u: tape.value(u).clone(),
    })
}

/// `σ(u_i · u_j)`.
pub fn edge_probability(dec: &DecoderOutput, i: usize, j: usize) -> Result<f64> {
    let n = dec.num_nodes();
    if i >= n || j >= n {
        return Err(Error::input(format!(
            "pair ({i}, {j}) out of range for {n} nodes"
        )));
    }
    Ok(sigmoid(dec.logit(i, j)))
}

/// Balanced reconstruction log-likelihood
/// `norm / n² · Σ_ij [w·A_ij·log σ(l_ij) + (1 − A_ij)·log(1 − σ(l_ij))]`.
pub fn recon_loglik(
    dec: &DecoderOutput,
    targets: &SparseMatrix,
    pos_weight: f64,
    norm: f64,
) -> Result<f64> {
    if pos_weight.is_nan() || pos_weight <= 0.0 {
        return Err(Error::input(format!(
            "pos_weight must be positive, got {pos_weight}"
        )));
    }
    let n = dec.num_nodes();
    if targets.shape() != (n, n) {
        return Err(Error::shape(
            "recon_loglik",
            format!("targets {:?} for {n} nodes", targets.shape()),
        ));
    }
    let logits = dec.u.matmul_nt(&dec.u)?;
    Ok(-weighted_bce(&logits, targets, pos_weight, norm)?)
}

/// KL divergence between diagonal Gaussians, summed over dimensions.
pub fn kl_diag_gaussian(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    if q.mu.shape() != p.mu.shape()
        || q.log_sigma.shape() != p.log_sigma.shape()
        || q.mu.shape() != q.log_sigma.shape()
    {
        return Err(Error::shape(
            "kl_diag_gaussian",
            "q and p dimensions differ",
        ));
    }
    let mut tape = Tape::new();
    let [mq, lq, mp, lp] =
        [&q.mu, &q.log_sigma, &p.mu, &p.log_sigma].map(|m| tape.constant(m.clone()));
    let kl = kl_on_tape(&mut tape, mq, lq, mp, lp)?;
    Ok(tape.scalar(kl))
}

/// One training example: the graph whose adjacency is reconstructed and the
/// context that defines the prior.
#[derive(Debug, Clone, Copy)]
pub struct NpgnnBatch<'a> {
    /// Training graph: encoded for the posterior and decoded for the likelihood.
    pub full: &'a ContextInput,
    pub target: &'a ReconTarget,
    pub context: &'a ContextInput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    /// `recon − kl`.
    pub elbo: f64,
    /// Monte Carlo mean of the reconstruction log-likelihood.
    pub recon: f64,
    pub kl: f64,
}

pub(crate) struct ElboNodes {
    pub loss: Var,
    pub bce: Var,
    pub kl: Var,
}

/// Builds `−ELBO` on the tape: encoder on the full graph and on the context,
/// `L` reparameterised samples from the full-graph posterior (one per
/// `epsilons` entry), and the KL from posterior to context prior.
pub(crate) fn build_elbo(
    tape: &mut Tape,
    vars: &NpgnnVars,
    batch: &NpgnnBatch<'_>,
    act: EncoderActivation,
    epsilons: &[DenseMatrix],
) -> Result<ElboNodes> {
    if epsilons.is_empty() {
        return Err(Error::input("need at least one Monte Carlo sample"));
    }
    let f = tape.value(vars.w1).rows();
    check_encoder_input(&batch.full.adjacency, &batch.full.features, f)?;
    check_encoder_input(&batch.context.adjacency, &batch.context.features, f)?;
    let n = batch.full.num_nodes();
    if batch.target.targets.shape() != (n, n) {
        return Err(Error::shape(
            "elbo",
            "reconstruction target does not match the graph",
        ));
    }

    let x_full = tape.constant((*batch.full.features).clone());
    let xw1_full = tape.matmul(x_full, vars.w1)?;
    let xw1_ctx = if Arc::ptr_eq(&batch.full.features, &batch.context.features) {
        xw1_full
    } else {
        let x_ctx = tape.constant((*batch.context.features).clone());
        tape.matmul(x_ctx, vars.w1)?
    };

    let (mu_t, ls_t) = encode_on_tape(
        tape,
        &batch.full.adjacency,
        xw1_full,
        vars.w_mu,
        vars.w_sigma,
        act,
    )?;
    let (mu_c, ls_c) = encode_on_tape(
        tape,
        &batch.context.adjacency,
        xw1_ctx,
        vars.w_mu,
        vars.w_sigma,
        act,
    )?;
    let mu_z = tape.mean_rows(mu_t)?;
    let ls_z = tape.mean_rows(ls_t)?;
    let mu_zc = tape.mean_rows(mu_c)?;
    let ls_zc = tape.mean_rows(ls_c)?;

    let mut bce_total: Option<Var> = None;
    for eps in epsilons {
        let z = reparameterize_on_tape(tape, mu_z, ls_z, eps)?;
        let u = decode_on_tape(tape, x_full, z, vars)?;
        let ut = tape.transpose(u);
        let logits = tape.matmul(u, ut)?;
        let t = batch.target;
        let bce = tape.weighted_bce_with_logits(logits, &t.targets, t.pos_weight, t.norm)?;
        bce_total = Some(match bce_total {
            Some(acc) => tape.add(acc, bce)?,
            None => bce,
        });
    }
    let bce = tape.scale(
        bce_total.expect("at least one sample"),
        1.0 / epsilons.len() as f64,
    );
    let kl = kl_on_tape(tape, mu_z, ls_z, mu_zc, ls_zc)?;
    let loss = tape.add(bce, kl)?;
    Ok(ElboNodes { loss, bce, kl })
}

/// `−ELBO` built on a caller-owned tape from parameter handles in
/// [`ModelParams::NAMES`] order. Used for finite-difference checks.
pub fn neg_elbo_on_tape(
    tape: &mut Tape,
    params: &[Var],
    batch: &NpgnnBatch<'_>,
    act: EncoderActivation,
    epsilons: &[DenseMatrix],
) -> Result<Var> {
    if params.len() != ModelParams::NAMES.len() {
        return Err(Error::input(format!(
            "expected {} parameter handles, got {}",
            ModelParams::NAMES.len(),
            params.len()
        )));
    }
    Ok(build_elbo(tape, &NpgnnVars::from_slice(params), batch, act, epsilons)?.loss)
}

fn terms(tape: &Tape, nodes: &ElboNodes) -> Result<ElboTerms> {
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

/// Monte Carlo estimate of the lower bound using the given standard-normal
/// draws (`1 x d` each; their count is `L`).
pub fn elbo(
    params: &ModelParams,
    batch: &NpgnnBatch<'_>,
    act: EncoderActivation,
    epsilons: &[DenseMatrix],
) -> Result<ElboTerms> {
    let mut tape = Tape::new();
    let vars = NpgnnVars::from_slice(&params.bind(&mut tape));
    let nodes = build_elbo(&mut tape, &vars, batch, act, epsilons)?;
    terms(&tape, &nodes)
}

/// Lower bound together with the gradient of `−ELBO` for every block.
pub fn elbo_with_grads(
    params: &ModelParams,
    batch: &NpgnnBatch<'_>,
    act: EncoderActivation,
    epsilons: &[DenseMatrix],
) -> Result<(ElboTerms, ModelParams)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let vars = NpgnnVars::from_slice(&bound);
    let nodes = build_elbo(&mut tape, &vars, batch, act, epsilons)?;
    let t = terms(&tape, &nodes)?;
    let grads = tape.backward(nodes.loss)?;
    let blocks = bound.iter().map(|&v| grads.wrt(&tape, v)).collect();
    Ok((t, ModelParams::from_blocks(blocks)?))
}
