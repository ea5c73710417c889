//! The NPGNN model and the VGAE baseline built from the same encoder.

mod npgnn;
mod vgae;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{DenseMatrix, SparseMatrix};
use crate::training::glorot_init;

pub use npgnn::{
    aggregate, decode, edge_probability, elbo, elbo_with_grads, encode, kl_diag_gaussian,
    neg_elbo_on_tape, recon_loglik, sample_latent, ContextInput, DecoderOutput, ElboTerms,
    LatentGaussian, NodeGaussianStats, NpgnnBatch,
};
pub use vgae::{
    vgae_elbo, vgae_elbo_with_grads, vgae_encode, vgae_neg_elbo_on_tape, vgae_scores, VgaeBatch,
};

/// Output activation of the encoder's second GCN layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderActivation {
    /// ReLU on both layers, so `μ ≥ 0` and `log σ ≥ 0`.
    Relu,
    /// Identity on the second layer.
    Linear,
}

impl EncoderActivation {
    pub(crate) fn apply(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            EncoderActivation::Relu => tape.relu(v),
            EncoderActivation::Linear => v,
        }
    }
}

impl FromStr for EncoderActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(EncoderActivation::Relu),
            "linear" => Ok(EncoderActivation::Linear),
            other => Err(Error::input(format!(
                "unknown encoder activation {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Npgnn,
    Vgae,
}

impl ModelKind {
    /// Encoder output activation used when the configuration leaves it open:
    /// ReLU for NPGNN, linear for VGAE.
    pub fn default_activation(self) -> EncoderActivation {
        match self {
            ModelKind::Npgnn => EncoderActivation::Relu,
            ModelKind::Vgae => EncoderActivation::Linear,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Npgnn => "npgnn",
            ModelKind::Vgae => "vgae",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npgnn" => Ok(ModelKind::Npgnn),
            "vgae" => Ok(ModelKind::Vgae),
            other => Err(Error::input(format!("unknown model {other:?}"))),
        }
    }
}

/// Layer widths and reconstruction options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of the first GCN layer.
    pub hidden_dim: usize,
    /// Dimension of the latent `z` (and of per-node `μ`, `log σ`).
    pub latent_dim: usize,
    /// Width of the decoder's hidden layer.
    pub decoder_hidden_dim: usize,
    /// Width of the node embeddings `U` fed to the inner product.
    pub embedding_dim: usize,
    /// Count the diagonal as positive in the reconstruction target.
    pub self_loop_target: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 32,
            latent_dim: 32,
            decoder_hidden_dim: 64,
            embedding_dim: 32,
            self_loop_target: true,
        }
    }
}

/// A named, ordered collection of parameter blocks.
pub trait ParameterSet: Sized + Clone {
    const NAMES: &'static [&'static str];

    fn blocks(&self) -> Vec<&DenseMatrix>;

    fn blocks_mut(&mut self) -> Vec<&mut DenseMatrix>;

    /// Rebuilds the set from blocks in [`Self::NAMES`] order.
    fn from_blocks(blocks: Vec<DenseMatrix>) -> Result<Self>;

    /// Registers every block on the tape as a trainable leaf.
    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.blocks()
            .into_iter()
            .map(|b| tape.param(b.clone()))
            .collect()
    }

    fn num_scalars(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

/// Trainable weights of NPGNN. The first-layer weights `w1` are shared by
/// the mean and log-scale branches of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `f x h1`
    pub w1: DenseMatrix,
    /// `h1 x d`
    pub w_mu: DenseMatrix,
    /// `h1 x d`
    pub w_sigma: DenseMatrix,
    /// `(f + d) x h2`
    pub w2: DenseMatrix,
    /// `1 x h2`
    pub b1: DenseMatrix,
    /// `h2 x d_u`
    pub w3: DenseMatrix,
    /// `1 x d_u`
    pub b2: DenseMatrix,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Self {
        let f = feature_dim;
        ModelParams {
            w1: glorot_init(f, cfg.hidden_dim, rng),
            w_mu: glorot_init(cfg.hidden_dim, cfg.latent_dim, rng),
            w_sigma: glorot_init(cfg.hidden_dim, cfg.latent_dim, rng),
            w2: glorot_init(f + cfg.latent_dim, cfg.decoder_hidden_dim, rng),
            b1: DenseMatrix::zeros(1, cfg.decoder_hidden_dim),
            w3: glorot_init(cfg.decoder_hidden_dim, cfg.embedding_dim, rng),
            b2: DenseMatrix::zeros(1, cfg.embedding_dim),
        }
    }

    pub fn zeros(feature_dim: usize, cfg: &ModelConfig) -> Self {
        let z = DenseMatrix::zeros;
        ModelParams {
            w1: z(feature_dim, cfg.hidden_dim),
            w_mu: z(cfg.hidden_dim, cfg.latent_dim),
            w_sigma: z(cfg.hidden_dim, cfg.latent_dim),
            w2: z(feature_dim + cfg.latent_dim, cfg.decoder_hidden_dim),
            b1: z(1, cfg.decoder_hidden_dim),
            w3: z(cfg.decoder_hidden_dim, cfg.embedding_dim),
            b2: z(1, cfg.embedding_dim),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_mu.cols()
    }

    fn check(&self) -> Result<()> {
        let (f, h1) = self.w1.shape();
        let d = self.w_mu.cols();
        let h2 = self.w2.cols();
        let du = self.w3.cols();
        let expect = [
            (self.w_mu.shape(), (h1, d)),
            (self.w_sigma.shape(), (h1, d)),
            (self.w2.shape(), (f + d, h2)),
            (self.b1.shape(), (1, h2)),
            (self.w3.shape(), (h2, du)),
            (self.b2.shape(), (1, du)),
        ];
        for (name, (got, want)) in Self::NAMES[1..].iter().zip(expect) {
            if got != want {
                return Err(Error::shape(
                    "model params",
                    format!("{name} is {got:?}, expected {want:?}"),
                ));
            }
        }
        Ok(())
    }
}

impl ParameterSet for ModelParams {
    const NAMES: &'static [&'static str] = &["W1", "W_mu", "W_sigma", "W2", "b1", "W3", "b2"];

    fn blocks(&self) -> Vec<&DenseMatrix> {
        vec![
            &self.w1,
            &self.w_mu,
            &self.w_sigma,
            &self.w2,
            &self.b1,
            &self.w3,
            &self.b2,
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![
            &mut self.w1,
            &mut self.w_mu,
            &mut self.w_sigma,
            &mut self.w2,
            &mut self.b1,
            &mut self.w3,
            &mut self.b2,
        ]
    }

    fn from_blocks(blocks: Vec<DenseMatrix>) -> Result<Self> {
        let [w1, w_mu, w_sigma, w2, b1, w3, b2]: [DenseMatrix; 7] =
            blocks.try_into().map_err(|b: Vec<_>| {
                Error::input(format!("expected 7 parameter blocks, got {}", b.len()))
            })?;
        let p = ModelParams {
            w1,
            w_mu,
            w_sigma,
            w2,
            b1,
            w3,
            b2,
        };
        p.check()?;
        Ok(p)
    }
}

/// Encoder-only weights of the VGAE baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct VgaeParams {
    pub w1: DenseMatrix,
    pub w_mu: DenseMatrix,
    pub w_sigma: DenseMatrix,
}

impl VgaeParams {
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Self {
        VgaeParams {
            w1: glorot_init(feature_dim, cfg.hidden_dim, rng),
            w_mu: glorot_init(cfg.hidden_dim, cfg.latent_dim, rng),
            w_sigma: glorot_init(cfg.hidden_dim, cfg.latent_dim, rng),
        }
    }
}

impl ParameterSet for VgaeParams {
    const NAMES: &'static [&'static str] = &["W1", "W_mu", "W_sigma"];

    fn blocks(&self) -> Vec<&DenseMatrix> {
        vec![&self.w1, &self.w_mu, &self.w_sigma]
    }

    fn blocks_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.w1, &mut self.w_mu, &mut self.w_sigma]
    }

    fn from_blocks(blocks: Vec<DenseMatrix>) -> Result<Self> {
        let [w1, w_mu, w_sigma]: [DenseMatrix; 3] = blocks.try_into().map_err(|b: Vec<_>| {
            Error::input(format!("expected 3 parameter blocks, got {}", b.len()))
        })?;
        let h1 = w1.cols();
        if w_mu.rows() != h1 || w_sigma.shape() != w_mu.shape() {
            return Err(Error::shape("vgae params", "encoder blocks disagree"));
        }
        Ok(VgaeParams { w1, w_mu, w_sigma })
    }
}

/// Adjacency reconstruction target with its class-balancing constants.
///
/// With `m` undirected edges on `n` nodes, positives are re-weighted by
/// `(n² − 2m) / 2m` and the mean loss is scaled by `n² / 2(n² − 2m)`.
#[derive(Debug, Clone)]
pub struct ReconTarget {
    pub targets: Arc<SparseMatrix>,
    pub pos_weight: f64,
    pub norm: f64,
}

impl ReconTarget {
    pub fn from_graph(g: &Graph, self_loops: bool) -> Result<Self> {
        let n = g.num_nodes();
        let m2 = 2 * g.num_edges();
        let n2 = (n * n) as f64;
        if m2 == 0 || m2 >= n * n {
            return Err(Error::input(format!(
                "cannot balance a reconstruction target with {} edges on {n} nodes",
                g.num_edges()
            )));
        }
        let pairs = g
            .edges()
            .iter()
            .flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)]);
        let diag = (0..n).filter(|_| self_loops).map(|i| (i, i, 1.0));
        let targets = SparseMatrix::from_triplets(n, n, pairs.chain(diag))?;
        Ok(ReconTarget {
            targets: Arc::new(targets),
            pos_weight: (n2 - m2 as f64) / m2 as f64,
            norm: n2 / (2.0 * (n2 - m2 as f64)),
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn param_shapes_follow_config() {
        let cfg = ModelConfig::default();
        let p = ModelParams::init(7, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p.w1.shape(), (7, 32));
        assert_eq!(p.w2.shape(), (39, 64));
        assert_eq!(p.w3.shape(), (64, 32));
        assert_eq!(p.b1, DenseMatrix::zeros(1, 64));
        let again = ModelParams::from_blocks(p.blocks().into_iter().cloned().collect()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn mismatched_blocks_are_rejected() {
        let cfg = ModelConfig::default();
        let mut blocks: Vec<DenseMatrix> = ModelParams::zeros(3, &cfg)
            .blocks()
            .into_iter()
            .cloned()
            .collect();
        blocks[3] = DenseMatrix::zeros(2, 2);
        assert!(ModelParams::from_blocks(blocks.clone()).is_err());
        blocks.pop();
        assert!(ModelParams::from_blocks(blocks).is_err());
    }

    #[test]
    fn recon_target_weights() {
        let g = Graph::structural(4, vec![(0, 1), (2, 3)]).unwrap();
        let t = ReconTarget::from_graph(&g, true).unwrap();
        assert_eq!(t.targets.nnz(), 8);
        assert_eq!(t.pos_weight, 3.0);
        assert_eq!(t.norm, 16.0 / 24.0);
        let bare = ReconTarget::from_graph(&g, false).unwrap();
        assert_eq!(bare.targets.nnz(), 4);
        assert!(ReconTarget::from_graph(&Graph::structural(3, vec![]).unwrap(), true).is_err());
    }
}
