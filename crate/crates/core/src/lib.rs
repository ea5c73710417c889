//! Neural processes over graph convolutional encoders for link prediction.
//!
//! A context subgraph is encoded node-by-node with a two-layer GCN, the
//! per-node Gaussians are averaged into one global latent, and a sample of
//! that latent is concatenated onto every node's features before an MLP and
//! inner-product decoder reconstructs the adjacency. Training maximises a
//! lower bound whose prior is the context-conditioned latent and whose
//! posterior is conditioned on the whole training graph.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense / sparse matrices.
//! * [`autodiff`]: a tape-based reverse-mode differentiator over the
//!   primitives the model uses.
//! * [`graph`]: graphs, adjacency normalisation, context sampling and the
//!   transductive / inductive / few-shot splits.
//! * [`model`]: the NPGNN encoder, aggregator, decoder and bound, plus the
//!   VGAE baseline.
//! * [`training`]: initialisation, Adam, the training loop and AUC / AP.
//! * [`data`]: citation-network loading, SBM generation, persisted configs
//!   and results.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Edge, Graph, SplitBundle, SubgraphRef, Task};
pub use model::{EncoderActivation, ModelConfig, ModelKind, ModelParams, VgaeParams};
pub use numerics::{DenseMatrix, SparseMatrix};
pub use training::{MetricsReport, TrainConfig};
