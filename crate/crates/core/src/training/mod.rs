//! Initialisation, Adam, the training loop, link scoring and metrics.

mod experiment;
mod gradcheck;
mod metrics;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    make_fewshot_split, make_inductive_split, make_transductive_split, sample_context_edges,
    sample_context_nodes, Edge, Graph, SplitBundle, Task,
};
use crate::model::{
    aggregate, decode, elbo, elbo_with_grads, encode, vgae_elbo, vgae_elbo_with_grads, vgae_encode,
    vgae_scores, ContextInput, DecoderOutput, EncoderActivation, ModelConfig, ModelKind,
    ModelParams, NpgnnBatch, ReconTarget, VgaeBatch, VgaeParams,
};
use crate::numerics::{sigmoid, DenseMatrix};

pub use experiment::{run_experiment, run_seed, ExperimentOutcome, SeedOutcome};
pub use gradcheck::{
    block_names, check_model_gradients, toy_architecture, toy_graph, GradcheckOptions,
    DEFAULT_GRADCHECK_SEED,
};
pub use metrics::{
    average_precision, link_metrics, mean_and_standard_error, roc_auc, HistoryRecord,
    MetricsReport, SeedMetrics,
};
pub use optim::{adam_step, glorot_init, AdamConfig, AdamState};

/// Version written into every persisted config and result.
pub const SCHEMA_VERSION: u32 = 1;

/// Fractions used to build the evaluation split of each task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Transductive: fraction of edges held out for testing.
    pub test_fraction: f64,
    /// Transductive: fraction of edges held out for validation.
    pub val_fraction: f64,
    /// Inductive: fraction of nodes held out for testing.
    pub test_node_fraction: f64,
    /// Inductive: fraction of nodes held out for validation.
    pub val_node_fraction: f64,
    /// Few-shot: fraction of nodes in the training graph.
    pub fewshot_train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.10,
            val_fraction: 0.05,
            test_node_fraction: 0.05,
            val_node_fraction: 0.025,
            fewshot_train_fraction: 0.30,
        }
    }
}

/// Everything needed to reproduce one training run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub model: ModelKind,
    pub task: Task,
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Monte Carlo samples `L` of the global latent per iteration.
    pub mc_samples: usize,
    /// Share of training edges (transductive) or nodes (otherwise) drawn
    /// into the context each iteration.
    pub context_fraction: f64,
    pub seed: u64,
    /// `None` picks the model's default (ReLU for NPGNN, linear for VGAE).
    pub encoder_output_activation: Option<EncoderActivation>,
    /// Validation metrics are logged every this many iterations.
    pub eval_every: usize,
    pub architecture: ModelConfig,
    pub split: SplitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelKind::Npgnn,
            task: Task::Transductive,
            iterations: 500,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mc_samples: 1,
            context_fraction: 0.10,
            seed: 0,
            encoder_output_activation: None,
            eval_every: 10,
            architecture: ModelConfig::default(),
            split: SplitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn activation(&self) -> EncoderActivation {
        self.encoder_output_activation
            .unwrap_or_else(|| self.model.default_activation())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.architecture;
        let counts = [
            ("iterations", self.iterations),
            ("mc_samples", self.mc_samples),
            ("eval_every", self.eval_every),
            ("hidden_dim", a.hidden_dim),
            ("latent_dim", a.latent_dim),
            ("decoder_hidden_dim", a.decoder_hidden_dim),
            ("embedding_dim", a.embedding_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::input(format!("{name} must be positive")));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::input(format!("{name} = {b} must lie in (0, 1)")));
            }
        }
        if !(self.learning_rate > 0.0 && self.adam_eps > 0.0) {
            return Err(Error::input("learning_rate and adam_eps must be positive"));
        }
        if !(self.context_fraction > 0.0 && self.context_fraction <= 1.0) {
            return Err(Error::input(format!(
                "context_fraction = {} must lie in (0, 1]",
                self.context_fraction
            )));
        }
        Ok(())
    }
}

/// Independent generator for one purpose of one seed. Stream 0 builds the
/// split, stream 1 drives initialisation and training, stream 2 draws the
/// fixed probe used to compare bounds before and after training.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds the split that `task` calls for.
pub fn make_split<R: Rng + ?Sized>(
    g: &Graph,
    task: Task,
    cfg: &SplitConfig,
    rng: &mut R,
) -> Result<SplitBundle> {
    match task {
        Task::Transductive => make_transductive_split(g, cfg.test_fraction, cfg.val_fraction, rng),
        Task::Inductive => {
            make_inductive_split(g, cfg.test_node_fraction, cfg.val_node_fraction, rng)
        }
        Task::FewShot => make_fewshot_split(g, cfg.fewshot_train_fraction, rng),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedParams {
    Npgnn(ModelParams),
    Vgae(VgaeParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: TrainedParams,
    pub activation: EncoderActivation,
}

/// Precomputed embeddings of every node in the full graph.
#[derive(Debug, Clone)]
pub enum Scorer {
    /// NPGNN decoder output with `z = μ_z` of the training graph.
    Npgnn(DecoderOutput),
    /// VGAE posterior means.
    Vgae(DenseMatrix),
}

impl Scorer {
    pub fn scores(&self, pairs: &[Edge]) -> Result<Vec<f64>> {
        match self {
            Scorer::Npgnn(dec) => {
                let n = dec.num_nodes();
                pairs
                    .iter()
                    .map(|&(i, j)| {
                        if i >= n || j >= n {
                            return Err(Error::input(format!(
                                "pair ({i}, {j}) out of range for {n} nodes"
                            )));
                        }
                        Ok(sigmoid(dec.logit(i, j)))
                    })
                    .collect()
            }
            Scorer::Vgae(mu) => vgae_scores(mu, pairs),
        }
    }

    pub fn link_metrics(&self, pos: &[Edge], neg: &[Edge]) -> Result<(f64, f64)> {
        link_metrics(&self.scores(pos)?, &self.scores(neg)?)
    }
}

/// NPGNN embeddings for every node: the training graph is the context,
/// `z = μ_z`, and the decoder sees the features of all nodes.
pub fn npgnn_scorer(
    params: &ModelParams,
    train_input: &ContextInput,
    full: &Graph,
    act: EncoderActivation,
) -> Result<Scorer> {
    let stats = encode(&train_input.adjacency, &train_input.features, params, act)?;
    let latent = aggregate(&stats)?;
    Ok(Scorer::Npgnn(decode(full.features(), &latent.mu, params)?))
}

/// Input the VGAE baseline is scored on: all nodes with their features and
/// only the training edges, so held-out nodes are isolated.
pub fn vgae_scoring_input(split: &SplitBundle) -> Result<ContextInput> {
    ContextInput::from_edges(&split.full_graph, &split.train_edges_global())
}

impl TrainedModel {
    pub fn scorer(&self, split: &SplitBundle) -> Result<Scorer> {
        match &self.params {
            TrainedParams::Npgnn(p) => npgnn_scorer(
                p,
                &ContextInput::from_graph(&split.train_graph),
                &split.full_graph,
                self.activation,
            ),
            TrainedParams::Vgae(p) => {
                let stats = vgae_encode(&vgae_scoring_input(split)?, p, self.activation)?;
                Ok(Scorer::Vgae(stats.mu))
            }
        }
    }
}

/// Edge probabilities for `pairs` (full-graph indices).
pub fn predict_scores(
    model: &TrainedModel,
    split: &SplitBundle,
    pairs: &[Edge],
) -> Result<Vec<f64>> {
    model.scorer(split)?.scores(pairs)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Vec<HistoryRecord>,
    /// Bound on a fixed probe (context and noise) before the first update.
    pub initial_elbo: f64,
    /// Bound on the same probe after the last update.
    pub final_elbo: f64,
    /// Test AUC and AP at the final iteration; `None` without test pairs.
    pub test: Option<(f64, f64)>,
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches shape")
}

fn sample_context<R: Rng + ?Sized>(
    split: &SplitBundle,
    fraction: f64,
    rng: &mut R,
) -> Result<ContextInput> {
    let g = &split.train_graph;
    match split.task {
        Task::Transductive => {
            ContextInput::from_edges(g, &sample_context_edges(g.edges(), fraction, rng)?)
        }
        Task::Inductive | Task::FewShot => {
            ContextInput::from_subgraph(&sample_context_nodes(g, fraction, rng)?)
        }
    }
}

fn diverged(iteration: usize, err: Error, history: &[HistoryRecord]) -> Error {
    match err {
        Error::Numeric(reason) => Error::Diverged {
            iteration,
            reason,
            history: history.to_vec(),
        },
        other => other,
    }
}

fn record(iteration: usize, t: crate::model::ElboTerms, val: Option<(f64, f64)>) -> HistoryRecord {
    HistoryRecord {
        iteration,
        elbo: t.elbo,
        recon: t.recon,
        kl: t.kl,
        val_auc: val.map(|v| v.0),
        val_ap: val.map(|v| v.1),
    }
}

/// Trains the configured model on `split` with full-batch Adam on `−ELBO`.
///
/// NPGNN draws a fresh context every iteration: a share of the training
/// edges over all training nodes for transductive splits, or an induced
/// subgraph on a share of the training nodes otherwise. One record is
/// logged per iteration; validation metrics are attached every
/// `eval_every` iterations and at the last one. Test metrics are computed
/// once, after the last update.
pub fn train(split: &SplitBundle, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    match config.model {
        ModelKind::Npgnn => train_npgnn(split, config),
        ModelKind::Vgae => train_vgae(split, config),
    }
}

fn wants_eval(config: &TrainConfig, iteration: usize) -> bool {
    iteration.is_multiple_of(config.eval_every) || iteration == config.iterations
}

fn finish(split: &SplitBundle, scorer: &Scorer) -> Result<Option<(f64, f64)>> {
    if split.test_pos.is_empty() {
        return Ok(None);
    }
    scorer
        .link_metrics(&split.test_pos, &split.test_neg)
        .map(Some)
}

fn validation(
    split: &SplitBundle,
    scorer: impl FnOnce() -> Result<Scorer>,
) -> Result<Option<(f64, f64)>> {
    if split.val_pos.is_empty() {
        return Ok(None);
    }
    scorer()?
        .link_metrics(&split.val_pos, &split.val_neg)
        .map(Some)
}

fn train_npgnn(split: &SplitBundle, config: &TrainConfig) -> Result<TrainOutcome> {
    let act = config.activation();
    let adam = config.adam();
    let g = &split.train_graph;
    let full = ContextInput::from_graph(g);
    let target = ReconTarget::from_graph(g, config.architecture.self_loop_target)?;
    let d = config.architecture.latent_dim;

    let mut rng = rng_stream(config.seed, 1);
    let mut params = ModelParams::init(g.feature_dim(), &config.architecture, &mut rng);
    let mut state = AdamState::new(&params);

    let mut probe_rng = rng_stream(config.seed, 2);
    let probe_ctx = sample_context(split, config.context_fraction, &mut probe_rng)?;
    let probe_eps: Vec<DenseMatrix> = (0..config.mc_samples)
        .map(|_| standard_normal(1, d, &mut probe_rng))
        .collect();
    let probe = NpgnnBatch {
        full: &full,
        target: &target,
        context: &probe_ctx,
    };
    let initial_elbo = elbo(&params, &probe, act, &probe_eps)?.elbo;

    let mut history = Vec::with_capacity(config.iterations);
    for it in 1..=config.iterations {
        let ctx = sample_context(split, config.context_fraction, &mut rng)?;
        let eps: Vec<DenseMatrix> = (0..config.mc_samples)
            .map(|_| standard_normal(1, d, &mut rng))
            .collect();
        let batch = NpgnnBatch {
            full: &full,
            target: &target,
            context: &ctx,
        };
        let (terms, grads) =
            elbo_with_grads(&params, &batch, act, &eps).map_err(|e| diverged(it, e, &history))?;
        adam_step(&mut params, &grads, &mut state, &adam).map_err(|e| diverged(it, e, &history))?;
        let val = if wants_eval(config, it) {
            validation(split, || {
                npgnn_scorer(&params, &full, &split.full_graph, act)
            })?
        } else {
            None
        };
        history.push(record(it, terms, val));
    }

    let final_elbo = elbo(&params, &probe, act, &probe_eps)?.elbo;
    let test = finish(
        split,
        &npgnn_scorer(&params, &full, &split.full_graph, act)?,
    )?;
    Ok(TrainOutcome {
        model: TrainedModel {
            params: TrainedParams::Npgnn(params),
            activation: act,
        },
        history,
        initial_elbo,
        final_elbo,
        test,
    })
}

fn train_vgae(split: &SplitBundle, config: &TrainConfig) -> Result<TrainOutcome> {
    let act = config.activation();
    let adam = config.adam();
    let g = &split.train_graph;
    let input = ContextInput::from_graph(g);
    let target = ReconTarget::from_graph(g, config.architecture.self_loop_target)?;
    let scoring = vgae_scoring_input(split)?;
    let (n, d) = (g.num_nodes(), config.architecture.latent_dim);
    let batch = VgaeBatch {
        input: &input,
        target: &target,
    };
    let scorer =
        |p: &VgaeParams| -> Result<Scorer> { Ok(Scorer::Vgae(vgae_encode(&scoring, p, act)?.mu)) };

    let mut rng = rng_stream(config.seed, 1);
    let mut params = VgaeParams::init(g.feature_dim(), &config.architecture, &mut rng);
    let mut state = AdamState::new(&params);

    let probe_eps = standard_normal(n, d, &mut rng_stream(config.seed, 2));
    let initial_elbo = vgae_elbo(&params, &batch, act, &probe_eps)?.elbo;

    let mut history = Vec::with_capacity(config.iterations);
    for it in 1..=config.iterations {
        let eps = standard_normal(n, d, &mut rng);
        let (terms, grads) = vgae_elbo_with_grads(&params, &batch, act, &eps)
            .map_err(|e| diverged(it, e, &history))?;
        adam_step(&mut params, &grads, &mut state, &adam).map_err(|e| diverged(it, e, &history))?;
        let val = if wants_eval(config, it) {
            validation(split, || scorer(&params))?
        } else {
            None
        };
        history.push(record(it, terms, val));
    }

    let final_elbo = vgae_elbo(&params, &batch, act, &probe_eps)?.elbo;
    let test = finish(split, &scorer(&params)?)?;
    Ok(TrainOutcome {
        model: TrainedModel {
            params: TrainedParams::Vgae(params),
            activation: act,
        },
        history,
        initial_elbo,
        final_elbo,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!(c.activation(), EncoderActivation::Relu);
        assert!(c.validate().is_ok());
        let v = TrainConfig {
            model: ModelKind::Vgae,
            ..c.clone()
        };
        assert_eq!(v.activation(), EncoderActivation::Linear);
        for bad in [
            TrainConfig {
                iterations: 0,
                ..c.clone()
            },
            TrainConfig {
                adam_beta2: 1.0,
                ..c.clone()
            },
            TrainConfig {
                context_fraction: 0.0,
                ..c.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn streams_are_independent() {
        let a: u64 = rng_stream(5, 0).random();
        let b: u64 = rng_stream(5, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, rng_stream(5, 0).random::<u64>());
    }
}
