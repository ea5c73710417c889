//! Encoder, decoder and bound checked against direct dense evaluations.

mod common;

use std::sync::Arc;

use common::*;
use npgnn_core::graph::{induce_subgraph, make_transductive_split};
use npgnn_core::model::{
    aggregate, decode, edge_probability, elbo, encode, recon_loglik, sample_latent, vgae_elbo,
    ContextInput, NpgnnBatch, ReconTarget, VgaeBatch,
};
use npgnn_core::training::{predict_scores, rng_stream, train, TrainedModel, TrainedParams};
use npgnn_core::{
    DenseMatrix, EncoderActivation, Graph, ModelConfig, ModelKind, ModelParams, TrainConfig,
    VgaeParams,
};

type M = Vec<Vec<f64>>;

fn to_rows(a: &DenseMatrix) -> M {
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

fn mm(a: &M, b: &M) -> M {
    let mut c = vec![vec![0.0; b[0].len()]; a.len()];
    for i in 0..a.len() {
        for j in 0..b[0].len() {
            for k in 0..b.len() {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn map(a: &M, f: impl Fn(f64) -> f64) -> M {
    a.iter()
        .map(|r| r.iter().map(|&x| f(x)).collect())
        .collect()
}

fn sig(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn act_fn(act: EncoderActivation) -> impl Fn(f64) -> f64 {
    move |t| match act {
        EncoderActivation::Relu => t.max(0.0),
        EncoderActivation::Linear => t,
    }
}

/// `(μ, log σ)` of the two-layer encoder.
fn oracle_encode(g: &Graph, p: &ModelParams, act: EncoderActivation) -> (M, M) {
    let a = to_rows(&dense_normalized_oracle(g));
    let h = map(&mm(&mm(&a, &to_rows(g.features())), &to_rows(&p.w1)), |t| {
        t.max(0.0)
    });
    let ah = mm(&a, &h);
    (
        map(&mm(&ah, &to_rows(&p.w_mu)), act_fn(act)),
        map(&mm(&ah, &to_rows(&p.w_sigma)), act_fn(act)),
    )
}

fn col_means(a: &M) -> Vec<f64> {
    (0..a[0].len())
        .map(|j| a.iter().map(|r| r[j]).sum::<f64>() / a.len() as f64)
        .collect()
}

fn oracle_decode(x: &DenseMatrix, z: &[f64], p: &ModelParams) -> M {
    let xt: M = (0..x.rows())
        .map(|i| x.row(i).iter().chain(z).copied().collect())
        .collect();
    let add_bias = |m: M, b: &DenseMatrix| -> M {
        m.into_iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| v + b.get(0, j)).collect())
            .collect()
    };
    let h = map(&add_bias(mm(&xt, &to_rows(&p.w2)), &p.b1), sig);
    map(&add_bias(mm(&h, &to_rows(&p.w3)), &p.b2), sig)
}

/// Weighted log-likelihood over all `n²` ordered pairs, diagonal positive.
fn oracle_recon(u: &M, g: &Graph) -> f64 {
    let n = u.len();
    let m2 = 2.0 * g.num_edges() as f64;
    let n2 = (n * n) as f64;
    let pos_weight = (n2 - m2) / m2;
    let norm = n2 / (2.0 * (n2 - m2));
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let logit: f64 = u[i].iter().zip(&u[j]).map(|(a, b)| a * b).sum();
            let y = i == j || g.has_edge(i, j);
            total += if y {
                pos_weight * sig(logit).ln()
            } else {
                (1.0 - sig(logit)).ln()
            };
        }
    }
    norm * total / n2
}

/// Closed-form KL between diagonal Gaussians parameterised by log σ.
fn oracle_kl(mq: &[f64], lq: &[f64], mp: &[f64], lp: &[f64]) -> f64 {
    (0..mq.len())
        .map(|k| {
            let (sq, sp) = (lq[k].exp(), lp[k].exp());
            (sp / sq).ln() + (sq * sq + (mq[k] - mp[k]).powi(2)) / (2.0 * sp * sp) - 0.5
        })
        .sum()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 4,
        latent_dim: 3,
        decoder_hidden_dim: 5,
        embedding_dim: 4,
        self_loop_target: true,
    }
}

fn fixture(n: usize, seed: u64) -> (Graph, ModelParams) {
    let g = random_graph(n, 0.45, 3, seed);
    let mut r = rng(seed + 100);
    let mut p = ModelParams::init(3, &small_config(), &mut r);
    p.b1 = signed_matrix(1, 5, 0.0, 0.3, &mut r);
    p.b2 = signed_matrix(1, 4, 0.0, 0.3, &mut r);
    (g, p)
}

#[test]
fn encoder_matches_dense_evaluation() {
    for (n, seed) in [(4, 1), (5, 2), (6, 3)] {
        let (g, p) = fixture(n, seed);
        for act in [EncoderActivation::Relu, EncoderActivation::Linear] {
            let stats = encode(&Arc::new(g.normalized_adjacency()), g.features(), &p, act).unwrap();
            let (mu, ls) = oracle_encode(&g, &p, act);
            assert!(stats.mu.max_abs_diff(&DenseMatrix::from_rows(&mu)) <= 1e-12);
            assert!(stats.log_sigma.max_abs_diff(&DenseMatrix::from_rows(&ls)) <= 1e-12);
            let agg = aggregate(&stats).unwrap();
            for (k, m) in col_means(&mu).iter().enumerate() {
                assert!((agg.mu.get(0, k) - m).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn decoder_and_likelihood_match_dense_evaluation() {
    for (n, seed) in [(4, 4), (5, 5), (6, 6)] {
        let (g, p) = fixture(n, seed);
        let z = [0.3, -1.1, 0.7];
        let dec = decode(g.features(), &DenseMatrix::row_vector(&z), &p).unwrap();
        let u = oracle_decode(g.features(), &z, &p);
        assert!(dec.u.max_abs_diff(&DenseMatrix::from_rows(&u)) <= 1e-12);
        for i in 0..n {
            for j in 0..n {
                let logit: f64 = u[i].iter().zip(&u[j]).map(|(a, b)| a * b).sum();
                assert!((edge_probability(&dec, i, j).unwrap() - sig(logit)).abs() <= 1e-12);
            }
        }
        let t = ReconTarget::from_graph(&g, true).unwrap();
        let ll = recon_loglik(&dec, &t.targets, t.pos_weight, t.norm).unwrap();
        assert!(
            (ll - oracle_recon(&u, &g)).abs() <= 1e-12,
            "{ll} vs {}",
            oracle_recon(&u, &g)
        );
    }
}

#[test]
fn bound_matches_dense_evaluation() {
    for (n, seed) in [(5, 7), (6, 8)] {
        let (g, p) = fixture(n, seed);
        let context_nodes: Vec<usize> = (0..n).filter(|v| v % 2 == 0).collect();
        let sub = induce_subgraph(&g, &context_nodes).unwrap();
        let context_graph = sub.to_graph();
        let eps = [0.4, -0.2, 1.3];
        for act in [EncoderActivation::Relu, EncoderActivation::Linear] {
            let full = ContextInput::from_graph(&g);
            let context = ContextInput::from_subgraph(&sub).unwrap();
            let target = ReconTarget::from_graph(&g, true).unwrap();
            let batch = NpgnnBatch {
                full: &full,
                target: &target,
                context: &context,
            };
            let got = elbo(&p, &batch, act, &[DenseMatrix::row_vector(&eps)]).unwrap();

            let (mu_t, ls_t) = oracle_encode(&g, &p, act);
            let (mu_c, ls_c) = oracle_encode(&context_graph, &p, act);
            let (mz, lz) = (col_means(&mu_t), col_means(&ls_t));
            let (mc, lc) = (col_means(&mu_c), col_means(&ls_c));
            let z: Vec<f64> = (0..3).map(|k| mz[k] + lz[k].exp() * eps[k]).collect();
            let recon = oracle_recon(&oracle_decode(g.features(), &z, &p), &g);
            let kl = oracle_kl(&mz, &lz, &mc, &lc);
            assert!((got.recon - recon).abs() <= 1e-12);
            assert!((got.kl - kl).abs() <= 1e-12);
            assert!((got.elbo - (recon - kl)).abs() <= 1e-12);
        }
    }
}

#[test]
fn repeated_noise_leaves_the_bound_unchanged() {
    let (g, p) = fixture(6, 9);
    let full = ContextInput::from_graph(&g);
    let context = ContextInput::from_edges(&g, &g.edges()[..2]).unwrap();
    let target = ReconTarget::from_graph(&g, true).unwrap();
    let batch = NpgnnBatch {
        full: &full,
        target: &target,
        context: &context,
    };
    let eps = DenseMatrix::row_vector(&[0.5, 0.1, -0.8]);
    let one = elbo(
        &p,
        &batch,
        EncoderActivation::Relu,
        std::slice::from_ref(&eps),
    )
    .unwrap();
    let three = elbo(
        &p,
        &batch,
        EncoderActivation::Relu,
        &[eps.clone(), eps.clone(), eps],
    )
    .unwrap();
    assert!((one.elbo - three.elbo).abs() <= 1e-12);
    assert_eq!(one.kl, three.kl);
}

#[test]
fn whole_graph_context_has_zero_kl() {
    let (g, p) = fixture(6, 10);
    let full = ContextInput::from_graph(&g);
    let context = ContextInput::from_edges(&g, g.edges()).unwrap();
    let target = ReconTarget::from_graph(&g, true).unwrap();
    let batch = NpgnnBatch {
        full: &full,
        target: &target,
        context: &context,
    };
    for act in [EncoderActivation::Relu, EncoderActivation::Linear] {
        let t = elbo(
            &p,
            &batch,
            act,
            &[DenseMatrix::row_vector(&[0.2, 0.2, 0.2])],
        )
        .unwrap();
        assert_eq!(t.kl, 0.0);
        assert_eq!(t.elbo, t.recon);
    }
}

#[test]
fn context_enters_only_through_the_latent() {
    let (g, p) = fixture(6, 11);
    let stats = encode(
        &Arc::new(g.normalized_adjacency()),
        g.features(),
        &p,
        EncoderActivation::Linear,
    )
    .unwrap();
    let latent = aggregate(&stats).unwrap();
    let eps = DenseMatrix::row_vector(&[0.1, 0.9, -0.4]);
    let z = sample_latent(&latent, &eps).unwrap();
    for k in 0..3 {
        let expect = latent.mu.get(0, k) + latent.log_sigma.get(0, k).exp() * eps.get(0, k);
        assert!((z.get(0, k) - expect).abs() <= 1e-15);
    }
    // a relabelled copy of the context aggregates to the same latent
    let reversed: Vec<usize> = (0..6).rev().collect();
    let mut position = [0; 6];
    for (k, &v) in reversed.iter().enumerate() {
        position[v] = k;
    }
    let edges = g
        .edges()
        .iter()
        .map(|&(u, v)| (position[u].min(position[v]), position[u].max(position[v])));
    let h = Graph::new(
        Arc::new(g.features().select_rows(&reversed).unwrap()),
        edges.collect(),
    )
    .unwrap();
    let other = aggregate(
        &encode(
            &Arc::new(h.normalized_adjacency()),
            h.features(),
            &p,
            EncoderActivation::Linear,
        )
        .unwrap(),
    )
    .unwrap();
    let z2 = sample_latent(&other, &eps).unwrap();
    let a = decode(g.features(), &z, &p).unwrap();
    let b = decode(g.features(), &z2, &p).unwrap();
    assert!(a.u.max_abs_diff(&b.u) <= 1e-12);
}

#[test]
fn baseline_bound_matches_dense_evaluation() {
    let g = random_graph(5, 0.5, 3, 12);
    let mut r = rng(12);
    let p = VgaeParams::init(3, &small_config(), &mut r);
    let eps = signed_matrix(5, 3, 0.0, 1.0, &mut r);
    let input = ContextInput::from_graph(&g);
    let target = ReconTarget::from_graph(&g, true).unwrap();
    let got = vgae_elbo(
        &p,
        &VgaeBatch {
            input: &input,
            target: &target,
        },
        EncoderActivation::Linear,
        &eps,
    )
    .unwrap();

    let as_npgnn = ModelParams {
        w1: p.w1.clone(),
        w_mu: p.w_mu.clone(),
        w_sigma: p.w_sigma.clone(),
        ..ModelParams::zeros(3, &small_config())
    };
    let (mu, ls) = oracle_encode(&g, &as_npgnn, EncoderActivation::Linear);
    let z: M = (0..5)
        .map(|i| {
            (0..3)
                .map(|k| mu[i][k] + ls[i][k].exp() * eps.get(i, k))
                .collect()
        })
        .collect();
    let recon = oracle_recon(&z, &g);
    let zeros = [0.0; 3];
    let kl: f64 = (0..5)
        .map(|i| oracle_kl(&mu[i], &ls[i], &zeros, &zeros))
        .sum::<f64>()
        / 25.0;
    assert!((got.recon - recon).abs() <= 1e-12);
    assert!((got.kl - kl).abs() <= 1e-12);
}

#[test]
fn predicted_scores_use_training_latent_mean() {
    let (g, _) = sbm_fixture();
    let split = make_transductive_split(&g, 0.1, 0.05, &mut rng_stream(0, 0)).unwrap();
    let cfg = TrainConfig {
        iterations: 5,
        ..TrainConfig::default()
    };
    let out = train(&split, &cfg).unwrap();
    let TrainedParams::Npgnn(p) = &out.model.params else {
        panic!("expected NPGNN parameters");
    };
    let stats = encode(
        &Arc::new(split.train_graph.normalized_adjacency()),
        g.features(),
        p,
        out.model.activation,
    )
    .unwrap();
    let dec = decode(g.features(), &aggregate(&stats).unwrap().mu, p).unwrap();
    let pairs: Vec<(usize, usize)> = split
        .test_pos
        .iter()
        .chain(&split.test_neg)
        .copied()
        .collect();
    let scores = predict_scores(&out.model, &split, &pairs).unwrap();
    for (&(i, j), s) in pairs.iter().zip(&scores) {
        assert_eq!(*s, edge_probability(&dec, i, j).unwrap());
    }
    assert_eq!(out.model.activation, EncoderActivation::Relu);
    assert_eq!(cfg.model, ModelKind::Npgnn);
}

#[test]
fn vgae_scores_ignore_held_out_edges() {
    let (g, _) = sbm_fixture();
    let split = make_transductive_split(&g, 0.1, 0.05, &mut rng_stream(1, 0)).unwrap();
    let p = VgaeParams::init(4, &ModelConfig::default(), &mut rng(1));
    let model = TrainedModel {
        params: TrainedParams::Vgae(p.clone()),
        activation: EncoderActivation::Linear,
    };
    let seen = Graph::new(g.shared_features(), split.train_edges_global()).unwrap();
    let as_npgnn = ModelParams {
        w1: p.w1.clone(),
        w_mu: p.w_mu.clone(),
        w_sigma: p.w_sigma.clone(),
        ..ModelParams::zeros(4, &ModelConfig::default())
    };
    let (mu, _) = oracle_encode(&seen, &as_npgnn, EncoderActivation::Linear);
    let scores = predict_scores(&model, &split, &split.test_pos).unwrap();
    for (&(i, j), s) in split.test_pos.iter().zip(&scores) {
        let dot: f64 = mu[i].iter().zip(&mu[j]).map(|(a, b)| a * b).sum();
        assert!((s - sig(dot)).abs() <= 1e-12);
    }
}
