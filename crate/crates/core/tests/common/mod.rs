#![allow(dead_code)]

use adgan_core::adgan::{
    loss_d, loss_g_dalign, AlignBatch, Architecture, CriticActivation, DiscriminatorBatch, ParameterSet, PenaltyMode,
    ViewEmbeddingSpec,
};
use adgan_core::diffnet::{Matrix, ParamId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so gradients that are zero up to
/// rounding are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn random_spec(rng: &mut impl Rng) -> ViewEmbeddingSpec {
    let groups: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=3)).collect();
    let spec = ViewEmbeddingSpec::new(groups, rng.random_range(1..=4), rng.random_range(1..=8)).unwrap();
    if rng.random_bool(0.25) {
        spec.flat()
    } else {
        spec
    }
}

/// A small random architecture (each layer at most 8 units).
pub fn random_arch(rng: &mut impl Rng) -> Architecture {
    Architecture {
        survey: random_spec(rng),
        consumer: random_spec(rng),
        trunk_width: rng.random_range(1..=8),
        critic: if rng.random_bool(0.5) {
            CriticActivation::Linear
        } else {
            CriticActivation::Sigmoid
        },
    }
}

/// Max relative error between `analytic` and central differences of `f`
/// over every scalar of every parameter in `ids`.
pub fn fd_max_rel_err(
    params: &ParameterSet,
    ids: &[ParamId],
    analytic: &[Matrix],
    f: impl Fn(&ParameterSet) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (k, &id) in ids.iter().enumerate() {
        for i in 0..params.store.get(id).len() {
            let base = params.store.get(id).data()[i];
            probe.store.get_mut(id).data_mut()[i] = base + FD_STEP;
            let up = f(&probe);
            probe.store.get_mut(id).data_mut()[i] = base - FD_STEP;
            let down = f(&probe);
            probe.store.get_mut(id).data_mut()[i] = base;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[k].data()[i], numeric));
        }
    }
    worst
}

/// Zero biases put dead units exactly on the ReLU kink, where one-sided
/// differences disagree with the subgradient; random biases avoid that.
pub fn randomize_biases(params: &mut ParameterSet, rng: &mut impl Rng) {
    let ids: Vec<ParamId> = params
        .store
        .ids()
        .filter(|&id| params.store.name(id).ends_with(".b"))
        .collect();
    for id in ids {
        for v in params.store.get_mut(id).data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
}

pub struct LossErrors {
    pub d_with_penalty: f64,
    pub d_without_penalty: f64,
    pub g_align: f64,
}

/// Finite-difference check of both losses on one random small architecture
/// with a 4-sample batch.
pub fn check_losses(seed: u64) -> LossErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = random_arch(&mut rng);
    let mut params = ParameterSet::init(arch, &mut rng).unwrap();
    randomize_biases(&mut params, &mut rng);
    let (sd, ud) = (params.arch.survey_dim(), params.arch.consumer_dim());
    let n = 4;
    let u = random_matrix(n, ud, 0.0, 1.0, &mut rng);
    let real = random_matrix(n, sd, 0.0, 1.0, &mut rng);
    let fake = random_matrix(n, sd, 0.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let batch = DiscriminatorBatch {
        u: &u,
        real: &real,
        fake: &fake,
        labels: &labels,
    };
    let mode = if seed % 5 == 4 {
        PenaltyMode::Interpolate
    } else {
        PenaltyMode::Generated
    };

    let d_err = |lambda: f64| {
        let (_, grads) = loss_d(&params, &batch, lambda, mode, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        fd_max_rel_err(&params, &grads.ids, &grads.values, |p| {
            loss_d(p, &batch, lambda, mode, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
                .0
                .total
        })
    };

    let u_l = random_matrix(n, ud, 0.0, 1.0, &mut rng);
    let labels_l: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let align = AlignBatch {
        u_unpaired: &u_l,
        labels_unpaired: &labels_l,
        u_paired: &u,
        s_paired: &real,
        labels_paired: &labels,
    };
    let (_, g) = loss_g_dalign(&params, &align).unwrap();
    let g_align = fd_max_rel_err(&params, &g.ids, &g.values, |p| {
        loss_g_dalign(p, &align).unwrap().0.total
    });

    LossErrors {
        d_with_penalty: d_err(10.0),
        d_without_penalty: d_err(0.0),
        g_align,
    }
}

/// A random MLP (1-3 layers, at most 8 units each) with a per-sample scalar
/// output, and the objective `mean(output)` or a cross-entropy.
pub struct RandomNet {
    pub graph: adgan_core::diffnet::Graph,
    pub store: adgan_core::diffnet::ParamStore,
    pub ids: Vec<ParamId>,
    pub input: adgan_core::diffnet::NodeId,
    pub critic: adgan_core::diffnet::NodeId,
    pub objective: adgan_core::diffnet::NodeId,
    pub x: Matrix,
}

pub fn random_net(seed: u64, max_layers: usize) -> RandomNet {
    use adgan_core::diffnet::{glorot_uniform, Graph, ParamStore};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mut graph = Graph::new();
    let rows = rng.random_range(1..=5);
    let in_dim = rng.random_range(1..=8);
    let input = graph.input(rows, in_dim);
    let layers = rng.random_range(1..=max_layers);
    let mut h = input;
    let mut width = in_dim;
    let mut ids = Vec::new();
    for l in 0..layers {
        let out = if l + 1 == layers { 1 } else { rng.random_range(1..=8) };
        let w = store
            .insert(format!("l{l}.w"), glorot_uniform(width, out, &mut rng))
            .unwrap();
        let b = store
            .insert(format!("l{l}.b"), random_matrix(1, out, -0.5, 0.5, &mut rng))
            .unwrap();
        ids.extend([w, b]);
        let (pw, pb) = (graph.param(&store, w), graph.param(&store, b));
        let z = graph.matmul(h, pw).unwrap();
        h = graph.add_bias(z, pb).unwrap();
        if l + 1 < layers {
            h = if rng.random_bool(0.5) {
                graph.relu(h)
            } else {
                graph.sigmoid(h)
            };
        } else if rng.random_bool(0.3) {
            h = graph.sigmoid(h);
        }
        width = out;
    }
    let critic = h;
    let objective = if rng.random_bool(0.5) {
        graph.mean(critic)
    } else {
        // Cross-entropy over [critic, -critic, 2 critic] logits.
        let neg = graph.affine(critic, -1.0, 0.0);
        let dbl = graph.affine(critic, 2.0, 0.3);
        let logits = graph.concat(&[critic, neg, dbl]).unwrap();
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..3)).collect();
        graph.softmax_cross_entropy(logits, &labels).unwrap()
    };
    let x = random_matrix(rows, in_dim, -1.0, 1.0, &mut rng);
    RandomNet {
        graph,
        store,
        ids,
        input,
        critic,
        objective,
        x,
    }
}

fn store_fd(
    store: &adgan_core::diffnet::ParamStore,
    ids: &[ParamId],
    analytic: &[Matrix],
    f: impl Fn(&adgan_core::diffnet::ParamStore) -> f64,
) -> f64 {
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for (k, &id) in ids.iter().enumerate() {
        for i in 0..store.get(id).len() {
            let base = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = base + FD_STEP;
            let up = f(&probe);
            probe.get_mut(id).data_mut()[i] = base - FD_STEP;
            let down = f(&probe);
            probe.get_mut(id).data_mut()[i] = base;
            worst = worst.max(rel_err(analytic[k].data()[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Max relative error of the objective's parameter gradient.
pub fn net_first_order_err(net: &RandomNet) -> f64 {
    let tape = net.graph.forward(&net.store, std::slice::from_ref(&net.x)).unwrap();
    let g = net
        .graph
        .grad_params(&tape, net.objective, &net.store, &net.ids)
        .unwrap();
    store_fd(&net.store, &net.ids, &g, |s| {
        net.graph
            .forward(s, std::slice::from_ref(&net.x))
            .unwrap()
            .scalar(net.objective)
            .unwrap()
    })
}

/// Max relative error of the input-gradient penalty's parameter gradient.
pub fn net_penalty_err(seed: u64) -> f64 {
    use adgan_core::diffnet::GradientPenalty;
    let mut net = random_net(seed, 3);
    let gp = GradientPenalty::attach(&mut net.graph, net.critic, net.input).unwrap();
    let x = std::slice::from_ref(&net.x);
    let mut tape = net.graph.forward(&net.store, x).unwrap();
    let eval = gp.evaluate(&net.graph, &mut tape, &net.store, &net.ids).unwrap();
    store_fd(&net.store, &net.ids, &eval.grads, |s| {
        let mut t = net.graph.forward(s, x).unwrap();
        gp.evaluate(&net.graph, &mut t, s, &[]).unwrap().penalty
    })
}

/// Penalty of the linear critic `x -> a.x` and the worst deviation of its
/// gradient from `2 (|a| - 1) a / |a|`.
pub fn linear_critic_penalty(a: &[f64], rows: usize, seed: u64) -> (f64, f64) {
    use adgan_core::diffnet::{GradientPenalty, Graph, ParamStore};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let id = store.insert("a", Matrix::new(a.len(), 1, a.to_vec()).unwrap()).unwrap();
    let mut g = Graph::new();
    let x = g.input(rows, a.len());
    let pa = g.param(&store, id);
    let critic = g.matmul(x, pa).unwrap();
    let gp = GradientPenalty::attach(&mut g, critic, x).unwrap();
    let mut tape = g
        .forward(&store, &[random_matrix(rows, a.len(), -3.0, 3.0, &mut rng)])
        .unwrap();
    let eval = gp.evaluate(&g, &mut tape, &store, &[id]).unwrap();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dev = a
        .iter()
        .zip(eval.grads[0].data())
        .map(|(ai, gi)| (gi - 2.0 * (norm - 1.0) * ai / norm).abs())
        .fold(0.0, f64::max);
    (eval.penalty, dev)
}
