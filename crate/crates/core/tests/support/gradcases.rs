//! Central finite-difference cases for every differentiable op and the
//! composite blocks. Each case returns its per-input relative errors.

#![allow(dead_code)]

use retromem_core::decoder::ConvLstmCell;
use retromem_core::encoder::Dma;
use retromem_core::gradcheck;
use retromem_core::ipr::{Ipr, IprConfig};
use retromem_core::loss::total_loss;
use retromem_core::memory::{consistency_loss, Enhancer};
use retromem_core::nn::{grid_to_tokens, Bound, Group, ParamStore, Scope};
use retromem_core::rng::Rng;
use retromem_core::{Graph, Result, Tensor, Var};

pub const TOL: f64 = 1e-3;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub type Case = (&'static str, Vec<f64>);

pub fn worst(errs: &[f64]) -> f64 {
    errs.iter().copied().fold(0.0, f64::max)
}

/// Weighted sum so every output element carries a distinct cotangent.
pub fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let w = Rng::new(seed ^ 0x9e37).normal_tensor::<f64>(&shape, 1.0);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn run(inputs: &[Tensor<f64>], f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>) -> Vec<f64> {
    gradcheck::check(inputs, f)
        .expect("gradient check runs")
        .rel_errors
}

/// Inputs kept away from the relu kink so central differences stay smooth.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let mut x = rng.normal_tensor::<f64>(shape, 1.0);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1f64.copysign(*v);
        }
    }
    x
}

fn random_mask(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n)
            .map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap()
}

pub fn op_cases(seed: u64) -> Vec<Case> {
    let mut out = Vec::new();
    let mut rng = Rng::new(seed);
    let a = rng.normal_tensor::<f64>(&[3, 4], 1.0);
    let b = rng.normal_tensor::<f64>(&[3, 4], 1.0);
    out.push((
        "add/sub/mul/scale/add_scalar",
        run(&[a.clone(), b], |g, v| {
            let s = g.add(v[0], v[1])?;
            let d = g.sub(s, v[1])?;
            let m = g.mul(d, v[1])?;
            let c = g.scale(m, 0.7)?;
            let c = g.add_scalar(c, 0.3)?;
            probe(g, c, seed)
        }),
    ));
    out.push((
        "relu",
        run(&[away_from_zero(&mut rng, &[2, 5])], |g, v| {
            let r = g.relu(v[0])?;
            probe(g, r, seed)
        }),
    ));
    out.push((
        "sigmoid/tanh/gelu",
        run(&[a], |g, v| {
            let s = g.sigmoid(v[0])?;
            let t = g.tanh(v[0])?;
            let e = g.gelu(v[0])?;
            let u = g.add(s, t)?;
            let u = g.add(u, e)?;
            probe(g, u, seed)
        }),
    ));
    out.push((
        "recip",
        run(&[rng.uniform_tensor::<f64>(&[4], 0.5, 2.0)], |g, v| {
            let r = g.recip(v[0])?;
            probe(g, r, seed)
        }),
    ));

    let a = rng.normal_tensor::<f64>(&[3, 5], 1.0);
    let b = rng.normal_tensor::<f64>(&[5, 4], 1.0);
    out.push((
        "matmul/transpose/reshape",
        run(&[a.clone(), b], |g, v| {
            let c = g.matmul(v[0], v[1])?;
            let ct = g.transpose(c)?;
            let r = g.reshape(ct, &[2, 6])?;
            probe(g, r, seed)
        }),
    ));
    let c = rng.normal_tensor::<f64>(&[3, 2], 1.0);
    out.push((
        "concat/slice",
        run(&[a.clone(), c], |g, v| {
            let cat = g.concat(&[v[0], v[1]], 1)?;
            let s = g.slice(cat, 1, 2, 4)?;
            probe(g, s, seed)
        }),
    ));
    let bias = rng.normal_tensor::<f64>(&[5], 1.0);
    let rows = rng.normal_tensor::<f64>(&[3, 1], 1.0);
    out.push((
        "add_bias/scale_rows",
        run(&[a.clone(), bias, rows], |g, v| {
            let x = g.add_bias(v[0], v[1])?;
            let y = g.scale_rows(x, v[2])?;
            probe(g, y, seed)
        }),
    ));
    let gamma = rng.normal_tensor::<f64>(&[5], 1.0);
    let beta = rng.normal_tensor::<f64>(&[5], 1.0);
    out.push((
        "layer_norm",
        run(&[a.clone(), gamma, beta], |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2])?;
            probe(g, y, seed)
        }),
    ));
    for axis in 0..2 {
        out.push((
            "softmax/l2_normalize",
            run(std::slice::from_ref(&a), |g, v| {
                let s = g.softmax(v[0], axis)?;
                let n = g.l2_normalize(v[0], axis)?;
                let y = g.add(s, n)?;
                probe(g, y, seed)
            }),
        ));
    }

    let x = rng.normal_tensor::<f64>(&[2, 3, 6, 5], 1.0);
    for (k, stride, pad) in [(1, 1, 0), (3, 1, 1), (5, 1, 2), (3, 2, 1)] {
        if (6 + 2 * pad - k) % stride != 0 || (5 + 2 * pad - k) % stride != 0 {
            continue;
        }
        let w = rng.normal_tensor::<f64>(&[4, 3, k, k], 0.5);
        let b = rng.normal_tensor::<f64>(&[4], 0.5);
        out.push((
            "conv2d",
            run(&[x.clone(), w, b], |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
                probe(g, y, seed)
            }),
        ));
    }
    let small = rng.normal_tensor::<f64>(&[1, 2, 3, 4], 1.0);
    out.push((
        "bilinear resize",
        run(std::slice::from_ref(&small), |g, v| {
            let up = g.bilinear_upsample(v[0], 2)?;
            let down = g.resize_bilinear(v[0], 2, 3)?;
            let a = probe(g, up, seed)?;
            let b = probe(g, down, seed + 1)?;
            g.add(a, b)
        }),
    ));
    out.push((
        "global_avg_pool",
        run(&[small], |g, v| {
            let p = g.global_avg_pool(v[0])?;
            probe(g, p, seed)
        }),
    ));
    out.push((
        "patchify",
        run(&[rng.normal_tensor::<f64>(&[2, 3, 4, 8], 1.0)], |g, v| {
            let p = g.patchify(v[0], 4)?;
            probe(g, p, seed)
        }),
    ));

    let x = rng.normal_tensor::<f64>(&[1, 1, 4, 4], 2.0);
    let mask = random_mask(&mut rng, &[1, 1, 4, 4]);
    out.push((
        "bce/iou/mean",
        run(std::slice::from_ref(&x), |g, v| {
            let m = g.constant(mask.clone());
            let b = g.bce_with_logits(v[0], m)?;
            let i = g.iou_loss(v[0], m)?;
            let s = g.mean(v[0])?;
            let s = g.mul(s, s)?;
            let l = g.add(b, i)?;
            g.add(l, s)
        }),
    ));
    let soft = rng.uniform_tensor::<f64>(&[1, 1, 4, 4], 0.1, 0.9);
    out.push((
        "bce/iou soft targets",
        run(&[x, soft], |g, v| {
            let b = g.bce_with_logits(v[0], v[1])?;
            let i = g.iou_loss(v[0], v[1])?;
            g.add(b, i)
        }),
    ));
    out
}

fn randomize(store: &mut ParamStore<f64>, seed: u64, std: f64) {
    let mut rng = Rng::new(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = rng.normal_tensor(&shape, std);
    }
}

/// Check over every parameter of `store` plus `extra`.
fn module(
    store: &ParamStore<f64>,
    extra: &[Tensor<f64>],
    seed: u64,
    f: impl Fn(&mut Graph<f64>, &Bound, &[Var]) -> Result<Var>,
) -> Vec<f64> {
    let n = store.len();
    let mut inputs: Vec<Tensor<f64>> = store.params().iter().map(|p| p.value.clone()).collect();
    inputs.extend_from_slice(extra);
    run(&inputs, |g, vars| {
        let b = Bound::from_vars(vars[..n].to_vec());
        let y = f(g, &b, &vars[n..])?;
        probe(g, y, seed)
    })
}

fn small_ipr() -> IprConfig {
    IprConfig {
        latent_dim: 4,
        heads: 2,
        proto_tokens: 2,
        graph_nodes: 2,
    }
}

fn ipr_fixture(seed: u64) -> (Ipr, ParamStore<f64>) {
    let mut store = ParamStore::<f64>::new();
    let ipr = Ipr::new(small_ipr(), 4, &mut store, &mut Rng::new(seed)).unwrap();
    randomize(&mut store, seed + 100, 0.5);
    (ipr, store)
}

pub fn block_cases(seed: u64) -> Vec<Case> {
    let mut out = Vec::new();
    {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::new(seed);
        let dma = Dma::new(
            &mut Scope::new(&mut store, &mut rng, Group::Adapter, "a"),
            4,
            2,
        )
        .unwrap();
        randomize(&mut store, seed, 0.5);
        let x = rng.normal_tensor(&[1, 4, 4, 4], 1.0);
        out.push((
            "dense multi-scale adapter",
            module(&store, &[x], seed, |g, p, v| dma.forward(g, p, v[0])),
        ));
    }
    {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::new(seed);
        let cell = ConvLstmCell::new(
            &mut Scope::new(&mut store, &mut rng, Group::Decoder, "c"),
            2,
            3,
        )
        .unwrap();
        randomize(&mut store, seed, 0.5);
        let x = rng.normal_tensor(&[1, 2, 4, 4], 1.0);
        let init = rng.normal_tensor(&[1, 2, 4, 4], 1.0);
        out.push((
            "convlstm",
            module(&store, &[x, init], seed, |g, p, v| {
                cell.step(g, p, v[0], v[1])
            }),
        ));
    }
    {
        let (ipr, store) = ipr_fixture(seed);
        let mut rng = Rng::new(seed);
        let f3 = rng.normal_tensor(&[1, 4, 4, 4], 1.0);
        let proto = rng.normal_tensor(&[1, 4], 1.0);
        out.push((
            "memory cross-attention",
            module(&store, &[f3, proto], seed, |g, p, v| {
                let toks = grid_to_tokens(g, v[0])?;
                let pt = ipr.prototype_tokens(g, p, v[1])?;
                Ok(ipr.memory_cross_attention(g, p, toks, pt)?.3)
            }),
        ));
        let tl = rng.normal_tensor(&[4, 4], 1.0);
        out.push((
            "graph interaction",
            module(&store, std::slice::from_ref(&tl), seed, |g, p, v| {
                let (a, tq) = ipr.graph_interact(g, p, v[0])?;
                let sa = g.sum(a)?;
                let sa = g.mul(sa, sa)?;
                let st = probe(g, tq, seed + 1)?;
                g.add(sa, st)
            }),
        ));
        let tq = rng.normal_tensor(&[2, 4], 1.0);
        out.push((
            "reconstruction",
            module(&store, &[tl, tq], seed, |g, p, v| {
                Ok(ipr.reconstruct(g, p, v[0], v[1])?.0)
            }),
        ));
    }
    {
        let mut store = ParamStore::<f64>::new();
        let enh = Enhancer::new(4, &mut store, &mut Rng::new(seed)).unwrap();
        randomize(&mut store, seed + 50, 0.5);
        let m = Rng::new(seed + 51).normal_tensor(&[3, 4], 1.0);
        out.push((
            "memory enhancer",
            module(&store, &[m], seed, |g, p, v| enh.forward(g, p, v[0])),
        ));
    }
    {
        let mut rng = Rng::new(seed + 300);
        let mut inputs: Vec<Tensor<f64>> = (0..3)
            .map(|_| rng.normal_tensor(&[1, 1, 4, 4], 1.5))
            .collect();
        let mask = random_mask(&mut rng, &[1, 1, 4, 4]);
        inputs.push(rng.normal_tensor(&[3, 4], 1.0));
        let mc = rng.normal_tensor::<f64>(&[3, 4], 1.0);
        out.push((
            "total loss with consistency",
            run(&inputs, |g, v| {
                let t = g.constant(mask.clone());
                let mc = g.constant(mc.clone());
                let lc = consistency_loss(g, v[3], mc)?;
                Ok(total_loss(g, [v[0], v[1], v[2]], t, Some(lc))?.0)
            }),
        ));
    }
    out
}
