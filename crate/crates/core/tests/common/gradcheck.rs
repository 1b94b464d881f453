//! Central finite-difference oracle for the network layers and the composed loss.

use evflight::filterbank::SampleTensor;
use evflight::nnet::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Denominator floor so gradients that are both ~0 do not divide by zero.
pub const FLOOR: f64 = 1e-7;

pub struct Check {
    pub name: String,
    pub checked: usize,
    pub max_rel: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_rel < TOL
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Compares `analytic` with central differences of `f` at `x`.
pub fn compare(name: String, x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Check {
    assert_eq!(x.len(), analytic.len(), "{name}");
    let mut xp = x.to_vec();
    let mut max_rel: f64 = 0.0;
    for i in 0..x.len() {
        xp[i] = x[i] + H;
        let up = f(&xp);
        xp[i] = x[i] - H;
        let down = f(&xp);
        xp[i] = x[i];
        max_rel = max_rel.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    Check {
        name,
        checked: x.len(),
        max_rel,
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-s..s)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Values spaced at least 1e-3 apart, so no max-pool window has a near tie.
fn distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.01).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

fn conv_case(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let spec = ConvSpec {
        in_c: rng.gen_range(1..4),
        out_c: rng.gen_range(1..4),
        kernel: [1, 3][rng.gen_range(0..2)],
        stride: rng.gen_range(1..3),
        pad: rng.gen_range(0..2),
    };
    let (h, w) = (rng.gen_range(3..7), rng.gen_range(3..7));
    let x = uniform(rng, spec.in_c * h * w, 1.0);
    let wt = uniform(rng, spec.weight_len(), 1.0);
    let b = uniform(rng, spec.out_c, 1.0);
    let (oh, ow) = spec.out_hw(h, w);
    let r = uniform(rng, spec.out_c * oh * ow, 1.0);
    let fwd = |x: &[f64], wt: &[f64], b: &[f64]| {
        let t = Tensor::from_vec(spec.in_c, h, w, x.to_vec()).unwrap();
        dot(&conv2d_forward(&t, wt, b, &spec, &mut Vec::new()).unwrap().data, &r)
    };
    let t = Tensor::from_vec(spec.in_c, h, w, x.clone()).unwrap();
    let mut col = Vec::new();
    conv2d_forward(&t, &wt, &b, &spec, &mut col).unwrap();
    let dy = Tensor::from_vec(spec.out_c, oh, ow, r.clone()).unwrap();
    let (mut dw, mut db) = (vec![0.0; wt.len()], vec![0.0; b.len()]);
    let dx = conv2d_backward((h, w), &col, &dy, &wt, &spec, &mut dw, &mut db, true).unwrap();
    let tag = format!("conv2d {spec:?} on {h}x{w}");
    vec![
        compare(format!("{tag} d/dx"), &x, &dx.data, |v| fwd(v, &wt, &b)),
        compare(format!("{tag} d/dW"), &wt, &dw, |v| fwd(&x, v, &b)),
        compare(format!("{tag} d/db"), &b, &db, |v| fwd(&x, &wt, v)),
    ]
}

fn pool_case(rng: &mut ChaCha8Rng) -> Check {
    let (c, h, w) = (rng.gen_range(1..4), rng.gen_range(2..8), rng.gen_range(2..8));
    let x = distinct(rng, c * h * w);
    let r = uniform(rng, c * (h / 2) * (w / 2), 1.0);
    let f = |v: &[f64]| dot(&maxpool2x2_forward(&Tensor::from_vec(c, h, w, v.to_vec()).unwrap()).unwrap().0.data, &r);
    let (_, arg) = maxpool2x2_forward(&Tensor::from_vec(c, h, w, x.clone()).unwrap()).unwrap();
    let dx = maxpool2x2_backward(&Tensor::from_vec(c, h / 2, w / 2, r.clone()).unwrap(), &arg, (c, h, w));
    compare(format!("maxpool2x2 on ({c}, {h}, {w})"), &x, &dx.data, f)
}

fn elu_case(rng: &mut ChaCha8Rng) -> Check {
    let n = rng.gen_range(5..40);
    let x = uniform(rng, n, 3.0);
    let r = uniform(rng, n, 1.0);
    let f = |v: &[f64]| {
        let mut y = v.to_vec();
        elu_forward(&mut y);
        dot(&y, &r)
    };
    let mut y = x.clone();
    elu_forward(&mut y);
    let mut dy = r.clone();
    elu_backward(&y, &mut dy);
    compare(format!("elu on {n}"), &x, &dy, f)
}

fn linear_case(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let (n_in, n_out) = (rng.gen_range(1..12), rng.gen_range(1..8));
    let x = uniform(rng, n_in, 1.0);
    let w = uniform(rng, n_in * n_out, 1.0);
    let b = uniform(rng, n_out, 1.0);
    let r = uniform(rng, n_out, 1.0);
    let fwd = |x: &[f64], w: &[f64], b: &[f64]| dot(&linear_forward(x, w, b).unwrap(), &r);
    let (mut dw, mut db) = (vec![0.0; w.len()], vec![0.0; n_out]);
    let dx = linear_backward(&x, &r, &w, &mut dw, &mut db);
    let tag = format!("linear {n_in}->{n_out}");
    vec![
        compare(format!("{tag} d/dx"), &x, &dx, |v| fwd(v, &w, &b)),
        compare(format!("{tag} d/dW"), &w, &dw, |v| fwd(&x, v, &b)),
        compare(format!("{tag} d/db"), &b, &db, |v| fwd(&x, &w, v)),
    ]
}

fn grid_case(rng: &mut ChaCha8Rng) -> Check {
    let g = rng.gen_range(1..4);
    let (c, h, w) = (rng.gen_range(1..3), rng.gen_range(g..g + 5), rng.gen_range(g..g + 5));
    let x = uniform(rng, c * h * w, 1.0);
    let r = uniform(rng, c * g * g, 1.0);
    let f = |v: &[f64]| dot(&grid_pool_forward(&Tensor::from_vec(c, h, w, v.to_vec()).unwrap(), g).unwrap(), &r);
    let dx = grid_pool_backward(&r, (c, h, w), g);
    compare(format!("grid pool {g} on ({c}, {h}, {w})"), &x, &dx.data, f)
}

fn random_pred(rng: &mut ChaCha8Rng) -> Prediction<f64> {
    Prediction {
        tau_s: rng.gen_range(0.0..0.5),
        theta_logits: uniform(rng, 12, 3.0),
        r_logits: uniform(rng, 4, 3.0),
    }
}

fn random_target(rng: &mut ChaCha8Rng) -> Target {
    Target {
        tau_s: rng.gen_range(0.0..0.5),
        theta_bin: rng.gen_range(0..12),
        r_bin: rng.gen_range(0..4),
    }
}

fn loss_case(rng: &mut ChaCha8Rng) -> Check {
    let b = rng.gen_range(1..5);
    let preds: Vec<_> = (0..b).map(|_| random_pred(rng)).collect();
    let targets: Vec<_> = (0..b).map(|_| random_target(rng)).collect();
    let w = LossWeights {
        w_ttc: rng.gen_range(0.1..2.0),
        w_theta: rng.gen_range(0.1..2.0),
        w_r: rng.gen_range(0.1..2.0),
    };
    let scale = rng.gen_range(0.2..2.0);
    let flat = |p: &[Prediction<f64>]| -> Vec<f64> {
        p.iter()
            .flat_map(|q| std::iter::once(q.tau_s).chain(q.theta_logits.iter().copied()).chain(q.r_logits.iter().copied()))
            .collect()
    };
    let unflat = |v: &[f64]| -> Vec<Prediction<f64>> {
        v.chunks(17)
            .map(|c| Prediction {
                tau_s: c[0],
                theta_logits: c[1..13].to_vec(),
                r_logits: c[13..].to_vec(),
            })
            .collect()
    };
    let (_, grads) = loss(&preds, &targets, &w, scale).unwrap();
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|g| std::iter::once(g.tau_s).chain(g.theta.iter().copied()).chain(g.r.iter().copied()))
        .collect();
    compare(format!("multi-objective loss, batch {b}"), &flat(&preds), &analytic, |v| {
        loss(&unflat(v), &targets, &w, scale).unwrap().0.total
    })
}

fn random_sample(rng: &mut ChaCha8Rng, (c, h, w): (usize, usize, usize)) -> SampleTensor {
    let mut s = SampleTensor::zeros(c, h, w);
    s.data.iter_mut().for_each(|v| *v = rng.gen());
    s.tau_ms = rng.gen_range(0.0..400.0);
    s.theta_bin = rng.gen_range(0..12);
    s.r_bin = rng.gen_range(0..4);
    s
}

/// Full network: every parameter checked against the batch loss.
fn network_case(rng: &mut ChaCha8Rng, grid: usize) -> Check {
    let c = rng.gen_range(1..4);
    let hw = rng.gen_range(8..11);
    let widths = [2, 3, 3, 2, 3, 2, 3];
    let mut cfg = ModelConfig::custom((c, hw, hw), widths, grid, 3);
    cfg.tau_scale = 0.3;
    let mut net = Network::<f64>::new(cfg.clone(), rng.gen()).unwrap();
    // Non-zero heads and biases so every path carries gradient.
    net.params.iter_mut().for_each(|p| *p += rng.gen_range(-0.3..0.3));
    let batch: Vec<SampleTensor> = (0..2).map(|_| random_sample(rng, (c, hw, hw))).collect();
    let refs: Vec<&SampleTensor> = batch.iter().collect();
    let w = LossWeights::default();
    let (_, grad) = batch_gradient(&net, &refs, &w, 1).unwrap();
    let params = net.params.clone();
    compare(format!("composed network ({c}, {hw}, {hw}) grid {grid}"), &params, &grad, |v| {
        let n = Network::from_params(cfg.clone(), v.to_vec()).unwrap();
        let preds = n.forward(&batch).unwrap();
        let targets: Vec<Target> = batch.iter().map(Target::of).collect();
        loss(&preds, &targets, &w, n.config().tau_scale).unwrap().0.total
    })
}

/// Runs every layer type on several random shapes plus the composed loss.
pub fn suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..6 {
        out.extend(conv_case(&mut rng));
    }
    for _ in 0..5 {
        out.push(pool_case(&mut rng));
        out.push(elu_case(&mut rng));
        out.push(grid_case(&mut rng));
        out.push(loss_case(&mut rng));
    }
    for _ in 0..4 {
        out.extend(linear_case(&mut rng));
    }
    for grid in [1, 2, 1] {
        out.push(network_case(&mut rng, grid));
    }
    out
}
