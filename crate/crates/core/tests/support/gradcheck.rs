//! Analytic gradients against central finite differences.
//!
//! Each check returns `(name, max relative error)` per input or parameter.

use ddmp::numkit::layers::{softplus, softplus_backward};
use ddmp::numkit::{BatchNorm, CrossAttention, Linear, Matrix, NetConfig, Network, NoiseInput, NoiseNet, Param, PriorNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| Distribution::<f64>::sample(&StandardNormal, rng)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Largest relative error over entries whose magnitude is not negligible.
fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-7 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Central differences of `loss` with respect to every entry of `x`.
fn numeric_grad(x: &mut Matrix, mut loss: impl FnMut(&Matrix) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.as_slice().len());
    for i in 0..x.as_slice().len() {
        let orig = x.as_slice()[i];
        x.as_mut_slice()[i] = orig + STEP;
        let up = loss(x);
        x.as_mut_slice()[i] = orig - STEP;
        let down = loss(x);
        x.as_mut_slice()[i] = orig;
        out.push((up - down) / (2.0 * STEP));
    }
    out
}

/// Central differences with respect to parameter `idx` of a network.
fn numeric_param_grad<N>(net: &mut N, idx: usize, mut loss: impl FnMut(&mut N) -> f64) -> Vec<f64>
where
    N: ParamAccess,
{
    let len = net.param_mut(idx).value.as_slice().len();
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let orig = net.param_mut(idx).value.as_slice()[i];
        net.param_mut(idx).value.as_mut_slice()[i] = orig + STEP;
        let up = loss(net);
        net.param_mut(idx).value.as_mut_slice()[i] = orig - STEP;
        let down = loss(net);
        net.param_mut(idx).value.as_mut_slice()[i] = orig;
        out.push((up - down) / (2.0 * STEP));
    }
    out
}

trait ParamAccess {
    fn param_mut(&mut self, idx: usize) -> &mut Param;
    fn param_count(&mut self) -> usize;
}

macro_rules! param_access {
    ($t:ty) => {
        impl ParamAccess for $t {
            fn param_mut(&mut self, idx: usize) -> &mut Param {
                self.params_mut().into_iter().nth(idx).unwrap()
            }
            fn param_count(&mut self) -> usize {
                self.params_mut().len()
            }
        }
    };
}

param_access!(Linear);
param_access!(BatchNorm);
param_access!(CrossAttention);
param_access!(NoiseNet);
param_access!(PriorNet);

pub type Report = Vec<(String, f64)>;

pub fn linear() -> Report {
    let mut out = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut layer = Linear::new("lin", 4, 3, &mut rng);
    let mut x = randn(5, 4, &mut rng);
    let w = randn(5, 3, &mut rng);
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let gx = layer.backward(&x, &w).unwrap();
    let num = numeric_grad(&mut x, |x| dot(&layer.forward(x).unwrap(), &w));
    out.push(("linear input".to_string(), max_rel_err(gx.as_slice(), &num)));
    for idx in 0..layer.param_count() {
        let analytic = layer.param_mut(idx).grad.as_slice().to_vec();
        let num = numeric_param_grad(&mut layer, idx, |l| dot(&l.forward(&x).unwrap(), &w));
        out.push(("linear param".to_string(), max_rel_err(&analytic, &num)));
    }
    out
}


pub fn softplus_layer() -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = randn(4, 6, &mut rng).scale(3.0);
    let w = randn(4, 6, &mut rng);
    let g = softplus_backward(&x, &w).unwrap();
    let num = numeric_grad(&mut x, |x| dot(&softplus(x), &w));
    vec![("softplus".to_string(), max_rel_err(g.as_slice(), &num))]
}

pub fn batchnorm() -> Report {
    let mut out = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bn = BatchNorm::new("bn", 3);
    bn.gamma.value = randn(1, 3, &mut rng);
    bn.beta.value = randn(1, 3, &mut rng);
    let mut x = randn(6, 3, &mut rng);
    let w = randn(6, 3, &mut rng);
    let (_, cache) = bn.forward_train(&x).unwrap();
    for p in bn.params_mut() {
        p.zero_grad();
    }
    let gx = bn.backward(&cache, &w).unwrap();
    let mut probe = bn.clone();
    let num = numeric_grad(&mut x, |x| dot(&probe.forward_train(x).unwrap().0, &w));
    out.push(("batchnorm input".to_string(), max_rel_err(gx.as_slice(), &num)));
    for idx in 0..bn.param_count() {
        let analytic = bn.param_mut(idx).grad.as_slice().to_vec();
        let num = numeric_param_grad(&mut bn, idx, |b| dot(&b.forward_train(&x).unwrap().0, &w));
        out.push(("batchnorm param".to_string(), max_rel_err(&analytic, &num)));
    }
    out
}


pub fn cross_attention() -> Report {
    let mut out = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut attn = CrossAttention::new("attn", 3, 2, &mut rng);
    let mut xq = randn(4, 6, &mut rng);
    let mut xkv = randn(4, 6, &mut rng);
    let w = randn(4, 6, &mut rng);
    let (_, cache) = attn.forward_cached(&xq, &xkv).unwrap();
    for p in attn.params_mut() {
        p.zero_grad();
    }
    let (gq, gkv) = attn.backward(&cache, &w).unwrap();
    let kv = xkv.clone();
    let num = numeric_grad(&mut xq, |x| dot(&attn.forward(x, &kv).unwrap(), &w));
    out.push(("attention query source".to_string(), max_rel_err(gq.as_slice(), &num)));
    let q = xq.clone();
    let num = numeric_grad(&mut xkv, |x| dot(&attn.forward(&q, x).unwrap(), &w));
    out.push(("attention key/value source".to_string(), max_rel_err(gkv.as_slice(), &num)));
    for idx in 0..attn.param_count() {
        let analytic = attn.param_mut(idx).grad.as_slice().to_vec();
        let num = numeric_param_grad(&mut attn, idx, |a| dot(&a.forward(&q, &kv).unwrap(), &w));
        out.push(("attention param".to_string(), max_rel_err(&analytic, &num)));
    }
    out
}


pub fn noise_net() -> Report {
    let mut out = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = NetConfig { hidden: 8, tokens: 2, time_dim: 4, blocks: 2 };
    let mut net = NoiseNet::new(4, 3, cfg, &mut rng).unwrap();
    let noised = randn(6, 3, &mut rng);
    let features = randn(6, 4, &mut rng);
    let prior = softplus(&randn(6, 3, &mut rng));
    let timesteps = [1usize, 5, 17, 40, 99, 3];
    let target = randn(6, 3, &mut rng);
    let input = NoiseInput { noised: &noised, features: &features, prior: &prior, timesteps: &timesteps };
    net.forward_backward(&input, &target).unwrap();
    // Snapshot first: every finite-difference probe overwrites the gradients.
    let snapshot: Vec<(String, Vec<f64>)> =
        net.params().iter().map(|p| (p.name.clone(), p.grad.as_slice().to_vec())).collect();
    for (idx, (name, analytic)) in snapshot.iter().enumerate() {
        let num = numeric_param_grad(&mut net, idx, |n| n.forward_backward(&input, &target).unwrap());
        out.push((name.to_string(), max_rel_err(analytic, &num)));
    }
    out
}


pub fn prior_net() -> Report {
    let mut out = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net = PriorNet::new(4, 6, 3, &mut rng);
    let x = randn(5, 4, &mut rng);
    let mut targets = softplus(&randn(5, 3, &mut rng));
    for r in 0..5 {
        let s: f64 = targets.row(r).iter().sum();
        targets.row_mut(r).iter_mut().for_each(|v| *v /= s);
    }
    net.forward_backward(&x, &targets).unwrap();
    // Snapshot first: every finite-difference probe overwrites the gradients.
    let snapshot: Vec<(String, Vec<f64>)> =
        net.params().iter().map(|p| (p.name.clone(), p.grad.as_slice().to_vec())).collect();
    for (idx, (name, analytic)) in snapshot.iter().enumerate() {
        let num = numeric_param_grad(&mut net, idx, |n| n.forward_backward(&x, &targets).unwrap());
        out.push((name.to_string(), max_rel_err(analytic, &num)));
    }
    out
}
