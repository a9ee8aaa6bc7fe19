#![allow(dead_code)]

use h2e::identifier::{irm_penalty, Identifier, WMode};
use h2e::nn::{balanced_softmax_loss, cross_entropy, soft_cross_entropy, Activation, Matrix, Network};
use h2e::rng::{self, Rng};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-3)`: relative above 1e-3, absolute below.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect(),
    )
}

pub fn random_prior(rng: &mut Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Plain nested-loop forward pass, written without the library's kernels.
/// Returns the logits and every layer's pre-activation.
#[allow(clippy::needless_range_loop)]
pub fn oracle_forward(net: &Network, x: &Matrix) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let mut pre_all = Vec::new();
    let mut out = Vec::new();
    for b in 0..x.rows() {
        let mut h: Vec<f64> = x.row(b).to_vec();
        let mut pres = Vec::new();
        for layer in net.layers() {
            let (i, o) = (layer.in_dim(), layer.out_dim());
            let mut next = vec![0.0; o];
            for r in 0..o {
                let mut s = layer.bias()[r];
                for c in 0..i {
                    s += layer.weight()[r * i + c] * h[c];
                }
                next[r] = s;
            }
            pres.push(next.clone());
            if layer.activation() == Activation::Relu {
                for v in &mut next {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h = next;
        }
        pre_all.push(pres);
        out.push(h);
    }
    (out, pre_all)
}

/// Random small network and a batch whose hidden pre-activations all stay
/// at least 1e-2 away from the ReLU kink.
pub fn random_case(rng: &mut Rng) -> (Network, Matrix, Vec<usize>, Vec<f64>) {
    loop {
        let d = rng.random_range(1..=8);
        let c = rng.random_range(2..=5);
        let depth = rng.random_range(0..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
        let net = Network::mlp(d, &hidden, c, rng).unwrap();
        let b = rng.random_range(1..=6);
        let x = random_matrix(rng, b, d, 2.0);
        let (_, pres) = oracle_forward(&net, &x);
        let safe = pres.iter().all(|layers| {
            layers[..layers.len() - 1]
                .iter()
                .all(|p| p.iter().all(|v| v.abs() > 1e-2))
        });
        if !safe {
            continue;
        }
        let labels = (0..b).map(|_| rng.random_range(0..c)).collect();
        let weights = (0..b).map(|_| rng.random_range(0.1..2.0)).collect();
        return (net, x, labels, weights);
    }
}

fn ce_of(net: &Network, x: &Matrix, y: &[usize], w: &[f64]) -> f64 {
    cross_entropy(&net.forward(x).unwrap(), y, w).unwrap().0
}

/// Max relative error between backprop and central differences over every
/// parameter of `cases` random networks under weighted cross entropy.
pub fn network_gradient_error(cases: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, "gradcheck.net");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (net, x, y, w) = random_case(&mut rng);
        let trace = net.forward_traced(&x).unwrap();
        let (_, up) = cross_entropy(trace.logits(), &y, &w).unwrap();
        let grads = net.backward(&trace, &up).unwrap();
        let analytic: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();
        let mut probe = net.clone();
        let mut k = 0;
        let n_slices = probe.param_slices().len();
        for s in 0..n_slices {
            let len = probe.param_slices()[s].len();
            for i in 0..len {
                let orig = probe.param_slices()[s][i];
                probe.param_slices_mut()[s][i] = orig + FD_STEP;
                let up = ce_of(&probe, &x, &y, &w);
                probe.param_slices_mut()[s][i] = orig - FD_STEP;
                let down = ce_of(&probe, &x, &y, &w);
                probe.param_slices_mut()[s][i] = orig;
                worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * FD_STEP)));
                k += 1;
            }
        }
        assert_eq!(k, analytic.len());
    }
    worst
}

/// Central differences of a scalar function of a logit matrix.
pub fn fd_logits(z: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(z.rows(), z.cols());
    let mut probe = z.clone();
    for i in 0..z.as_slice().len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        g.as_mut_slice()[i] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

fn max_err(a: &Matrix, n: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(n.as_slice())
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}

/// Worst error of the logit gradients of weighted CE, soft-label CE and
/// balanced softmax.
pub fn loss_gradient_error(cases: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, "gradcheck.loss");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let b = rng.random_range(1..=6);
        let c = rng.random_range(2..=5);
        let z = random_matrix(&mut rng, b, c, 3.0);
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let w: Vec<f64> = (0..b).map(|_| rng.random_range(0.1..2.0)).collect();
        let prior = random_prior(&mut rng, c);
        let mut t = random_matrix(&mut rng, b, c, 1.0);
        for r in 0..b {
            let row = t.row_mut(r);
            row.iter_mut().for_each(|v| *v = v.abs());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }

        let (_, g) = cross_entropy(&z, &y, &w).unwrap();
        worst = worst.max(max_err(&g, &fd_logits(&z, |m| cross_entropy(m, &y, &w).unwrap().0)));
        let (_, g) = soft_cross_entropy(&z, &t).unwrap();
        worst = worst.max(max_err(&g, &fd_logits(&z, |m| soft_cross_entropy(m, &t).unwrap().0)));
        let (_, g) = balanced_softmax_loss(&z, &y, &prior, &w).unwrap();
        worst = worst.max(max_err(
            &g,
            &fd_logits(&z, |m| balanced_softmax_loss(m, &y, &prior, &w).unwrap().0),
        ));
    }
    worst
}

/// Worst error of the IRMv1 penalty's logit gradient.
pub fn penalty_gradient_error(cases: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, "gradcheck.penalty");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let b = rng.random_range(1..=6);
        let c = rng.random_range(2..=5);
        let z = random_matrix(&mut rng, b, c, 3.0);
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let (_, g) = irm_penalty(&z, &y).unwrap();
        worst = worst.max(max_err(&g, &fd_logits(&z, |m| irm_penalty(m, &y).unwrap().0)));
    }
    worst
}

/// Worst error of the identifier objective's gradient in `w`, both modes.
pub fn w_gradient_error(cases: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, "gradcheck.w");
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let b = rng.random_range(1..=6);
        let c = rng.random_range(2..=5);
        let z = random_matrix(&mut rng, b, c, 3.0);
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let wts: Vec<f64> = (0..b).map(|_| rng.random_range(0.1..2.0)).collect();
        let mode = if case % 2 == 0 { WMode::Vector } else { WMode::Scalar };
        let mut id = Identifier::new(random_prior(&mut rng, c), mode, rng.random_range(-1.0..2.0)).unwrap();
        let w0: Vec<f64> = id.w().iter().map(|_| rng.random_range(-1.0..2.0)).collect();
        id.set_w(&w0).unwrap();
        let lambda = rng.random_range(0.0..10.0);
        let analytic = id.objective(&z, &y, &wts, lambda).unwrap().grad_w;
        for k in 0..w0.len() {
            let mut w = w0.clone();
            w[k] = w0[k] + FD_STEP;
            id.set_w(&w).unwrap();
            let up = id.objective(&z, &y, &wts, lambda).unwrap().value;
            w[k] = w0[k] - FD_STEP;
            id.set_w(&w).unwrap();
            let down = id.objective(&z, &y, &wts, lambda).unwrap().value;
            worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * FD_STEP)));
        }
        id.set_w(&w0).unwrap();
    }
    worst
}

/// Pairwise cosine similarities by direct dot products.
pub fn brute_cosine(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let ni: f64 = rows[i].iter().map(|a| a * a).sum::<f64>().sqrt();
            let nj: f64 = rows[j].iter().map(|a| a * a).sum::<f64>().sqrt();
            m[i][j] = if i == j {
                1.0
            } else if ni == 0.0 || nj == 0.0 {
                0.0
            } else {
                dot / (ni * nj)
            };
        }
    }
    m
}

/// The reference bundle's configuration with the given seed.
pub fn reference_config(seed: u64) -> h2e::config::ExperimentConfig {
    h2e::config::ExperimentConfig::parse(&format!(
        "seed = {seed}\ndata.classes = 10\ndata.dim = 32\ndata.contexts = 6\ndata.n_max = 500\n\
         data.imbalance = 20\ndata.noise_rate = 0.3\ndata.blue_fraction = 0.5\n"
    ))
    .unwrap()
}
