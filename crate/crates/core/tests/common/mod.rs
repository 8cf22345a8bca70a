#![allow(dead_code)]

use gnnlab_core::graph::{normalize_edges, NormalizedAdjacency};
use gnnlab_core::{Tape, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

pub fn random_edges(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn random_adjacency(rng: &mut impl Rng, n: usize, p: f64) -> NormalizedAdjacency {
    let edges = random_edges(rng, n, p);
    normalize_edges(n, &edges)
}

/// Plain triple loop.
pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a.get(i, t) * b.get(t, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Dense `(D+I)^-1/2 (A+I) (D+I)^-1/2` from an edge list.
pub fn dense_normalized(n: usize, edges: &[(usize, usize)]) -> Tensor {
    let mut a = Tensor::eye(n);
    for &(u, v) in edges {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, a.get(i, j) / (deg[i].sqrt() * deg[j].sqrt()));
        }
    }
    out
}

pub type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var, TensorError> + 'a;

/// Builds `sum(sigmoid(out R))` for a fixed random projection `R`, so every
/// output entry receives a distinct upstream gradient.
fn scalarize(tape: &mut Tape, out: Var, proj_seed: u64) -> Result<Var, TensorError> {
    if tape.value(out).len() == 1 {
        let y = tape.sigmoid(out)?;
        return tape.sum(y);
    }
    let cols = tape.value(out).cols();
    let r = random_tensor(&mut rng(proj_seed), cols, 2);
    let r = tape.constant(r)?;
    let y = tape.matmul(out, r)?;
    let y = tape.sigmoid(y)?;
    tape.sum(y)
}

fn loss_at(build: &Build, leaves: &[Tensor], proj_seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.param(t.clone()).unwrap()).collect();
    let out = build(&mut tape, &vars).unwrap();
    let loss = scalarize(&mut tape, out, proj_seed).unwrap();
    tape.value(loss).data()[0]
}

/// Worst relative error between reverse-mode and central-difference
/// gradients, measured per leaf as `|a - n|_inf / max(|a|_inf, |n|_inf)`.
pub fn gradient_error(build: &Build, leaves: &[Tensor], proj_seed: u64) -> f64 {
    let h = 1e-5;
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.param(t.clone()).unwrap()).collect();
    let out = build(&mut tape, &vars).unwrap();
    let loss = scalarize(&mut tape, out, proj_seed).unwrap();
    tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (li, v) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(leaves[li].shape()));
        let mut numeric = Tensor::zeros(leaves[li].shape());
        for e in 0..leaves[li].len() {
            let mut plus = leaves.to_vec();
            plus[li].data_mut()[e] += h;
            let mut minus = leaves.to_vec();
            minus[li].data_mut()[e] -= h;
            let d = (loss_at(build, &plus, proj_seed) - loss_at(build, &minus, proj_seed)) / (2.0 * h);
            numeric.data_mut()[e] = d;
        }
        let denom = analytic.max_abs().max(numeric.max_abs()).max(1e-6);
        worst = worst.max(analytic.max_abs_diff(&numeric) / denom);
    }
    worst
}
