//! Seeded random MRF instances for property tests and benchmarks.

use rand::Rng;

use super::PairwiseMRF;
use crate::rng::rng_for;

/// Erdős–Rényi edge list with edge probability `p`.
pub fn erdos_renyi_edges(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rng_for(seed, &[0xe7]);
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

/// Random recursive tree: node `i > 0` attaches to a uniform earlier node.
pub fn random_tree_edges(n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rng_for(seed, &[0x7e]);
    (1..n).map(|i| (rng.gen_range(0..i), i)).collect()
}

/// Log-potentials drawn uniformly: `log φ ∈ [-field, field]`,
/// `log ψ ∈ [-coupling, coupling]`.
pub fn random_mrf(
    n: usize,
    k: usize,
    edges: &[(usize, usize)],
    field: f64,
    coupling: f64,
    seed: u64,
) -> PairwiseMRF {
    let mut rng = rng_for(seed, &[0xf1]);
    let mut draw = |s: f64| if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
    let log_phi = (0..n).map(|_| (0..k).map(|_| draw(field)).collect()).collect();
    let log_psi = edges
        .iter()
        .map(|&e| (e, (0..k * k).map(|_| draw(coupling)).collect()))
        .collect();
    PairwiseMRF::from_log(k, log_phi, log_psi).expect("generated model is valid")
}
