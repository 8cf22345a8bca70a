//! Seeded citation-like graphs: a contextual stochastic block model with
//! bag-of-words features. Used for sanity runs when no real dataset is on disk.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{GraphDataset, Split};
use crate::rng::rng_for;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    /// Expected degree.
    pub avg_degree: f64,
    /// Fraction of edges that join nodes of the same class.
    pub homophily: f64,
    /// Active words per node.
    pub words_per_node: usize,
    /// Probability a word comes from the node's class vocabulary.
    pub topic_purity: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 2708,
            d: 1433,
            classes: 7,
            avg_degree: 3.9,
            homophily: 0.81,
            words_per_node: 18,
            topic_purity: 0.3,
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Generates a dataset. Identical `(spec, seed)` pairs give identical graphs.
pub fn citation_like(spec: &SyntheticSpec, seed: u64) -> GraphDataset {
    let mut rng = rng_for(seed, &[0x5e17]);
    let (n, d, c) = (spec.n, spec.d, spec.classes.max(1));

    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }

    let vocab = (d / c).max(1);
    let mut features = Tensor::zeros(&[n, d]);
    for i in 0..n {
        for _ in 0..spec.words_per_node {
            let w = if rng.gen::<f64>() < spec.topic_purity {
                (labels[i] * vocab + rng.gen_range(0..vocab)).min(d - 1)
            } else {
                rng.gen_range(0..d)
            };
            features.set(i, w, 1.0);
        }
    }

    let n_edges = (spec.avg_degree * n as f64 / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(n_edges);
    while edges.len() < n_edges && n > 1 {
        let u = rng.gen_range(0..n);
        let v = if rng.gen::<f64>() < spec.homophily {
            *by_class[labels[u]].choose(&mut rng).unwrap()
        } else {
            rng.gen_range(0..n)
        };
        if u != v {
            edges.push((u, v));
        }
    }

    let mut split = vec![Split::None; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut taken = vec![0; c];
    let mut rest = Vec::new();
    for &i in &order {
        if taken[labels[i]] < spec.train_per_class {
            taken[labels[i]] += 1;
            split[i] = Split::Train;
        } else {
            rest.push(i);
        }
    }
    for (k, &i) in rest.iter().enumerate() {
        if k < spec.val {
            split[i] = Split::Val;
        } else if k < spec.val + spec.test {
            split[i] = Split::Test;
        }
    }

    GraphDataset::new(features, labels, c, edges, split).expect("generator output is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_determinism() {
        let spec = SyntheticSpec {
            n: 300,
            d: 50,
            classes: 3,
            val: 60,
            test: 100,
            ..SyntheticSpec::default()
        };
        let a = citation_like(&spec, 9);
        assert_eq!(a.indices(Split::Train).len(), 60);
        assert_eq!(a.indices(Split::Val).len(), 60);
        assert_eq!(a.indices(Split::Test).len(), 100);
        assert_eq!(a, citation_like(&spec, 9));
        assert_ne!(a.edges(), citation_like(&spec, 10).edges());
    }
}
