//! Pairwise discrete Markov random fields and coordinate-ascent mean-field
//! inference.
//!
//! The model is
//!
//! ```text
//! p(z) ∝ ∏_i φ_i(z_i) ∏_(i,j)∈E ψ_ij(z_i, z_j)
//! ```
//!
//! and the mean-field update for node `i` is
//!
//! ```text
//! q_i(a) ∝ exp( log φ_i(a) + Σ_j∈N(i) Σ_b q_j(b) log ψ_ij(a, b) )
//! ```
//!
//! Potentials are stored as logarithms. Each undirected edge keeps one
//! `k × k` table oriented `(i, j)`; the reverse orientation reads it
//! transposed, so `ψ_ji(b, a) = ψ_ij(a, b)` holds by construction.

pub mod io;
pub mod random;
pub mod taylor;

use rand::Rng;
use thiserror::Error;

use crate::rng::rng_for;

/// Largest `k^n` the exact enumerator accepts.
pub const ENUMERATION_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum MrfError {
    #[error("potential entry {value} at {context} is not strictly positive and finite")]
    NonPositive { value: f64, context: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("node {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) given more than once")]
    DuplicateEdge(usize, usize),
    #[error("k^n = {k}^{n} exceeds the enumeration bound 2^20")]
    EnumerationBound { n: usize, k: usize },
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("initial marginals are not on the simplex: {0}")]
    BadInit(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseMRF {
    n: usize,
    k: usize,
    log_phi: Vec<Vec<f64>>,
    edges: Vec<(usize, usize)>,
    /// Row-major `k × k` per edge, indexed `[a * k + b]` for `(z_i, z_j) = (a, b)`.
    log_psi: Vec<Vec<f64>>,
    /// Per node: `(edge index, node is the first endpoint)`.
    incident: Vec<Vec<(usize, bool)>>,
}

fn log_positive(v: f64, context: impl FnOnce() -> String) -> Result<f64, MrfError> {
    if v > 0.0 && v.is_finite() {
        Ok(v.ln())
    } else {
        Err(MrfError::NonPositive {
            value: v,
            context: context(),
        })
    }
}

impl PairwiseMRF {
    /// Builds a model from positive potentials. `phi[i]` has length `k`;
    /// each `psi` entry is `((i, j), table)` with `table[a][b] = ψ_ij(a, b)`.
    pub fn new(
        k: usize,
        phi: Vec<Vec<f64>>,
        psi: Vec<((usize, usize), Vec<Vec<f64>>)>,
    ) -> Result<Self, MrfError> {
        let n = phi.len();
        if k == 0 {
            return Err(MrfError::Shape("k must be at least 1".into()));
        }
        let mut log_phi = Vec::with_capacity(n);
        for (i, p) in phi.iter().enumerate() {
            if p.len() != k {
                return Err(MrfError::Shape(format!("phi {i} has {} entries, want {k}", p.len())));
            }
            let row = p
                .iter()
                .enumerate()
                .map(|(a, &v)| log_positive(v, || format!("phi[{i}][{a}]")))
                .collect::<Result<Vec<_>, _>>()?;
            log_phi.push(row);
        }
        let mut tables = Vec::with_capacity(psi.len());
        for ((i, j), t) in psi {
            if t.len() != k || t.iter().any(|r| r.len() != k) {
                return Err(MrfError::Shape(format!("psi ({i}, {j}) is not {k}x{k}")));
            }
            let mut flat = Vec::with_capacity(k * k);
            for (a, row) in t.iter().enumerate() {
                for (b, &v) in row.iter().enumerate() {
                    flat.push(log_positive(v, || format!("psi({i},{j})[{a}][{b}]"))?);
                }
            }
            tables.push(((i, j), flat));
        }
        Self::from_log(k, log_phi, tables)
    }

    /// Builds a model directly from log-potentials.
    pub fn from_log(
        k: usize,
        log_phi: Vec<Vec<f64>>,
        log_psi: Vec<((usize, usize), Vec<f64>)>,
    ) -> Result<Self, MrfError> {
        let n = log_phi.len();
        if log_phi.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MrfError::Shape("non-finite log phi".into()));
        }
        if log_phi.iter().any(|r| r.len() != k) {
            return Err(MrfError::Shape("log phi row length differs from k".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(log_psi.len());
        let mut tables = Vec::with_capacity(log_psi.len());
        let mut incident = vec![Vec::new(); n];
        for ((i, j), t) in log_psi {
            for x in [i, j] {
                if x >= n {
                    return Err(MrfError::IndexOutOfRange { index: x, n });
                }
            }
            if i == j {
                return Err(MrfError::SelfLoop(i));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(MrfError::DuplicateEdge(i, j));
            }
            if t.len() != k * k || t.iter().any(|v| !v.is_finite()) {
                return Err(MrfError::Shape(format!("log psi ({i}, {j}) malformed")));
            }
            let e = edges.len();
            incident[i].push((e, true));
            incident[j].push((e, false));
            edges.push((i, j));
            tables.push(t);
        }
        Ok(PairwiseMRF {
            n,
            k,
            log_phi,
            edges,
            log_psi: tables,
            incident,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn log_phi(&self, i: usize) -> &[f64] {
        &self.log_phi[i]
    }

    /// `log ψ_ij(a, b)` for edge `e = (i, j)`.
    pub fn log_psi(&self, e: usize, a: usize, b: usize) -> f64 {
        self.log_psi[e][a * self.k + b]
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<PairwiseMRF, MrfError> {
        let mut inverse = vec![usize::MAX; self.n];
        if perm.len() != self.n {
            return Err(MrfError::Shape("permutation length".into()));
        }
        for (i, &p) in perm.iter().enumerate() {
            if p >= self.n || inverse[p] != usize::MAX {
                return Err(MrfError::Shape("not a permutation".into()));
            }
            inverse[p] = i;
        }
        let log_phi = inverse.iter().map(|&i| self.log_phi[i].clone()).collect();
        let log_psi = self
            .edges
            .iter()
            .zip(&self.log_psi)
            .map(|(&(i, j), t)| ((perm[i], perm[j]), t.clone()))
            .collect();
        PairwiseMRF::from_log(self.k, log_phi, log_psi)
    }

    /// Unnormalized log-probability of a full configuration.
    pub fn log_weight(&self, z: &[usize]) -> f64 {
        let mut w: f64 = (0..self.n).map(|i| self.log_phi[i][z[i]]).sum();
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            w += self.log_psi(e, z[i], z[j]);
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldState {
    pub q: Vec<Vec<f64>>,
    pub iteration: usize,
    pub free_energy_trace: Vec<f64>,
    pub converged: bool,
}

impl MeanFieldState {
    pub fn uniform(n: usize, k: usize) -> Self {
        Self::from_q(vec![vec![1.0 / k as f64; k]; n])
    }

    pub fn from_q(q: Vec<Vec<f64>>) -> Self {
        MeanFieldState {
            q,
            iteration: 0,
            free_energy_trace: Vec::new(),
            converged: false,
        }
    }
}

/// Exponentiates and normalizes log-scores in place.
fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Fixed-point image of node `i` given all current marginals.
pub fn update_marginal(m: &PairwiseMRF, q: &[Vec<f64>], i: usize) -> Vec<f64> {
    let k = m.k;
    let mut l = m.log_phi[i].clone();
    for &(e, first) in &m.incident[i] {
        let (a_end, b_end) = m.edges[e];
        let j = if first { b_end } else { a_end };
        for (a, la) in l.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (b, &qb) in q[j].iter().enumerate() {
                let lp = if first {
                    m.log_psi[e][a * k + b]
                } else {
                    m.log_psi[e][b * k + a]
                };
                acc += qb * lp;
            }
            *la += acc;
        }
    }
    softmax_in_place(&mut l);
    l
}

/// Returns a copy of `s` with node `i` updated and every other node unchanged.
pub fn mean_field_update(m: &PairwiseMRF, s: &MeanFieldState, i: usize) -> MeanFieldState {
    let mut next = s.clone();
    next.q[i] = update_marginal(m, &s.q, i);
    next
}

/// `max_i ‖q_i − update(q)_i‖∞`.
pub fn fixed_point_residual(m: &PairwiseMRF, q: &[Vec<f64>]) -> f64 {
    (0..m.n)
        .map(|i| {
            update_marginal(m, q, i)
                .iter()
                .zip(&q[i])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Variational free energy of a product distribution.
pub fn free_energy(m: &PairwiseMRF, q: &[Vec<f64>]) -> f64 {
    let mut f = 0.0;
    for i in 0..m.n {
        for (a, &qa) in q[i].iter().enumerate() {
            if qa > 0.0 {
                f += qa * qa.ln();
            }
            f -= qa * m.log_phi[i][a];
        }
    }
    for (e, &(i, j)) in m.edges.iter().enumerate() {
        for (a, &qa) in q[i].iter().enumerate() {
            for (b, &qb) in q[j].iter().enumerate() {
                f -= qa * qb * m.log_psi(e, a, b);
            }
        }
    }
    f
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Uniform,
    Random(u64),
    Given(Vec<Vec<f64>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Gauss–Seidel: nodes updated in index order, each seeing fresh neighbors.
    Sequential,
    /// Jacobi: every node updated from the previous sweep's snapshot.
    Parallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldOptions {
    pub init: Init,
    pub schedule: Schedule,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        MeanFieldOptions {
            init: Init::Uniform,
            schedule: Schedule::Sequential,
            tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

fn initial_q(m: &PairwiseMRF, init: &Init) -> Result<Vec<Vec<f64>>, MrfError> {
    match init {
        Init::Uniform => Ok(MeanFieldState::uniform(m.n, m.k).q),
        Init::Random(seed) => {
            let mut rng = rng_for(*seed, &[0x3f]);
            Ok((0..m.n)
                .map(|_| {
                    let mut v: Vec<f64> = (0..m.k).map(|_| rng.gen::<f64>() + 1e-3).collect();
                    let s: f64 = v.iter().sum();
                    v.iter_mut().for_each(|x| *x /= s);
                    v
                })
                .collect())
        }
        Init::Given(q) => {
            if q.len() != m.n {
                return Err(MrfError::BadInit(format!("{} rows for {} nodes", q.len(), m.n)));
            }
            for (i, row) in q.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if row.len() != m.k || row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-12 {
                    return Err(MrfError::BadInit(format!("row {i}")));
                }
            }
            Ok(q.clone())
        }
    }
}

/// Iterates the fixed-point equation until the largest per-node change
/// drops below `tol` or `max_iters` sweeps have run. Non-convergence is
/// reported through `converged`, not as an error.
///
/// `free_energy_trace[0]` is the energy of the initial state; entry `s`
/// is the energy after sweep `s`.
pub fn run_mean_field(m: &PairwiseMRF, opts: &MeanFieldOptions) -> Result<MeanFieldState, MrfError> {
    if !(opts.tol > 0.0) {
        return Err(MrfError::Tolerance(opts.tol));
    }
    let mut q = initial_q(m, &opts.init)?;
    let mut trace = vec![free_energy(m, &q)];
    let mut converged = false;
    let mut iteration = 0;
    while iteration < opts.max_iters {
        let mut delta: f64 = 0.0;
        match opts.schedule {
            Schedule::Sequential => {
                for i in 0..m.n {
                    let new = update_marginal(m, &q, i);
                    for (a, b) in new.iter().zip(&q[i]) {
                        delta = delta.max((a - b).abs());
                    }
                    q[i] = new;
                }
            }
            Schedule::Parallel => {
                let next: Vec<Vec<f64>> = (0..m.n).map(|i| update_marginal(m, &q, i)).collect();
                for (new, old) in next.iter().zip(&q) {
                    for (a, b) in new.iter().zip(old) {
                        delta = delta.max((a - b).abs());
                    }
                }
                q = next;
            }
        }
        iteration += 1;
        trace.push(free_energy(m, &q));
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(MeanFieldState {
        q,
        iteration,
        free_energy_trace: trace,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactResult {
    pub marginals: Vec<Vec<f64>>,
    pub log_partition: f64,
}

/// Brute-force marginals and `log Z` over all `k^n` configurations.
pub fn exact_marginals(m: &PairwiseMRF) -> Result<ExactResult, MrfError> {
    let (n, k) = (m.n, m.k);
    let total = (k as u64)
        .checked_pow(n as u32)
        .filter(|&t| t <= ENUMERATION_LIMIT)
        .ok_or(MrfError::EnumerationBound { n, k })?;
    let mut z = vec![0usize; n];
    let mut log_w = Vec::with_capacity(total as usize);
    for _ in 0..total {
        log_w.push(m.log_weight(&z));
        for d in z.iter_mut() {
            *d += 1;
            if *d < k {
                break;
            }
            *d = 0;
        }
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut marginals = vec![vec![0.0; k]; n];
    let mut sum = 0.0;
    z.iter_mut().for_each(|d| *d = 0);
    for lw in &log_w {
        let w = (lw - max).exp();
        sum += w;
        for (i, &zi) in z.iter().enumerate() {
            marginals[i][zi] += w;
        }
        for d in z.iter_mut() {
            *d += 1;
            if *d < k {
                break;
            }
            *d = 0;
        }
    }
    for row in marginals.iter_mut() {
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(ExactResult {
        marginals,
        log_partition: max + sum.ln(),
    })
}

/// Largest total-variation distance between two sets of marginals.
pub fn max_total_variation(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
