//! Layer building blocks. The tape-level functions are what models use; the
//! tensor-level wrappers below run the same code on a scratch tape.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ZooError;
use crate::autodiff::{Tape, Var};
use crate::graph::NormalizedAdjacency;
use crate::sparse::SparseMatrix;
use crate::tensor::{Tensor, TensorError};

/// A mixing coefficient: a fixed number or a single-valued tape node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coef {
    Const(f64),
    Var(Var),
}

pub fn scale_by(tape: &mut Tape, x: Var, c: Coef) -> Result<Var, TensorError> {
    match c {
        Coef::Const(v) => tape.scale(x, v),
        Coef::Var(s) => tape.mul_scalar(x, s),
    }
}

/// `1 - c`.
pub fn complement(tape: &mut Tape, c: Coef) -> Result<Coef, TensorError> {
    Ok(match c {
        Coef::Const(v) => Coef::Const(1.0 - v),
        Coef::Var(s) => Coef::Var(tape.affine(s, -1.0, 1.0)?),
    })
}

/// `c * a + (1 - c) * b`.
pub fn convex(tape: &mut Tape, a: Var, b: Var, c: Coef) -> Result<Var, TensorError> {
    let one_minus = complement(tape, c)?;
    let l = scale_by(tape, a, c)?;
    let r = scale_by(tape, b, one_minus)?;
    tape.add(l, r)
}

/// `G ((1 - β) I + β W)`, evaluated as `(1 - β) G + β (G W)`.
pub fn identity_mix(tape: &mut Tape, g: Var, w: Var, beta: Coef) -> Result<Var, TensorError> {
    let one_minus = complement(tape, beta)?;
    let gw = tape.matmul(g, w)?;
    let l = scale_by(tape, g, one_minus)?;
    let r = scale_by(tape, gw, beta)?;
    tape.add(l, r)
}

/// `Â H W (+ b)`, pre-activation.
pub fn gcn(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    h: Var,
    w: Var,
    b: Option<Var>,
) -> Result<Var, TensorError> {
    let hw = tape.matmul(h, w)?;
    let out = tape.spmm(adj, hw)?;
    match b {
        Some(b) => tape.add_bias(out, b),
        None => Ok(out),
    }
}

/// `(1 - α) Â H + α H0`.
pub fn appnp_step(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    h: Var,
    h0: Var,
    alpha: f64,
) -> Result<Var, TensorError> {
    let ah = tape.spmm(adj, h)?;
    let l = tape.scale(ah, 1.0 - alpha)?;
    let r = tape.scale(h0, alpha)?;
    tape.add(l, r)
}

/// Pre-activation initial-residual layer with identity mapping.
pub fn gcnii(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    h: Var,
    h0: Var,
    alpha: f64,
    beta: Coef,
    w: Var,
) -> Result<Var, TensorError> {
    let support = appnp_step(tape, adj, h, h0, alpha)?;
    identity_mix(tape, support, w, beta)
}

/// Coupling `γ Â H + (1 - γ) H_prev`.
pub fn coupling(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    h: Var,
    h_prev: Var,
    gamma: Coef,
) -> Result<Var, TensorError> {
    let ah = tape.spmm(adj, h)?;
    convex(tape, ah, h_prev, gamma)
}

/// Returns `(P, relu(P))` with `P = coupling(H, H_prev) (λ W + (1 - λ) I)`.
pub fn cognet(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    h: Var,
    h_prev: Var,
    lambda: Coef,
    gamma: Coef,
    w: Var,
) -> Result<(Var, Var), TensorError> {
    let g = coupling(tape, adj, h, h_prev, gamma)?;
    let p = identity_mix(tape, g, w, lambda)?;
    let out = tape.relu(p)?;
    Ok((p, out))
}

/// One attention head: `sum_j alpha_ij (H W)_j`.
pub fn gat_head(
    tape: &mut Tape,
    pattern: &Arc<SparseMatrix>,
    h: Var,
    w: Var,
    a_dst: Var,
    a_src: Var,
    slope: f64,
) -> Result<Var, TensorError> {
    let wh = tape.matmul(h, w)?;
    tape.gat_attention(wh, a_dst, a_src, pattern, slope)
}

/// How per-layer representations are merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JkMode {
    Attention,
    Concat,
    MaxPool,
}

/// Merges same-height representations. `logits` (shape `[1, L]`) is
/// required in attention mode.
pub fn jk_merge(
    tape: &mut Tape,
    reps: &[Var],
    mode: JkMode,
    logits: Option<Var>,
) -> Result<Var, TensorError> {
    if reps.is_empty() {
        return Err(TensorError::InvalidArgument("no representations to combine".into()));
    }
    match mode {
        JkMode::Concat => tape.concat_cols(reps),
        JkMode::MaxPool => tape.max(reps),
        JkMode::Attention => {
            let logits = logits.ok_or_else(|| {
                TensorError::InvalidArgument("attention combine needs logits".into())
            })?;
            if tape.value(logits).len() != reps.len() {
                return Err(TensorError::InvalidArgument(format!(
                    "{} combine logits for {} representations",
                    tape.value(logits).len(),
                    reps.len()
                )));
            }
            let weights = tape.row_softmax(logits)?;
            let mut acc: Option<Var> = None;
            for (l, &r) in reps.iter().enumerate() {
                let a = tape.index(weights, l)?;
                let term = tape.mul_scalar(r, a)?;
                acc = Some(match acc {
                    None => term,
                    Some(s) => tape.add(s, term)?,
                });
            }
            Ok(acc.expect("nonempty"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Elu,
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var, TensorError> {
    match act {
        Activation::Identity => Ok(x),
        Activation::Relu => tape.relu(x),
        Activation::Elu => tape.elu(x),
    }
}

fn consts(tape: &mut Tape, ts: &[&Tensor]) -> Result<Vec<Var>, TensorError> {
    ts.iter().map(|t| tape.constant((*t).clone())).collect()
}

/// `σ(Â H W + b)`.
pub fn gcn_layer(
    h: &Tensor,
    adj: &NormalizedAdjacency,
    w: &Tensor,
    b: Option<&Tensor>,
    act: Activation,
) -> Result<Tensor, ZooError> {
    let mut tape = Tape::new();
    let v = consts(&mut tape, &[h, w])?;
    let b = b.map(|b| tape.constant(b.clone())).transpose()?;
    let out = gcn(&mut tape, adj.matrix(), v[0], v[1], b)?;
    let out = activate(&mut tape, out, act)?;
    Ok(tape.value(out).clone())
}

/// `Â^K X` by `K` successive sparse products.
pub fn sgc_propagate(x: &Tensor, adj: &NormalizedAdjacency, k: usize) -> Result<Tensor, ZooError> {
    let mut out = x.clone();
    for _ in 0..k {
        out = adj.matrix().spmm(&out)?;
    }
    Ok(out)
}

/// Parameters of one attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct GatHeadParams {
    pub w: Tensor,
    pub a_dst: Tensor,
    pub a_src: Tensor,
}

/// Multi-head attention layer, pre-activation. Heads are concatenated when
/// `concat` is set and averaged otherwise.
pub fn gat_layer(
    h: &Tensor,
    adj: &NormalizedAdjacency,
    heads: &[GatHeadParams],
    concat: bool,
    slope: f64,
) -> Result<Tensor, ZooError> {
    if heads.is_empty() {
        return Err(ZooError::Config("attention layer needs at least one head".into()));
    }
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone())?;
    let mut outs = Vec::with_capacity(heads.len());
    for p in heads {
        let v = consts(&mut tape, &[&p.w, &p.a_dst, &p.a_src])?;
        outs.push(gat_head(&mut tape, adj.matrix(), hv, v[0], v[1], v[2], slope)?);
    }
    let out = if concat {
        tape.concat_cols(&outs)?
    } else {
        let mut s = outs[0];
        for &o in &outs[1..] {
            s = tape.add(s, o)?;
        }
        tape.scale(s, 1.0 / heads.len() as f64)?
    };
    Ok(tape.value(out).clone())
}

/// Iterates `H <- (1 - α) Â H + α H0` `l` times.
pub fn appnp_propagate(
    h0: &Tensor,
    adj: &NormalizedAdjacency,
    alpha: f64,
    l: usize,
) -> Result<Tensor, ZooError> {
    check_unit("alpha", alpha)?;
    let mut tape = Tape::new();
    let start = tape.constant(h0.clone())?;
    let mut h = start;
    for _ in 0..l {
        h = appnp_step(&mut tape, adj.matrix(), h, start, alpha)?;
    }
    Ok(tape.value(h).clone())
}

/// Pre-activation `((1 - α) Â H + α H0)((1 - β) I + β W)`.
pub fn gcnii_layer(
    h: &Tensor,
    h0: &Tensor,
    adj: &NormalizedAdjacency,
    alpha: f64,
    beta: f64,
    w: &Tensor,
) -> Result<Tensor, ZooError> {
    check_unit("alpha", alpha)?;
    check_unit("beta", beta)?;
    let mut tape = Tape::new();
    let v = consts(&mut tape, &[h, h0, w])?;
    let out = gcnii(&mut tape, adj.matrix(), v[0], v[1], alpha, Coef::Const(beta), v[2])?;
    Ok(tape.value(out).clone())
}

/// Merges representations; `logits` are the unnormalized attention weights.
pub fn jk_combine(reps: &[Tensor], mode: JkMode, logits: &[f64]) -> Result<Tensor, ZooError> {
    let mut tape = Tape::new();
    let vars = reps
        .iter()
        .map(|r| tape.constant(r.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let lv = match mode {
        JkMode::Attention => Some(tape.constant(Tensor::new(vec![1, logits.len()], logits.to_vec())?)?),
        _ => None,
    };
    let out = jk_merge(&mut tape, &vars, mode, lv)?;
    Ok(tape.value(out).clone())
}

/// `Σ_ℓ softmax(logits)_ℓ Â^ℓ X (β_ℓ W_ℓ + (1 - β_ℓ) I)` for `ℓ = 1..=L`.
pub fn dgcn_combine(
    x: &Tensor,
    adj: &NormalizedAdjacency,
    logits: &[f64],
    betas: &[f64],
    ws: &[Tensor],
) -> Result<Tensor, ZooError> {
    let l = logits.len();
    if betas.len() != l || ws.len() != l || l == 0 {
        return Err(ZooError::Config(format!(
            "{l} logits, {} betas, {} weights",
            betas.len(),
            ws.len()
        )));
    }
    let mut tape = Tape::new();
    let mut p = tape.constant(x.clone())?;
    let mut terms = Vec::with_capacity(l);
    for (beta, w) in betas.iter().zip(ws) {
        check_unit("beta", *beta)?;
        p = tape.spmm(adj.matrix(), p)?;
        let wv = tape.constant(w.clone())?;
        terms.push(identity_mix(&mut tape, p, wv, Coef::Const(*beta))?);
    }
    let lv = tape.constant(Tensor::new(vec![1, l], logits.to_vec())?)?;
    let out = jk_merge(&mut tape, &terms, JkMode::Attention, Some(lv))?;
    Ok(tape.value(out).clone())
}

/// Returns `(P, H)` for one coupled layer.
pub fn cognet_layer(
    h: &Tensor,
    h_prev: &Tensor,
    adj: &NormalizedAdjacency,
    lambda: f64,
    gamma: f64,
    w: &Tensor,
) -> Result<(Tensor, Tensor), ZooError> {
    check_unit("lambda", lambda)?;
    check_unit("gamma", gamma)?;
    let mut tape = Tape::new();
    let v = consts(&mut tape, &[h, h_prev, w])?;
    let (p, out) = cognet(
        &mut tape,
        adj.matrix(),
        v[0],
        v[1],
        Coef::Const(lambda),
        Coef::Const(gamma),
        v[2],
    )?;
    Ok((tape.value(p).clone(), tape.value(out).clone()))
}

/// `γ Â H + (1 - γ) H_prev`.
pub fn couple(
    h: &Tensor,
    h_prev: &Tensor,
    adj: &NormalizedAdjacency,
    gamma: f64,
) -> Result<Tensor, ZooError> {
    let mut tape = Tape::new();
    let v = consts(&mut tape, &[h, h_prev])?;
    let g = coupling(&mut tape, adj.matrix(), v[0], v[1], Coef::Const(gamma))?;
    Ok(tape.value(g).clone())
}

pub(crate) fn check_unit(name: &str, v: f64) -> Result<(), ZooError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ZooError::Config(format!("{name} = {v} outside [0, 1]")))
    }
}
