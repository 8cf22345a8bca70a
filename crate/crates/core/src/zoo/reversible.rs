//! Recovering the previous representation from a coupled layer output, so
//! activations need not be stored.

use super::ZooError;
use crate::graph::NormalizedAdjacency;
use crate::tensor::Tensor;

/// Recovery is refused when `|1 - γ|` is below this.
pub const GAMMA_GUARD: f64 = 1e-6;

/// Inverts the coupling: `H_prev = (𝒢 - γ Â H) / (1 - γ)`.
pub fn reversible_recover(
    coupled: &Tensor,
    h: &Tensor,
    adj: &NormalizedAdjacency,
    gamma: f64,
) -> Result<Tensor, ZooError> {
    if (1.0 - gamma).abs() < GAMMA_GUARD {
        return Err(ZooError::IllConditioned { gamma });
    }
    let ah = adj.matrix().spmm(h)?;
    let out = coupled.zip_map(&ah, |g, a| (g - gamma * a) / (1.0 - gamma))?;
    Ok(out)
}

/// Recovers `H_prev` from the layer output `P = 𝒢 (λ W + (1 - λ) I)` by
/// first solving for `𝒢`.
pub fn recover_from_output(
    p: &Tensor,
    h: &Tensor,
    adj: &NormalizedAdjacency,
    lambda: f64,
    gamma: f64,
    w: &Tensor,
) -> Result<Tensor, ZooError> {
    let n = w.rows();
    let mut m = w.scale(lambda);
    for i in 0..n {
        m.set(i, i, m.get(i, i) + 1.0 - lambda);
    }
    let g = solve_right(p, &m)?;
    reversible_recover(&g, h, adj, gamma)
}

/// Solves `X M = B` for `X` by LU with partial pivoting on `Mᵀ`.
pub fn solve_right(b: &Tensor, m: &Tensor) -> Result<Tensor, ZooError> {
    let n = m.rows();
    if m.cols() != n || b.cols() != n {
        return Err(ZooError::Shape(format!(
            "solve_right: B {:?}, M {:?}",
            b.shape(),
            m.shape()
        )));
    }
    // Xᵀ solves Mᵀ Xᵀ = Bᵀ.
    let mut a = m.transpose();
    let mut rhs = b.transpose();
    let k = rhs.cols();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a.get(x, col).abs().total_cmp(&a.get(y, col).abs()))
            .expect("nonempty range");
        if a.get(piv, col).abs() <= 1e-13 * scale {
            return Err(ZooError::Singular);
        }
        if piv != col {
            for j in 0..n {
                let (x, y) = (a.get(col, j), a.get(piv, j));
                a.set(col, j, y);
                a.set(piv, j, x);
            }
            for j in 0..k {
                let (x, y) = (rhs.get(col, j), rhs.get(piv, j));
                rhs.set(col, j, y);
                rhs.set(piv, j, x);
            }
        }
        for r in col + 1..n {
            let f = a.get(r, col) / a.get(col, col);
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a.set(r, j, a.get(r, j) - f * a.get(col, j));
            }
            for j in 0..k {
                rhs.set(r, j, rhs.get(r, j) - f * rhs.get(col, j));
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..k {
            let mut s = rhs.get(col, j);
            for c in col + 1..n {
                s -= a.get(col, c) * rhs.get(c, j);
            }
            rhs.set(col, j, s / a.get(col, col));
        }
    }
    Ok(rhs.transpose())
}
