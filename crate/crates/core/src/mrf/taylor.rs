//! Empirical Taylor-order checks.
//!
//! For a smooth `f: R^d -> R` and a direction `v`, the order-`k` Taylor
//! polynomial of `f` at 0 restricted to the line `t v` is the order-`k`
//! Taylor polynomial of `g(t) = f(t v)`. Its truncation error at radius `r`
//! should scale as `r^(k+1)`, so the fitted slope of `log error` against
//! `log r` should be close to `k + 1`.
//!
//! Derivatives of `g` at 0 are estimated with wide central stencils whose
//! weights come from Fornberg's recursion.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaylorError {
    #[error("need at least two positive radii")]
    Radii,
    #[error("direction must be nonzero with finite entries")]
    Direction,
    #[error("function value at {0} is not finite")]
    NonFinite(f64),
}

/// Finite-difference weights: `out[m][j]` is the weight of `x[j]` in the
/// `m`-th derivative at `z`, for `m = 0..=max_order`.
pub fn fornberg_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// `g^(m)(0)` for `m = 0..=max_order` from a symmetric stencil of step `h`.
pub fn derivatives_at_zero(
    g: impl Fn(f64) -> f64,
    max_order: usize,
    h: f64,
) -> Result<Vec<f64>, TaylorError> {
    let half = max_order / 2 + 5;
    let nodes: Vec<f64> = (-(half as i64)..=half as i64).map(|j| j as f64).collect();
    let mut values = Vec::with_capacity(nodes.len());
    for &x in &nodes {
        let v = g(x * h);
        if !v.is_finite() {
            return Err(TaylorError::NonFinite(x * h));
        }
        values.push(v);
    }
    let w = fornberg_weights(0.0, &nodes, max_order);
    Ok((0..=max_order)
        .map(|m| {
            let s: f64 = w[m].iter().zip(&values).map(|(a, b)| a * b).sum();
            s / h.powi(m as i32)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorReport {
    pub order: usize,
    pub radii: Vec<f64>,
    pub errors: Vec<f64>,
    /// Errors at or below this are treated as rounding noise.
    pub noise_floor: f64,
    /// Least-squares slope of `ln error` on `ln r` over points above the floor.
    pub slope: Option<f64>,
    /// Fewer than two points rose above the noise floor.
    pub degenerate: bool,
}

impl TaylorReport {
    pub fn expected_slope(&self) -> f64 {
        (self.order + 1) as f64
    }

    pub fn slope_within(&self, tol: f64) -> bool {
        self.slope
            .is_some_and(|s| (s - self.expected_slope()).abs() <= tol)
    }
}

/// Step used for the derivative stencils.
pub const STENCIL_STEP: f64 = 1e-2;

/// Checks the order-`order` expansion of `f` at the origin along `direction`.
pub fn taylor_order_check(
    f: impl Fn(&[f64]) -> f64,
    direction: &[f64],
    order: usize,
    radii: &[f64],
) -> Result<TaylorReport, TaylorError> {
    if radii.len() < 2 || radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(TaylorError::Radii);
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(TaylorError::Direction);
    }
    let v: Vec<f64> = direction.iter().map(|x| x / norm).collect();
    let g = |t: f64| {
        let u: Vec<f64> = v.iter().map(|x| x * t).collect();
        f(&u)
    };
    let derivs = derivatives_at_zero(g, order, STENCIL_STEP)?;

    let mut errors = Vec::with_capacity(radii.len());
    let mut scale = derivs[0].abs().max(1.0);
    for &r in radii {
        let exact = g(r);
        if !exact.is_finite() {
            return Err(TaylorError::NonFinite(r));
        }
        scale = scale.max(exact.abs());
        let mut poly = 0.0;
        let mut term = 1.0;
        for (m, d) in derivs.iter().enumerate() {
            if m > 0 {
                term *= r / m as f64;
            }
            poly += d * term;
        }
        errors.push((exact - poly).abs());
    }
    let noise_floor = 1e3 * f64::EPSILON * scale;

    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > noise_floor)
        .map(|(r, e)| (r.ln(), e.ln()))
        .collect();
    let slope = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(TaylorReport {
        order,
        radii: radii.to_vec(),
        errors,
        noise_floor,
        slope,
        degenerate: slope.is_none(),
    })
}

/// Radii `10^-1, 10^-2, ..., 10^-decades`.
pub fn decade_radii(decades: u32) -> Vec<f64> {
    (1..=decades as i32).map(|e| 10f64.powi(-e)).collect()
}
