//! Layer-residual diagnostic: `r_l = |H(l+1) - H(l)|_F / |H(l)|_F` over
//! consecutive body representations. It tracks how fast the layer
//! iteration settles. It is a proxy and not a measure of approximation
//! error against the fixed point.

use std::fmt::Write as _;

use gnnlab_core::zoo::{Model, ModelInput};
use gnnlab_core::Tensor;

use crate::BenchError;

pub const RESIDUAL_HEADER: &str = "layer,residual";

/// Relative Frobenius change between neighbors. A zero representation
/// followed by another zero gives 0; followed by anything else, infinity.
pub fn layer_residuals(reps: &[Tensor]) -> Result<Vec<f64>, BenchError> {
    reps.windows(2)
        .enumerate()
        .map(|(l, w)| {
            let diff = w[1]
                .sub(&w[0])
                .map_err(|_| BenchError::Data(format!("representations {l} and {} differ in shape", l + 1)))?
                .frobenius_norm();
            let base = w[0].frobenius_norm();
            Ok(if base > 0.0 {
                diff / base
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            })
        })
        .collect()
}

pub fn model_residuals(model: &Model, input: &ModelInput) -> Result<Vec<f64>, BenchError> {
    layer_residuals(&model.representations(input)?)
}

pub fn format_residuals(residuals: &[f64]) -> String {
    let mut s = String::from(
        "# proxy: relative Frobenius change between consecutive layer outputs, not an error bound\n",
    );
    s.push_str(RESIDUAL_HEADER);
    s.push('\n');
    for (l, r) in residuals.iter().enumerate() {
        let _ = writeln!(s, "{l},{r}");
    }
    s
}
