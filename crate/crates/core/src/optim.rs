//! Adam with selectable weight-decay coupling.

use serde::{Deserialize, Serialize};

use crate::tensor::{Tensor, TensorError};

/// How weight decay enters the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightDecayMode {
    /// `p <- p - lr * wd * p` before the adaptive step (AdamW).
    Decoupled,
    /// `g <- g + wd * p` before the moment updates (classic L2).
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub mode: WeightDecayMode,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mode: WeightDecayMode::Decoupled,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over all parameters. `weight_decay[i]` is the decay
/// coefficient of `params[i]`.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    hp: &Adam,
    weight_decay: &[f64],
) -> Result<(), TensorError> {
    if grads.len() != params.len()
        || state.m.len() != params.len()
        || weight_decay.len() != params.len()
    {
        return Err(TensorError::InvalidArgument(format!(
            "adam: {} params, {} grads, {} state slots, {} decay terms",
            params.len(),
            grads.len(),
            state.m.len(),
            weight_decay.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(TensorError::Dimension {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let wd = weight_decay[i];
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gv = match hp.mode {
                WeightDecayMode::L2 => gv + wd * *pv,
                WeightDecayMode::Decoupled => {
                    *pv -= hp.lr * wd * *pv;
                    gv
                }
            };
            m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * gv;
            v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * gv * gv;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *pv -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays() {
        let mut params = vec![Tensor::from_rows(&[[2.0, -4.0]])];
        let grads = vec![Tensor::zeros(&[1, 2])];
        let mut state = AdamState::new(&params);
        let hp = Adam::new(0.1);
        adam_step(&mut params, &grads, &mut state, &hp, &[0.5]).unwrap();
        // shrink factor 1 - lr * wd = 0.95
        let expected = Tensor::from_rows(&[[1.9, -3.8]]);
        assert!(params[0].max_abs_diff(&expected) < 1e-14);

        let mut params2 = vec![Tensor::from_rows(&[[2.0, -4.0]])];
        let mut state2 = AdamState::new(&params2);
        adam_step(&mut params2, &grads, &mut state2, &hp, &[0.0]).unwrap();
        assert_eq!(params2[0].data(), &[2.0, -4.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![Tensor::scalar(1.0)];
        let grads = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, &Adam::new(0.1), &[0.0]).unwrap();
        // m_hat = 1, v_hat = 1, step = lr / (1 + eps)
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((params[0].data()[0] - expected).abs() < 1e-15);
        assert!((params[0].data()[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn deterministic_trajectories() {
        let run = || {
            let mut params = vec![Tensor::from_rows(&[[0.3, -0.7], [1.1, 0.2]])];
            let mut state = AdamState::new(&params);
            let hp = Adam {
                mode: WeightDecayMode::L2,
                ..Adam::new(0.01)
            };
            for k in 0..50 {
                let g = params[0].map(|v| (v * k as f64).sin());
                adam_step(&mut params, &[g], &mut state, &hp, &[5e-4]).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(
            a[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn shape_mismatch() {
        let mut params = vec![Tensor::zeros(&[2, 2])];
        let mut state = AdamState::new(&params);
        let grads = vec![Tensor::zeros(&[1, 4])];
        assert!(adam_step(&mut params, &grads, &mut state, &Adam::new(0.1), &[0.0]).is_err());
        let mut other = AdamState::new(&[Tensor::zeros(&[3])]);
        let ok_grads = vec![Tensor::zeros(&[2, 2])];
        assert!(adam_step(&mut params, &ok_grads, &mut other, &Adam::new(0.1), &[0.0]).is_err());
    }

    #[test]
    fn zero_lr_is_a_null_update() {
        let mut params = vec![Tensor::from_rows(&[[0.5, 1.5]])];
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let grads = vec![Tensor::from_rows(&[[3.0, -1.0]])];
        adam_step(&mut params, &grads, &mut state, &Adam::new(0.0), &[0.1]).unwrap();
        assert_eq!(params, before);
    }
}
