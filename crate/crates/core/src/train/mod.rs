//! Semi-supervised node classification: masked cross-entropy, Adam, early
//! stopping on validation accuracy, and repeated runs.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Var};
use crate::graph::{drop_edges, normalize_edges, GraphDataset, GraphError, Split};
use crate::optim::{adam_step, Adam, AdamState, WeightDecayMode};
use crate::rng::{derive_seed, hash_str};
use crate::tensor::{Tensor, TensorError};
use crate::zoo::{Model, ModelConfig, ModelInput, Mode, ParamGroup, ZooError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} mask selects no nodes")]
    EmptyMask(&'static str),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error(transparent)]
    Zoo(ZooError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<ZooError> for TrainError {
    fn from(e: ZooError) -> Self {
        TrainError::Zoo(e)
    }
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Zoo(ZooError::Tensor(e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Decay on input and output maps, and on body weights unless
    /// `body_weight_decay` is set.
    pub weight_decay: f64,
    pub body_weight_decay: Option<f64>,
    pub decay_mode: WeightDecayMode,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Per-epoch edge dropping rate; 0 disables it.
    pub drop_edge: f64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            weight_decay: 5e-4,
            body_weight_decay: None,
            decay_mode: WeightDecayMode::Decoupled,
            max_epochs: 200,
            patience: 100,
            seed: 0,
            drop_edge: 0.0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr = {} must be finite and nonnegative", self.lr));
        }
        for wd in std::iter::once(self.weight_decay).chain(self.body_weight_decay) {
            if !(wd >= 0.0 && wd.is_finite()) {
                return bad(format!("weight decay {wd} must be finite and nonnegative"));
            }
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.max_epochs == 0 || self.eval_every == 0 {
            return bad("max_epochs and eval_every must be positive".into());
        }
        if !(0.0..1.0).contains(&self.drop_edge) {
            return bad(format!("drop_edge = {} outside [0, 1)", self.drop_edge));
        }
        Ok(())
    }

    fn decay_for(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Input | ParamGroup::Output => self.weight_decay,
            ParamGroup::Body => self.body_weight_decay.unwrap_or(self.weight_decay),
            ParamGroup::NoDecay => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Evaluation fields are present on evaluated epochs only.
    pub train_acc: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
    /// Test accuracy of the parameters from `best_epoch`.
    pub test_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Metrics,
    /// Parameters from the best-validation epoch.
    pub model: Model,
    pub wall_seconds: f64,
}

fn targets(labels: &[usize], idx: &[usize]) -> Arc<Vec<(usize, usize)>> {
    Arc::new(idx.iter().map(|&i| (i, labels[i])).collect())
}

/// Mean negative log-softmax at the true label over `idx`.
pub fn masked_cross_entropy(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    idx: &[usize],
) -> Result<Var, TrainError> {
    if idx.is_empty() {
        return Err(TrainError::EmptyMask("loss"));
    }
    let lp = tape.log_row_softmax(logits)?;
    Ok(tape.masked_nll(lp, targets(labels, idx))?)
}

/// Value-only cross-entropy on a logits tensor.
pub fn cross_entropy(logits: &Tensor, labels: &[usize], idx: &[usize]) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone())?;
    let loss = masked_cross_entropy(&mut tape, l, labels, idx)?;
    Ok(tape.value(loss).data()[0])
}

/// Fraction of `idx` whose argmax logit equals the label. Ties go to the
/// lowest class index.
pub fn accuracy(logits: &Tensor, labels: &[usize], idx: &[usize]) -> Result<f64, TrainError> {
    if idx.is_empty() {
        return Err(TrainError::EmptyMask("evaluation"));
    }
    let hits = idx.iter().filter(|&&i| logits.argmax_row(i) == labels[i]).count();
    Ok(hits as f64 / idx.len() as f64)
}

/// Accuracy of `model` on one split, in evaluation mode.
pub fn evaluate(model: &Model, input: &ModelInput, g: &GraphDataset, split: Split) -> Result<f64, TrainError> {
    let logits = model.logits(input, Mode::Eval)?;
    accuracy(&logits, g.labels(), &g.indices(split))
}

const KEY_INIT: &str = "init";
const KEY_DROPOUT: &str = "dropout";
const KEY_EDGES: &str = "drop-edge";

fn divergence(epoch: usize, e: TrainError) -> TrainError {
    match e {
        TrainError::Zoo(ZooError::Tensor(TensorError::NonFinite { op })) => TrainError::Divergence {
            epoch,
            detail: format!("non-finite value produced by {op}"),
        },
        other => other,
    }
}

/// Trains from a fresh initialization derived from `train.seed`.
pub fn train_model(g: &GraphDataset, model_cfg: &ModelConfig, train: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let model = Model::new(
        model_cfg.clone(),
        g.d(),
        g.n_classes(),
        derive_seed(train.seed, &[hash_str(KEY_INIT)]),
    )?;
    train_from(g, model, train)
}

/// Trains an existing model in place of a fresh one.
pub fn train_from(g: &GraphDataset, mut model: Model, train: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train.validate()?;
    let start = Instant::now();
    let train_idx = g.indices(Split::Train);
    let val_idx = g.indices(Split::Val);
    let test_idx = g.indices(Split::Test);
    if train_idx.is_empty() {
        return Err(TrainError::EmptyMask("train"));
    }
    if val_idx.is_empty() {
        return Err(TrainError::EmptyMask("val"));
    }
    if test_idx.is_empty() {
        return Err(TrainError::EmptyMask("test"));
    }
    let input = ModelInput::from_dataset(g);
    let labels = g.labels();
    let hp = Adam {
        mode: train.decay_mode,
        ..Adam::new(train.lr)
    };
    let decay: Vec<f64> = model.params().groups().iter().map(|&gr| train.decay_for(gr)).collect();
    let mut state = AdamState::new(model.params().values());
    let dropout_seed = derive_seed(train.seed, &[hash_str(KEY_DROPOUT)]);
    let edge_seed = derive_seed(train.seed, &[hash_str(KEY_EDGES)]);

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, f64, f64, Model)> = None;
    let mut since_best = 0;

    for epoch in 0..train.max_epochs {
        let epoch_input = if train.drop_edge > 0.0 {
            let kept = drop_edges(g, train.drop_edge, derive_seed(edge_seed, &[epoch as u64]))?;
            input.with_adjacency(normalize_edges(g.n(), kept.edges()))
        } else {
            input.clone()
        };

        let mut tape = Tape::new();
        let step = (|| -> Result<f64, TrainError> {
            let out = model.forward(
                &mut tape,
                &epoch_input,
                Mode::Train {
                    seed: dropout_seed,
                    epoch: epoch as u64,
                },
            )?;
            let loss = masked_cross_entropy(&mut tape, out.logits, labels, &train_idx)?;
            let loss_value = tape.value(loss).data()[0];
            tape.backward(loss)?;
            let mut grads: Vec<Tensor> = model
                .params()
                .values()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            for &(i, v) in &out.params {
                if let Some(gr) = tape.grad(v) {
                    grads[i] = gr.clone();
                }
            }
            adam_step(model.params_mut().values_mut(), &grads, &mut state, &hp, &decay)?;
            Ok(loss_value)
        })();
        let train_loss = step.map_err(|e| divergence(epoch, e))?;
        if !train_loss.is_finite() || model.params().values().iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Divergence {
                epoch,
                detail: "non-finite loss or parameters".into(),
            });
        }

        let mut record = EpochRecord {
            epoch,
            train_loss,
            train_acc: None,
            val_loss: None,
            val_acc: None,
        };
        if (epoch + 1) % train.eval_every == 0 || epoch + 1 == train.max_epochs {
            let logits = model.logits(&input, Mode::Eval).map_err(|e| divergence(epoch, e.into()))?;
            let val_acc = accuracy(&logits, labels, &val_idx)?;
            let val_loss = cross_entropy(&logits, labels, &val_idx)?;
            record.train_acc = Some(accuracy(&logits, labels, &train_idx)?);
            record.val_acc = Some(val_acc);
            record.val_loss = Some(val_loss);

            let improved = match &best {
                None => true,
                Some((_, acc, loss, _, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
            };
            if improved {
                let test_acc = accuracy(&logits, labels, &test_idx)?;
                best = Some((epoch, val_acc, val_loss, test_acc, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        epochs.push(record);
        if since_best >= train.patience {
            break;
        }
    }

    let (best_epoch, best_val_acc, best_val_loss, test_acc, best_model) =
        best.expect("the final epoch is always evaluated");
    Ok(TrainOutcome {
        metrics: Metrics {
            epochs,
            best_epoch,
            best_val_acc,
            best_val_loss,
            test_acc,
        },
        model: best_model,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Seed of run `r` under a base seed.
pub fn run_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, &[hash_str("run"), r as u64])
}

/// Sample mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub test_accs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub metrics: Vec<Metrics>,
}

/// Trains once per seed, sequentially.
pub fn repeat_with_seeds(
    g: &GraphDataset,
    model_cfg: &ModelConfig,
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<RunSummary, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Config("runs must be at least 1".into()));
    }
    let mut metrics = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..train.clone()
        };
        metrics.push(train_model(g, model_cfg, &cfg)?.metrics);
    }
    let test_accs: Vec<f64> = metrics.iter().map(|m| m.test_acc).collect();
    let (mean, std) = mean_std(&test_accs);
    Ok(RunSummary {
        seeds: seeds.to_vec(),
        test_accs,
        mean,
        std,
        metrics,
    })
}

/// `runs` trainings with seeds derived from `train.seed`.
pub fn repeat_runs(
    g: &GraphDataset,
    model_cfg: &ModelConfig,
    train: &TrainConfig,
    runs: usize,
) -> Result<RunSummary, TrainError> {
    let seeds: Vec<u64> = (0..runs).map(|r| run_seed(train.seed, r)).collect();
    repeat_with_seeds(g, model_cfg, train, &seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_loss() {
        let logits = Tensor::zeros(&[2, 7]);
        let l = cross_entropy(&logits, &[3, 0], &[0, 1]).unwrap();
        assert!((l - 7.0_f64.ln()).abs() < 1e-15);
        assert!((l - 1.9459).abs() < 1e-4);
    }

    #[test]
    fn saturated_logits_loss() {
        let logits = Tensor::from_rows(&[[100.0, 0.0, 0.0]]);
        assert!(cross_entropy(&logits, &[0], &[0]).unwrap() < 1e-40);
    }

    #[test]
    fn empty_masks() {
        let logits = Tensor::zeros(&[1, 2]);
        assert!(matches!(cross_entropy(&logits, &[0], &[]), Err(TrainError::EmptyMask(_))));
        assert!(matches!(accuracy(&logits, &[0], &[]), Err(TrainError::EmptyMask(_))));
    }

    #[test]
    fn accuracy_ties_go_low() {
        let logits = Tensor::from_rows(&[[1.0, 1.0], [0.0, 2.0], [3.0, 3.0]]);
        assert_eq!(accuracy(&logits, &[0, 1, 1], &[0, 1, 2]).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        assert_eq!(mean_std(&[0.7, 0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0_f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { patience: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { drop_edge: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr: f64::NAN, ..ok }.validate().is_err());
    }
}
