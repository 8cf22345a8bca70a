//! Experiment configs: a flat `key = value` text format with `[model]`,
//! `[train]` and `[sweep]` sections. Keys before the first header are
//! global. `#` starts a comment. Key order carries no meaning.
//!
//! Every variant starts from its preset; keys in `[model]` and `[train]`
//! override it for all variants of the experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gnnlab_core::optim::WeightDecayMode;
use gnnlab_core::train::TrainConfig;
use gnnlab_core::zoo::{BetaSchedule, Gate, JkMode, ModelConfig, Variant};

use crate::BenchError;

const GLOBAL_KEYS: &[&str] = &[
    "dataset",
    "runs",
    "seed",
    "out",
    "row_normalize",
    "timing",
    "checkpoints",
];
const MODEL_KEYS: &[&str] = &[
    "variant",
    "depth",
    "hidden",
    "alpha",
    "beta",
    "jk_mode",
    "lambda",
    "gamma",
    "dgcn_beta",
    "deep_switch",
    "dropout",
    "heads",
    "output_heads",
    "bias",
    "envelope",
    "gat_slope",
];
const TRAIN_KEYS: &[&str] = &[
    "lr",
    "weight_decay",
    "body_weight_decay",
    "decay_mode",
    "max_epochs",
    "patience",
    "drop_edge",
    "eval_every",
];
const SWEEP_KEYS: &[&str] = &["depths", "variants"];

pub const DEFAULT_RUNS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub row_normalize: bool,
    /// Write measured wall time into the `seconds` column. Off by default
    /// so reports are byte-reproducible.
    pub timing: bool,
    /// Save the first run of every cell as a JSON checkpoint.
    pub checkpoints: bool,
    pub variants: Vec<Variant>,
    /// `None` means each variant's preset depth.
    pub depths: Option<Vec<usize>>,
    model: BTreeMap<String, String>,
    train: BTreeMap<String, String>,
}

fn err<T>(msg: impl Into<String>) -> Result<T, BenchError> {
    Err(BenchError::Config(msg.into()))
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, BenchError> {
    v.parse()
        .map_err(|_| BenchError::Config(format!("bad value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, BenchError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => err(format!("bad value {v:?} for {key}, expected true or false")),
    }
}

pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, BenchError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// `learned:0.5`, `fixed:0.3`, or a bare number for a fixed gate.
fn parse_gate(key: &str, v: &str) -> Result<Gate, BenchError> {
    match v.split_once(':') {
        Some(("learned", x)) => Ok(Gate::Learned { init: parse_value(key, x)? }),
        Some(("fixed", x)) => Ok(Gate::Fixed(parse_value(key, x)?)),
        Some(_) => err(format!("bad gate {v:?} for {key}")),
        None => Ok(Gate::Fixed(parse_value(key, v)?)),
    }
}

/// `log:THETA`, `constant:B`, or a bare number for a constant.
fn parse_beta(v: &str) -> Result<BetaSchedule, BenchError> {
    match v.split_once(':') {
        Some(("log", x)) => Ok(BetaSchedule::Log { theta: parse_value("beta", x)? }),
        Some(("constant", x)) => Ok(BetaSchedule::Constant(parse_value("beta", x)?)),
        Some(_) => err(format!("bad beta schedule {v:?}")),
        None => Ok(BetaSchedule::Constant(parse_value("beta", v)?)),
    }
}

fn parse_jk(v: &str) -> Result<JkMode, BenchError> {
    match v {
        "attention" => Ok(JkMode::Attention),
        "concat" => Ok(JkMode::Concat),
        "max" | "maxpool" => Ok(JkMode::MaxPool),
        _ => err(format!("bad jk_mode {v:?}")),
    }
}

pub fn parse_variant(v: &str) -> Result<Variant, BenchError> {
    v.parse().map_err(|e: gnnlab_core::zoo::ZooError| BenchError::Config(e.to_string()))
}

/// Published per-variant hyperparameters, with L2-coupled weight decay.
pub fn preset(variant: Variant) -> (ModelConfig, TrainConfig) {
    let train = TrainConfig {
        lr: 0.01,
        weight_decay: 5e-4,
        body_weight_decay: None,
        decay_mode: WeightDecayMode::L2,
        max_epochs: 200,
        patience: 100,
        ..TrainConfig::default()
    };
    let deep = TrainConfig {
        body_weight_decay: Some(0.01),
        max_epochs: 1500,
        ..train.clone()
    };
    let (depth, dropout, train) = match variant {
        // Only the first layer is decayed.
        Variant::Gcn => (2, 0.5, TrainConfig { body_weight_decay: Some(0.0), ..train }),
        Variant::Sgc => (
            2,
            0.0,
            TrainConfig { lr: 0.2, weight_decay: 5e-5, max_epochs: 100, ..train },
        ),
        Variant::Gat => (2, 0.6, TrainConfig { lr: 0.005, max_epochs: 1000, ..train }),
        Variant::Appnp => (10, 0.5, TrainConfig { weight_decay: 5e-3, max_epochs: 1000, ..train }),
        Variant::JkNet => (4, 0.5, TrainConfig { max_epochs: 1000, ..train }),
        Variant::Gcnii | Variant::Dgcn | Variant::CoGNet => (16, 0.6, deep),
    };
    let mut model = ModelConfig::new(variant, depth);
    model.dropout = dropout;
    (model, train)
}

fn apply_model(cfg: &mut ModelConfig, key: &str, v: &str) -> Result<(), BenchError> {
    match key {
        "variant" => {}
        "depth" => cfg.depth = parse_value(key, v)?,
        "hidden" => cfg.hidden = parse_value(key, v)?,
        "alpha" => cfg.alpha = parse_value(key, v)?,
        "beta" => cfg.beta = parse_beta(v)?,
        "jk_mode" => cfg.jk_mode = parse_jk(v)?,
        "lambda" => cfg.lambda = parse_gate(key, v)?,
        "gamma" => cfg.gamma = parse_gate(key, v)?,
        "dgcn_beta" => cfg.dgcn_beta = parse_gate(key, v)?,
        "deep_switch" => cfg.deep_switch = parse_value(key, v)?,
        "dropout" => cfg.dropout = parse_value(key, v)?,
        "heads" => cfg.heads = parse_value(key, v)?,
        "output_heads" => cfg.output_heads = parse_value(key, v)?,
        "bias" => cfg.bias = parse_bool(key, v)?,
        "envelope" => cfg.envelope = parse_bool(key, v)?,
        "gat_slope" => cfg.gat_slope = parse_value(key, v)?,
        _ => return err(format!("unknown key model.{key}")),
    }
    Ok(())
}

fn apply_train(cfg: &mut TrainConfig, key: &str, v: &str) -> Result<(), BenchError> {
    match key {
        "lr" => cfg.lr = parse_value(key, v)?,
        "weight_decay" => cfg.weight_decay = parse_value(key, v)?,
        "body_weight_decay" => {
            cfg.body_weight_decay = match v {
                "none" | "same" => None,
                _ => Some(parse_value(key, v)?),
            }
        }
        "decay_mode" => {
            cfg.decay_mode = match v {
                "l2" => WeightDecayMode::L2,
                "decoupled" => WeightDecayMode::Decoupled,
                _ => return err(format!("bad decay_mode {v:?}, expected l2 or decoupled")),
            }
        }
        "max_epochs" => cfg.max_epochs = parse_value(key, v)?,
        "patience" => cfg.patience = parse_value(key, v)?,
        "drop_edge" => cfg.drop_edge = parse_value(key, v)?,
        "eval_every" => cfg.eval_every = parse_value(key, v)?,
        _ => return err(format!("unknown key train.{key}")),
    }
    Ok(())
}

pub fn check_depths(depths: &[usize]) -> Result<(), BenchError> {
    if depths.is_empty() {
        return err("depth list is empty");
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return err(format!("depth list {depths:?} is not strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, BenchError> {
        let mut sections: BTreeMap<&str, BTreeMap<String, String>> = BTreeMap::new();
        let mut section = "";
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| BenchError::Config(format!("line {}: {msg}", no + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "model" => "model",
                    "train" => "train",
                    "sweep" => "sweep",
                    other => return Err(at(format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let known = match section {
                "" => GLOBAL_KEYS,
                "model" => MODEL_KEYS,
                "train" => TRAIN_KEYS,
                _ => SWEEP_KEYS,
            };
            if !known.contains(&k) {
                let full = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
                return Err(at(format!("unknown key {full}")));
            }
            if sections.entry(section).or_default().insert(k.to_string(), v.to_string()).is_some() {
                return Err(at(format!("key {k} given twice")));
            }
        }

        let global = sections.remove("").unwrap_or_default();
        let model = sections.remove("model").unwrap_or_default();
        let train = sections.remove("train").unwrap_or_default();
        let sweep = sections.remove("sweep").unwrap_or_default();

        let path = |key: &str| -> Option<PathBuf> { global.get(key).map(|p| base.join(p)) };
        let dataset = path("dataset").ok_or_else(|| BenchError::Config("missing key dataset".into()))?;
        let runs = match global.get("runs") {
            Some(v) => parse_value("runs", v)?,
            None => DEFAULT_RUNS,
        };
        if runs == 0 {
            return err("runs must be positive");
        }
        let flag = |key: &str, default: bool| global.get(key).map_or(Ok(default), |v| parse_bool(key, v));

        let variants = match (model.get("variant"), sweep.get("variants")) {
            (Some(_), Some(_)) => return err("give model.variant or sweep.variants, not both"),
            (Some(v), None) => vec![parse_variant(v)?],
            (None, Some(vs)) => vs.split(',').map(|s| parse_variant(s.trim())).collect::<Result<_, _>>()?,
            (None, None) => return err("missing key model.variant"),
        };
        if variants.is_empty() {
            return err("sweep.variants is empty");
        }
        let depths = match (model.get("depth"), sweep.get("depths")) {
            (Some(_), Some(_)) => return err("give model.depth or sweep.depths, not both"),
            (_, Some(d)) => Some(parse_list("depths", d)?),
            _ => None,
        };

        let cfg = ExperimentConfig {
            dataset,
            runs,
            seed: global.get("seed").map_or(Ok(0), |v| parse_value("seed", v))?,
            out: path("out").unwrap_or_else(|| base.join("out")),
            row_normalize: flag("row_normalize", true)?,
            timing: flag("timing", false)?,
            checkpoints: flag("checkpoints", true)?,
            variants,
            depths,
            model,
            train,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if let Some(d) = &self.depths {
            check_depths(d)?;
        }
        if let Some(d) = self.model.get("depth") {
            parse_value::<usize>("depth", d)?;
        }
        for cell in self.cells() {
            let (m, t) = self.cell_configs(cell.0, cell.1)?;
            m.validate()?;
            t.validate()?;
        }
        Ok(())
    }

    /// Replaces the depth list, as `bench sweep --depths` does.
    pub fn with_depths(mut self, depths: Vec<usize>) -> Result<Self, BenchError> {
        check_depths(&depths)?;
        self.model.remove("depth");
        self.depths = Some(depths);
        self.validate()?;
        Ok(self)
    }

    /// `(variant, depth)` cells in config order.
    pub fn cells(&self) -> Vec<(Variant, usize)> {
        let mut out = Vec::new();
        for &v in &self.variants {
            match &self.depths {
                Some(ds) => out.extend(ds.iter().map(|&d| (v, d))),
                None => {
                    let mut m = preset(v).0;
                    if let Some(d) = self.model.get("depth") {
                        m.depth = d.parse().unwrap_or(m.depth);
                    }
                    out.push((v, m.depth));
                }
            }
        }
        out
    }

    /// Model and training configs of one cell. The training seed is the
    /// experiment base seed; per-run seeds are derived from it later.
    pub fn cell_configs(&self, variant: Variant, depth: usize) -> Result<(ModelConfig, TrainConfig), BenchError> {
        let (mut m, mut t) = preset(variant);
        for (k, v) in &self.model {
            apply_model(&mut m, k, v)?;
        }
        m.depth = depth;
        for (k, v) in &self.train {
            apply_train(&mut t, k, v)?;
        }
        t.seed = self.seed;
        Ok((m, t))
    }
}
