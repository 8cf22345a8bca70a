//! Message-passing model zoo.
//!
//! Every variant shares one parameter store and one forward routine. Models
//! that need a feature transformation around the propagation body use an
//! envelope: `H0 = relu(X W_in + b_in)`, then the body, then
//! `logits = Z W_out + b_out`. GCN, SGC and GAT can also run without it in
//! their classic stacked form.
//!
//! Parameters are named (`input.weight`, `layers.3.gamma`,
//! `layers.0.heads.2.a_src`, `combine.logits`, `output.bias`, ...) and each
//! one is initialized from a stream keyed by the model seed and its name, so
//! two models built with the same seed share every parameter they have in
//! common.

pub mod layers;
pub mod reversible;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Var};
use crate::graph::{GraphDataset, NormalizedAdjacency};
use crate::rng::{hash_str, rng_for};
use crate::sparse::SparseMatrix;
use crate::tensor::{Tensor, TensorError};

pub use layers::{
    appnp_propagate, cognet_layer, couple, dgcn_combine, gat_layer, gcn_layer, gcnii_layer,
    jk_combine, sgc_propagate, Activation, Coef, GatHeadParams, JkMode,
};
pub use reversible::{recover_from_output, reversible_recover, solve_right, GAMMA_GUARD};

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("gamma = {gamma} is within 1e-6 of 1; recovery is ill-conditioned")]
    IllConditioned { gamma: f64 },
    #[error("identity-mixed weight matrix is singular")]
    Singular,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Gcn,
    Sgc,
    Gat,
    Appnp,
    Gcnii,
    JkNet,
    Dgcn,
    CoGNet,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Gcn,
        Variant::Sgc,
        Variant::Gat,
        Variant::Appnp,
        Variant::Gcnii,
        Variant::JkNet,
        Variant::Dgcn,
        Variant::CoGNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gcn => "gcn",
            Variant::Sgc => "sgc",
            Variant::Gat => "gat",
            Variant::Appnp => "appnp",
            Variant::Gcnii => "gcnii",
            Variant::JkNet => "jknet",
            Variant::Dgcn => "dgcn",
            Variant::CoGNet => "cognet",
        }
    }

    /// Variants whose body only makes sense between linear maps.
    pub fn requires_envelope(self) -> bool {
        !matches!(self, Variant::Gcn | Variant::Sgc | Variant::Gat)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ZooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == lower)
            .ok_or_else(|| ZooError::Config(format!("unknown variant {s:?}")))
    }
}

/// Identity-mapping strength per layer (1-based `ℓ`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BetaSchedule {
    /// `β_ℓ = ln(θ / ℓ + 1)`.
    Log { theta: f64 },
    Constant(f64),
}

impl BetaSchedule {
    pub fn beta(&self, layer: usize) -> f64 {
        match *self {
            BetaSchedule::Log { theta } => (theta / layer as f64 + 1.0).ln(),
            BetaSchedule::Constant(b) => b,
        }
    }
}

/// A scalar gate in `[0, 1]`: learned through a sigmoid, or held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Learned { init: f64 },
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub depth: usize,
    pub hidden: usize,
    /// Initial-residual weight (APPNP, GCNII).
    pub alpha: f64,
    /// GCNII identity mapping.
    pub beta: BetaSchedule,
    pub jk_mode: JkMode,
    /// CoGNet weight/identity mix.
    pub lambda: Gate,
    /// CoGNet coupling.
    pub gamma: Gate,
    /// DGCN weight/identity mix.
    pub dgcn_beta: Gate,
    /// CoGNet layers with 0-based index above this couple with `H0`.
    pub deep_switch: usize,
    pub dropout: f64,
    pub heads: usize,
    pub output_heads: usize,
    pub bias: bool,
    pub envelope: bool,
    pub gat_slope: f64,
}

impl ModelConfig {
    pub fn new(variant: Variant, depth: usize) -> Self {
        ModelConfig {
            variant,
            depth,
            hidden: 64,
            alpha: 0.1,
            beta: BetaSchedule::Log { theta: 0.5 },
            jk_mode: JkMode::Attention,
            lambda: Gate::Learned { init: 0.5 },
            gamma: Gate::Learned { init: 0.5 },
            dgcn_beta: Gate::Learned { init: 0.5 },
            deep_switch: 2,
            dropout: 0.5,
            heads: 8,
            output_heads: 1,
            bias: true,
            envelope: variant.requires_envelope(),
            gat_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        let bad = |m: String| Err(ZooError::Config(m));
        if self.variant.requires_envelope() && !self.envelope {
            return bad(format!("{} needs the linear envelope", self.variant));
        }
        if self.depth == 0 && self.variant.requires_envelope() {
            return bad(format!("{} needs depth >= 1", self.variant));
        }
        if self.hidden == 0 {
            return bad("hidden must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} outside [0, 1]", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout = {} outside [0, 1)", self.dropout));
        }
        match self.beta {
            BetaSchedule::Log { theta } if !(theta > 0.0 && theta.is_finite()) => {
                return bad(format!("beta theta = {theta} must be positive"));
            }
            BetaSchedule::Constant(b) if !(0.0..=1.0).contains(&b) => {
                return bad(format!("beta = {b} outside [0, 1]"));
            }
            _ => {}
        }
        for (name, g) in [("lambda", self.lambda), ("gamma", self.gamma), ("dgcn_beta", self.dgcn_beta)] {
            match g {
                Gate::Learned { init } if !(init > 0.0 && init < 1.0) => {
                    return bad(format!("{name} init = {init} outside (0, 1)"));
                }
                Gate::Fixed(v) if !(0.0..=1.0).contains(&v) => {
                    return bad(format!("{name} = {v} outside [0, 1]"));
                }
                _ => {}
            }
        }
        if self.heads == 0 || self.output_heads == 0 {
            return bad("head counts must be positive".into());
        }
        if self.variant == Variant::Gat && self.hidden % self.heads != 0 {
            return bad(format!(
                "hidden = {} not divisible by heads = {}",
                self.hidden, self.heads
            ));
        }
        if self.variant == Variant::Dgcn && self.jk_mode != JkMode::Attention {
            return bad("dgcn combines with attention only".into());
        }
        Ok(())
    }
}

/// Which weight-decay coefficient a parameter receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    /// The first map applied to raw features.
    Input,
    /// Propagation-layer weights after the first.
    Body,
    Output,
    /// Biases, gates, attention vectors and combine logits.
    NoDecay,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    groups: Vec<ParamGroup>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.values[i])
    }

    /// Replaces a parameter value; the shape must match.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<(), ZooError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| ZooError::UnknownParam(name.to_string()))?;
        if self.values[i].shape() != value.shape() {
            return Err(ZooError::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                self.values[i].shape(),
                value.shape()
            )));
        }
        self.values[i] = value;
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    fn push(&mut self, name: String, value: Tensor, group: ParamGroup) {
        self.names.push(name);
        self.values.push(value);
        self.groups.push(group);
    }
}

/// Node features, stored sparse when mostly zero.
#[derive(Clone, Debug, PartialEq)]
pub enum Features {
    Dense(Arc<Tensor>),
    Sparse(Arc<SparseMatrix>),
}

impl Features {
    /// Picks sparse storage below 25% density.
    pub fn new(x: &Tensor) -> Self {
        let nnz = x.data().iter().filter(|&&v| v != 0.0).count();
        if (nnz as f64) < 0.25 * x.len() as f64 {
            Features::Sparse(Arc::new(SparseMatrix::from_dense(x)))
        } else {
            Features::Dense(Arc::new(x.clone()))
        }
    }

    pub fn dense(x: Tensor) -> Self {
        Features::Dense(Arc::new(x))
    }

    pub fn n(&self) -> usize {
        match self {
            Features::Dense(t) => t.rows(),
            Features::Sparse(s) => s.n_rows(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Features::Dense(t) => t.cols(),
            Features::Sparse(s) => s.n_cols(),
        }
    }

    pub fn to_dense(&self) -> Tensor {
        match self {
            Features::Dense(t) => (**t).clone(),
            Features::Sparse(s) => s.to_dense(),
        }
    }
}

/// Everything a forward pass reads besides the parameters.
#[derive(Clone, Debug)]
pub struct ModelInput {
    pub features: Features,
    pub adj: NormalizedAdjacency,
}

impl ModelInput {
    pub fn new(features: Features, adj: NormalizedAdjacency) -> Result<Self, ZooError> {
        if features.n() != adj.n() {
            return Err(ZooError::Shape(format!(
                "{} feature rows but adjacency of order {}",
                features.n(),
                adj.n()
            )));
        }
        Ok(ModelInput { features, adj })
    }

    /// Features as given (no row normalization) and the normalized adjacency.
    pub fn from_dataset(g: &GraphDataset) -> Self {
        ModelInput {
            features: Features::new(g.features()),
            adj: crate::graph::build_normalized_adjacency(g),
        }
    }

    pub fn with_adjacency(&self, adj: NormalizedAdjacency) -> Self {
        ModelInput {
            features: self.features.clone(),
            adj,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks are keyed by `(seed, site, epoch)`.
    Train { seed: u64, epoch: u64 },
}

pub struct ForwardOutput {
    pub logits: Var,
    /// Body representations in layer order, for diagnostics.
    pub reps: Vec<Var>,
    /// `(store index, tape node)` for every parameter the pass touched.
    pub params: Vec<(usize, Var)>,
}

enum InitKind {
    Glorot,
    Zeros,
    Logit(f64),
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    init: InitKind,
    group: ParamGroup,
}

fn spec(name: impl Into<String>, shape: &[usize], init: InitKind, group: ParamGroup) -> Spec {
    Spec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
        group,
    }
}

fn gate_spec(out: &mut Vec<Spec>, name: String, gate: Gate) {
    if let Gate::Learned { init } = gate {
        out.push(spec(name, &[1], InitKind::Logit(init), ParamGroup::NoDecay));
    }
}

fn param_specs(cfg: &ModelConfig, d: usize, c: usize) -> Vec<Spec> {
    use InitKind::*;
    use ParamGroup::*;
    let (h, depth) = (cfg.hidden, cfg.depth);
    let mut out = Vec::new();
    let linear = |out: &mut Vec<Spec>, prefix: &str, i: usize, o: usize, group: ParamGroup| {
        out.push(spec(format!("{prefix}.weight"), &[i, o], Glorot, group));
        if cfg.bias {
            out.push(spec(format!("{prefix}.bias"), &[o], Zeros, NoDecay));
        }
    };

    if !cfg.envelope {
        match cfg.variant {
            Variant::Sgc => linear(&mut out, "output", d, c, Output),
            _ if depth == 0 => linear(&mut out, "output", d, c, Output),
            Variant::Gcn => {
                for l in 0..depth {
                    let i = if l == 0 { d } else { h };
                    let o = if l + 1 == depth { c } else { h };
                    linear(&mut out, &format!("layers.{l}"), i, o, if l == 0 { Input } else { Body });
                }
            }
            Variant::Gat => {
                for l in 0..depth {
                    let last = l + 1 == depth;
                    let i = if l == 0 { d } else { h };
                    let (heads, width) = if last { (cfg.output_heads, c) } else { (cfg.heads, h / cfg.heads) };
                    let group = if l == 0 { Input } else { Body };
                    for k in 0..heads {
                        let p = format!("layers.{l}.heads.{k}");
                        out.push(spec(format!("{p}.weight"), &[i, width], Glorot, group));
                        out.push(spec(format!("{p}.a_dst"), &[width], Glorot, NoDecay));
                        out.push(spec(format!("{p}.a_src"), &[width], Glorot, NoDecay));
                    }
                    if cfg.bias {
                        let o = if last { c } else { h };
                        out.push(spec(format!("layers.{l}.bias"), &[o], Zeros, NoDecay));
                    }
                }
            }
            _ => unreachable!("validated: variant requires the envelope"),
        }
        return out;
    }

    linear(&mut out, "input", d, h, Input);
    for l in 0..depth {
        let p = format!("layers.{l}");
        match cfg.variant {
            Variant::Gcn => linear(&mut out, &p, h, h, Body),
            Variant::Sgc | Variant::Appnp => {}
            Variant::Gat => {
                let width = h / cfg.heads;
                for k in 0..cfg.heads {
                    let q = format!("{p}.heads.{k}");
                    out.push(spec(format!("{q}.weight"), &[h, width], Glorot, Body));
                    out.push(spec(format!("{q}.a_dst"), &[width], Glorot, NoDecay));
                    out.push(spec(format!("{q}.a_src"), &[width], Glorot, NoDecay));
                }
                if cfg.bias {
                    out.push(spec(format!("{p}.bias"), &[h], Zeros, NoDecay));
                }
            }
            Variant::Gcnii | Variant::JkNet => {
                out.push(spec(format!("{p}.weight"), &[h, h], Glorot, Body));
            }
            Variant::Dgcn => {
                out.push(spec(format!("{p}.weight"), &[h, h], Glorot, Body));
                gate_spec(&mut out, format!("{p}.beta"), cfg.dgcn_beta);
            }
            Variant::CoGNet => {
                out.push(spec(format!("{p}.weight"), &[h, h], Glorot, Body));
                gate_spec(&mut out, format!("{p}.lambda"), cfg.lambda);
                gate_spec(&mut out, format!("{p}.gamma"), cfg.gamma);
            }
        }
    }
    let combined = matches!(cfg.variant, Variant::JkNet | Variant::Dgcn);
    if combined && cfg.jk_mode == JkMode::Attention {
        out.push(spec("combine.logits", &[1, depth], Zeros, NoDecay));
    }
    let z = if cfg.variant == Variant::JkNet && cfg.jk_mode == JkMode::Concat {
        depth * h
    } else {
        h
    };
    linear(&mut out, "output", z, c, Output);
    out
}

fn init_tensor(s: &Spec, seed: u64) -> Tensor {
    let mut rng = rng_for(seed, &[hash_str(&s.name)]);
    match s.init {
        InitKind::Zeros => Tensor::zeros(&s.shape),
        InitKind::Logit(p) => Tensor::full(&s.shape, (p / (1.0 - p)).ln()),
        InitKind::Glorot => {
            let (fan_in, fan_out) = match s.shape[..] {
                [a, b] => (a, b),
                [a] => (a, 1),
                _ => (1, 1),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut t = Tensor::zeros(&s.shape);
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-limit..=limit));
            t
        }
    }
}

const SITE_INPUT: u64 = 0;
const SITE_OUTPUT: u64 = 1 << 20;

/// Per-pass state: parameter leaves are pushed lazily on first use.
struct Pass<'a> {
    tape: &'a mut Tape,
    store: &'a ParamStore,
    index: HashMap<&'a str, usize>,
    vars: Vec<Option<Var>>,
    mode: Mode,
    dropout: f64,
}

impl<'a> Pass<'a> {
    fn p(&mut self, name: &str) -> Result<Var, ZooError> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| ZooError::UnknownParam(name.to_string()))?;
        if let Some(v) = self.vars[i] {
            return Ok(v);
        }
        let v = self.tape.param(self.store.values[i].clone())?;
        self.vars[i] = Some(v);
        Ok(v)
    }

    fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn drop(&mut self, x: Var, site: u64) -> Result<Var, ZooError> {
        match self.mode {
            Mode::Train { seed, epoch } if self.dropout > 0.0 => {
                let mut rng = rng_for(seed, &[site, epoch]);
                Ok(self.tape.dropout(x, self.dropout, &mut rng)?)
            }
            _ => Ok(x),
        }
    }

    fn gate(&mut self, gate: Gate, name: &str) -> Result<Coef, ZooError> {
        Ok(match gate {
            Gate::Fixed(v) => Coef::Const(v),
            Gate::Learned { .. } => {
                let raw = self.p(name)?;
                Coef::Var(self.tape.sigmoid(raw)?)
            }
        })
    }

    fn bias(&mut self, x: Var, name: &str) -> Result<Var, ZooError> {
        if self.has(name) {
            let b = self.p(name)?;
            Ok(self.tape.add_bias(x, b)?)
        } else {
            Ok(x)
        }
    }

    /// `dropout(X) W` for raw features.
    fn feature_product(&mut self, x: &Features, w: Var, site: u64) -> Result<Var, ZooError> {
        match x {
            Features::Sparse(s) => {
                let s = match self.mode {
                    Mode::Train { seed, epoch } if self.dropout > 0.0 => {
                        let mut rng = rng_for(seed, &[site, epoch]);
                        let keep = 1.0 / (1.0 - self.dropout);
                        let p = self.dropout;
                        let values = s
                            .values()
                            .iter()
                            .map(|&v| if rng.gen::<f64>() < p { 0.0 } else { v * keep })
                            .collect();
                        Arc::new(s.with_values(values)?)
                    }
                    _ => Arc::clone(s),
                };
                Ok(self.tape.spmm(&s, w)?)
            }
            Features::Dense(t) => {
                let c = self.tape.constant((**t).clone())?;
                let c = self.drop(c, site)?;
                Ok(self.tape.matmul(c, w)?)
            }
        }
    }

    /// `dropout(Z) W + b` under `prefix`.
    fn linear(&mut self, z: Var, prefix: &str, site: u64) -> Result<Var, ZooError> {
        let z = self.drop(z, site)?;
        let w = self.p(&format!("{prefix}.weight"))?;
        let out = self.tape.matmul(z, w)?;
        self.bias(out, &format!("{prefix}.bias"))
    }

    fn gat_layer_heads(
        &mut self,
        input: GatInput<'_>,
        prefix: &str,
        heads: usize,
        concat: bool,
        adj: &Arc<SparseMatrix>,
        slope: f64,
        site: u64,
    ) -> Result<Var, ZooError> {
        let mut outs = Vec::with_capacity(heads);
        let dropped = match input {
            GatInput::Hidden(h) => Some(self.drop(h, site)?),
            GatInput::Raw(_) => None,
        };
        for k in 0..heads {
            let q = format!("{prefix}.heads.{k}");
            let w = self.p(&format!("{q}.weight"))?;
            let wh = match (input, dropped) {
                (GatInput::Raw(x), _) => self.feature_product(x, w, site)?,
                (_, Some(h)) => self.tape.matmul(h, w)?,
                _ => unreachable!(),
            };
            let a_dst = self.p(&format!("{q}.a_dst"))?;
            let a_src = self.p(&format!("{q}.a_src"))?;
            outs.push(self.tape.gat_attention(wh, a_dst, a_src, adj, slope)?);
        }
        let merged = if concat {
            self.tape.concat_cols(&outs)?
        } else {
            let mut s = outs[0];
            for &o in &outs[1..] {
                s = self.tape.add(s, o)?;
            }
            self.tape.scale(s, 1.0 / heads as f64)?
        };
        self.bias(merged, &format!("{prefix}.bias"))
    }
}

#[derive(Clone, Copy)]
enum GatInput<'a> {
    Raw(&'a Features),
    Hidden(Var),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    config: ModelConfig,
    n_features: usize,
    n_classes: usize,
    params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, n_features: usize, n_classes: usize, seed: u64) -> Result<Self, ZooError> {
        config.validate()?;
        if n_features == 0 || n_classes == 0 {
            return Err(ZooError::Config("feature and class counts must be positive".into()));
        }
        let mut params = ParamStore::default();
        for s in param_specs(&config, n_features, n_classes) {
            let value = init_tensor(&s, seed);
            params.push(s.name, value, s.group);
        }
        Ok(Model {
            config,
            n_features,
            n_classes,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Checks internal consistency after deserialization.
    pub fn validate(&self) -> Result<(), ZooError> {
        self.config.validate()?;
        let specs = param_specs(&self.config, self.n_features, self.n_classes);
        if specs.len() != self.params.len() {
            return Err(ZooError::Shape(format!(
                "{} parameters stored, {} expected",
                self.params.len(),
                specs.len()
            )));
        }
        for (s, (name, value)) in specs.iter().zip(self.params.names.iter().zip(&self.params.values)) {
            if &s.name != name || s.shape != value.shape() {
                return Err(ZooError::Shape(format!("parameter {name} does not match the config")));
            }
        }
        Ok(())
    }

    /// Builds the forward graph on `tape`.
    pub fn forward(&self, tape: &mut Tape, input: &ModelInput, mode: Mode) -> Result<ForwardOutput, ZooError> {
        if input.features.d() != self.n_features {
            return Err(ZooError::Shape(format!(
                "model expects {} features, input has {}",
                self.n_features,
                input.features.d()
            )));
        }
        let cfg = &self.config;
        let mut pass = Pass {
            tape,
            store: &self.params,
            index: self.params.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect(),
            vars: vec![None; self.params.len()],
            mode,
            dropout: cfg.dropout,
        };
        let adj = Arc::clone(input.adj.matrix());
        let mut reps = Vec::new();

        let logits = if cfg.envelope {
            self.forward_enveloped(&mut pass, input, &adj, &mut reps)?
        } else {
            self.forward_classic(&mut pass, input, &adj, &mut reps)?
        };

        let params = pass
            .vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .collect();
        Ok(ForwardOutput { logits, reps, params })
    }

    fn forward_classic(
        &self,
        pass: &mut Pass<'_>,
        input: &ModelInput,
        adj: &Arc<SparseMatrix>,
        reps: &mut Vec<Var>,
    ) -> Result<Var, ZooError> {
        let cfg = &self.config;
        let depth = cfg.depth;
        match cfg.variant {
            Variant::Sgc => {
                let mut p = pass.tape.constant(input.features.to_dense())?;
                reps.push(p);
                for _ in 0..depth {
                    p = pass.tape.spmm(adj, p)?;
                    reps.push(p);
                }
                pass.linear(p, "output", SITE_OUTPUT)
            }
            _ if depth == 0 => {
                let w = pass.p("output.weight")?;
                let out = pass.feature_product(&input.features, w, SITE_INPUT)?;
                pass.bias(out, "output.bias")
            }
            Variant::Gcn => {
                let mut h = None;
                for l in 0..depth {
                    let w = pass.p(&format!("layers.{l}.weight"))?;
                    let site = l as u64 + 1;
                    let hw = match h {
                        None => pass.feature_product(&input.features, w, site)?,
                        Some(h) => {
                            let x = pass.drop(h, site)?;
                            pass.tape.matmul(x, w)?
                        }
                    };
                    let out = pass.tape.spmm(adj, hw)?;
                    let out = pass.bias(out, &format!("layers.{l}.bias"))?;
                    if l + 1 == depth {
                        return Ok(out);
                    }
                    let a = pass.tape.relu(out)?;
                    reps.push(a);
                    h = Some(a);
                }
                unreachable!("depth >= 1")
            }
            Variant::Gat => {
                let mut h: Option<Var> = None;
                for l in 0..depth {
                    let last = l + 1 == depth;
                    let heads = if last { cfg.output_heads } else { cfg.heads };
                    let src = match h {
                        None => GatInput::Raw(&input.features),
                        Some(h) => GatInput::Hidden(h),
                    };
                    let out = pass.gat_layer_heads(
                        src,
                        &format!("layers.{l}"),
                        heads,
                        !last,
                        adj,
                        cfg.gat_slope,
                        l as u64 + 1,
                    )?;
                    if last {
                        return Ok(out);
                    }
                    let a = pass.tape.elu(out)?;
                    reps.push(a);
                    h = Some(a);
                }
                unreachable!("depth >= 1")
            }
            v => Err(ZooError::Config(format!("{v} needs the linear envelope"))),
        }
    }

    fn forward_enveloped(
        &self,
        pass: &mut Pass<'_>,
        input: &ModelInput,
        adj: &Arc<SparseMatrix>,
        reps: &mut Vec<Var>,
    ) -> Result<Var, ZooError> {
        let cfg = &self.config;
        let w_in = pass.p("input.weight")?;
        let xw = pass.feature_product(&input.features, w_in, SITE_INPUT)?;
        let xw = pass.bias(xw, "input.bias")?;
        let h0 = pass.tape.relu(xw)?;
        reps.push(h0);

        let mut h = h0;
        let mut combine_terms = Vec::new();
        for l in 0..cfg.depth {
            let p = format!("layers.{l}");
            let site = l as u64 + 1;
            match cfg.variant {
                Variant::Gcn => {
                    let x = pass.drop(h, site)?;
                    let w = pass.p(&format!("{p}.weight"))?;
                    let b = if pass.has(&format!("{p}.bias")) {
                        Some(pass.p(&format!("{p}.bias"))?)
                    } else {
                        None
                    };
                    let out = layers::gcn(pass.tape, adj, x, w, b)?;
                    h = pass.tape.relu(out)?;
                }
                Variant::Sgc => h = pass.tape.spmm(adj, h)?,
                Variant::Gat => {
                    let out = pass.gat_layer_heads(
                        GatInput::Hidden(h),
                        &p,
                        cfg.heads,
                        true,
                        adj,
                        cfg.gat_slope,
                        site,
                    )?;
                    h = pass.tape.elu(out)?;
                }
                Variant::Appnp => h = layers::appnp_step(pass.tape, adj, h, h0, cfg.alpha)?,
                Variant::Gcnii => {
                    let x = pass.drop(h, site)?;
                    let w = pass.p(&format!("{p}.weight"))?;
                    let beta = Coef::Const(cfg.beta.beta(l + 1));
                    let out = layers::gcnii(pass.tape, adj, x, h0, cfg.alpha, beta, w)?;
                    h = pass.tape.relu(out)?;
                }
                Variant::JkNet => {
                    h = pass.tape.spmm(adj, h)?;
                    let w = pass.p(&format!("{p}.weight"))?;
                    combine_terms.push(pass.tape.matmul(h, w)?);
                }
                Variant::Dgcn => {
                    h = pass.tape.spmm(adj, h)?;
                    let w = pass.p(&format!("{p}.weight"))?;
                    let beta = pass.gate(cfg.dgcn_beta, &format!("{p}.beta"))?;
                    combine_terms.push(layers::identity_mix(pass.tape, h, w, beta)?);
                }
                Variant::CoGNet => {
                    // reps[l] is H^(l); H^(-1) is taken to be H^(0).
                    let prev = if l <= cfg.deep_switch {
                        reps[l.saturating_sub(1)]
                    } else {
                        h0
                    };
                    let x = pass.drop(h, site)?;
                    let w = pass.p(&format!("{p}.weight"))?;
                    let lambda = pass.gate(cfg.lambda, &format!("{p}.lambda"))?;
                    let gamma = pass.gate(cfg.gamma, &format!("{p}.gamma"))?;
                    let (_, out) = layers::cognet(pass.tape, adj, x, prev, lambda, gamma, w)?;
                    h = out;
                }
            }
            reps.push(h);
        }

        let z = match cfg.variant {
            Variant::JkNet | Variant::Dgcn => {
                let logits = if pass.has("combine.logits") {
                    Some(pass.p("combine.logits")?)
                } else {
                    None
                };
                layers::jk_merge(pass.tape, &combine_terms, cfg.jk_mode, logits)?
            }
            _ => h,
        };
        pass.linear(z, "output", SITE_OUTPUT)
    }

    /// Logits as a plain tensor.
    pub fn logits(&self, input: &ModelInput, mode: Mode) -> Result<Tensor, ZooError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input, mode)?;
        Ok(tape.value(out.logits).clone())
    }

    /// Body representations of an evaluation pass.
    pub fn representations(&self, input: &ModelInput) -> Result<Vec<Tensor>, ZooError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input, Mode::Eval)?;
        Ok(out.reps.iter().map(|&v| tape.value(v).clone()).collect())
    }
}
