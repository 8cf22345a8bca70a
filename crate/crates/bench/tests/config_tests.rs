use std::path::Path;

use gnnlab_bench::config::{check_depths, preset};
use gnnlab_bench::{resolve_seed, BenchError, ExperimentConfig};
use gnnlab_core::optim::WeightDecayMode;
use gnnlab_core::zoo::{BetaSchedule, Gate, JkMode, Variant};
use proptest::prelude::*;

const FULL: &str = "\
# global keys
dataset = data/cora
runs = 4
seed = 99
out = results
row_normalize = false

[model]
variant = gcnii
hidden = 32
beta = log:0.7
lambda = learned:0.3
gamma = 0.9
jk_mode = concat
dropout = 0.2

[train]
lr = 0.05
body_weight_decay = 0.02
decay_mode = decoupled
max_epochs = 30

[sweep]
depths = 4, 8, 16
";

fn parse(text: &str) -> Result<ExperimentConfig, BenchError> {
    ExperimentConfig::parse(text, Path::new("/base"))
}

#[test]
fn full_config_parses() {
    let cfg = parse(FULL).unwrap();
    assert_eq!(cfg.dataset, Path::new("/base/data/cora"));
    assert_eq!(cfg.out, Path::new("/base/results"));
    assert_eq!((cfg.runs, cfg.seed, cfg.row_normalize, cfg.timing, cfg.checkpoints), (4, 99, false, false, true));
    assert_eq!(cfg.cells(), vec![(Variant::Gcnii, 4), (Variant::Gcnii, 8), (Variant::Gcnii, 16)]);
    let (m, t) = cfg.cell_configs(Variant::Gcnii, 8).unwrap();
    assert_eq!(m.depth, 8);
    assert_eq!(m.hidden, 32);
    assert_eq!(m.beta, BetaSchedule::Log { theta: 0.7 });
    assert_eq!(m.lambda, Gate::Learned { init: 0.3 });
    assert_eq!(m.gamma, Gate::Fixed(0.9));
    assert_eq!(m.jk_mode, JkMode::Concat);
    assert_eq!(m.dropout, 0.2);
    assert_eq!((t.lr, t.body_weight_decay, t.decay_mode, t.max_epochs), (0.05, Some(0.02), WeightDecayMode::Decoupled, 30));
    assert_eq!(t.weight_decay, preset(Variant::Gcnii).1.weight_decay);
    assert_eq!(t.seed, 99);
}

#[test]
fn defaults_and_presets() {
    let cfg = parse("dataset = d\n[model]\nvariant = gcn\n").unwrap();
    assert_eq!(cfg.runs, 10);
    assert_eq!(cfg.seed, 0);
    assert!(cfg.row_normalize);
    assert_eq!(cfg.cells(), vec![(Variant::Gcn, 2)]);
    let (m, t) = cfg.cell_configs(Variant::Gcn, 2).unwrap();
    assert_eq!((m.hidden, m.dropout), (64, 0.5));
    assert_eq!((t.lr, t.weight_decay), (0.01, 5e-4));
    for v in Variant::ALL {
        let (m, t) = preset(v);
        assert_eq!(t.decay_mode, WeightDecayMode::L2, "{v}");
        m.validate().unwrap();
        t.validate().unwrap();
    }
    let cfg = parse("dataset = d\n[model]\nvariant = cognet\ndepth = 32\n").unwrap();
    assert_eq!(cfg.cells(), vec![(Variant::CoGNet, 32)]);
}

#[test]
fn several_variants() {
    let cfg = parse("dataset = d\n[sweep]\nvariants = gcn,cognet\ndepths = 4,32\n").unwrap();
    assert_eq!(
        cfg.cells(),
        vec![(Variant::Gcn, 4), (Variant::Gcn, 32), (Variant::CoGNet, 4), (Variant::CoGNet, 32)]
    );
    let cfg = cfg.with_depths(vec![2, 3]).unwrap();
    assert_eq!(cfg.cells().len(), 4);
    assert!(parse("dataset = d\n[model]\nvariant = gcn\n").unwrap().with_depths(vec![3, 3]).is_err());
}

#[test]
fn rejections() {
    let cases = [
        "runs = 3\n[model]\nvariant = gcn\n",
        "dataset = d\n",
        "dataset = d\nbogus = 1\n[model]\nvariant = gcn\n",
        "dataset = d\n[model]\nvariant = gcn\nwidth = 3\n",
        "dataset = d\n[model]\nvariant = gcn\n[train]\nlr = fast\n",
        "dataset = d\n[model]\nvariant = gcn\nhidden = 8\nhidden = 9\n",
        "dataset = d\n[model]\nvariant = mlp\n",
        "dataset = d\n[extra]\n",
        "dataset = d\n[model]\nvariant = gcn\ndepth = 2\n[sweep]\ndepths = 4,8\n",
        "dataset = d\n[model]\nvariant = gcn\n[sweep]\nvariants = gcn\n",
        "dataset = d\n[model]\nvariant = gcn\n[sweep]\ndepths = 8,4\n",
        "dataset = d\nruns = 0\n[model]\nvariant = gcn\n",
        "dataset = d\n[model]\nvariant = gcn\ndropout = 1.5\n",
        "dataset = d\n[model]\nvariant = gcn\ngamma = shaky:0.4\n",
        "dataset = d\n[model]\nvariant = gcn\n[train]\npatience = 0\n",
        "dataset = d\n[model]\nvariant = gcn\ndepth = x\n",
        "dataset = d\n[model]\nvariant = gcn\njust words\n",
    ];
    for text in cases {
        assert!(matches!(parse(text), Err(BenchError::Config(_))), "accepted:\n{text}");
    }
}

#[test]
fn seed_precedence() {
    assert_eq!(resolve_seed(None, None, 5).unwrap(), 5);
    assert_eq!(resolve_seed(None, Some("12"), 5).unwrap(), 12);
    assert_eq!(resolve_seed(Some(3), Some("12"), 5).unwrap(), 3);
    assert_eq!(resolve_seed(None, Some(" "), 5).unwrap(), 5);
    assert!(resolve_seed(None, Some("-1"), 5).is_err());
}

fn tagged_lines() -> Vec<(String, String)> {
    let mut section = String::new();
    let mut out = Vec::new();
    for l in FULL.lines() {
        if l.starts_with('[') {
            section = l.to_string();
        } else if l.contains('=') {
            out.push((section.clone(), l.to_string()));
        }
    }
    out
}

proptest! {
    #[test]
    fn line_order_is_irrelevant(lines in Just(tagged_lines()).prop_shuffle()) {
        // Globals first, then each key under its own repeated header.
        let mut text = String::new();
        for (_, line) in lines.iter().filter(|(s, _)| s.is_empty()) {
            text.push_str(&format!("{line}\n"));
        }
        for (sec, line) in lines.iter().filter(|(s, _)| !s.is_empty()) {
            text.push_str(&format!("{sec}\n{line}\n"));
        }
        prop_assert_eq!(parse(&text).unwrap(), parse(FULL).unwrap());
    }

    #[test]
    fn depth_lists_must_strictly_increase(depths in prop::collection::vec(0usize..40, 0..6)) {
        let increasing = !depths.is_empty() && depths.windows(2).all(|w| w[0] < w[1]);
        prop_assert_eq!(check_depths(&depths).is_ok(), increasing);
    }
}
