use gnnlab_bench::diagnose::{format_residuals, layer_residuals, model_residuals};
use gnnlab_bench::checkpoint::{load_checkpoint, save_checkpoint};
use gnnlab_core::graph::normalize_edges;
use gnnlab_core::zoo::{Features, Gate, Mode, Model, ModelConfig, ModelInput, Variant};
use gnnlab_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn residuals_match_elementwise_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reps: Vec<Tensor> = (0..4).map(|_| random_tensor(&mut rng, 5, 3)).collect();
    let got = layer_residuals(&reps).unwrap();
    assert_eq!(got.len(), 3);
    for (l, r) in got.iter().enumerate() {
        let (a, b) = (reps[l].data(), reps[l + 1].data());
        let num: f64 = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((r - num / den).abs() < 1e-14);
    }
    let z = Tensor::zeros(&[2, 2]);
    assert_eq!(layer_residuals(&[z.clone(), z.clone()]).unwrap(), vec![0.0]);
    assert_eq!(layer_residuals(&[z, Tensor::ones(&[2, 2])]).unwrap(), vec![f64::INFINITY]);
    assert!(layer_residuals(&[Tensor::ones(&[2, 2]), Tensor::ones(&[2, 3])]).is_err());
    assert!(layer_residuals(&[Tensor::ones(&[2, 2])]).unwrap().is_empty());
}

#[test]
fn identity_propagation_is_a_fixed_point() {
    let (n, d, depth) = (6, 4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, n, d).map(f64::abs);
    // No edges: the normalized adjacency with self-loops is the identity.
    let input = ModelInput::new(Features::dense(x), normalize_edges(n, &[])).unwrap();
    let mut cfg = ModelConfig::new(Variant::CoGNet, depth);
    cfg.hidden = d;
    cfg.bias = false;
    cfg.gamma = Gate::Fixed(1.0);
    cfg.lambda = Gate::Fixed(1.0);
    let mut model = Model::new(cfg, d, 3, 7).unwrap();
    model.params_mut().set("input.weight", Tensor::eye(d)).unwrap();
    for l in 0..depth {
        model.params_mut().set(&format!("layers.{l}.weight"), Tensor::eye(d)).unwrap();
    }
    let res = model_residuals(&model, &input).unwrap();
    assert_eq!(res.len(), depth);
    assert!(res.iter().all(|&r| r < 1e-15), "{res:?}");
}

#[test]
fn sgc_on_a_regular_graph_keeps_uniform_features() {
    let n = 10;
    // A cycle: every node has degree 2, so every row of the adjacency sums to 1.
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let input = ModelInput::new(Features::dense(Tensor::full(&[n, 3], 0.7)), normalize_edges(n, &edges)).unwrap();
    let model = Model::new(ModelConfig::new(Variant::Sgc, 6), 3, 2, 1).unwrap();
    let res = model_residuals(&model, &input).unwrap();
    assert_eq!(res.len(), 6);
    assert!(res.iter().all(|&r| r < 1e-14), "{res:?}");
}

#[test]
fn csv_is_labelled_a_proxy() {
    let text = format_residuals(&[0.5, 0.25]);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with('#') && lines[0].contains("proxy"));
    assert_eq!(&lines[1..], &["layer,residual", "0,0.5", "1,0.25"]);
}

#[test]
fn checkpoints_round_trip_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, 7, 5);
    let input = ModelInput::new(Features::dense(x), normalize_edges(7, &[(0, 1), (2, 3), (3, 6)])).unwrap();
    for v in Variant::ALL {
        let mut cfg = ModelConfig::new(v, 3);
        cfg.hidden = 8;
        cfg.heads = 2;
        let model = Model::new(cfg, 5, 3, 11).unwrap();
        let path = dir.path().join(format!("{v}.json"));
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.logits(&input, Mode::Eval).unwrap(), model.logits(&input, Mode::Eval).unwrap());
    }
    std::fs::write(dir.path().join("bad.json"), "{\"config\": 3}").unwrap();
    assert!(load_checkpoint(&dir.path().join("bad.json")).is_err());
    assert!(load_checkpoint(&dir.path().join("missing.json")).is_err());
}
