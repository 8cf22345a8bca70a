//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! The Cora criteria read the dataset in the text format from `CORA_DIR`
//! (default `data/cora` at the workspace root). See
//! `scripts/planetoid_to_text.py` for the conversion.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gnnlab_bench::runner::{load_experiment_dataset, run_cells, write_outputs};
use gnnlab_bench::{tune_allocator, ExperimentConfig, ReportRow};
use gnnlab_core::graph::{build_normalized_adjacency, GraphDataset, Split};
use gnnlab_core::mrf::random::{erdos_renyi_edges, random_mrf, random_tree_edges};
use gnnlab_core::mrf::taylor::{decade_radii, taylor_order_check};
use gnnlab_core::mrf::{
    exact_marginals, fixed_point_residual, max_total_variation, run_mean_field, Init,
    MeanFieldOptions,
};
use gnnlab_core::rng::rng_for;
use gnnlab_core::zoo::{
    cognet_layer, couple, recover_from_output, reversible_recover, BetaSchedule, Gate, JkMode,
    Mode, Model, ModelConfig, ModelInput, Variant, ZooError,
};
use gnnlab_core::{Tape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn cora_dir() -> PathBuf {
    std::env::var_os("CORA_DIR").map(PathBuf::from).unwrap_or_else(|| {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cora")
    })
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn cora_config(body: &str, out: &Path) -> Result<ExperimentConfig, String> {
    let dir = cora_dir();
    if !dir.join("meta").exists() {
        return Err(format!(
            "Cora not found at {} (set CORA_DIR; convert with scripts/planetoid_to_text.py)",
            dir.display()
        ));
    }
    let text = format!("dataset = {}\nout = {}\nseed = 0\nruns = 10\n{body}", dir.display(), out.display());
    ExperimentConfig::parse(&text, Path::new(".")).map_err(|e| e.to_string())
}

fn run_rows(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, String> {
    let g = load_experiment_dataset(cfg).map_err(|e| e.to_string())?;
    let result = run_cells(cfg, &g, jobs()).map_err(|e| e.to_string())?;
    write_outputs(&result, &cfg.out).map_err(|e| e.to_string())?;
    Ok(result.rows())
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

const GCN2: &str = "[model]\nvariant = gcn\ndepth = 2\n";

fn gcn_baseline(out: &Path) -> Outcome {
    let rows = run_rows(&cora_config(GCN2, out)?)?;
    let r = &rows[0];
    let detail = format!("mean {} ± {} over {} runs, band [79.9, 82.9]", pct(r.mean_acc), pct(r.std_acc), r.runs);
    if (0.799..=0.829).contains(&r.mean_acc) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gcn_degradation(out: &Path) -> Outcome {
    let rows = run_rows(&cora_config("[sweep]\nvariants = gcn\ndepths = 4, 32\n", out)?)?;
    let (a4, a32) = (rows[0].mean_acc, rows[1].mean_acc);
    let detail = format!("depth 4: {}, depth 32: {}, need a drop of at least 10 points", pct(a4), pct(a32));
    if a32 <= a4 - 0.10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn deep_stability(out: &Path) -> Outcome {
    let rows = run_rows(&cora_config("[sweep]\nvariants = cognet, gcnii\ndepths = 4, 16, 32\n", out)?)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for chunk in rows.chunks(3) {
        let base = chunk[0].mean_acc;
        let accs: Vec<String> = chunk.iter().map(|r| pct(r.mean_acc)).collect();
        parts.push(format!("{} {}", chunk[0].variant, accs.join("/")));
        ok &= chunk.iter().all(|r| r.mean_acc >= base - 0.01);
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    let a = std::fs::read(first.join("report.csv"))
        .map_err(|_| "criterion 1 produced no report.csv to compare against".to_string())?;
    run_rows(&cora_config(GCN2, second)?)?;
    let b = std::fs::read(second.join("report.csv")).map_err(|e| e.to_string())?;
    if a == b {
        Ok(format!("{} bytes identical", a.len()))
    } else {
        Err("report.csv differs between identical runs".into())
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize, p: f64) -> GraphDataset {
    let x = Tensor::new(vec![n, d], (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels = (0..n).map(|i| if i < c { i } else { rng.gen_range(0..c) }).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    GraphDataset::new(x, labels, c, edges, vec![Split::Train; n]).unwrap()
}

fn reductions() -> Outcome {
    let mut rng = rng_for(4, &[]);
    let g = random_graph(&mut rng, 50, 8, 3, 0.08);
    let input = ModelInput::from_dataset(&g);
    let (d, c, depth, h) = (8, 3, 4, 16);
    let mk = |v: Variant| {
        let mut cfg = ModelConfig::new(v, depth);
        cfg.hidden = h;
        cfg
    };
    let diff = |a: ModelConfig, b: ModelConfig, seed: u64, edit: &dyn Fn(&mut Model)| -> Result<f64, String> {
        let ma = Model::new(a, d, c, seed).map_err(|e| e.to_string())?;
        let mut mb = Model::new(b, d, c, seed).map_err(|e| e.to_string())?;
        edit(&mut mb);
        let la = ma.logits(&input, Mode::Eval).map_err(|e| e.to_string())?;
        let lb = mb.logits(&input, Mode::Eval).map_err(|e| e.to_string())?;
        Ok(la.max_abs_diff(&lb))
    };
    let none = |_: &mut Model| {};

    let mut gcnii = mk(Variant::Gcnii);
    gcnii.beta = BetaSchedule::Constant(0.0);
    let mut appnp0 = mk(Variant::Appnp);
    appnp0.alpha = 0.0;
    let mut sgc = mk(Variant::Sgc);
    sgc.envelope = true;
    let mut dgcn = mk(Variant::Dgcn);
    dgcn.dgcn_beta = Gate::Fixed(0.0);
    let mut jk = mk(Variant::JkNet);
    jk.jk_mode = JkMode::Attention;
    let identity = |m: &mut Model| {
        for l in 0..depth {
            m.params_mut().set(&format!("layers.{l}.weight"), Tensor::eye(h)).unwrap();
        }
    };
    let mut cog = mk(Variant::CoGNet);
    cog.gamma = Gate::Fixed(1.0);
    cog.lambda = Gate::Fixed(1.0);
    cog.bias = false;
    let mut gcn = mk(Variant::Gcn);
    gcn.envelope = true;
    gcn.bias = false;

    let diffs = [
        ("gcnii/appnp", diff(gcnii, mk(Variant::Appnp), 1, &none)?),
        ("appnp/sgc", diff(appnp0, sgc, 2, &none)?),
        ("dgcn/jknet", diff(dgcn, jk, 3, &identity)?),
        ("cognet/gcn", diff(cog, gcn, 4, &none)?),
    ];
    let detail = diffs.iter().map(|(n, d)| format!("{n} {d:.1e}")).collect::<Vec<_>>().join(", ");
    if diffs.iter().all(|&(_, d)| d < 1e-10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mrf_suite() -> Outcome {
    let sizes: Vec<(usize, usize)> = (2..=4)
        .flat_map(|k| (1..=12).filter(move |&n| (k as u64).pow(n as u32) <= 4096).map(move |n| (n, k)))
        .collect();
    let mut rng = rng_for(5, &[]);
    let (mut worst_rise, mut worst_res, mut worst_gap, mut worst_edgeless, mut worst_tv) = (f64::MIN, 0.0f64, f64::MAX, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for i in 0..200u64 {
        let (n, k) = sizes[rng.gen_range(0..sizes.len())];
        let seed = rng.gen::<u64>();
        let kind = i % 4;
        let edges = match kind {
            1 => Vec::new(),
            2 => random_tree_edges(n, seed),
            _ => erdos_renyi_edges(n, rng.gen_range(0.1..0.9), seed),
        };
        let coupling = match kind {
            1 => 0.0,
            2 => 0.1,
            _ => rng.gen_range(0.0..3.0),
        };
        let m = random_mrf(n, k, &edges, 1.0, coupling, seed);
        let init = if kind == 3 { Init::Random(seed) } else { Init::Uniform };
        let s = run_mean_field(&m, &MeanFieldOptions { init, ..Default::default() }).map_err(|e| e.to_string())?;
        let ex = exact_marginals(&m).map_err(|e| e.to_string())?;

        let rise = s.free_energy_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::MIN, f64::max);
        worst_rise = worst_rise.max(rise);
        if rise > 1e-10 {
            failures.push(format!("#{i} free energy rose by {rise:.2e}"));
        }
        let res = fixed_point_residual(&m, &s.q);
        worst_res = worst_res.max(res);
        if !s.converged || !(res < 1e-8) {
            failures.push(format!("#{i} residual {res:.2e}, converged {}", s.converged));
        }
        let f = *s.free_energy_trace.last().unwrap();
        let gap = f + ex.log_partition;
        worst_gap = worst_gap.min(gap);
        if gap < -1e-10 {
            failures.push(format!("#{i} F below -log Z by {:.2e}", -gap));
        }
        if kind == 1 {
            worst_edgeless = worst_edgeless.max(gap.abs());
            if gap.abs() >= 1e-10 {
                failures.push(format!("#{i} edgeless gap {gap:.2e}"));
            }
        }
        if kind == 2 {
            let tv = max_total_variation(&s.q, &ex.marginals);
            worst_tv = worst_tv.max(tv);
            if tv >= 0.05 {
                failures.push(format!("#{i} tree TV {tv:.3}"));
            }
        }
    }
    let detail = format!(
        "200 instances; max F rise {worst_rise:.1e}, max residual {worst_res:.1e}, min F + log Z {worst_gap:.1e}, edgeless gap {worst_edgeless:.1e}, weak-tree TV {worst_tv:.4}"
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn taylor() -> Outcome {
    let f = |u: &[f64]| u.iter().sum::<f64>().exp();
    let mut parts = Vec::new();
    let mut ok = true;
    for order in [1, 2] {
        let r = taylor_order_check(f, &[1.0, 0.5, -0.2], order, &decade_radii(4)).map_err(|e| e.to_string())?;
        let expected = (order + 1) as f64;
        let within = r.slope.is_some_and(|s| (s - expected).abs() <= 0.3);
        ok &= within;
        parts.push(format!("order {order} slope {:.3} (want {expected} ± 0.3)", r.slope.unwrap_or(f64::NAN)));
    }
    if ok {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

/// Largest per-tensor relative error between backprop and central
/// differences of a masked NLL loss.
fn gradient_error(model: &Model, input: &ModelInput, targets: &Arc<Vec<(usize, usize)>>, mode: Mode) -> f64 {
    let loss = |m: &Model, tape: &mut Tape| {
        let out = m.forward(tape, input, mode).unwrap();
        let lp = tape.log_row_softmax(out.logits).unwrap();
        (tape.masked_nll(lp, Arc::clone(targets)).unwrap(), out.params)
    };
    let value = |m: &Model| {
        let mut tape = Tape::new();
        let (l, _) = loss(m, &mut tape);
        tape.value(l).data()[0]
    };
    let mut tape = Tape::new();
    let (l, params) = loss(model, &mut tape);
    tape.backward(l).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (idx, var) in params {
        let analytic = tape.grad(var).unwrap().clone();
        let mut numeric = Tensor::zeros(analytic.shape());
        for e in 0..analytic.len() {
            let mut plus = model.clone();
            plus.params_mut().values_mut()[idx].data_mut()[e] += h;
            let mut minus = model.clone();
            minus.params_mut().values_mut()[idx].data_mut()[e] -= h;
            numeric.data_mut()[e] = (value(&plus) - value(&minus)) / (2.0 * h);
        }
        let scale = analytic.max_abs().max(numeric.max_abs()).max(1e-6);
        worst = worst.max(analytic.max_abs_diff(&numeric) / scale);
    }
    worst
}

fn gradients() -> Outcome {
    let mut rng = rng_for(7, &[]);
    let g = random_graph(&mut rng, 6, 3, 3, 0.5);
    let input = ModelInput::from_dataset(&g);
    let targets = Arc::new((0..6).map(|i| (i, g.labels()[i])).collect::<Vec<_>>());
    let mut worst = Vec::new();
    for v in Variant::ALL {
        let mut cfg = ModelConfig::new(v, 3);
        cfg.hidden = 4;
        cfg.heads = 2;
        let mut max_err: f64 = 0.0;
        for draw in 0..20u64 {
            let mut m = Model::new(cfg.clone(), 3, 3, draw).map_err(|e| e.to_string())?;
            for t in m.params_mut().values_mut() {
                t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
            }
            let mode = if draw % 2 == 0 { Mode::Eval } else { Mode::Train { seed: draw, epoch: 1 } };
            max_err = max_err.max(gradient_error(&m, &input, &targets, mode));
        }
        worst.push((v, max_err));
    }
    let detail = worst.iter().map(|(v, e)| format!("{v} {e:.1e}")).collect::<Vec<_>>().join(", ");
    if worst.iter().all(|&(_, e)| e < 1e-4) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reversible() -> Outcome {
    let mut rng = rng_for(8, &[]);
    let mut worst: f64 = 0.0;
    for gamma in [0.1, 0.5, 0.9] {
        for _ in 0..20 {
            let n = rng.gen_range(2..12);
            let g = random_graph(&mut rng, n, 3, 1, 0.4);
            let adj = build_normalized_adjacency(&g);
            let mut t = |r: usize, c: usize| {
                Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            };
            let (h, prev, w) = (t(n, 3), t(n, 3), t(3, 3));
            let coupled = couple(&h, &prev, &adj, gamma).map_err(|e| e.to_string())?;
            let back = reversible_recover(&coupled, &h, &adj, gamma).map_err(|e| e.to_string())?;
            worst = worst.max(back.max_abs_diff(&prev));
            let lambda = rng.gen_range(0.1..0.9);
            let (p, _) = cognet_layer(&h, &prev, &adj, lambda, gamma, &w).map_err(|e| e.to_string())?;
            let back = recover_from_output(&p, &h, &adj, lambda, gamma, &w).map_err(|e| e.to_string())?;
            worst = worst.max(back.max_abs_diff(&prev));
        }
    }
    let adj = build_normalized_adjacency(&random_graph(&mut rng, 3, 2, 1, 1.0));
    let t = Tensor::ones(&[3, 2]);
    let guarded = matches!(
        reversible_recover(&t, &t, &adj, 1.0 - 1e-9),
        Err(ZooError::IllConditioned { .. })
    );
    let detail = format!("max round-trip error {worst:.1e}, guard at 1 - 1e-9 {}", if guarded { "raised" } else { "missing" });
    if worst < 1e-8 && guarded {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    tune_allocator();
    let tmp = tempfile::tempdir().expect("temp dir");
    let first = tmp.path().join("gcn-a");
    let second = tmp.path().join("gcn-b");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("GCN baseline on Cora", Box::new(|| gcn_baseline(&first))),
        ("GCN depth degradation on Cora", Box::new(|| gcn_degradation(&tmp.path().join("deg")))),
        ("deep CoGNet and GCNII stability on Cora", Box::new(|| deep_stability(&tmp.path().join("deep")))),
        ("exact reduction identities", Box::new(reductions)),
        ("mean-field oracle suite", Box::new(mrf_suite)),
        ("Taylor-order slopes", Box::new(taylor)),
        ("finite-difference gradients", Box::new(gradients)),
        ("reversible coupling", Box::new(reversible)),
        ("byte-identical reports", Box::new(|| determinism(&first, &second))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {}. {name}: {d} ({secs:.1}s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {}. {name}: {d} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
