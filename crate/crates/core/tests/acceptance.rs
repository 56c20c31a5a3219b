//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use dmtl_core::data::{
    cooccurrence, phi, split_subject_exclusive, synth_generate, SynthLayout, SyntheticSpec,
};
use dmtl_core::dmtl::{
    category_loss, head_gradient_closed_form, loss_nominal, loss_ordinal, softmax, AttributeCatalog, AttributeDef,
    CategoryKind, CategorySpec, CategoryTargets, LabelValue, ObjectiveWeights, Scope, Targets,
};
use dmtl_core::eval::{accuracy, cs_at, epsilon_error, evaluate, mae, mean_epsilon_error, mtl_vs_stl_report, ComparisonSetup, EvalOptions};
use dmtl_core::gradcheck::{run_suite, STEP, TOLERANCE};
use dmtl_core::layers::{mlp_trunk, preset_head, preset_trunk, LayerSpec};
use dmtl_core::train::{decode_checkpoint, encode_checkpoint, lr_at};
use dmtl_core::{Dataset, DmtlModel, Graph, LabelRecord, Mode, Network, NodeId, Tensor, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scope_statement() -> Outcome {
    Ok("informational: full-scale benchmark figures are out of reach at desk scale; criteria 2-12 substitute".into())
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let reports = run_suite(100, STEP, TOLERANCE).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let names: HashSet<&str> = reports.iter().map(|r| r.name).collect();
    for required in ["conv2d", "max_pool2d", "batch_norm_train", "layer bn(train)", "layer pool", "layer conv"] {
        ensure(names.contains(required), || format!("registry lacks `{required}`"))?;
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed || r.trials < 100)
        .map(|r| format!("{} ({:.2e})", r.name, r.worst))
        .collect();
    ensure(failed.is_empty(), || format!("failing: {}", failed.join(", ")))?;
    ensure(elapsed < 60.0, || format!("suite took {elapsed:.1}s"))?;
    let worst = reports.iter().map(|r| r.worst).fold(0.0, f64::max);
    Ok(format!("{} ops x 100 trials, worst rel. error {worst:.2e}, {elapsed:.1}s", reports.len()))
}

fn closed_form_heads() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let n = rng.random_range(1..12);
        let f = rng.random_range(1..9);
        let x: Vec<f64> = (0..n * f).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::new(vec![n, f], x).unwrap();
        for kind in [CategoryKind::Nominal, CategoryKind::Ordinal] {
            let (counts, targets): (Vec<usize>, CategoryTargets) = match kind {
                CategoryKind::Nominal => {
                    let counts: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(2..5)).collect();
                    let truth = counts.iter().map(|&c| (0..n).map(|_| rng.random_range(0..c)).collect()).collect();
                    (counts, CategoryTargets::Nominal(truth))
                }
                CategoryKind::Ordinal => {
                    let k = rng.random_range(1..4);
                    let truth = (0..k).map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
                    (vec![1; k], CategoryTargets::Ordinal(truth))
                }
            };
            let width: usize = counts.iter().sum();
            let head = Network::<f64>::new(preset_head(1, &[width]).unwrap(), vec![f], case).unwrap();
            let class_counts = if kind == CategoryKind::Nominal { counts.clone() } else { Vec::new() };
            let closed =
                head_gradient_closed_form(kind, &head, &class_counts, &x, &targets).map_err(|e| e.to_string())?;

            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let pass = head.forward(&mut g, xn, Mode::Eval).unwrap();
            let mut nodes = Vec::new();
            let mut start = 0;
            for &c in &counts {
                nodes.push(g.slice_cols(pass.output, start, start + c).unwrap());
                start += c;
            }
            let loss = category_loss(&mut g, &nodes, &targets).unwrap();
            let grads = g.backward(loss).unwrap();
            let w = pass.params.iter().find(|(name, _)| name.ends_with("weight")).unwrap().1;
            let diff = closed.max_abs_diff(grads.get(w).unwrap());
            worst = worst.max(diff);
            ensure(diff <= 1e-10, || format!("case {case} {kind:?}: |closed - autodiff| = {diff:.3e}"))?;
        }
    }
    Ok(format!("100 cases per kind, worst {worst:.2e}"))
}

fn three_category_catalog() -> AttributeCatalog {
    AttributeCatalog::new(
        vec![
            AttributeDef::ordinal("age", 0.0, 10.0, 0),
            AttributeDef::nominal("gender", 2, 1),
            AttributeDef::nominal("race", 3, 1),
            AttributeDef::nominal("smile", 2, 2),
        ],
        vec![
            CategorySpec::new(0, CategoryKind::Ordinal, Scope::Holistic),
            CategorySpec::new(1, CategoryKind::Nominal, Scope::Holistic),
            CategorySpec::new(2, CategoryKind::Nominal, Scope::Local("mouth".into())),
        ],
    )
    .unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<LabelValue>> {
    (0..n)
        .map(|_| {
            vec![
                LabelValue::Ordinal(rng.random_range(0.0..10.0)),
                LabelValue::Nominal(rng.random_range(0..2)),
                LabelValue::Nominal(rng.random_range(0..3)),
                LabelValue::Nominal(rng.random_range(0..2)),
            ]
        })
        .collect()
}

fn shared_trunk_summation() -> Outcome {
    let catalog = three_category_catalog();
    let trunk = vec![LayerSpec::fc(8), LayerSpec::batch_norm(), LayerSpec::ReLU, LayerSpec::fc(6), LayerSpec::ReLU];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let model = DmtlModel::<f64>::build(&catalog, &trunk, &[5], trial).unwrap();
        let n = rng.random_range(2..10);
        let x: Vec<f64> = (0..n * 5).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x = Tensor::new(vec![n, 5], x).unwrap();
        let targets = Targets::from_rows(&catalog, &random_rows(&mut rng, n)).unwrap();
        let trunk_grads = |lambdas: Vec<f64>| {
            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let weights = ObjectiveWeights { lambdas, gamma1: 0.0, gamma2: 0.0 };
            let obj = model.objective(&mut g, xn, &targets, &weights, Mode::Train).unwrap();
            obj.gradients(&g).unwrap().trunk
        };
        let joint = trunk_grads(vec![1.0; 3]);
        let parts: Vec<_> = (0..3)
            .map(|p| trunk_grads((0..3).map(|q| if q == p { 1.0 } else { 0.0 }).collect()))
            .collect();
        for (i, (name, total)) in joint.iter().enumerate() {
            let summed: Vec<f64> = (0..total.numel())
                .map(|k| parts.iter().map(|part| part[i].1.data()[k]).sum())
                .collect();
            let diff = total
                .data()
                .iter()
                .zip(&summed)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
            ensure(diff <= 1e-9, || format!("trial {trial}, `{name}`: {diff:.3e}"))?;
        }
    }
    Ok(format!("20 batches, 3 categories, worst {worst:.2e}"))
}

fn loss_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let c = rng.random_range(1..8);
        let s: Vec<f64> = (0..c).map(|_| rng.random_range(-30.0..30.0)).collect();
        let shift = rng.random_range(-100.0..100.0);
        let p = softmax(&s);
        let q = softmax(&s.iter().map(|v| v + shift).collect::<Vec<_>>());
        let total: f64 = p.iter().sum();
        ensure((total - 1.0).abs() <= 1e-9, || format!("softmax row sums to {total}"))?;
        for (a, b) in p.iter().zip(&q) {
            ensure((a - b).abs() <= 1e-9, || format!("shift {shift} moved {a} to {b}"))?;
        }
    }

    let mut g = Graph::<f64>::new();
    for _ in 0..100 {
        let (n, c) = (rng.random_range(1..6), rng.random_range(2..6));
        let scores: Vec<f64> = (0..n * c).map(|_| rng.random_range(-4.0..4.0)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let node = g.constant(Tensor::new(vec![n, c], scores).unwrap());
        let ce = loss_nominal(&mut g, &[node], std::slice::from_ref(&truth)).unwrap();
        ensure(g.value(ce).item() >= 0.0, || "negative cross-entropy".into())?;

        let mut perfect = vec![0.0; n * c];
        for (i, &t) in truth.iter().enumerate() {
            perfect[i * c + t] = 1000.0;
        }
        let node = g.constant(Tensor::new(vec![n, c], perfect).unwrap());
        let ce = loss_nominal(&mut g, &[node], &[truth]).unwrap();
        let v = g.value(ce).item();
        ensure(v == 0.0, || format!("cross-entropy {v:e} at a perfect prediction"))?;

        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let off: Vec<f64> = y.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let p = g.constant(Tensor::new(vec![n, 1], off).unwrap());
        let l = loss_ordinal(&mut g, &[p], std::slice::from_ref(&y)).unwrap();
        ensure(g.value(l).item() >= 0.0, || "negative Euclidean loss".into())?;
        let p = g.constant(Tensor::new(vec![n, 1], y.clone()).unwrap());
        let l = loss_ordinal(&mut g, &[p], &[y]).unwrap();
        ensure(g.value(l).item() == 0.0, || "Euclidean loss nonzero at a perfect prediction".into())?;
    }

    let catalog = three_category_catalog();
    for seed in 0..20u64 {
        let model = DmtlModel::<f64>::build(&catalog, &mlp_trunk(&[7]), &[4], seed).unwrap();
        let n = 6;
        let x: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets = Targets::from_rows(&catalog, &random_rows(&mut rng, n)).unwrap();
        let mut g = Graph::new();
        let xn = g.constant(Tensor::new(vec![n, 4], x).unwrap());
        let obj = model
            .objective(&mut g, xn, &targets, &ObjectiveWeights { lambdas: vec![1.0; 3], gamma1: 0.0, gamma2: 0.0 }, Mode::Eval)
            .unwrap();
        // Recompute each category loss from the attribute outputs directly.
        let mut plain = 0.0;
        for (p, t) in targets.categories.iter().enumerate() {
            let nodes: Vec<NodeId> = catalog.members(p).iter().map(|&a| obj.pass.attributes[a]).collect();
            let l = category_loss(&mut g, &nodes, t).unwrap();
            plain += g.value(l).item();
        }
        let v = obj.value(&g);
        ensure((v - plain).abs() <= 1e-9, || format!("objective {v} vs loss sum {plain}"))?;
    }
    Ok("softmax rows, shift invariance, loss signs and zeros, plain objective".into())
}

fn overfit() -> Outcome {
    let catalog = AttributeCatalog::new(
        vec![AttributeDef::ordinal("age", 0.0, 10.0, 0), AttributeDef::nominal("gender", 2, 1)],
        vec![
            CategorySpec::new(0, CategoryKind::Ordinal, Scope::Holistic),
            CategorySpec::new(1, CategoryKind::Nominal, Scope::Holistic),
        ],
    )
    .unwrap();
    let mut spec = SyntheticSpec::new(catalog, vec![vec![1.0, 0.3], vec![-0.2, 1.0]], 64, 11);
    spec.layout = SynthLayout::Image { channels: 1, height: 16, width: 16 };
    let data = synth_generate(&spec).map_err(|e| e.to_string())?;
    let tiny = preset_trunk("tiny").unwrap();
    let model = DmtlModel::<f32>::build(data.catalog(), &tiny.specs, &tiny.input_shape, 3).unwrap();
    let config = TrainConfig {
        eta: 3e-4,
        batch_size: 16,
        max_iterations: 2000,
        gamma1: 0.0,
        gamma2: 0.0,
        step_interval: 1000,
        seed: 5,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (model, _) = dmtl_core::train_loop(model, &data, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = evaluate(&model, &data, &EvalOptions::default()).map_err(|e| e.to_string())?;
    let (acc, err) = (report.accuracy("gender").unwrap(), report.mae("age").unwrap());
    let detail = format!("gender accuracy {acc:.4}, age MAE {err:.4}, 2000 iterations in {elapsed:.1}s");
    ensure(acc == 1.0 && err < 0.05 && elapsed < 300.0, || detail.clone())?;
    Ok(detail)
}

fn mtl_vs_stl() -> Outcome {
    let mut wins = 0;
    let mut cells = Vec::new();
    for seed in 0..5u64 {
        let mut spec = SyntheticSpec::shared_latent(2000, 6, 2, 100 + seed);
        spec.noise = 1.0;
        spec.layout = SynthLayout::Vector { dim: 16 };
        let c = spec.catalog.clone();
        let head = preset_head(2, &[16, 12]).unwrap();
        spec.catalog =
            AttributeCatalog::new(c.attributes().to_vec(), vec![c.categories()[0].clone().with_head(head)]).unwrap();
        let data = synth_generate(&spec).map_err(|e| e.to_string())?;
        let config = TrainConfig {
            eta: 3e-4,
            batch_size: 32,
            max_iterations: 3000,
            gamma1: 0.0,
            gamma2: 0.0,
            seed,
            ..TrainConfig::default()
        };
        let setup = ComparisonSetup::new(mlp_trunk(&[64, 32]), config, vec![seed]);
        let report = mtl_vs_stl_report::<f32>(&data, &setup).map_err(|e| e.to_string())?;
        let o = &report.outcomes[0];
        let (d, s) = (o.dmtl.mean_accuracy.unwrap(), o.stl.mean_accuracy.unwrap());
        wins += usize::from(o.dmtl_wins());
        cells.push(format!("{d:.3}/{s:.3}"));
        if seed == 0 {
            cells.insert(0, format!("params {}/{}:", o.dmtl_parameters, o.stl_parameters));
        }
    }
    let detail = format!("DMTL >= STL in {wins}/5 seeds; {}", cells.join(" "));
    ensure(wins >= 4, || detail.clone())?;
    Ok(detail)
}

/// Exact mean of values on a 2^-20 grid.
fn grid_mean(values: &[f64]) -> f64 {
    let total: i128 = values.iter().map(|v| (v * (1u64 << 20) as f64) as i128).sum();
    total as f64 / (1u64 << 20) as f64 / values.len() as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let grid = |rng: &mut ChaCha8Rng| f64::from(rng.random_range(0..100 << 20)) / f64::from(1 << 20);
    for dump in 0..50 {
        let preds: Vec<f64> = (0..200).map(|_| grid(&mut rng)).collect();
        let truths: Vec<f64> = (0..200)
            .map(|i| if rng.random_bool(0.2) { preds[i] } else { grid(&mut rng) })
            .collect();
        let diffs: Vec<f64> = preds.iter().zip(&truths).map(|(p, t)| (p - t).abs()).collect();
        let got = mae(&preds, &truths).unwrap();
        let want = grid_mean(&diffs);
        ensure(got == want, || format!("dump {dump}: MAE {got} vs {want}"))?;
        let within = diffs.iter().filter(|&&d| d <= 5.0).count();
        let got = cs_at(&preds, &truths, 5.0).unwrap();
        ensure(got == within as f64 / 200.0, || format!("dump {dump}: CS(5) {got} vs {within}/200"))?;

        let classes: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let guesses: Vec<usize> = classes
            .iter()
            .map(|&c| if rng.random_bool(0.6) { c } else { rng.random_range(0..4) })
            .collect();
        let hits = classes.iter().zip(&guesses).filter(|(a, b)| a == b).count();
        let got = accuracy(&guesses, &classes).unwrap();
        ensure(got == hits as f64 / 200.0, || format!("dump {dump}: accuracy {got} vs {hits}/200"))?;

        let sigmas: Vec<f64> = (0..200).map(|_| rng.random_range(0.5..10.0)).collect();
        let brute: Vec<f64> = (0..200)
            .map(|i| 1.0 - (-(preds[i] - truths[i]).powi(2) / (2.0 * sigmas[i] * sigmas[i])).exp())
            .collect();
        let got = mean_epsilon_error(&preds, &truths, &sigmas).unwrap();
        let want = brute.iter().sum::<f64>() / 200.0;
        ensure((got - want).abs() <= 1e-12, || format!("dump {dump}: mean ε {got} vs {want}"))?;
    }
    for _ in 0..200 {
        let (mu, sigma) = (rng.random_range(-50.0..50.0), rng.random_range(0.1..20.0));
        let at_mu = epsilon_error(mu, mu, sigma).unwrap();
        ensure(at_mu == 0.0, || format!("ε(μ) = {at_mu}"))?;
        let at_sigma = epsilon_error(mu + sigma, mu, sigma).unwrap();
        let want = 1.0 - (-0.5f64).exp();
        ensure((at_sigma - want).abs() <= 1e-12, || format!("ε(μ+σ) = {at_sigma}"))?;
    }
    Ok("50 dumps of 200 samples: MAE, CS(5), accuracy exact; ε within 1e-12".into())
}

fn brute_phi(a: &[bool], b: &[bool]) -> f64 {
    let count = |x: bool, y: bool| a.iter().zip(b).filter(|&(&p, &q)| p == x && q == y).count() as i64;
    let (n11, n10, n01, n00) = (count(true, true), count(true, false), count(false, true), count(false, false));
    let den = ((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)) as f64;
    if den == 0.0 {
        0.0
    } else {
        ((n11 * n00 - n10 * n01) as f64 / den.sqrt()).clamp(-1.0, 1.0)
    }
}

fn binary_dataset(columns: &[Vec<bool>]) -> Dataset {
    let n = columns[0].len();
    let attributes = (0..columns.len()).map(|j| AttributeDef::nominal(format!("b{j}"), 2, 0)).collect();
    let catalog =
        AttributeCatalog::new(attributes, vec![CategorySpec::new(0, CategoryKind::Nominal, Scope::Holistic)]).unwrap();
    let records = (0..n)
        .map(|i| {
            let values = columns.iter().map(|c| LabelValue::Nominal(usize::from(c[i]))).collect();
            LabelRecord::new(format!("s{i}"), format!("p{i}"), values)
        })
        .collect();
    Dataset::new(catalog, vec![1], vec![0.0; n], records, "binary columns").unwrap()
}

fn cooccurrence_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..60 {
        let n = rng.random_range(1..=1000);
        let k = rng.random_range(2..6);
        let mut columns: Vec<Vec<bool>> = (0..k)
            .map(|_| {
                let bias = rng.random_range(0.0..1.0);
                (0..n).map(|_| rng.random_bool(bias)).collect()
            })
            .collect();
        columns.push(columns[0].clone());
        columns.push(columns[0].iter().map(|v| !v).collect());
        let matrix = cooccurrence(&binary_dataset(&columns), &(0..columns.len()).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        for (i, a) in columns.iter().enumerate() {
            for (j, b) in columns.iter().enumerate() {
                let want = brute_phi(a, b);
                let got = matrix.values[i][j];
                ensure(got == want, || format!("trial {trial} ({n} samples) [{i}][{j}]: {got} vs {want}"))?;
                ensure(phi(a, b) == brute_phi(a, b), || format!("trial {trial}: phi disagrees at [{i}][{j}]"))?;
            }
        }
        let (first, copy, complement) = (&columns[0], &columns[k], &columns[k + 1]);
        if first.iter().any(|&v| v) && first.iter().any(|&v| !v) {
            ensure(phi(first, copy) == 1.0 && phi(first, complement) == -1.0, || "extremes off".into())?;
        }
    }
    Ok("60 datasets up to 1000 samples match the contingency table exactly".into())
}

fn lr_schedule() -> Outcome {
    let config = TrainConfig::reference_preset();
    let (a, b) = (lr_at(&config, 0), lr_at(&config, 100_000));
    ensure(a == 0.0001 && b == 0.00001, || format!("lr_at(0) = {a:e}, lr_at(100000) = {b:e}"))?;
    Ok(format!("lr_at(0) = {a}, lr_at(100000) = {b}"))
}

fn determinism() -> Outcome {
    let mut spec = SyntheticSpec::shared_latent(48, 4, 2, 17);
    spec.layout = SynthLayout::Vector { dim: 6 };
    let data = synth_generate(&spec).map_err(|e| e.to_string())?;
    let trunk = vec![LayerSpec::fc(10), LayerSpec::batch_norm(), LayerSpec::ReLU];
    let config = TrainConfig {
        eta: 2e-3,
        batch_size: 8,
        step_interval: 25,
        max_iterations: 60,
        gamma1: 1e-3,
        gamma2: 1e-3,
        seed: 7,
        ..TrainConfig::default()
    };
    let fresh = || DmtlModel::<f32>::build(data.catalog(), &trunk, &[6], 4).unwrap();
    let full = |model| {
        let mut t = Trainer::new(model, &data, config.clone()).unwrap();
        t.run(&data).unwrap();
        encode_checkpoint(t.model(), t.config(), &t.state()).unwrap()
    };
    let reference = full(fresh());
    ensure(full(fresh()) == reference, || "same-seed runs differ".into())?;
    for split in [0, 1, 13, 25, 26, 59, 60] {
        let mut first = Trainer::new(fresh(), &data, config.clone()).unwrap();
        first.run_until(&data, split).unwrap();
        let bytes = encode_checkpoint(first.model(), first.config(), &first.state()).unwrap();
        let restored = decode_checkpoint::<f32>(&bytes, data.catalog()).map_err(|e| e.to_string())?;
        let again = encode_checkpoint(&restored.model, &restored.config, &restored.state).unwrap();
        ensure(again == bytes, || format!("round trip at {split} changed bytes"))?;
        let mut second = Trainer::resume(restored.model, &data, restored.config, restored.state).unwrap();
        second.run(&data).unwrap();
        let resumed = encode_checkpoint(second.model(), second.config(), &second.state()).unwrap();
        ensure(resumed == reference, || format!("resume at {split} diverged"))?;
    }
    Ok("identical same-seed checkpoints; resume at 7 splits and round trips bitwise".into())
}

fn subject_exclusivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    for trial in 0..1000 {
        let k = rng.random_range(2..8);
        let subjects = rng.random_range(k..80);
        let n = rng.random_range(subjects..subjects * 4 + 1);
        let records: Vec<LabelRecord> = (0..n)
            .map(|i| {
                let s = if i < subjects { i } else { rng.random_range(0..subjects) };
                LabelRecord::new(format!("x{i}"), format!("subj{s}"), vec![LabelValue::Nominal(i % 2)])
            })
            .collect();
        let catalog = AttributeCatalog::new(
            vec![AttributeDef::nominal("a", 2, 0)],
            vec![CategorySpec::new(0, CategoryKind::Nominal, Scope::Holistic)],
        )
        .unwrap();
        let data = Dataset::new(catalog, vec![1], vec![0.0; n], records, "fuzz").unwrap();
        let folds = split_subject_exclusive(&data, k, trial).map_err(|e| e.to_string())?;
        let mut fold_of: HashMap<&str, usize> = HashMap::new();
        let mut seen = vec![false; n];
        for (f, members) in folds.iter().enumerate() {
            for &i in members {
                ensure(!seen[i], || format!("trial {trial}: sample {i} in two folds"))?;
                seen[i] = true;
                let subject = data.records()[i].subject_id.as_str();
                let prev = *fold_of.entry(subject).or_insert(f);
                ensure(prev == f, || format!("trial {trial}: `{subject}` in folds {prev} and {f}"))?;
            }
        }
        ensure(seen.iter().all(|&v| v), || format!("trial {trial}: a sample has no fold"))?;
        let mut counts = vec![0usize; k];
        for &f in fold_of.values() {
            counts[f] += 1;
        }
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        ensure(hi - lo <= 1, || format!("trial {trial}: subject counts {counts:?}"))?;
        checked += 1;
    }
    Ok(format!("{checked} fuzzed datasets"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("scope", scope_statement),
        ("gradient checks", gradient_checks),
        ("closed-form head gradients", closed_form_heads),
        ("shared-trunk summation", shared_trunk_summation),
        ("loss invariants", loss_invariants),
        ("overfit", overfit),
        ("mtl vs stl", mtl_vs_stl),
        ("metric oracles", metric_oracles),
        ("co-occurrence", cooccurrence_oracle),
        ("learning-rate schedule", lr_schedule),
        ("determinism and persistence", determinism),
        ("subject exclusivity", subject_exclusivity),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
