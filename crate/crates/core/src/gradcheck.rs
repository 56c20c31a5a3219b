//! Finite-difference verification of the differentiation engine.
//!
//! Every registered case builds a small randomized computation in 64-bit
//! precision and reduces its output to a scalar `L = Σ out ⊙ R` with a fixed
//! random `R`. Autodiff gradients of `L` with respect to every input are
//! compared with central differences; the error of one input is
//! `‖g_auto − g_fd‖ / max(‖g_auto‖, ‖g_fd‖, 1e-6·max(1, |L|))`, and a
//! trial's error is the worst over its inputs. The floor sits well above the
//! rounding noise of the differences (about `1e-11·|L|`), so gradients that
//! vanish analytically, such as a bias feeding batch normalization, are not
//! judged on noise alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dmtl::{
    loss_nominal, loss_ordinal, AttributeCatalog, AttributeDef, CategoryKind, CategorySpec, DmtlModel,
    LabelValue, ObjectiveWeights, Scope, Targets,
};
use crate::error::{Error, Result};
use crate::layers::{
    forward_layer, init_random, mlp_trunk, LayerSpec, Mode, Network, ParamNodes, ParameterSet,
};
use crate::tensor::{Graph, NodeId, Tensor};

/// Default finite-difference step.
pub const STEP: f64 = 1e-5;
/// Default pass bound on the relative error.
pub const TOLERANCE: f64 = 1e-4;

type Build = Box<dyn Fn(&mut Graph<f64>, &[Tensor<f64>]) -> Result<(NodeId, Vec<NodeId>)>>;

/// One randomized instance: the inputs to differentiate and a builder that
/// records the computation, returning its output and the node of each input.
pub struct Problem {
    pub inputs: Vec<Tensor<f64>>,
    build: Build,
}

impl Problem {
    pub fn new(
        inputs: Vec<Tensor<f64>>,
        build: impl Fn(&mut Graph<f64>, &[Tensor<f64>]) -> Result<(NodeId, Vec<NodeId>)> + 'static,
    ) -> Self {
        Self {
            inputs,
            build: Box::new(build),
        }
    }
}

/// A named generator of problems, one per seed.
pub struct GradcheckCase {
    pub name: &'static str,
    pub generate: fn(u64) -> Problem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub name: &'static str,
    pub trials: usize,
    pub worst: f64,
    pub passed: bool,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn objective(problem: &Problem, inputs: &[Tensor<f64>], weights: &[f64]) -> Result<(Graph<f64>, NodeId, Vec<NodeId>)> {
    let mut g = Graph::new();
    let (out, nodes) = (problem.build)(&mut g, inputs)?;
    let shape = g.value(out).shape().to_vec();
    let r = g.constant(Tensor::from_f64(shape, weights)?);
    let prod = g.mul(out, r)?;
    let loss = g.sum(prod, None)?;
    Ok((g, loss, nodes))
}

/// Worst relative error of one problem over all of its inputs.
pub fn check_problem(problem: &Problem, seed: u64, step: f64) -> Result<f64> {
    let mut probe = Graph::new();
    let (out, _) = (problem.build)(&mut probe, &problem.inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let weights: Vec<f64> = (0..probe.value(out).numel())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();

    let (g, loss, nodes) = objective(problem, &problem.inputs, &weights)?;
    let grads = g.backward(loss)?;
    let loss_value = g.value(loss).item();
    let mut worst: f64 = 0.0;
    for (k, input) in problem.inputs.iter().enumerate() {
        let auto = grads
            .get(nodes[k])
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let mut numeric = vec![0.0; input.numel()];
        let mut shifted = problem.inputs.clone();
        for (i, slot) in numeric.iter_mut().enumerate() {
            let base = input.data()[i];
            shifted[k].data_mut()[i] = base + step;
            let (g1, l1, _) = objective(problem, &shifted, &weights)?;
            shifted[k].data_mut()[i] = base - step;
            let (g2, l2, _) = objective(problem, &shifted, &weights)?;
            shifted[k].data_mut()[i] = base;
            *slot = (g1.value(l1).item() - g2.value(l2).item()) / (2.0 * step);
        }
        let diff = norm(auto.iter().zip(&numeric).map(|(a, b)| a - b));
        let scale = norm(auto.iter().copied())
            .max(norm(numeric.iter().copied()))
            .max(1e-6 * loss_value.abs().max(1.0));
        let err = diff / scale;
        if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite gradient error on input {k}")));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Runs `trials` seeded problems of one case.
pub fn run_case(case: &GradcheckCase, trials: usize, step: f64, tolerance: f64) -> Result<CaseReport> {
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let seed = t as u64;
        let problem = (case.generate)(seed);
        worst = worst.max(check_problem(&problem, seed, step)?);
    }
    Ok(CaseReport {
        name: case.name,
        trials,
        worst,
        passed: worst < tolerance,
    })
}

/// Runs every registered case.
pub fn run_suite(trials: usize, step: f64, tolerance: f64) -> Result<Vec<CaseReport>> {
    registry()
        .iter()
        .map(|c| run_case(c, trials, step, tolerance))
        .collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(17))
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("valid shape")
}

/// Values bounded away from zero, for kinked functions.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(0.1..2.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("valid shape")
}

/// Distinct values with gaps far wider than the step, in shuffled order.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 1.0).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), v).expect("valid shape")
}

fn jitter(rng: &mut ChaCha8Rng, t: &Tensor<f64>, amplitude: f64) -> Tensor<f64> {
    let data = t.data().iter().map(|&v| v + rng.random_range(-amplitude..amplitude)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn leaves(g: &mut Graph<f64>, inputs: &[Tensor<f64>]) -> Vec<NodeId> {
    inputs.iter().map(|t| g.param(t.clone())).collect()
}

fn unary(seed: u64, f: fn(&mut Graph<f64>, NodeId) -> Result<NodeId>, positive: bool) -> Problem {
    let mut r = rng(seed);
    let x = if positive {
        uniform(&mut r, &[3, 4], 0.2, 3.0)
    } else {
        uniform(&mut r, &[3, 4], -1.5, 1.5)
    };
    Problem::new(vec![x], move |g, inputs| {
        let ids = leaves(g, inputs);
        Ok((f(g, ids[0])?, ids))
    })
}

fn binary(seed: u64, f: fn(&mut Graph<f64>, NodeId, NodeId) -> Result<NodeId>, b_shape: &'static [usize]) -> Problem {
    let mut r = rng(seed);
    let a = uniform(&mut r, &[3, 4], -2.0, 2.0);
    let b = uniform(&mut r, b_shape, -2.0, 2.0);
    Problem::new(vec![a, b], move |g, inputs| {
        let ids = leaves(g, inputs);
        Ok((f(g, ids[0], ids[1])?, ids))
    })
}

fn layer_problem(seed: u64, spec: LayerSpec, input_shape: &[usize], mode: Mode, x: Tensor<f64>) -> Problem {
    let specs = vec![spec];
    let params = init_random::<f64>(&specs, input_shape, seed).expect("valid layer");
    let mut r = rng(seed ^ 0xABCD);
    let mut inputs = vec![x];
    let mut names = Vec::new();
    for (name, p) in params.iter() {
        if p.role.trainable() {
            // Perturb away from the deterministic BN initialization.
            let t = jitter(&mut r, &p.tensor, 0.5);
            inputs.push(t);
            names.push(name.to_string());
        }
    }
    Problem::new(inputs, move |g, inputs| {
        let mut set = params.clone();
        for (name, t) in names.iter().zip(&inputs[1..]) {
            set.get_mut(name).expect("known name").tensor = t.clone().with_requires_grad(true);
        }
        let x = g.param(inputs[0].clone());
        let mut nodes: ParamNodes = Vec::new();
        let (out, _) = forward_layer(g, 0, &specs[0], &set, x, mode, &mut nodes)?;
        let mut ids = vec![x];
        for name in &names {
            ids.push(nodes.iter().find(|(n, _)| n == name).expect("recorded").1);
        }
        Ok((out, ids))
    })
}

fn gc_catalog() -> AttributeCatalog {
    AttributeCatalog::new(
        vec![
            AttributeDef::ordinal("o", -3.0, 3.0, 0),
            AttributeDef::nominal("a", 2, 1),
            AttributeDef::nominal("b", 3, 1),
            AttributeDef::nominal("c", 2, 2),
        ],
        vec![
            CategorySpec::new(0, CategoryKind::Ordinal, Scope::Holistic)
                .with_head(vec![LayerSpec::fc(3), LayerSpec::ReLU, LayerSpec::fc(1)]),
            CategorySpec::new(1, CategoryKind::Nominal, Scope::Holistic)
                .with_head(vec![LayerSpec::fc(3), LayerSpec::ReLU, LayerSpec::fc(5)]),
            CategorySpec::new(2, CategoryKind::Nominal, Scope::Local("mouth".into()))
                .with_lambda(0.5)
                .with_head(vec![LayerSpec::fc(2)]),
        ],
    )
    .expect("valid catalog")
}

fn model_problem(seed: u64, trunk: Vec<LayerSpec>, input_shape: Vec<usize>) -> Problem {
    let catalog = gc_catalog();
    let model = DmtlModel::<f64>::build(&catalog, &trunk, &input_shape, seed).expect("valid model");
    let mut r = rng(seed ^ 0x77);
    let n = 3;
    let mut shape = vec![n];
    shape.extend(&input_shape);
    let x = uniform(&mut r, &shape, -1.0, 1.0);
    let rows: Vec<Vec<LabelValue>> = (0..n)
        .map(|_| {
            vec![
                LabelValue::Ordinal(r.random_range(-3.0..3.0)),
                LabelValue::Nominal(r.random_range(0..2)),
                LabelValue::Nominal(r.random_range(0..3)),
                LabelValue::Nominal(r.random_range(0..2)),
            ]
        })
        .collect();
    let targets = Targets::from_rows(&catalog, &rows).expect("valid labels");
    let weights = ObjectiveWeights::from_catalog(&catalog, 0.01, 0.02);

    let sets = |m: &DmtlModel<f64>| -> Vec<ParameterSet<f64>> {
        std::iter::once(m.trunk().params().clone())
            .chain(m.heads().iter().map(|h| h.params().clone()))
            .collect()
    };
    let mut inputs = Vec::new();
    let mut names = Vec::new();
    for (s, set) in sets(&model).iter().enumerate() {
        for (name, p) in set.iter() {
            if p.role.trainable() {
                inputs.push(jitter(&mut r, &p.tensor, 0.2));
                names.push((s, name.to_string()));
            }
        }
    }
    Problem::new(inputs, move |g, inputs| {
        let mut m = model.clone();
        for ((s, name), t) in names.iter().zip(inputs) {
            let net: &mut Network<f64> = if *s == 0 { m.trunk_mut() } else { &mut m.heads_mut()[s - 1] };
            net.params_mut().get_mut(name).expect("known").tensor = t.clone().with_requires_grad(true);
        }
        let xn = g.constant(x.clone());
        let obj = m.objective(g, xn, &targets, &weights, Mode::Train)?;
        let pass = &obj.pass;
        let ids = names
            .iter()
            .map(|(s, name)| {
                let nodes = if *s == 0 { &pass.trunk.params } else { &pass.heads[s - 1].params };
                nodes.iter().find(|(n, _)| n == name).expect("recorded").1
            })
            .collect();
        Ok((obj.loss, ids))
    })
}

/// Every registered differentiable operation, layer and loss.
pub fn registry() -> Vec<GradcheckCase> {
    vec![
        GradcheckCase {
            name: "matmul",
            generate: |s| {
                let mut r = rng(s);
                let a = uniform(&mut r, &[3, 4], -1.0, 1.0);
                let b = uniform(&mut r, &[4, 2], -1.0, 1.0);
                Problem::new(vec![a, b], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.matmul(ids[0], ids[1])?, ids))
                })
            },
        },
        GradcheckCase { name: "add", generate: |s| binary(s, |g, a, b| g.add(a, b), &[3, 4]) },
        GradcheckCase { name: "add(scalar)", generate: |s| binary(s, |g, a, b| g.add(a, b), &[1]) },
        GradcheckCase { name: "sub", generate: |s| binary(s, |g, a, b| g.sub(a, b), &[3, 4]) },
        GradcheckCase { name: "sub(scalar)", generate: |s| binary(s, |g, a, b| g.sub(b, a), &[1]) },
        GradcheckCase { name: "mul", generate: |s| binary(s, |g, a, b| g.mul(a, b), &[3, 4]) },
        GradcheckCase { name: "mul(scalar)", generate: |s| binary(s, |g, a, b| g.mul(a, b), &[1]) },
        GradcheckCase { name: "scale", generate: |s| unary(s, |g, x| Ok(g.scale(x, -1.75)), false) },
        GradcheckCase {
            name: "relu",
            generate: |s| {
                let x = away_from_zero(&mut rng(s), &[3, 4]);
                Problem::new(vec![x], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.relu(ids[0]), ids))
                })
            },
        },
        GradcheckCase { name: "exp", generate: |s| unary(s, |g, x| Ok(g.exp(x)), false) },
        GradcheckCase { name: "log", generate: |s| unary(s, |g, x| g.log(x), true) },
        GradcheckCase { name: "square", generate: |s| unary(s, |g, x| Ok(g.square(x)), false) },
        GradcheckCase { name: "sum", generate: |s| unary(s, |g, x| g.sum(x, None), false) },
        GradcheckCase { name: "sum(axis 0)", generate: |s| unary(s, |g, x| g.sum(x, Some(0)), false) },
        GradcheckCase { name: "sum(axis 1)", generate: |s| unary(s, |g, x| g.sum(x, Some(1)), false) },
        GradcheckCase { name: "mean", generate: |s| unary(s, |g, x| g.mean(x, None), false) },
        GradcheckCase { name: "mean(axis 1)", generate: |s| unary(s, |g, x| g.mean(x, Some(1)), false) },
        GradcheckCase { name: "reshape", generate: |s| unary(s, |g, x| g.reshape(x, vec![2, 6]), false) },
        GradcheckCase {
            name: "bias_add",
            generate: |s| {
                let mut r = rng(s);
                let x = uniform(&mut r, &[2, 3, 2, 2], -1.0, 1.0);
                let b = uniform(&mut r, &[3], -1.0, 1.0);
                Problem::new(vec![x, b], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.bias_add(ids[0], ids[1])?, ids))
                })
            },
        },
        GradcheckCase {
            name: "conv2d",
            generate: |s| {
                let mut r = rng(s);
                let x = uniform(&mut r, &[2, 2, 5, 5], -1.0, 1.0);
                let w = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
                Problem::new(vec![x, w], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.conv2d(ids[0], ids[1], 1, 1)?, ids))
                })
            },
        },
        GradcheckCase {
            name: "conv2d(stride 2)",
            generate: |s| {
                let mut r = rng(s);
                let x = uniform(&mut r, &[2, 1, 6, 6], -1.0, 1.0);
                let w = uniform(&mut r, &[2, 1, 3, 3], -1.0, 1.0);
                Problem::new(vec![x, w], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.conv2d(ids[0], ids[1], 2, 0)?, ids))
                })
            },
        },
        GradcheckCase {
            name: "max_pool2d",
            generate: |s| {
                let x = distinct(&mut rng(s), &[2, 2, 4, 4]);
                Problem::new(vec![x], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.max_pool2d(ids[0], 2, 2)?, ids))
                })
            },
        },
        GradcheckCase {
            name: "max_pool2d(overlap)",
            generate: |s| {
                let x = distinct(&mut rng(s), &[1, 2, 5, 5]);
                Problem::new(vec![x], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.max_pool2d(ids[0], 3, 2)?, ids))
                })
            },
        },
        GradcheckCase {
            name: "batch_norm_train",
            generate: |s| {
                let mut r = rng(s);
                let x = uniform(&mut r, &[4, 3, 2, 2], -2.0, 2.0);
                let gamma = uniform(&mut r, &[3], 0.5, 1.5);
                let beta = uniform(&mut r, &[3], -0.5, 0.5);
                Problem::new(vec![x, gamma, beta], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.batch_norm_train(ids[0], ids[1], ids[2], 1e-5)?.0, ids))
                })
            },
        },
        GradcheckCase {
            name: "batch_norm_train(2d)",
            generate: |s| {
                let mut r = rng(s);
                let x = uniform(&mut r, &[5, 3], -2.0, 2.0);
                let gamma = uniform(&mut r, &[3], 0.5, 1.5);
                let beta = uniform(&mut r, &[3], -0.5, 0.5);
                Problem::new(vec![x, gamma, beta], |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.batch_norm_train(ids[0], ids[1], ids[2], 1e-5)?.0, ids))
                })
            },
        },
        GradcheckCase {
            name: "batch_norm_eval",
            generate: |s| {
                let mut r = rng(s);
                let x = uniform(&mut r, &[3, 2, 2, 2], -2.0, 2.0);
                let gamma = uniform(&mut r, &[2], 0.5, 1.5);
                let beta = uniform(&mut r, &[2], -0.5, 0.5);
                let mean = vec![r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)];
                let var = vec![r.random_range(0.5..2.0), r.random_range(0.5..2.0)];
                Problem::new(vec![x, gamma, beta], move |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.batch_norm_eval(ids[0], ids[1], ids[2], &mean, &var, 1e-5)?, ids))
                })
            },
        },
        GradcheckCase { name: "log_softmax", generate: |s| unary(s, |g, x| g.log_softmax(x), false) },
        GradcheckCase {
            name: "pick",
            generate: |s| {
                let mut r = rng(s);
                let x = uniform(&mut r, &[4, 3], -1.0, 1.0);
                let idx: Vec<usize> = (0..4).map(|_| r.random_range(0..3)).collect();
                Problem::new(vec![x], move |g, i| {
                    let ids = leaves(g, i);
                    Ok((g.pick(ids[0], &idx)?, ids))
                })
            },
        },
        GradcheckCase { name: "slice_cols", generate: |s| unary(s, |g, x| g.slice_cols(x, 1, 3), false) },
        GradcheckCase {
            name: "layer fc",
            generate: |s| {
                let x = uniform(&mut rng(s), &[3, 2, 2, 2], -1.0, 1.0);
                layer_problem(s, LayerSpec::fc(3), &[2, 2, 2], Mode::Train, x)
            },
        },
        GradcheckCase {
            name: "layer conv",
            generate: |s| {
                let x = uniform(&mut rng(s), &[2, 2, 4, 4], -1.0, 1.0);
                layer_problem(s, LayerSpec::conv(3, 3, 1, 1), &[2, 4, 4], Mode::Train, x)
            },
        },
        GradcheckCase {
            name: "layer bn(train)",
            generate: |s| {
                let x = uniform(&mut rng(s), &[3, 2, 3, 3], -1.0, 1.0);
                layer_problem(s, LayerSpec::batch_norm(), &[2, 3, 3], Mode::Train, x)
            },
        },
        GradcheckCase {
            name: "layer bn(eval)",
            generate: |s| {
                let x = uniform(&mut rng(s), &[3, 2, 3, 3], -1.0, 1.0);
                layer_problem(s, LayerSpec::batch_norm(), &[2, 3, 3], Mode::Eval, x)
            },
        },
        GradcheckCase {
            name: "layer pool",
            generate: |s| {
                let x = distinct(&mut rng(s), &[2, 2, 4, 4]);
                layer_problem(s, LayerSpec::pool(2, 2), &[2, 4, 4], Mode::Train, x)
            },
        },
        GradcheckCase {
            name: "layer relu",
            generate: |s| {
                let x = away_from_zero(&mut rng(s), &[3, 5]);
                layer_problem(s, LayerSpec::ReLU, &[5], Mode::Train, x)
            },
        },
        GradcheckCase {
            name: "loss nominal",
            generate: |s| {
                let mut r = rng(s);
                let a = uniform(&mut r, &[4, 3], -2.0, 2.0);
                let b = uniform(&mut r, &[4, 2], -2.0, 2.0);
                let ta: Vec<usize> = (0..4).map(|_| r.random_range(0..3)).collect();
                let tb: Vec<usize> = (0..4).map(|_| r.random_range(0..2)).collect();
                Problem::new(vec![a, b], move |g, i| {
                    let ids = leaves(g, i);
                    Ok((loss_nominal(g, &ids, &[ta.clone(), tb.clone()])?, ids))
                })
            },
        },
        GradcheckCase {
            name: "loss ordinal",
            generate: |s| {
                let mut r = rng(s);
                let a = uniform(&mut r, &[4, 1], -2.0, 2.0);
                let t: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
                Problem::new(vec![a], move |g, i| {
                    let ids = leaves(g, i);
                    Ok((loss_ordinal(g, &ids, std::slice::from_ref(&t))?, ids))
                })
            },
        },
        GradcheckCase {
            name: "dmtl objective (mlp)",
            generate: |s| model_problem(s, mlp_trunk(&[4]), vec![3]),
        },
        GradcheckCase {
            name: "dmtl objective (conv+bn+pool)",
            generate: |s| {
                model_problem(
                    s,
                    vec![
                        LayerSpec::conv(2, 3, 1, 1),
                        LayerSpec::batch_norm(),
                        LayerSpec::pool(2, 2),
                        LayerSpec::fc(4),
                    ],
                    vec![1, 4, 4],
                )
            },
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        // d/dx of x·x through `mul` with the same node twice is 2x; a problem
        // whose builder reports an unrelated node as the input must fail.
        let p = Problem::new(vec![Tensor::from_f64(vec![2], &[1.0, 2.0]).unwrap()], |g, i| {
            let x = g.param(i[0].clone());
            let decoy = g.param(i[0].clone());
            Ok((g.mul(x, x)?, vec![decoy]))
        });
        assert!(check_problem(&p, 0, STEP).unwrap() > 0.5);
    }

    #[test]
    fn a_few_trials_of_every_case_pass() {
        for case in registry() {
            let report = run_case(&case, 3, STEP, TOLERANCE).unwrap();
            assert!(report.passed, "{} worst {}", report.name, report.worst);
        }
    }
}
