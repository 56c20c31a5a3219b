use super::catalog::{AttributeCatalog, CategoryKind};
use super::model::{CategoryTargets, DmtlModel, ModelPass, Targets};
use crate::error::{Error, Result};
use crate::layers::{Mode, Network, NetworkPass, ParamRole};
use crate::tensor::{Gradients, Graph, NodeId, Scalar, Tensor};

/// Max-shifted softmax of one score vector.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy `−Σ log p(truth)` summed over attributes and samples.
///
/// `scores[k]` is the `[n, C_k]` score node of attribute `k` and
/// `truths[k]` its class indices.
pub fn loss_nominal<T: Scalar>(
    graph: &mut Graph<T>,
    scores: &[NodeId],
    truths: &[Vec<usize>],
) -> Result<NodeId> {
    if scores.len() != truths.len() || scores.is_empty() {
        return Err(Error::Contract(format!(
            "{} score nodes for {} truth columns",
            scores.len(),
            truths.len()
        )));
    }
    let mut total = None;
    for (k, (&s, truth)) in scores.iter().zip(truths).enumerate() {
        let shape = graph.value(s).shape().to_vec();
        if shape.len() != 2 || shape[0] != truth.len() {
            return Err(Error::Contract(format!(
                "attribute {k}: scores {shape:?} for {} labels",
                truth.len()
            )));
        }
        if let Some((i, &c)) = truth.iter().enumerate().find(|(_, &c)| c >= shape[1]) {
            return Err(Error::Label(format!(
                "sample {i}, attribute {k}: class {c} outside 0..{}",
                shape[1]
            )));
        }
        let logp = graph.log_softmax(s)?;
        let picked = graph.pick(logp, truth)?;
        let sum = graph.sum(picked, None)?;
        total = Some(match total {
            None => sum,
            Some(t) => graph.add(t, sum)?,
        });
    }
    Ok(graph.scale(total.expect("non-empty"), T::of(-1.0)))
}

/// Euclidean loss `Σ (y − ŷ)²` summed over attributes and samples.
///
/// `preds[k]` holds one value per sample (`[n]` or `[n, 1]`).
pub fn loss_ordinal<T: Scalar>(
    graph: &mut Graph<T>,
    preds: &[NodeId],
    truths: &[Vec<f64>],
) -> Result<NodeId> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::Contract(format!(
            "{} prediction nodes for {} truth columns",
            preds.len(),
            truths.len()
        )));
    }
    let mut total = None;
    for (k, (&p, truth)) in preds.iter().zip(truths).enumerate() {
        let numel = graph.value(p).numel();
        if numel != truth.len() {
            return Err(Error::Contract(format!(
                "attribute {k}: {numel} predictions for {} labels",
                truth.len()
            )));
        }
        let shape = graph.value(p).shape().to_vec();
        let y = graph.constant(Tensor::from_f64(shape, truth)?);
        let r = graph.sub(p, y)?;
        let sq = graph.square(r);
        let sum = graph.sum(sq, None)?;
        total = Some(match total {
            None => sum,
            Some(t) => graph.add(t, sum)?,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Squared L2 norm over the regularized (weight) parameters of one pass.
/// `None` when the network has no weights.
pub fn complexity<T: Scalar>(
    graph: &mut Graph<T>,
    network: &Network<T>,
    pass: &NetworkPass<T>,
) -> Result<Option<NodeId>> {
    let mut total = None;
    for (name, node) in &pass.params {
        let role = network.params().get(name).map(|p| p.role);
        if role != Some(ParamRole::Weight) {
            continue;
        }
        let sq = graph.square(*node);
        let sum = graph.sum(sq, None)?;
        total = Some(match total {
            None => sum,
            Some(t) => graph.add(t, sum)?,
        });
    }
    Ok(total)
}

/// Category weights and complexity coefficients of the joint objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveWeights {
    /// One weight per catalog category, in catalog order.
    pub lambdas: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl ObjectiveWeights {
    /// Catalog lambdas with the given coefficients.
    pub fn from_catalog(catalog: &AttributeCatalog, gamma1: f64, gamma2: f64) -> Self {
        Self {
            lambdas: catalog.categories().iter().map(|c| c.lambda).collect(),
            gamma1,
            gamma2,
        }
    }
}

/// Nodes of a recorded objective.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub loss: NodeId,
    /// Unweighted loss of each category.
    pub category_losses: Vec<NodeId>,
    pub pass: ModelPass<T>,
}

/// Per-parameter gradients of a model, keyed like its parameter sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients<T> {
    pub trunk: Vec<(String, Tensor<T>)>,
    pub heads: Vec<Vec<(String, Tensor<T>)>>,
}

fn collect<T: Scalar>(grads: &Gradients<T>, graph: &Graph<T>, pass: &NetworkPass<T>) -> Vec<(String, Tensor<T>)> {
    pass.params
        .iter()
        .map(|(name, node)| {
            let g = grads
                .get(*node)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(graph.value(*node).shape()));
            (name.clone(), g)
        })
        .collect()
}

impl<T: Scalar> ModelGradients<T> {
    pub fn from_pass(grads: &Gradients<T>, graph: &Graph<T>, pass: &ModelPass<T>) -> Self {
        Self {
            trunk: collect(grads, graph, &pass.trunk),
            heads: pass.heads.iter().map(|h| collect(grads, graph, h)).collect(),
        }
    }

    /// Every gradient tensor, trunk first.
    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor<T>)> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|(_, t)| t.all_finite())
    }
}

/// Loss of one category from its attribute nodes.
pub fn category_loss<T: Scalar>(
    graph: &mut Graph<T>,
    nodes: &[NodeId],
    targets: &CategoryTargets,
) -> Result<NodeId> {
    match targets {
        CategoryTargets::Nominal(t) => loss_nominal(graph, nodes, t),
        CategoryTargets::Ordinal(t) => loss_ordinal(graph, nodes, t),
    }
}

impl<T: Scalar> DmtlModel<T> {
    /// Records `Σ_g λ_g L_g + γ1 Φ(trunk) + γ2 Σ_g Φ(head_g)` for a batch.
    pub fn objective(
        &self,
        graph: &mut Graph<T>,
        batch: NodeId,
        targets: &Targets,
        weights: &ObjectiveWeights,
        mode: Mode,
    ) -> Result<Objective<T>> {
        let catalog = self.catalog();
        targets.validate(catalog)?;
        if weights.lambdas.len() != catalog.categories().len() {
            return Err(Error::Contract(format!(
                "{} lambdas for {} categories",
                weights.lambdas.len(),
                catalog.categories().len()
            )));
        }
        if weights.lambdas.iter().any(|&l| !(l >= 0.0))
            || !(weights.gamma1 >= 0.0)
            || !(weights.gamma2 >= 0.0)
        {
            return Err(Error::Contract("objective weights must be non-negative".into()));
        }
        let samples = graph.value(batch).shape()[0];
        if samples != targets.samples {
            return Err(Error::Label(format!(
                "batch of {samples} samples with {} label rows",
                targets.samples
            )));
        }
        let pass = self.forward(graph, batch, mode)?;
        let mut category_losses = Vec::new();
        let mut total: Option<NodeId> = None;
        let mut push = |graph: &mut Graph<T>, node: NodeId, factor: f64| -> Result<()> {
            let term = if factor == 1.0 { node } else { graph.scale(node, T::of(factor)) };
            total = Some(match total {
                None => term,
                Some(t) => graph.add(t, term)?,
            });
            Ok(())
        };
        for (p, cat_targets) in targets.categories.iter().enumerate() {
            let nodes: Vec<NodeId> = catalog.members(p).iter().map(|&a| pass.attributes[a]).collect();
            let loss = category_loss(graph, &nodes, cat_targets)?;
            category_losses.push(loss);
            push(graph, loss, weights.lambdas[p])?;
        }
        if weights.gamma1 != 0.0 {
            if let Some(phi) = complexity(graph, self.trunk(), &pass.trunk)? {
                push(graph, phi, weights.gamma1)?;
            }
        }
        if weights.gamma2 != 0.0 {
            for (head, hp) in self.heads().iter().zip(&pass.heads) {
                if let Some(phi) = complexity(graph, head, hp)? {
                    push(graph, phi, weights.gamma2)?;
                }
            }
        }
        Ok(Objective {
            loss: total.expect("at least one category"),
            category_losses,
            pass,
        })
    }
}

impl<T: Scalar> Objective<T> {
    pub fn value(&self, graph: &Graph<T>) -> f64 {
        graph.value(self.loss).item().as_f64()
    }

    pub fn gradients(&self, graph: &Graph<T>) -> Result<ModelGradients<T>> {
        let grads = graph.backward(self.loss)?;
        Ok(ModelGradients::from_pass(&grads, graph, &self.pass))
    }
}

/// Closed-form gradient of a single linear head's loss with respect to its
/// weight matrix: `Xᵀ(P − Y)` for nominal categories and `2 Xᵀ(ŷ − y)` for
/// ordinal ones, where `X: [n, f]` are the trunk features.
pub fn head_gradient_closed_form<T: Scalar>(
    kind: CategoryKind,
    head: &Network<T>,
    class_counts: &[usize],
    features: &Tensor<T>,
    targets: &CategoryTargets,
) -> Result<Tensor<f64>> {
    use crate::layers::LayerSpec;
    if head.specs().len() != 1 || !matches!(head.specs()[0], LayerSpec::FullyConnected { .. }) {
        return Err(Error::Contract(
            "the closed-form gradient needs a single linear head".into(),
        ));
    }
    if features.rank() != 2 || features.shape()[1] != head.input_shape().iter().product::<usize>() {
        return Err(Error::Dimension(format!(
            "features {:?} do not match head input {:?}",
            features.shape(),
            head.input_shape()
        )));
    }
    let (n, f) = (features.shape()[0], features.shape()[1]);
    let w = head.params().layer(0, ParamRole::Weight)?.to_f64_vec();
    let b = head.params().layer(0, ParamRole::Bias)?.to_f64_vec();
    let out = b.len();
    let x = features.to_f64_vec();
    let mut z = vec![0.0; n * out];
    for i in 0..n {
        for o in 0..out {
            let mut acc = b[o];
            for k in 0..f {
                acc += x[i * f + k] * w[k * out + o];
            }
            z[i * out + o] = acc;
        }
    }
    // Residual D = dL/dZ.
    let mut d = vec![0.0; n * out];
    match (kind, targets) {
        (CategoryKind::Nominal, CategoryTargets::Nominal(truth)) => {
            if class_counts.iter().sum::<usize>() != out || class_counts.len() != truth.len() {
                return Err(Error::Contract("class counts do not match the head width".into()));
            }
            for i in 0..n {
                let mut start = 0;
                for (k, &c) in class_counts.iter().enumerate() {
                    let p = softmax(&z[i * out + start..i * out + start + c]);
                    for (j, pj) in p.into_iter().enumerate() {
                        let y = if truth[k][i] == j { 1.0 } else { 0.0 };
                        d[i * out + start + j] = pj - y;
                    }
                    start += c;
                }
            }
        }
        (CategoryKind::Ordinal, CategoryTargets::Ordinal(truth)) => {
            if truth.len() != out {
                return Err(Error::Contract("ordinal truth does not match the head width".into()));
            }
            for i in 0..n {
                for o in 0..out {
                    d[i * out + o] = 2.0 * (z[i * out + o] - truth[o][i]);
                }
            }
        }
        _ => return Err(Error::Contract("category kind does not match its targets".into())),
    }
    let mut g = vec![0.0; f * out];
    for k in 0..f {
        for o in 0..out {
            g[k * out + o] = (0..n).map(|i| x[i * f + k] * d[i * out + o]).sum();
        }
    }
    Tensor::new(vec![f, out], g)
}
