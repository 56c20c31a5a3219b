//! Single-task baseline: one independent network per attribute.

use super::catalog::AttributeCatalog;
use super::loss::{ModelGradients, Objective, ObjectiveWeights};
use super::model::{head_seed, DmtlModel, Prediction, Targets};
use crate::error::{Error, Result};
use crate::layers::{preset_head, LayerSpec, Mode};
use crate::tensor::{Graph, NodeId, Scalar, Tensor};

/// One single-attribute model per catalog attribute, sharing nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct StlBundle<T> {
    catalog: AttributeCatalog,
    models: Vec<DmtlModel<T>>,
}

impl<T: Scalar> StlBundle<T> {
    /// Builds `M` models, each with its own copy of `trunk_specs` and a
    /// `FC(head_hidden), ReLU, FC(width)` head (a single linear layer when
    /// `head_hidden` is 0).
    pub fn build(
        catalog: &AttributeCatalog,
        trunk_specs: &[LayerSpec],
        input_shape: &[usize],
        head_hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        let models = (0..catalog.len())
            .map(|j| {
                let mut single = catalog.single(j)?;
                let width = catalog.attributes()[j].kind.width();
                let head = if head_hidden == 0 {
                    preset_head(1, &[width])?
                } else {
                    preset_head(2, &[head_hidden, width])?
                };
                single = AttributeCatalog::new(
                    single.attributes().to_vec(),
                    vec![single.categories()[0].clone().with_head(head)],
                )?;
                DmtlModel::build(&single, trunk_specs, input_shape, head_seed(seed, 1000 + j))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            catalog: catalog.clone(),
            models,
        })
    }

    pub fn from_models(catalog: AttributeCatalog, models: Vec<DmtlModel<T>>) -> Result<Self> {
        if models.len() != catalog.len() {
            return Err(Error::Contract(format!(
                "{} models for {} attributes",
                models.len(),
                catalog.len()
            )));
        }
        Ok(Self { catalog, models })
    }

    pub fn catalog(&self) -> &AttributeCatalog {
        &self.catalog
    }

    pub fn models(&self) -> &[DmtlModel<T>] {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut [DmtlModel<T>] {
        &mut self.models
    }

    pub fn parameter_count(&self) -> usize {
        self.models.iter().map(|m| m.parameter_count()).sum()
    }

    /// Stitches the per-attribute predictions back into catalog order.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Prediction> {
        let mut outputs = Vec::with_capacity(self.models.len());
        let mut samples = 0;
        for m in &self.models {
            let p = m.predict(batch)?;
            samples = p.samples;
            outputs.extend(p.outputs);
        }
        Ok(Prediction { samples, outputs })
    }
}

/// Records the `M` independent objectives `L_j + γ Φ(W_j)` on one graph.
/// Each model's complexity term covers its whole network.
pub fn objective_stl<T: Scalar>(
    bundle: &StlBundle<T>,
    graph: &mut Graph<T>,
    batch: NodeId,
    targets: &Targets,
    gamma: f64,
    mode: Mode,
) -> Result<Vec<Objective<T>>> {
    targets.validate(bundle.catalog())?;
    bundle
        .models()
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let t = targets.single(bundle.catalog(), j);
            let w = ObjectiveWeights {
                lambdas: vec![1.0],
                gamma1: gamma,
                gamma2: gamma,
            };
            m.objective(graph, batch, &t, &w, mode)
        })
        .collect()
}

/// Gradients of every STL objective, each with respect to its own model.
pub fn stl_gradients<T: Scalar>(graph: &Graph<T>, objectives: &[Objective<T>]) -> Result<Vec<ModelGradients<T>>> {
    objectives.iter().map(|o| o.gradients(graph)).collect()
}

/// Hidden width that brings a one-hidden-layer-per-attribute STL bundle
/// closest to `target` trainable parameters, searched over `1..=max`.
pub fn match_budget<T: Scalar>(
    target: usize,
    max: usize,
    build: impl Fn(usize) -> Result<StlBundle<T>>,
) -> Result<(usize, StlBundle<T>)> {
    let mut lo = 1;
    let mut hi = max.max(1);
    // Parameter count grows monotonically with the width: bisect, then pick
    // the closer neighbour.
    while lo < hi {
        let mid = (lo + hi) / 2;
        if build(mid)?.parameter_count() < target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let above = build(lo)?;
    if lo > 1 {
        let below = build(lo - 1)?;
        if target.abs_diff(below.parameter_count()) < target.abs_diff(above.parameter_count()) {
            return Ok((lo - 1, below));
        }
    }
    Ok((lo, above))
}
