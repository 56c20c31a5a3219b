use super::catalog::{AttributeCatalog, AttributeKind, CategoryKind};
use crate::error::{Error, Result};
use crate::layers::{LayerSpec, Mode, Network, NetworkPass};
use crate::tensor::{Graph, NodeId, Scalar, Tensor};

/// One attribute label: a class index or a real value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelValue {
    Nominal(usize),
    Ordinal(f64),
}

impl LabelValue {
    pub fn kind(&self) -> CategoryKind {
        match self {
            LabelValue::Nominal(_) => CategoryKind::Nominal,
            LabelValue::Ordinal(_) => CategoryKind::Ordinal,
        }
    }
}

/// Ground truth of one category for a batch, indexed `[member][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub enum CategoryTargets {
    Nominal(Vec<Vec<usize>>),
    Ordinal(Vec<Vec<f64>>),
}

/// Ground truth of a batch, one entry per catalog category.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub categories: Vec<CategoryTargets>,
    pub samples: usize,
}

impl Targets {
    /// Groups per-sample label rows (in catalog attribute order) by category.
    pub fn from_rows<R: AsRef<[LabelValue]>>(catalog: &AttributeCatalog, rows: &[R]) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != catalog.len() {
                return Err(Error::Label(format!(
                    "sample {s} has {} labels but the catalog has {} attributes",
                    row.len(),
                    catalog.len()
                )));
            }
            for (a, (value, def)) in row.iter().zip(catalog.attributes()).enumerate() {
                check_label(s, &def.name, &def.kind, value)
                    .map_err(|e| Error::Label(format!("sample {s}, attribute #{a}: {e}")))?;
            }
        }
        let categories = (0..catalog.categories().len())
            .map(|p| {
                let members = catalog.members(p);
                match catalog.categories()[p].kind {
                    CategoryKind::Nominal => CategoryTargets::Nominal(
                        members
                            .iter()
                            .map(|&a| {
                                rows.iter()
                                    .map(|r| match r.as_ref()[a] {
                                        LabelValue::Nominal(c) => c,
                                        LabelValue::Ordinal(_) => unreachable!("checked"),
                                    })
                                    .collect()
                            })
                            .collect(),
                    ),
                    CategoryKind::Ordinal => CategoryTargets::Ordinal(
                        members
                            .iter()
                            .map(|&a| {
                                rows.iter()
                                    .map(|r| match r.as_ref()[a] {
                                        LabelValue::Ordinal(v) => v,
                                        LabelValue::Nominal(_) => unreachable!("checked"),
                                    })
                                    .collect()
                            })
                            .collect(),
                    ),
                }
            })
            .collect();
        Ok(Self {
            categories,
            samples: rows.len(),
        })
    }

    /// Checks structure and label ranges against `catalog`.
    pub fn validate(&self, catalog: &AttributeCatalog) -> Result<()> {
        if self.categories.len() != catalog.categories().len() {
            return Err(Error::Label(format!(
                "targets cover {} categories but the catalog has {}",
                self.categories.len(),
                catalog.categories().len()
            )));
        }
        for (p, t) in self.categories.iter().enumerate() {
            let members = catalog.members(p);
            let (count, kind) = match t {
                CategoryTargets::Nominal(v) => (v.len(), CategoryKind::Nominal),
                CategoryTargets::Ordinal(v) => (v.len(), CategoryKind::Ordinal),
            };
            if kind != catalog.categories()[p].kind || count != members.len() {
                return Err(Error::Label(format!(
                    "targets for category {} do not match its kind or member count",
                    catalog.categories()[p].id
                )));
            }
            for (k, &a) in members.iter().enumerate() {
                let def = &catalog.attributes()[a];
                let len = match t {
                    CategoryTargets::Nominal(v) => v[k].len(),
                    CategoryTargets::Ordinal(v) => v[k].len(),
                };
                if len != self.samples {
                    return Err(Error::Label(format!(
                        "attribute `{}` has {len} labels for {} samples",
                        def.name, self.samples
                    )));
                }
                for s in 0..self.samples {
                    let value = match t {
                        CategoryTargets::Nominal(v) => LabelValue::Nominal(v[k][s]),
                        CategoryTargets::Ordinal(v) => LabelValue::Ordinal(v[k][s]),
                    };
                    check_label(s, &def.name, &def.kind, &value).map_err(Error::Label)?;
                }
            }
        }
        Ok(())
    }

    /// Targets restricted to one attribute, matching [`AttributeCatalog::single`].
    pub fn single(&self, catalog: &AttributeCatalog, attribute: usize) -> Self {
        let p = catalog.category_position(attribute);
        let k = catalog
            .members(p)
            .iter()
            .position(|&a| a == attribute)
            .expect("member");
        let category = match &self.categories[p] {
            CategoryTargets::Nominal(v) => CategoryTargets::Nominal(vec![v[k].clone()]),
            CategoryTargets::Ordinal(v) => CategoryTargets::Ordinal(vec![v[k].clone()]),
        };
        Self {
            categories: vec![category],
            samples: self.samples,
        }
    }
}

fn check_label(
    sample: usize,
    name: &str,
    kind: &AttributeKind,
    value: &LabelValue,
) -> std::result::Result<(), String> {
    match (kind, value) {
        (AttributeKind::Nominal { classes }, LabelValue::Nominal(c)) => {
            if c >= classes {
                return Err(format!(
                    "sample {sample}, attribute `{name}`: class {c} outside 0..{classes}"
                ));
            }
        }
        (AttributeKind::Ordinal { lo, hi }, LabelValue::Ordinal(v)) => {
            if !(v >= lo && v <= hi) {
                return Err(format!(
                    "sample {sample}, attribute `{name}`: value {v} outside {lo}..{hi}"
                ));
            }
        }
        _ => {
            return Err(format!(
                "sample {sample}, attribute `{name}`: label kind does not match the catalog"
            ))
        }
    }
    Ok(())
}

/// Raw model output for one attribute over a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeOutput {
    /// Pre-softmax scores, row-major `[samples, classes]`.
    Scores { classes: usize, data: Vec<f64> },
    Values(Vec<f64>),
}

/// Model output for a batch, one entry per catalog attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub samples: usize,
    pub outputs: Vec<AttributeOutput>,
}

/// Final answer for one attribute of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoded {
    Class(usize),
    Value(f64),
}

impl Decoded {
    pub fn as_f64(self) -> f64 {
        match self {
            Decoded::Class(c) => c as f64,
            Decoded::Value(v) => v,
        }
    }
}

/// Argmax for nominal attributes (ties to the lowest class), and the raw
/// value clamped to the declared range for ordinal ones. Indexed
/// `[sample][attribute]`.
pub fn decode(prediction: &Prediction, catalog: &AttributeCatalog) -> Vec<Vec<Decoded>> {
    (0..prediction.samples)
        .map(|s| {
            prediction
                .outputs
                .iter()
                .zip(catalog.attributes())
                .map(|(out, def)| match (out, def.kind) {
                    (AttributeOutput::Scores { classes, data }, _) => {
                        let row = &data[s * classes..(s + 1) * classes];
                        let mut best = 0;
                        for (c, &v) in row.iter().enumerate() {
                            if v > row[best] {
                                best = c;
                            }
                        }
                        Decoded::Class(best)
                    }
                    (AttributeOutput::Values(v), AttributeKind::Ordinal { lo, hi }) => {
                        Decoded::Value(v[s].clamp(lo, hi))
                    }
                    (AttributeOutput::Values(v), _) => Decoded::Value(v[s]),
                })
                .collect()
        })
        .collect()
}

/// Nodes recorded by one [`DmtlModel::forward`].
#[derive(Debug, Clone)]
pub struct ModelPass<T> {
    pub trunk: NetworkPass<T>,
    pub heads: Vec<NetworkPass<T>>,
    /// Per attribute: its `[n, width]` slice of the head output.
    pub attributes: Vec<NodeId>,
}

/// Shared trunk plus one head per attribute category.
#[derive(Debug, Clone, PartialEq)]
pub struct DmtlModel<T> {
    catalog: AttributeCatalog,
    trunk: Network<T>,
    heads: Vec<Network<T>>,
}

pub(crate) fn head_seed(seed: u64, position: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(position as u64 + 1))
}

impl<T: Scalar> DmtlModel<T> {
    /// Builds the trunk and every category head with deterministic seeded
    /// initialization.
    pub fn build(
        catalog: &AttributeCatalog,
        trunk_specs: &[LayerSpec],
        input_shape: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let trunk = Network::new(trunk_specs.to_vec(), input_shape.to_vec(), seed)?;
        let heads = catalog
            .categories()
            .iter()
            .enumerate()
            .map(|(p, cat)| {
                Network::new(
                    cat.head_spec.clone(),
                    trunk.output_shape().to_vec(),
                    head_seed(seed, p),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(catalog.clone(), trunk, heads)
    }

    pub fn from_parts(catalog: AttributeCatalog, trunk: Network<T>, heads: Vec<Network<T>>) -> Result<Self> {
        if heads.len() != catalog.categories().len() {
            return Err(Error::Architecture {
                layer: "heads".into(),
                message: format!(
                    "{} heads for {} categories",
                    heads.len(),
                    catalog.categories().len()
                ),
            });
        }
        for (p, head) in heads.iter().enumerate() {
            let id = catalog.categories()[p].id;
            if head.input_shape() != trunk.output_shape() {
                return Err(Error::Architecture {
                    layer: format!("head {id}"),
                    message: format!(
                        "head input {:?} differs from trunk output {:?}",
                        head.input_shape(),
                        trunk.output_shape()
                    ),
                });
            }
            let want = catalog.head_width(p);
            if head.output_shape() != [want] {
                return Err(Error::Architecture {
                    layer: format!("head {id}"),
                    message: format!(
                        "head output {:?} but the category needs width {want}",
                        head.output_shape()
                    ),
                });
            }
        }
        Ok(Self {
            catalog,
            trunk,
            heads,
        })
    }

    pub fn catalog(&self) -> &AttributeCatalog {
        &self.catalog
    }

    pub fn trunk(&self) -> &Network<T> {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Network<T> {
        &mut self.trunk
    }

    pub fn heads(&self) -> &[Network<T>] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [Network<T>] {
        &mut self.heads
    }

    pub fn input_shape(&self) -> &[usize] {
        self.trunk.input_shape()
    }

    /// Trainable scalars across trunk and heads.
    pub fn parameter_count(&self) -> usize {
        self.trunk.params().trainable_count()
            + self.heads.iter().map(|h| h.params().trainable_count()).sum::<usize>()
    }

    /// Records trunk and heads on `graph`. The trunk is evaluated once and
    /// its output node feeds every head.
    pub fn forward(&self, graph: &mut Graph<T>, batch: NodeId, mode: Mode) -> Result<ModelPass<T>> {
        let trunk = self.trunk.forward(graph, batch, mode)?;
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut attributes = vec![None; self.catalog.len()];
        for (p, head) in self.heads.iter().enumerate() {
            let pass = head.forward(graph, trunk.output, mode)?;
            let members = self.catalog.members(p);
            for &a in &members {
                let node = if members.len() == 1 {
                    pass.output
                } else {
                    let r = self.catalog.column_range(a);
                    graph.slice_cols(pass.output, r.start, r.end)?
                };
                attributes[a] = Some(node);
            }
            heads.push(pass);
        }
        Ok(ModelPass {
            trunk,
            heads,
            attributes: attributes.into_iter().map(|a| a.expect("covered")).collect(),
        })
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// statistics.
    pub fn commit_batch_stats(&mut self, pass: &ModelPass<T>) -> Result<()> {
        self.trunk.commit_batch_stats(&pass.trunk.batch_stats)?;
        for (head, hp) in self.heads.iter_mut().zip(&pass.heads) {
            head.commit_batch_stats(&hp.batch_stats)?;
        }
        Ok(())
    }

    /// Evaluation-mode prediction for `batch: [n, ...input_shape]`.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Prediction> {
        let mut graph = Graph::new();
        let x = graph.constant(batch.clone());
        let pass = self.forward(&mut graph, x, Mode::Eval)?;
        Ok(self.read_prediction(&graph, &pass))
    }

    pub fn read_prediction(&self, graph: &Graph<T>, pass: &ModelPass<T>) -> Prediction {
        let samples = graph.value(pass.trunk.output).shape()[0];
        let outputs = pass
            .attributes
            .iter()
            .zip(self.catalog.attributes())
            .map(|(&node, def)| {
                let data = graph.value(node).to_f64_vec();
                match def.kind {
                    AttributeKind::Nominal { classes } => AttributeOutput::Scores { classes, data },
                    AttributeKind::Ordinal { .. } => AttributeOutput::Values(data),
                }
            })
            .collect();
        Prediction { samples, outputs }
    }
}
