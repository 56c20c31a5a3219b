use std::fmt::Write as _;

use super::metrics::{accuracy, cs_at, mae, mean_epsilon_error};
use crate::data::Dataset;
use crate::dmtl::{decode, AttributeCatalog, AttributeKind, Decoded, DmtlModel, Prediction, StlBundle};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Anything that maps a batch of inputs to per-attribute outputs.
pub trait Predictor<T: Scalar>: Sync {
    fn catalog(&self) -> &AttributeCatalog;
    fn input_shape(&self) -> &[usize];
    fn predict(&self, batch: &Tensor<T>) -> Result<Prediction>;
}

impl<T: Scalar> Predictor<T> for DmtlModel<T> {
    fn catalog(&self) -> &AttributeCatalog {
        DmtlModel::catalog(self)
    }

    fn input_shape(&self) -> &[usize] {
        DmtlModel::input_shape(self)
    }

    fn predict(&self, batch: &Tensor<T>) -> Result<Prediction> {
        DmtlModel::predict(self, batch)
    }
}

impl<T: Scalar> Predictor<T> for StlBundle<T> {
    fn catalog(&self) -> &AttributeCatalog {
        StlBundle::catalog(self)
    }

    fn input_shape(&self) -> &[usize] {
        self.models()[0].input_shape()
    }

    fn predict(&self, batch: &Tensor<T>) -> Result<Prediction> {
        StlBundle::predict(self, batch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Attributes averaged into the aggregate accuracy; every nominal
    /// attribute when `None`.
    pub subset: Option<Vec<String>>,
    /// Round ordinal predictions to the nearest integer before scoring.
    pub round_ordinal: bool,
    /// Thresholds of the cumulative-score table.
    pub cs_thresholds: Vec<f64>,
    /// Spread used for ε-error when a sample carries no `<attr>.sigma`.
    pub global_sigma: Option<f64>,
    /// Samples per forward pass; results do not depend on it.
    pub batch_size: usize,
    /// Worker threads for the forward passes; results do not depend on it.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            subset: None,
            round_ordinal: false,
            cs_thresholds: (0..=10).map(f64::from).collect(),
            global_sigma: None,
            batch_size: 128,
            threads: 1,
        }
    }
}

/// Decoded predictions next to ground truth, `[attribute][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDump {
    pub catalog: AttributeCatalog,
    pub sample_ids: Vec<String>,
    pub predictions: Vec<Vec<Decoded>>,
    pub truths: Vec<Vec<Decoded>>,
    /// Per ordinal attribute and sample: `(mu, sigma)` when available.
    pub spreads: Vec<Vec<Option<(f64, f64)>>>,
}

impl EvalDump {
    /// `sample_id,attribute,prediction,truth` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,attribute,prediction,truth\n");
        for (s, id) in self.sample_ids.iter().enumerate() {
            for (a, def) in self.catalog.attributes().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{id},{},{:?},{:?}",
                    def.name,
                    self.predictions[a][s].as_f64(),
                    self.truths[a][s].as_f64()
                );
            }
        }
        out
    }
}

/// Runs the predictor in evaluation mode over every sample.
pub fn predict_dataset<T: Scalar, P: Predictor<T>>(
    model: &P,
    dataset: &Dataset,
    options: &EvalOptions,
) -> Result<Vec<Vec<Decoded>>> {
    if dataset.catalog().digest() != model.catalog().digest() {
        return Err(Error::Label("dataset catalog differs from the model catalog".into()));
    }
    if dataset.sample_shape() != model.input_shape() {
        return Err(Error::Dimension(format!(
            "dataset samples are {:?}, the model expects {:?}",
            dataset.sample_shape(),
            model.input_shape()
        )));
    }
    let bs = options.batch_size.max(1);
    let chunks: Vec<Vec<usize>> = (0..dataset.len())
        .collect::<Vec<_>>()
        .chunks(bs)
        .map(<[usize]>::to_vec)
        .collect();
    let run = |idx: &[usize]| -> Result<Vec<Vec<Decoded>>> {
        let x = dataset.batch::<T>(idx)?;
        Ok(decode(&model.predict(&x)?, model.catalog()))
    };
    let threads = options.threads.clamp(1, chunks.len().max(1));
    let results: Vec<Result<Vec<Vec<Decoded>>>> = if threads == 1 {
        chunks.iter().map(|c| run(c)).collect()
    } else {
        let mut slots: Vec<Option<Result<Vec<Vec<Decoded>>>>> = (0..chunks.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let per = chunks.len().div_ceil(threads);
            for (chunk_group, slot_group) in chunks.chunks(per).zip(slots.chunks_mut(per)) {
                let run = &run;
                scope.spawn(move || {
                    for (c, slot) in chunk_group.iter().zip(slot_group.iter_mut()) {
                        *slot = Some(run(c));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every chunk evaluated")).collect()
    };
    let mut rows = Vec::with_capacity(dataset.len());
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Decoded predictions and ground truth of every sample.
pub fn dump_predictions<T: Scalar, P: Predictor<T>>(
    model: &P,
    dataset: &Dataset,
    options: &EvalOptions,
) -> Result<EvalDump> {
    let rows = predict_dataset(model, dataset, options)?;
    let catalog = dataset.catalog().clone();
    let n_attr = catalog.len();
    let mut predictions = vec![Vec::with_capacity(dataset.len()); n_attr];
    let mut truths = vec![Vec::with_capacity(dataset.len()); n_attr];
    let mut spreads = vec![Vec::with_capacity(dataset.len()); n_attr];
    for (row, rec) in rows.into_iter().zip(dataset.records()) {
        for (a, (p, def)) in row.into_iter().zip(catalog.attributes()).enumerate() {
            let truth = match rec.labels[a] {
                crate::dmtl::LabelValue::Nominal(c) => Decoded::Class(c),
                crate::dmtl::LabelValue::Ordinal(v) => Decoded::Value(v),
            };
            let pred = match p {
                Decoded::Value(v) if options.round_ordinal => Decoded::Value(v.round()),
                other => other,
            };
            let spread = match def.kind {
                AttributeKind::Ordinal { .. } => {
                    let mu = rec.mu(&def.name).unwrap_or(truth.as_f64());
                    rec.sigma(&def.name).or(options.global_sigma).map(|s| (mu, s))
                }
                AttributeKind::Nominal { .. } => None,
            };
            predictions[a].push(pred);
            truths[a].push(truth);
            spreads[a].push(spread);
        }
    }
    Ok(EvalDump {
        catalog,
        sample_ids: dataset.records().iter().map(|r| r.sample_id.clone()).collect(),
        predictions,
        truths,
        spreads,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeMetrics {
    Nominal {
        accuracy: f64,
    },
    Ordinal {
        mae: f64,
        /// `(k, CS(k))` pairs.
        cs: Vec<(f64, f64)>,
        /// Mean ε-error when every sample has a spread.
        epsilon: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    pub attributes: Vec<(String, AttributeMetrics)>,
    /// Attributes averaged into [`Self::mean_accuracy`].
    pub subset: Vec<String>,
    pub mean_accuracy: Option<f64>,
}

fn classes(v: &[Decoded]) -> Vec<usize> {
    v.iter()
        .map(|d| match *d {
            Decoded::Class(c) => c,
            Decoded::Value(v) => v as usize,
        })
        .collect()
}

fn values(v: &[Decoded]) -> Vec<f64> {
    v.iter().map(|d| d.as_f64()).collect()
}

impl MetricsReport {
    /// Scores a dump.
    pub fn from_dump(dump: &EvalDump, options: &EvalOptions) -> Result<Self> {
        let catalog = &dump.catalog;
        let mut attributes = Vec::with_capacity(catalog.len());
        for (a, def) in catalog.attributes().iter().enumerate() {
            let m = match def.kind {
                AttributeKind::Nominal { .. } => AttributeMetrics::Nominal {
                    accuracy: accuracy(&classes(&dump.predictions[a]), &classes(&dump.truths[a]))?,
                },
                AttributeKind::Ordinal { .. } => {
                    let p = values(&dump.predictions[a]);
                    let t = values(&dump.truths[a]);
                    let cs = options
                        .cs_thresholds
                        .iter()
                        .map(|&k| Ok((k, cs_at(&p, &t, k)?)))
                        .collect::<Result<Vec<_>>>()?;
                    let spreads: Option<Vec<(f64, f64)>> = dump.spreads[a].iter().copied().collect();
                    let epsilon = match spreads {
                        Some(s) => {
                            let (mus, sigmas): (Vec<f64>, Vec<f64>) = s.into_iter().unzip();
                            Some(mean_epsilon_error(&p, &mus, &sigmas)?)
                        }
                        None => None,
                    };
                    AttributeMetrics::Ordinal {
                        mae: mae(&p, &t)?,
                        cs,
                        epsilon,
                    }
                }
            };
            attributes.push((def.name.clone(), m));
        }
        let subset: Vec<String> = match &options.subset {
            Some(names) => {
                for n in names {
                    match catalog.attribute_index(n).map(|i| catalog.attributes()[i].kind) {
                        Some(AttributeKind::Nominal { .. }) => {}
                        Some(_) => {
                            return Err(Error::Contract(format!(
                                "`{n}` is ordinal and has no accuracy to average"
                            )))
                        }
                        None => {
                            return Err(Error::Lookup {
                                kind: "attribute",
                                name: n.clone(),
                            })
                        }
                    }
                }
                names.clone()
            }
            None => catalog
                .attributes()
                .iter()
                .filter(|d| matches!(d.kind, AttributeKind::Nominal { .. }))
                .map(|d| d.name.clone())
                .collect(),
        };
        let accs: Vec<f64> = subset
            .iter()
            .filter_map(|n| {
                attributes.iter().find(|(a, _)| a == n).and_then(|(_, m)| match m {
                    AttributeMetrics::Nominal { accuracy } => Some(*accuracy),
                    AttributeMetrics::Ordinal { .. } => None,
                })
            })
            .collect();
        let mean_accuracy = (!accs.is_empty()).then(|| super::metrics::exact_sum(accs.iter().copied()) / accs.len() as f64);
        Ok(Self {
            samples: dump.sample_ids.len(),
            attributes,
            subset,
            mean_accuracy,
        })
    }

    pub fn accuracy(&self, attribute: &str) -> Option<f64> {
        self.attributes.iter().find(|(n, _)| n == attribute).and_then(|(_, m)| match m {
            AttributeMetrics::Nominal { accuracy } => Some(*accuracy),
            AttributeMetrics::Ordinal { .. } => None,
        })
    }

    pub fn mae(&self, attribute: &str) -> Option<f64> {
        self.attributes.iter().find(|(n, _)| n == attribute).and_then(|(_, m)| match m {
            AttributeMetrics::Ordinal { mae, .. } => Some(*mae),
            AttributeMetrics::Nominal { .. } => None,
        })
    }

    /// `(attribute, kind, metric, value)` rows, aggregate last.
    pub fn rows(&self) -> Vec<(String, &'static str, String, f64)> {
        let mut rows = Vec::new();
        for (name, m) in &self.attributes {
            match m {
                AttributeMetrics::Nominal { accuracy } => {
                    rows.push((name.clone(), "nominal", "accuracy".to_string(), *accuracy));
                }
                AttributeMetrics::Ordinal { mae, cs, epsilon } => {
                    rows.push((name.clone(), "ordinal", "mae".to_string(), *mae));
                    for (k, v) in cs {
                        rows.push((name.clone(), "ordinal", format!("cs@{k}"), *v));
                    }
                    if let Some(e) = epsilon {
                        rows.push((name.clone(), "ordinal", "epsilon_error".to_string(), *e));
                    }
                }
            }
        }
        if let Some(m) = self.mean_accuracy {
            rows.push(("mean".to_string(), "aggregate", "accuracy".to_string(), m));
        }
        rows
    }

    /// `attribute,kind,metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute,kind,metric,value\n");
        for (a, k, m, v) in self.rows() {
            let _ = writeln!(out, "{a},{k},{m},{v:?}");
        }
        out
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let wa = rows.iter().map(|r| r.0.len()).chain([9]).max().unwrap_or(9);
        let wm = rows.iter().map(|r| r.2.len()).chain([6]).max().unwrap_or(6);
        let mut out = format!("{:<wa$}  {:<9}  {:<wm$}  value\n", "attribute", "kind", "metric");
        for (a, k, m, v) in rows {
            let _ = writeln!(out, "{a:<wa$}  {k:<9}  {m:<wm$}  {v:.6}");
        }
        let _ = writeln!(out, "samples: {}", self.samples);
        out
    }
}

/// Evaluation-mode forward, decoding and metrics over the whole dataset.
pub fn evaluate<T: Scalar, P: Predictor<T>>(model: &P, dataset: &Dataset, options: &EvalOptions) -> Result<MetricsReport> {
    MetricsReport::from_dump(&dump_predictions(model, dataset, options)?, options)
}

/// Reports of a model on its own database and on another one.
pub fn cross_database_eval<T: Scalar, P: Predictor<T>>(
    model: &P,
    own: &Dataset,
    other: &Dataset,
    options: &EvalOptions,
) -> Result<(MetricsReport, MetricsReport)> {
    if own.catalog().digest() != other.catalog().digest() {
        return Err(Error::Contract("cross-database evaluation needs one shared catalog".into()));
    }
    Ok((evaluate(model, own, options)?, evaluate(model, other, options)?))
}
