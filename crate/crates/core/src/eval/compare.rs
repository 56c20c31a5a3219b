use std::fmt::Write as _;

use super::report::{evaluate, EvalOptions, MetricsReport};
use crate::data::{split_subject_exclusive, train_test, Dataset};
use crate::dmtl::{match_budget, DmtlModel, StlBundle};
use crate::error::{Error, Result};
use crate::layers::LayerSpec;
use crate::tensor::Scalar;
use crate::train::{train_loop, TrainConfig};

/// Settings of a DMTL versus single-task comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSetup {
    /// DMTL shared trunk; category heads come from the catalog.
    pub trunk: Vec<LayerSpec>,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    /// Subject-exclusive folds; fold 0 is held out.
    pub folds: usize,
    /// Allowed relative gap between the two parameter budgets.
    pub budget_tolerance: f64,
    pub eval: EvalOptions,
}

impl ComparisonSetup {
    pub fn new(trunk: Vec<LayerSpec>, config: TrainConfig, seeds: Vec<u64>) -> Self {
        Self {
            trunk,
            config,
            seeds,
            folds: 5,
            budget_tolerance: 0.10,
            eval: EvalOptions::default(),
        }
    }
}

/// Scales every layer width by `percent / 100` (at least 1).
pub fn scale_widths(specs: &[LayerSpec], percent: usize) -> Vec<LayerSpec> {
    let scale = |w: usize| ((w * percent + 50) / 100).max(1);
    specs
        .iter()
        .map(|s| match *s {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => LayerSpec::Conv {
                out_channels: scale(out_channels),
                kernel,
                stride,
                pad,
            },
            LayerSpec::FullyConnected { out_features } => LayerSpec::FullyConnected {
                out_features: scale(out_features),
            },
            other => other,
        })
        .collect()
}

/// Per-seed outcome of one comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dmtl_parameters: usize,
    pub stl_parameters: usize,
    pub dmtl: MetricsReport,
    pub stl: MetricsReport,
}

impl SeedOutcome {
    /// Whether the joint model's mean held-out accuracy is at least the
    /// single-task one's.
    pub fn dmtl_wins(&self) -> bool {
        match (self.dmtl.mean_accuracy, self.stl.mean_accuracy) {
            (Some(d), Some(s)) => d >= s,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub attributes: Vec<String>,
    pub outcomes: Vec<SeedOutcome>,
}

/// Held-out score of one attribute: accuracy for nominal, MAE for ordinal.
fn score(report: &MetricsReport, name: &str) -> f64 {
    report.accuracy(name).or_else(|| report.mae(name)).unwrap_or(f64::NAN)
}

impl ComparisonReport {
    pub fn wins(&self) -> usize {
        self.outcomes.iter().filter(|o| o.dmtl_wins()).count()
    }

    /// One row per attribute plus the mean-accuracy row; each row holds
    /// `(dmtl, stl)` per seed.
    pub fn rows(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        let mut rows: Vec<(String, Vec<(f64, f64)>)> = self
            .attributes
            .iter()
            .map(|a| {
                let cells = self.outcomes.iter().map(|o| (score(&o.dmtl, a), score(&o.stl, a))).collect();
                (a.clone(), cells)
            })
            .collect();
        rows.push((
            "mean_accuracy".to_string(),
            self.outcomes
                .iter()
                .map(|o| {
                    (
                        o.dmtl.mean_accuracy.unwrap_or(f64::NAN),
                        o.stl.mean_accuracy.unwrap_or(f64::NAN),
                    )
                })
                .collect(),
        ));
        rows
    }

    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(9);
        let mut out = format!("{:<w$}", "attribute");
        for o in &self.outcomes {
            let _ = write!(out, "  {:>8} {:>8}", format!("dmtl#{}", o.seed), format!("stl#{}", o.seed));
        }
        out.push('\n');
        for (name, cells) in rows {
            let _ = write!(out, "{name:<w$}");
            for (d, s) in cells {
                let _ = write!(out, "  {d:>8.4} {s:>8.4}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "dmtl >= stl in {} of {} seeds", self.wins(), self.outcomes.len());
        out
    }
}

/// Trains a DMTL model and a budget-matched set of single-task models per
/// seed on a subject-exclusive split, and scores both on the held-out fold.
///
/// Each single-task model copies the DMTL trunk and (when the category
/// heads have a hidden layer) a one-hidden-layer head, with all widths
/// scaled by a common factor chosen so the summed parameter count is
/// closest to the DMTL count.
pub fn mtl_vs_stl_report<T: Scalar>(dataset: &Dataset, setup: &ComparisonSetup) -> Result<ComparisonReport> {
    if setup.seeds.is_empty() {
        return Err(Error::Contract("comparison needs at least one seed".into()));
    }
    let catalog = dataset.catalog();
    let input = dataset.sample_shape();
    let head_hidden = catalog
        .categories()
        .iter()
        .filter(|c| c.head_spec.iter().filter(|s| matches!(s, LayerSpec::FullyConnected { .. })).count() > 1)
        .filter_map(|c| match c.head_spec.first() {
            Some(LayerSpec::FullyConnected { out_features }) => Some(*out_features),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let mut outcomes = Vec::with_capacity(setup.seeds.len());
    for &seed in &setup.seeds {
        let folds = split_subject_exclusive(dataset, setup.folds, seed)?;
        let (train_idx, test_idx) = train_test(&folds, 0);
        let train = dataset.subset(&train_idx)?;
        let test = dataset.subset(&test_idx)?;
        let config = TrainConfig {
            seed,
            ..setup.config.clone()
        };

        let dmtl = DmtlModel::<T>::build(catalog, &setup.trunk, input, seed)?;
        let budget = dmtl.parameter_count();
        let (_, stl) = match_budget(budget, 400, |pct| {
            let hidden = if head_hidden == 0 { 0 } else { ((head_hidden * pct + 50) / 100).max(1) };
            StlBundle::<T>::build(catalog, &scale_widths(&setup.trunk, pct), input, hidden, seed)
        })?;
        let stl_budget = stl.parameter_count();
        if (stl_budget as f64 - budget as f64).abs() > setup.budget_tolerance * budget as f64 {
            return Err(Error::Contract(format!(
                "no single-task configuration within {:.0}% of {budget} parameters (closest {stl_budget})",
                100.0 * setup.budget_tolerance
            )));
        }

        let (dmtl, _) = train_loop(dmtl, &train, &config)?;
        let stl_config = TrainConfig {
            lambdas: None,
            ..config.clone()
        };
        let mut trained = Vec::with_capacity(catalog.len());
        for (j, m) in stl.models().iter().enumerate() {
            let (m, _) = train_loop(m.clone(), &train.single_attribute(j)?, &stl_config)?;
            trained.push(m);
        }
        let stl = StlBundle::from_models(catalog.clone(), trained)?;
        outcomes.push(SeedOutcome {
            seed,
            dmtl_parameters: budget,
            stl_parameters: stl_budget,
            dmtl: evaluate(&dmtl, &test, &setup.eval)?,
            stl: evaluate(&stl, &test, &setup.eval)?,
        });
    }
    Ok(ComparisonReport {
        attributes: catalog.attributes().iter().map(|d| d.name.clone()).collect(),
        outcomes,
    })
}
