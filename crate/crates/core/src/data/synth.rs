//! Synthetic datasets whose attributes share latent factors.
//!
//! Each sample draws a latent `z ~ N(shift·1, I)`. Its input is a fixed
//! random nonlinear image of `z`, `x = ½(1 + tanh(P z + c)) + noise·ε`, with
//! `P`, `c` drawn from `map_seed`. Attribute `j` reads the standardized score
//! `s_j = w_j·z / ‖w_j‖ + label_noise·η`: nominal attributes bin it at the
//! standard normal quantiles `k/C` (balanced classes when unshifted) and
//! ordinal ones map it affinely to `mid + (hi − lo)·s/6`, clamped to the
//! declared range. Attributes with aligned weights are therefore correlated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use super::dataset::Dataset;
use super::labels::LabelRecord;
use crate::dmtl::{AttributeCatalog, AttributeDef, AttributeKind, CategoryKind, CategorySpec, LabelValue, Scope};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthLayout {
    Vector { dim: usize },
    Image { channels: usize, height: usize, width: usize },
}

impl SynthLayout {
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            SynthLayout::Vector { dim } => vec![dim],
            SynthLayout::Image { channels, height, width } => vec![channels, height, width],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub catalog: AttributeCatalog,
    /// Latent dependence weights, one vector of `latent_dim` per attribute.
    pub weights: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub latent_dim: usize,
    /// Standard deviation of the additive input noise.
    pub noise: f64,
    /// Standard deviation of the noise added to each standardized score.
    pub label_noise: f64,
    /// Offset added to every latent coordinate (distribution shift).
    pub latent_shift: f64,
    pub layout: SynthLayout,
    pub samples_per_subject: usize,
    pub seed: u64,
    /// Seed of the input mapping; datasets sharing it share `P` and `c`.
    pub map_seed: u64,
}

impl SyntheticSpec {
    /// Spec with the latent dimension taken from the weights, 16-wide
    /// vector inputs and light input noise.
    pub fn new(catalog: AttributeCatalog, weights: Vec<Vec<f64>>, n_samples: usize, seed: u64) -> Self {
        let latent_dim = weights.first().map_or(1, Vec::len);
        Self {
            catalog,
            weights,
            n_samples,
            latent_dim,
            noise: 0.05,
            label_noise: 0.0,
            latent_shift: 0.0,
            layout: SynthLayout::Vector { dim: 16 },
            samples_per_subject: 1,
            seed,
            map_seed: 0,
        }
    }

    /// `n_attributes` binary attributes in one holistic category whose
    /// weights mix `latent_dim` shared factors: attribute `j` loads mostly on
    /// factor `j mod latent_dim` and partly on all others, drawn from
    /// `seed`.
    pub fn shared_latent(n_samples: usize, n_attributes: usize, latent_dim: usize, seed: u64) -> Self {
        let attributes = (0..n_attributes)
            .map(|j| AttributeDef::nominal(format!("attr{j}"), 2, 0))
            .collect();
        let catalog = AttributeCatalog::new(
            attributes,
            vec![CategorySpec::new(0, CategoryKind::Nominal, Scope::Holistic)],
        )
        .expect("valid catalog");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A_A5A5);
        let weights = (0..n_attributes)
            .map(|j| {
                (0..latent_dim)
                    .map(|k| {
                        let base = if k == j % latent_dim { 1.0 } else { 0.0 };
                        base + 0.5 * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        let mut spec = Self::new(catalog, weights, n_samples, seed);
        spec.map_seed = seed;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if !(self.noise >= 0.0) || !(self.label_noise >= 0.0) || !self.latent_shift.is_finite() {
            return bad("noise levels must be non-negative and the shift finite".into());
        }
        if self.n_samples == 0 || self.samples_per_subject == 0 {
            return bad("need at least one sample and one sample per subject".into());
        }
        if self.layout.shape().contains(&0) {
            return bad(format!("layout {:?} has a zero extent", self.layout));
        }
        if self.weights.len() != self.catalog.len() {
            return bad(format!(
                "{} weight vectors for {} attributes",
                self.weights.len(),
                self.catalog.len()
            ));
        }
        for (w, def) in self.weights.iter().zip(self.catalog.attributes()) {
            if w.len() != self.latent_dim || w.iter().any(|v| !v.is_finite()) {
                return bad(format!("weights of `{}` must be {} finite values", def.name, self.latent_dim));
            }
            if w.iter().all(|&v| v == 0.0) {
                return bad(format!("weights of `{}` are all zero", def.name));
            }
        }
        Ok(())
    }
}

/// Draws the dataset a spec describes. Bitwise deterministic in the spec.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let shape = spec.layout.shape();
    let dim: usize = shape.iter().product();
    let l = spec.latent_dim;

    let mut map_rng = ChaCha8Rng::seed_from_u64(spec.map_seed.wrapping_add(0x00C0_FFEE));
    let gain = 1.5 / (l as f64).sqrt();
    let projection: Vec<f64> = (0..dim * l)
        .map(|_| gain * map_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let bias: Vec<f64> = (0..dim)
        .map(|_| 0.5 * map_rng.sample::<f64, _>(StandardNormal))
        .collect();

    let normal = Normal::standard();
    let thresholds: Vec<Vec<f64>> = spec
        .catalog
        .attributes()
        .iter()
        .map(|d| match d.kind {
            AttributeKind::Nominal { classes } => (1..classes)
                .map(|k| normal.inverse_cdf(k as f64 / classes as f64))
                .collect(),
            AttributeKind::Ordinal { .. } => Vec::new(),
        })
        .collect();
    let norms: Vec<f64> = spec
        .weights
        .iter()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::with_capacity(spec.n_samples * dim);
    let mut records = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let z: Vec<f64> = (0..l)
            .map(|_| spec.latent_shift + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut labels = Vec::with_capacity(spec.catalog.len());
        for (j, def) in spec.catalog.attributes().iter().enumerate() {
            let eta: f64 = rng.sample(StandardNormal);
            let s = spec.weights[j].iter().zip(&z).map(|(w, z)| w * z).sum::<f64>() / norms[j]
                + spec.label_noise * eta;
            labels.push(match def.kind {
                AttributeKind::Nominal { .. } => {
                    LabelValue::Nominal(thresholds[j].iter().filter(|&&q| s > q).count())
                }
                AttributeKind::Ordinal { lo, hi } => {
                    LabelValue::Ordinal((0.5 * (lo + hi) + (hi - lo) * s / 6.0).clamp(lo, hi))
                }
            });
        }
        for d in 0..dim {
            let pre = bias[d] + (0..l).map(|k| projection[d * l + k] * z[k]).sum::<f64>();
            let eps: f64 = rng.sample(StandardNormal);
            features.push((0.5 * (1.0 + pre.tanh()) + spec.noise * eps) as f32);
        }
        records.push(LabelRecord::new(
            format!("s{i:06}"),
            format!("subj{:05}", i / spec.samples_per_subject),
            labels,
        ));
    }
    Dataset::new(
        spec.catalog.clone(),
        shape,
        features,
        records,
        format!(
            "synthetic n={} latent={} noise={} label_noise={} shift={} seed={} map_seed={}",
            spec.n_samples, l, spec.noise, spec.label_noise, spec.latent_shift, spec.seed, spec.map_seed
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cooccur::cooccurrence;

    fn two_binary(weights: Vec<Vec<f64>>, n: usize, noise: f64) -> SyntheticSpec {
        let catalog = AttributeCatalog::new(
            vec![AttributeDef::nominal("a", 2, 0), AttributeDef::nominal("b", 2, 0)],
            vec![CategorySpec::new(0, CategoryKind::Nominal, Scope::Holistic)],
        )
        .unwrap();
        let mut s = SyntheticSpec::new(catalog, weights, n, 4);
        s.noise = noise;
        s
    }

    #[test]
    fn identical_weights_give_identical_labels() {
        let d = synth_generate(&two_binary(vec![vec![1.0, -0.5], vec![1.0, -0.5]], 300, 0.0)).unwrap();
        assert_eq!(cooccurrence(&d, &[0, 1]).unwrap().values[0][1], 1.0);
    }

    #[test]
    fn independent_weights_are_nearly_uncorrelated() {
        let d = synth_generate(&two_binary(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 5000, 0.1)).unwrap();
        assert!(cooccurrence(&d, &[0, 1]).unwrap().values[0][1].abs() < 0.1);
    }

    #[test]
    fn deterministic() {
        let s = SyntheticSpec::shared_latent(50, 3, 2, 8);
        assert_eq!(synth_generate(&s).unwrap(), synth_generate(&s).unwrap());
        let mut t = s.clone();
        t.seed = 9;
        assert_ne!(synth_generate(&s).unwrap(), synth_generate(&t).unwrap());
    }

    #[test]
    fn classes_are_balanced_and_ordinals_in_range() {
        let catalog = AttributeCatalog::new(
            vec![AttributeDef::nominal("c", 3, 0), AttributeDef::ordinal("age", 0.0, 60.0, 1)],
            vec![
                CategorySpec::new(0, CategoryKind::Nominal, Scope::Holistic),
                CategorySpec::new(1, CategoryKind::Ordinal, Scope::Holistic),
            ],
        )
        .unwrap();
        let mut spec = SyntheticSpec::new(catalog, vec![vec![1.0, 1.0], vec![0.3, -1.0]], 3000, 1);
        spec.layout = SynthLayout::Image { channels: 1, height: 4, width: 4 };
        let d = synth_generate(&spec).unwrap();
        assert_eq!(d.sample_shape(), &[1, 4, 4]);
        let mut counts = [0usize; 3];
        for r in d.records() {
            match r.labels[0] {
                LabelValue::Nominal(c) => counts[c] += 1,
                _ => unreachable!(),
            }
            match r.labels[1] {
                LabelValue::Ordinal(v) => assert!((0.0..=60.0).contains(&v)),
                _ => unreachable!(),
            }
        }
        assert!(counts.iter().all(|&c| (900..1100).contains(&c)), "{counts:?}");
    }

    #[test]
    fn invalid_specs() {
        let mut s = two_binary(vec![vec![1.0], vec![0.0]], 10, 0.0);
        assert!(synth_generate(&s).is_err());
        s.weights[1] = vec![1.0];
        s.noise = -1.0;
        assert!(synth_generate(&s).is_err());
    }
}
