//! Plain SGD with weight decay, the step learning-rate schedule, the
//! training loop and checkpoints.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, peek_precision, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::dmtl::{DmtlModel, ModelGradients, ObjectiveWeights};
use crate::error::{Error, Result};
use crate::layers::{Mode, Network, ParamRole};
use crate::tensor::{Graph, Precision, Scalar};

/// Optimization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Base learning rate.
    pub eta: f64,
    /// Factor applied to the learning rate every `step_interval` iterations.
    pub decay_factor: f64,
    pub step_interval: u64,
    /// Weight decay of trunk parameters.
    pub gamma1: f64,
    /// Weight decay of head parameters.
    pub gamma2: f64,
    /// Per-category loss weights; the catalog's when `None`.
    pub lambdas: Option<Vec<f64>>,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            decay_factor: 0.1,
            step_interval: 1000,
            gamma1: 5e-4,
            gamma2: 5e-4,
            lambdas: None,
            batch_size: 32,
            max_iterations: 1000,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`].
pub const TRAIN_KEYS: [&str; 10] = [
    "eta",
    "decay_factor",
    "step_interval",
    "gamma1",
    "gamma2",
    "lambdas",
    "batch_size",
    "max_iterations",
    "seed",
    "precision",
];

impl TrainConfig {
    /// Schedule of the full-size `modified_alexnet` profile: the learning
    /// rate drops tenfold every 100,000 iterations.
    pub fn reference_preset() -> Self {
        Self {
            step_interval: 100_000,
            max_iterations: 300_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Contract(m.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail("eta must be positive and finite");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return fail("decay_factor must lie in (0, 1]");
        }
        if self.step_interval == 0 {
            return fail("step_interval must be at least 1");
        }
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite() && self.gamma2 >= 0.0 && self.gamma2.is_finite()) {
            return fail("gamma1 and gamma2 must be non-negative and finite");
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2 for training-mode batch normalization");
        }
        if let Some(l) = &self.lambdas {
            if l.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return fail("lambdas must be positive and finite");
            }
        }
        Ok(())
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<V, String> {
            value
                .trim()
                .parse()
                .map_err(|_| format!("`{key}`: `{value}` is not a valid number"))
        }
        match key {
            "eta" => self.eta = num(key, value)?,
            "decay_factor" => self.decay_factor = num(key, value)?,
            "step_interval" => self.step_interval = num(key, value)?,
            "gamma1" => self.gamma1 = num(key, value)?,
            "gamma2" => self.gamma2 = num(key, value)?,
            "lambdas" => {
                self.lambdas = if value.trim().is_empty() || value.trim() == "catalog" {
                    None
                } else {
                    Some(value.split(',').map(|v| num(key, v)).collect::<std::result::Result<_, _>>()?)
                }
            }
            "batch_size" => self.batch_size = num(key, value)?,
            "max_iterations" => self.max_iterations = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "precision" => {
                self.precision = Precision::parse(value.trim())
                    .ok_or_else(|| format!("`precision`: expected f32 or f64, found `{value}`"))?
            }
            other => return Err(format!("unknown training key `{other}`")),
        }
        Ok(())
    }

    /// `key=value` pairs in [`TRAIN_KEYS`] order; reals use their shortest
    /// exact form, so [`Self::set`] restores them bitwise.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("eta", format!("{:?}", self.eta)),
            ("decay_factor", format!("{:?}", self.decay_factor)),
            ("step_interval", self.step_interval.to_string()),
            ("gamma1", format!("{:?}", self.gamma1)),
            ("gamma2", format!("{:?}", self.gamma2)),
            (
                "lambdas",
                match &self.lambdas {
                    None => "catalog".to_string(),
                    Some(l) => l.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","),
                },
            ),
            ("batch_size", self.batch_size.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
            ("seed", self.seed.to_string()),
            ("precision", self.precision.to_string()),
        ]
    }

    pub fn objective_weights<T: Scalar>(&self, model: &DmtlModel<T>, gamma1: f64, gamma2: f64) -> Result<ObjectiveWeights> {
        let mut w = ObjectiveWeights::from_catalog(model.catalog(), gamma1, gamma2);
        if let Some(l) = &self.lambdas {
            if l.len() != w.lambdas.len() {
                return Err(Error::Contract(format!(
                    "{} lambdas configured for {} categories",
                    l.len(),
                    w.lambdas.len()
                )));
            }
            w.lambdas = l.clone();
        }
        Ok(w)
    }
}

/// Learning rate at `iteration`: `eta · decay_factor^⌊iteration / step_interval⌋`.
///
/// When `1/decay_factor` is an integer the power is applied as a division
/// by that integer's power, which keeps tenfold steps such as `1e-4 → 1e-5
/// → 1e-6` exact in binary floating point.
pub fn lr_at(config: &TrainConfig, iteration: u64) -> f64 {
    let k = (iteration / config.step_interval).min(i32::MAX as u64) as i32;
    if k == 0 {
        return config.eta;
    }
    let inverse = 1.0 / config.decay_factor;
    let whole = inverse.round();
    if whole >= 1.0 && (inverse - whole).abs() <= 1e-12 * whole {
        config.eta / whole.powi(k)
    } else {
        config.eta * config.decay_factor.powi(k)
    }
}

fn step_network<T: Scalar>(
    network: &mut Network<T>,
    grads: &[(String, crate::tensor::Tensor<T>)],
    lr: T,
    decay: T,
    what: &str,
) -> Result<()> {
    for (name, param) in network.params_mut().iter_mut() {
        if !param.role.trainable() {
            continue;
        }
        let g = grads
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g)
            .ok_or_else(|| Error::Contract(format!("no gradient for {what} parameter `{name}`")))?;
        if g.shape() != param.tensor.shape() {
            return Err(Error::Contract(format!(
                "gradient of {what} parameter `{name}` has shape {:?}, expected {:?}",
                g.shape(),
                param.tensor.shape()
            )));
        }
        for (w, &d) in param.tensor.data_mut().iter_mut().zip(g.data()) {
            *w = *w - lr * (d + decay * *w);
        }
    }
    Ok(())
}

/// `w ← w − lr·(∂L/∂w + γ·w)` for every trainable parameter, with `γ1` on
/// the trunk and `γ2` on the heads. Running statistics are left alone.
pub fn sgd_step<T: Scalar>(
    model: &mut DmtlModel<T>,
    grads: &ModelGradients<T>,
    lr: f64,
    gamma1: f64,
    gamma2: f64,
) -> Result<()> {
    if grads.heads.len() != model.heads().len() {
        return Err(Error::Contract(format!(
            "gradients for {} heads, model has {}",
            grads.heads.len(),
            model.heads().len()
        )));
    }
    let (lr, g1, g2) = (T::of(lr), T::of(gamma1), T::of(gamma2));
    step_network(model.trunk_mut(), &grads.trunk, lr, g1, "trunk")?;
    for (p, (head, hg)) in model.heads_mut().iter_mut().zip(&grads.heads).enumerate() {
        step_network(head, hg, lr, g2, &format!("head {p}"))?;
    }
    Ok(())
}

/// Epoch-wise shuffled batches without replacement; a trailing partial
/// batch is dropped. Batch `i` is a pure function of `(seed, i)`.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    samples: usize,
    batch_size: usize,
    seed: u64,
    cached: Option<(u64, Vec<usize>)>,
}

impl BatchSampler {
    pub fn new(samples: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || samples < batch_size {
            return Err(Error::Contract(format!(
                "{samples} samples cannot fill a batch of {batch_size}"
            )));
        }
        Ok(Self {
            samples,
            batch_size,
            seed,
            cached: None,
        })
    }

    pub fn batches_per_epoch(&self) -> u64 {
        (self.samples / self.batch_size) as u64
    }

    /// `(epoch, position within the epoch)` of a batch.
    pub fn locate(&self, iteration: u64) -> (u64, u64) {
        let bpe = self.batches_per_epoch();
        (iteration / bpe, iteration % bpe)
    }

    fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.samples).collect();
        let seed = self.seed ^ epoch.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    pub fn batch(&mut self, iteration: u64) -> Vec<usize> {
        let (epoch, pos) = self.locate(iteration);
        if self.cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.cached = Some((epoch, self.permutation(epoch)));
        }
        let perm = &self.cached.as_ref().expect("cached").1;
        let start = pos as usize * self.batch_size;
        perm[start..start + self.batch_size].to_vec()
    }
}

/// Squared L2 norm of the weight matrices of a network.
pub fn weight_norm_sq<T: Scalar>(network: &Network<T>) -> f64 {
    network
        .params()
        .iter()
        .filter(|(_, p)| p.role == ParamRole::Weight)
        .map(|(_, p)| p.tensor.data().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>())
        .sum()
}

/// Resumable optimization state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainState {
    /// Number of completed iterations.
    pub iteration: u64,
    pub seed: u64,
    /// Epoch and in-epoch position of the next batch.
    pub epoch: u64,
    pub cursor: u64,
}

/// Drives [`sgd_step`] over a dataset.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    model: DmtlModel<T>,
    config: TrainConfig,
    sampler: BatchSampler,
    iteration: u64,
    history: Vec<f64>,
}

impl<T: Scalar> Trainer<T> {
    /// Checks the configuration and that `dataset` matches the model.
    pub fn new(model: DmtlModel<T>, dataset: &Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        check_dataset(&model, dataset)?;
        config.objective_weights(&model, 0.0, 0.0)?;
        let sampler = BatchSampler::new(dataset.len(), config.batch_size, config.seed)?;
        Ok(Self {
            model,
            config,
            sampler,
            iteration: 0,
            history: Vec::new(),
        })
    }

    /// Continues from a saved state.
    pub fn resume(model: DmtlModel<T>, dataset: &Dataset, config: TrainConfig, state: TrainState) -> Result<Self> {
        if state.seed != config.seed {
            return Err(Error::Checkpoint(format!(
                "saved sampler seed {} differs from configured seed {}",
                state.seed, config.seed
            )));
        }
        let mut t = Self::new(model, dataset, config)?;
        if t.sampler.locate(state.iteration) != (state.epoch, state.cursor) {
            return Err(Error::Checkpoint(
                "saved sampler position does not match the dataset and batch size".into(),
            ));
        }
        t.iteration = state.iteration;
        Ok(t)
    }

    pub fn model(&self) -> &DmtlModel<T> {
        &self.model
    }

    pub fn into_model(self) -> DmtlModel<T> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Objective value recorded at each iteration run by this trainer.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn state(&self) -> TrainState {
        let (epoch, cursor) = self.sampler.locate(self.iteration);
        TrainState {
            iteration: self.iteration,
            seed: self.config.seed,
            epoch,
            cursor,
        }
    }

    /// One iteration; returns the objective before the update.
    pub fn step(&mut self, dataset: &Dataset) -> Result<f64> {
        let indices = self.sampler.batch(self.iteration);
        let x = dataset.batch::<T>(&indices)?;
        let targets = dataset.targets(&indices)?;
        let weights = self.config.objective_weights(&self.model, 0.0, 0.0)?;
        let mut graph = Graph::new();
        let xn = graph.constant(x);
        let objective = self.model.objective(&mut graph, xn, &targets, &weights, Mode::Train)?;
        let penalty = self.config.gamma1 * weight_norm_sq(self.model.trunk())
            + self.config.gamma2 * self.model.heads().iter().map(weight_norm_sq).sum::<f64>();
        let value = objective.value(&graph) + penalty;
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "objective became non-finite at iteration {}",
                self.iteration
            )));
        }
        let grads = objective.gradients(&graph)?;
        if !grads.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient at iteration {}",
                self.iteration
            )));
        }
        let lr = lr_at(&self.config, self.iteration);
        sgd_step(&mut self.model, &grads, lr, self.config.gamma1, self.config.gamma2)?;
        self.model.commit_batch_stats(&objective.pass)?;
        self.iteration += 1;
        self.history.push(value);
        Ok(value)
    }

    /// Steps until `max_iterations` iterations have completed.
    pub fn run(&mut self, dataset: &Dataset) -> Result<()> {
        self.run_until(dataset, self.config.max_iterations)
    }

    pub fn run_until(&mut self, dataset: &Dataset, iteration: u64) -> Result<()> {
        while self.iteration < iteration {
            self.step(dataset)?;
        }
        Ok(())
    }
}

fn check_dataset<T: Scalar>(model: &DmtlModel<T>, dataset: &Dataset) -> Result<()> {
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
    Ok(())
}

/// Trains for `config.max_iterations` and returns the model with the
/// per-iteration objective history.
pub fn train_loop<T: Scalar>(
    model: DmtlModel<T>,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(DmtlModel<T>, Vec<f64>)> {
    let mut t = Trainer::new(model, dataset, config.clone())?;
    t.run(dataset)?;
    let history = t.history.clone();
    Ok((t.into_model(), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SyntheticSpec};
    use crate::dmtl::{AttributeCatalog, AttributeDef, CategoryKind, CategorySpec, Scope};
    use crate::layers::mlp_trunk;
    use crate::tensor::Tensor;

    #[test]
    fn schedule() {
        let c = TrainConfig::reference_preset();
        assert_eq!(lr_at(&c, 0), 0.0001);
        assert_eq!(lr_at(&c, 99_999), 0.0001);
        assert_eq!(lr_at(&c, 100_000), 0.00001);
        assert_eq!(lr_at(&c, 250_000), 1e-6);
        let odd = TrainConfig { decay_factor: 0.3, step_interval: 10, ..TrainConfig::default() };
        assert_eq!(lr_at(&odd, 25), 1e-4 * 0.3 * 0.3);
        let flat = TrainConfig { decay_factor: 1.0, ..TrainConfig::default() };
        assert_eq!(lr_at(&flat, 123_456), 1e-4);
    }

    #[test]
    fn config_text_round_trip() {
        let c = TrainConfig {
            eta: 0.0123,
            lambdas: Some(vec![1.0, 0.25]),
            precision: Precision::F64,
            ..TrainConfig::default()
        };
        let mut d = TrainConfig::default();
        for (k, v) in c.to_pairs() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(d.set("etaa", "1").is_err());
        assert!(d.set("eta", "fast").is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainConfig { batch_size: 1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { decay_factor: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { eta: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    fn ordinal_catalog() -> AttributeCatalog {
        AttributeCatalog::new(
            vec![AttributeDef::ordinal("y", -10.0, 10.0, 0)],
            vec![CategorySpec::new(0, CategoryKind::Ordinal, Scope::Holistic).with_head(vec![crate::layers::LayerSpec::fc(1)])],
        )
        .unwrap()
    }

    #[test]
    fn quadratic_step() {
        // One trunk-free linear head on input 1 with zero bias: ŷ = w, loss (w − 3)².
        let c = ordinal_catalog();
        let mut m = DmtlModel::<f64>::build(&c, &[], &[1], 0).unwrap();
        m.heads_mut()[0].params_mut().get_mut("l00.weight").unwrap().tensor = Tensor::zeros(&[1, 1]);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 1], 1.0));
        let rows = vec![vec![crate::dmtl::LabelValue::Ordinal(3.0)]];
        let t = crate::dmtl::Targets::from_rows(&c, &rows).unwrap();
        let w = ObjectiveWeights::from_catalog(&c, 0.0, 0.0);
        let obj = m.objective(&mut g, x, &t, &w, Mode::Train).unwrap();
        let mut grads = obj.gradients(&g).unwrap();
        // Freeze the bias to keep the problem one-dimensional.
        for (n, t) in grads.heads[0].iter_mut() {
            if n.ends_with("bias") {
                t.data_mut()[0] = 0.0;
            }
        }
        sgd_step(&mut m, &grads, 0.1, 0.0, 0.0).unwrap();
        let w1 = m.heads()[0].params().get("l00.weight").unwrap().tensor.item();
        assert!((w1 - 0.6).abs() < 1e-15);
    }

    fn zero_grads(m: &DmtlModel<f64>) -> ModelGradients<f64> {
        let z = |net: &Network<f64>| {
            net.params()
                .iter()
                .filter(|(_, p)| p.role.trainable())
                .map(|(n, p)| (n.to_string(), Tensor::zeros(p.tensor.shape())))
                .collect::<Vec<_>>()
        };
        ModelGradients {
            trunk: z(m.trunk()),
            heads: m.heads().iter().map(z).collect(),
        }
    }

    #[test]
    fn decay_only_updates() {
        let c = AttributeCatalog::morph();
        let m0 = DmtlModel::<f64>::build(&c, &[crate::layers::LayerSpec::fc(4), crate::layers::LayerSpec::batch_norm()], &[3], 1).unwrap();
        let mut m = m0.clone();
        sgd_step(&mut m, &zero_grads(&m0), 0.5, 0.0, 0.0).unwrap();
        assert_eq!(m, m0);
        let mut m = m0.clone();
        sgd_step(&mut m, &zero_grads(&m0), 0.5, 0.0, 0.1).unwrap();
        let before = m0.heads()[1].params().get("l00.weight").unwrap().tensor.data().to_vec();
        let after = m.heads()[1].params().get("l00.weight").unwrap().tensor.data().to_vec();
        for (b, a) in before.iter().zip(&after) {
            assert_eq!(*a, b - 0.5 * (0.0 + 0.1 * b));
            assert!((a - b * (1.0 - 0.5 * 0.1)).abs() < 1e-15);
        }
        assert_eq!(m.trunk(), m0.trunk());
        // Running statistics never move under weight decay.
        let mut m = m0.clone();
        sgd_step(&mut m, &zero_grads(&m0), 0.5, 0.3, 0.3).unwrap();
        for (name, p) in m.trunk().params().iter() {
            if !p.role.trainable() {
                assert_eq!(p, m0.trunk().params().get(name).unwrap());
            }
        }
    }

    #[test]
    fn missing_gradient_is_a_contract_error() {
        let c = AttributeCatalog::morph();
        let mut m = DmtlModel::<f64>::build(&c, &mlp_trunk(&[4]), &[3], 1).unwrap();
        let mut g = zero_grads(&m);
        g.trunk.pop();
        assert!(matches!(sgd_step(&mut m, &g, 0.1, 0.0, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn sampler_is_epochwise_without_replacement() {
        let mut s = BatchSampler::new(10, 3, 5).unwrap();
        assert_eq!(s.batches_per_epoch(), 3);
        for epoch in 0..3 {
            let mut seen: Vec<usize> = (0..3).flat_map(|b| s.batch(epoch * 3 + b)).collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), 9);
        }
        let mut fresh = BatchSampler::new(10, 3, 5).unwrap();
        assert_eq!(fresh.batch(7), s.batch(7));
        assert!(BatchSampler::new(2, 3, 0).is_err());
    }

    fn small_set() -> Dataset {
        let mut spec = SyntheticSpec::shared_latent(40, 2, 2, 3);
        spec.layout = crate::data::SynthLayout::Vector { dim: 6 };
        synth_generate(&spec).unwrap()
    }

    #[test]
    fn loop_basics() {
        let d = small_set();
        let m = DmtlModel::<f32>::build(d.catalog(), &mlp_trunk(&[8]), &[6], 2).unwrap();
        let cfg = TrainConfig { max_iterations: 0, batch_size: 8, ..TrainConfig::default() };
        let (same, h) = train_loop(m.clone(), &d, &cfg).unwrap();
        assert_eq!(same, m);
        assert!(h.is_empty());
        let cfg = TrainConfig { max_iterations: 30, batch_size: 8, eta: 0.01, ..TrainConfig::default() };
        let (a, ha) = train_loop(m.clone(), &d, &cfg).unwrap();
        let (b, hb) = train_loop(m.clone(), &d, &cfg).unwrap();
        assert_eq!(ha.len(), 30);
        assert!(a.trunk().params().bitwise_eq(b.trunk().params()));
        assert_eq!(ha.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), hb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn catalog_mismatch_fails_before_training() {
        let d = small_set();
        let m = DmtlModel::<f32>::build(&AttributeCatalog::morph(), &mlp_trunk(&[8]), &[6], 2).unwrap();
        let cfg = TrainConfig { batch_size: 8, ..TrainConfig::default() };
        assert!(matches!(train_loop(m, &d, &cfg), Err(Error::Label(_))));
    }
}
