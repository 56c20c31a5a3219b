//! Layer specifications, parameter sets and forward evaluation of layer
//! stacks, plus the trunk and head architecture presets.

mod presets;

pub use presets::{mlp_trunk, preset_head, preset_trunk, TrunkPreset, DEFAULT_HEAD_HIDDEN};

use std::fmt;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{BatchStats, Graph, NodeId, Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// One layer of a network. Shapes are per sample: `[c, h, w]` for images,
/// `[f]` for feature vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    BatchNorm {
        epsilon: f64,
        momentum: f64,
    },
    /// Flattens its input.
    FullyConnected {
        out_features: usize,
    },
    ReLU,
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn pool(kernel: usize, stride: usize) -> Self {
        LayerSpec::MaxPool { kernel, stride }
    }

    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm {
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn fc(out_features: usize) -> Self {
        LayerSpec::FullyConnected { out_features }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv { .. } | LayerSpec::BatchNorm { .. } | LayerSpec::FullyConnected { .. }
        )
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                ..
            } if out_channels == 0 || kernel == 0 || stride == 0 => {
                Err("conv extents must be positive".into())
            }
            LayerSpec::MaxPool { kernel, stride } if kernel == 0 || stride == 0 => {
                Err("pool extents must be positive".into())
            }
            LayerSpec::BatchNorm { epsilon, momentum }
                if !(epsilon > 0.0) || !(momentum > 0.0 && momentum < 1.0) =>
            {
                Err("batch norm needs epsilon > 0 and momentum in (0, 1)".into())
            }
            LayerSpec::FullyConnected { out_features: 0 } => {
                Err("fully connected width must be positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        self.validate()?;
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                let [_, h, w] = image_shape(input)?;
                if h + 2 * pad < kernel || w + 2 * pad < kernel {
                    return Err(format!("kernel {kernel} exceeds padded input {h}x{w}"));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * pad - kernel) / stride + 1,
                    (w + 2 * pad - kernel) / stride + 1,
                ])
            }
            LayerSpec::MaxPool { kernel, stride } => {
                let [c, h, w] = image_shape(input)?;
                if h < kernel || w < kernel {
                    return Err(format!("pool kernel {kernel} exceeds input {h}x{w}"));
                }
                Ok(vec![c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::BatchNorm { .. } => match input.len() {
                1 | 3 => Ok(input.to_vec()),
                _ => Err(format!("batch norm needs [f] or [c,h,w], got {input:?}")),
            },
            LayerSpec::FullyConnected { out_features } => Ok(vec![out_features]),
            LayerSpec::ReLU => Ok(input.to_vec()),
        }
    }
}

fn image_shape(input: &[usize]) -> std::result::Result<[usize; 3], String> {
    match *input {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(format!("expected an image shape [c,h,w], got {input:?}")),
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => write!(f, "conv:{out_channels}:{kernel}:{stride}:{pad}"),
            LayerSpec::MaxPool { kernel, stride } => write!(f, "pool:{kernel}:{stride}"),
            LayerSpec::BatchNorm { epsilon, momentum } => write!(f, "bn:{epsilon}:{momentum}"),
            LayerSpec::FullyConnected { out_features } => write!(f, "fc:{out_features}"),
            LayerSpec::ReLU => f.write_str("relu"),
        }
    }
}

impl std::str::FromStr for LayerSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let int = |i: usize| -> std::result::Result<usize, String> {
            parts
                .get(i)
                .ok_or_else(|| format!("layer `{s}` is missing field {i}"))?
                .parse()
                .map_err(|_| format!("layer `{s}`: field {i} is not an integer"))
        };
        let real = |i: usize| -> std::result::Result<f64, String> {
            parts
                .get(i)
                .ok_or_else(|| format!("layer `{s}` is missing field {i}"))?
                .parse()
                .map_err(|_| format!("layer `{s}`: field {i} is not a number"))
        };
        let (spec, arity) = match parts[0] {
            "conv" => (LayerSpec::conv(int(1)?, int(2)?, int(3)?, int(4)?), 5),
            "pool" => (LayerSpec::pool(int(1)?, int(2)?), 3),
            "bn" => (
                LayerSpec::BatchNorm {
                    epsilon: real(1)?,
                    momentum: real(2)?,
                },
                3,
            ),
            "fc" => (LayerSpec::fc(int(1)?), 2),
            "relu" => (LayerSpec::ReLU, 1),
            other => return Err(format!("unknown layer kind `{other}`")),
        };
        if parts.len() != arity {
            return Err(format!("layer `{s}` has {} fields, expected {arity}", parts.len()));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Renders a layer list as `;`-separated layer tokens.
pub fn format_specs(specs: &[LayerSpec]) -> String {
    specs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

pub fn parse_specs(s: &str) -> std::result::Result<Vec<LayerSpec>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(str::parse).collect()
}

/// Static shape check: per-sample shapes after every layer, starting with
/// `input`.
pub fn check_shapes(specs: &[LayerSpec], input: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input.to_vec()];
    for (i, spec) in specs.iter().enumerate() {
        let next = spec
            .output_shape(shapes.last().expect("non-empty"))
            .map_err(|message| Error::Architecture {
                layer: format!("#{i} ({spec})"),
                message,
            })?;
        shapes.push(next);
    }
    Ok(shapes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamRole::RunningMean | ParamRole::RunningVar)
    }

    /// Whether the complexity penalty applies.
    pub fn regularized(self) -> bool {
        self == ParamRole::Weight
    }

    pub fn suffix(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::BnScale => "bn_scale",
            ParamRole::BnShift => "bn_shift",
            ParamRole::RunningMean => "running_mean",
            ParamRole::RunningVar => "running_var",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Self> {
        [
            ParamRole::Weight,
            ParamRole::Bias,
            ParamRole::BnScale,
            ParamRole::BnShift,
            ParamRole::RunningMean,
            ParamRole::RunningVar,
        ]
        .into_iter()
        .find(|r| r.suffix() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub tensor: Tensor<T>,
    pub role: ParamRole,
}

/// Named parameters of one layer stack, in layer order.
///
/// Names have the form `l{index:02}.{role}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet<T> {
    params: IndexMap<String, Param<T>>,
}

pub fn param_name(layer: usize, role: ParamRole) -> String {
    format!("l{layer:02}.{}", role.suffix())
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: String, tensor: Tensor<T>, role: ParamRole) -> Result<()> {
        if self.params.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        let tensor = tensor.with_requires_grad(role.trainable());
        self.params.insert(name, Param { tensor, role });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.get_mut(name)
    }

    pub fn layer(&self, layer: usize, role: ParamRole) -> Result<&Tensor<T>> {
        let name = param_name(layer, role);
        self.params
            .get(&name)
            .map(|p| &p.tensor)
            .ok_or(Error::Lookup {
                kind: "parameter",
                name,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params
            .values()
            .filter(|p| p.role.trainable())
            .map(|p| p.tensor.numel())
            .sum()
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|((ka, a), (kb, b))| {
                ka == kb && a.role == b.role && a.tensor.bitwise_eq(&b.tensor)
            })
    }
}

/// Draws parameters for a layer stack: fan-in scaled uniform weights in
/// `±sqrt(6 / fan_in)`, zero biases, unit BN scale, zero BN shift, and
/// running statistics at mean 0 and variance 1.
pub fn init_random<T: Scalar>(
    specs: &[LayerSpec],
    input_shape: &[usize],
    seed: u64,
) -> Result<ParameterSet<T>> {
    let shapes = check_shapes(specs, input_shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    for (i, spec) in specs.iter().enumerate() {
        let input = &shapes[i];
        let mut uniform = |shape: Vec<usize>, fan_in: usize| -> Tensor<T> {
            let bound = (6.0 / fan_in as f64).sqrt();
            let n = shape.iter().product();
            let data = (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect();
            Tensor::new(shape, data).expect("shape")
        };
        match *spec {
            LayerSpec::Conv {
                out_channels,
                kernel,
                ..
            } => {
                let c = input[0];
                let w = uniform(vec![out_channels, c, kernel, kernel], c * kernel * kernel);
                params.insert(param_name(i, ParamRole::Weight), w, ParamRole::Weight)?;
                params.insert(
                    param_name(i, ParamRole::Bias),
                    Tensor::zeros(&[out_channels]),
                    ParamRole::Bias,
                )?;
            }
            LayerSpec::FullyConnected { out_features } => {
                let fan_in: usize = input.iter().product();
                let w = uniform(vec![fan_in, out_features], fan_in);
                params.insert(param_name(i, ParamRole::Weight), w, ParamRole::Weight)?;
                params.insert(
                    param_name(i, ParamRole::Bias),
                    Tensor::zeros(&[out_features]),
                    ParamRole::Bias,
                )?;
            }
            LayerSpec::BatchNorm { .. } => {
                let c = input[0];
                for (role, v) in [
                    (ParamRole::BnScale, 1.0),
                    (ParamRole::BnShift, 0.0),
                    (ParamRole::RunningMean, 0.0),
                    (ParamRole::RunningVar, 1.0),
                ] {
                    params.insert(param_name(i, role), Tensor::full(&[c], T::of(v)), role)?;
                }
            }
            LayerSpec::MaxPool { .. } | LayerSpec::ReLU => {}
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Graph nodes created for trainable parameters, keyed by parameter name.
pub type ParamNodes = Vec<(String, NodeId)>;

/// Records one layer on `graph`. Trainable parameters become gradient
/// leaves appended to `nodes`. In training mode a batch-norm layer also
/// returns its batch statistics, which the caller folds into the running
/// statistics with [`ParameterSet::commit_batch_stats`].
pub fn forward_layer<T: Scalar>(
    graph: &mut Graph<T>,
    index: usize,
    spec: &LayerSpec,
    params: &ParameterSet<T>,
    input: NodeId,
    mode: Mode,
    nodes: &mut ParamNodes,
) -> Result<(NodeId, Option<BatchStats<T>>)> {
    let mut leaf = |graph: &mut Graph<T>, role: ParamRole| -> Result<NodeId> {
        let t = params.layer(index, role)?.clone();
        let id = graph.param(t);
        nodes.push((param_name(index, role), id));
        Ok(id)
    };
    match *spec {
        LayerSpec::Conv { stride, pad, .. } => {
            let w = leaf(graph, ParamRole::Weight)?;
            let b = leaf(graph, ParamRole::Bias)?;
            let y = graph.conv2d(input, w, stride, pad)?;
            Ok((graph.bias_add(y, b)?, None))
        }
        LayerSpec::FullyConnected { .. } => {
            let shape = graph.value(input).shape().to_vec();
            let x = if shape.len() > 2 {
                let n = shape[0];
                graph.reshape(input, vec![n, shape[1..].iter().product()])?
            } else {
                input
            };
            let w = leaf(graph, ParamRole::Weight)?;
            let b = leaf(graph, ParamRole::Bias)?;
            let y = graph.matmul(x, w)?;
            Ok((graph.bias_add(y, b)?, None))
        }
        LayerSpec::BatchNorm { epsilon, .. } => {
            let scale = leaf(graph, ParamRole::BnScale)?;
            let shift = leaf(graph, ParamRole::BnShift)?;
            match mode {
                Mode::Train => {
                    let (y, stats) = graph.batch_norm_train(input, scale, shift, epsilon)?;
                    Ok((y, Some(stats)))
                }
                Mode::Eval => {
                    let mean = params.layer(index, ParamRole::RunningMean)?.data().to_vec();
                    let var = params.layer(index, ParamRole::RunningVar)?.data().to_vec();
                    let y = graph.batch_norm_eval(input, scale, shift, &mean, &var, epsilon)?;
                    Ok((y, None))
                }
            }
        }
        LayerSpec::MaxPool { kernel, stride } => Ok((graph.max_pool2d(input, kernel, stride)?, None)),
        LayerSpec::ReLU => Ok((graph.relu(input), None)),
    }
}

impl<T: Scalar> ParameterSet<T> {
    /// Folds training-mode batch statistics of layer `index` into its running
    /// statistics: `running ← momentum·running + (1 − momentum)·batch`, with
    /// the unbiased batch variance.
    pub fn commit_batch_stats(
        &mut self,
        index: usize,
        momentum: f64,
        stats: &BatchStats<T>,
    ) -> Result<()> {
        let m = T::of(momentum);
        let rest = T::one() - m;
        let unbias = T::of(stats.count as f64 / (stats.count as f64 - 1.0));
        let mean_name = param_name(index, ParamRole::RunningMean);
        let var_name = param_name(index, ParamRole::RunningVar);
        let running_mean = self
            .params
            .get_mut(&mean_name)
            .ok_or(Error::Lookup {
                kind: "parameter",
                name: mean_name,
            })?;
        for (r, &b) in running_mean.tensor.data_mut().iter_mut().zip(&stats.mean) {
            *r = m * *r + rest * b;
        }
        let running_var = self
            .params
            .get_mut(&var_name)
            .ok_or(Error::Lookup {
                kind: "parameter",
                name: var_name,
            })?;
        for (r, &b) in running_var.tensor.data_mut().iter_mut().zip(&stats.var) {
            *r = m * *r + rest * b * unbias;
        }
        Ok(())
    }
}

/// A layer stack with its parameters and declared per-sample input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    specs: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    params: ParameterSet<T>,
}

/// Result of recording a [`Network`] on a graph.
#[derive(Debug, Clone)]
pub struct NetworkPass<T> {
    pub output: NodeId,
    pub params: ParamNodes,
    /// Batch statistics per batch-norm layer index (training mode only).
    pub batch_stats: Vec<(usize, BatchStats<T>)>,
}

impl<T: Scalar> Network<T> {
    pub fn new(specs: Vec<LayerSpec>, input_shape: Vec<usize>, seed: u64) -> Result<Self> {
        let params = init_random(&specs, &input_shape, seed)?;
        Self::with_params(specs, input_shape, params)
    }

    /// Wraps existing parameters after checking names and shapes against a
    /// fresh initialization.
    pub fn with_params(
        specs: Vec<LayerSpec>,
        input_shape: Vec<usize>,
        params: ParameterSet<T>,
    ) -> Result<Self> {
        let shapes = check_shapes(&specs, &input_shape)?;
        let template = init_random::<T>(&specs, &input_shape, 0)?;
        if template.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, found {}",
                template.len(),
                params.len()
            )));
        }
        for ((tn, tp), (n, p)) in template.iter().zip(params.iter()) {
            if tn != n || tp.role != p.role || tp.tensor.shape() != p.tensor.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{n}` {:?} does not match expected `{tn}` {:?}",
                    p.tensor.shape(),
                    tp.tensor.shape()
                )));
            }
            if p.role == ParamRole::RunningVar && p.tensor.data().iter().any(|&v| v < T::zero()) {
                return Err(Error::Shape(format!("negative running variance in `{n}`")));
            }
        }
        Ok(Self {
            output_shape: shapes.last().expect("non-empty").clone(),
            specs,
            input_shape,
            params,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    /// Flattened per-sample output width.
    pub fn output_width(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet<T> {
        self.params
    }

    /// Records the stack on `graph` starting from `input: [n, ...]`.
    pub fn forward(&self, graph: &mut Graph<T>, input: NodeId, mode: Mode) -> Result<NetworkPass<T>> {
        let shape = graph.value(input).shape();
        if shape.len() < 2 || shape[1..] != self.input_shape[..] {
            return Err(Error::Dimension(format!(
                "network expects [n, {:?}] input, got {shape:?}",
                self.input_shape
            )));
        }
        let mut x = input;
        let mut params = Vec::new();
        let mut batch_stats = Vec::new();
        for (i, spec) in self.specs.iter().enumerate() {
            let (y, stats) = forward_layer(graph, i, spec, &self.params, x, mode, &mut params)?;
            if let Some(stats) = stats {
                batch_stats.push((i, stats));
            }
            x = y;
        }
        Ok(NetworkPass {
            output: x,
            params,
            batch_stats,
        })
    }

    pub fn commit_batch_stats(&mut self, stats: &[(usize, BatchStats<T>)]) -> Result<()> {
        for (index, s) in stats {
            let momentum = match self.specs[*index] {
                LayerSpec::BatchNorm { momentum, .. } => momentum,
                other => {
                    return Err(Error::Contract(format!(
                        "batch statistics supplied for non-BN layer #{index} ({other})"
                    )))
                }
            };
            self.params.commit_batch_stats(*index, momentum, s)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vec<LayerSpec> {
        preset_trunk("tiny").unwrap().specs
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_random::<f32>(&tiny(), &[1, 16, 16], 42).unwrap();
        let b = init_random::<f32>(&tiny(), &[1, 16, 16], 42).unwrap();
        assert!(a.bitwise_eq(&b));
        let c = init_random::<f32>(&tiny(), &[1, 16, 16], 43).unwrap();
        assert!(!a.bitwise_eq(&c));
    }

    #[test]
    fn batch_norm_init_values_and_flags() {
        let p = init_random::<f64>(&tiny(), &[1, 16, 16], 1).unwrap();
        for (name, param) in p.iter() {
            match param.role {
                ParamRole::BnScale | ParamRole::RunningVar => {
                    assert!(param.tensor.data().iter().all(|&v| v == 1.0), "{name}")
                }
                ParamRole::BnShift | ParamRole::RunningMean | ParamRole::Bias => {
                    assert!(param.tensor.data().iter().all(|&v| v == 0.0), "{name}")
                }
                ParamRole::Weight => {}
            }
            assert_eq!(param.tensor.requires_grad(), param.role.trainable(), "{name}");
        }
    }

    #[test]
    fn conv_weights_respect_fan_in_bound() {
        let specs = tiny();
        let p = init_random::<f64>(&specs, &[1, 16, 16], 9).unwrap();
        // Conv input channels are 1 and 8 for the tiny preset, kernel 3.
        for (layer, in_channels) in [(0usize, 1usize), (4, 8)] {
            let w = p.layer(layer, ParamRole::Weight).unwrap();
            let bound = (6.0 / (in_channels * 9) as f64).sqrt();
            assert!(w.data().iter().all(|v| v.abs() <= bound));
            assert!(w.data().iter().any(|v| v.abs() > bound * 0.5));
        }
    }

    #[test]
    fn shape_check_names_the_failing_layer() {
        let specs = vec![LayerSpec::conv(4, 3, 1, 0), LayerSpec::pool(8, 8)];
        match check_shapes(&specs, &[1, 6, 6]) {
            Err(Error::Architecture { layer, .. }) => assert!(layer.starts_with("#1"), "{layer}"),
            other => panic!("expected architecture error, got {other:?}"),
        }
        assert!(init_random::<f32>(&specs, &[1, 6, 6], 0).is_err());
    }

    #[test]
    fn relu_on_negative_input() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[2, 3], -0.5));
        let params = ParameterSet::new();
        let mut nodes = Vec::new();
        let (y, _) = forward_layer(&mut g, 0, &LayerSpec::ReLU, &params, x, Mode::Train, &mut nodes).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn max_pool_layer_example() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64(vec![1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut nodes = Vec::new();
        let (y, _) = forward_layer(
            &mut g,
            0,
            &LayerSpec::pool(2, 2),
            &ParameterSet::new(),
            x,
            Mode::Train,
            &mut nodes,
        )
        .unwrap();
        assert_eq!(g.value(y).data(), &[4.0]);
    }

    #[test]
    fn batch_norm_train_normalizes_per_channel() {
        let specs = vec![LayerSpec::batch_norm()];
        let params = init_random::<f64>(&specs, &[3, 2, 2], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..8 * 12).map(|_| rng.random_range(-4.0..6.0)).collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![8, 3, 2, 2], data).unwrap());
        let mut nodes = Vec::new();
        let (y, stats) =
            forward_layer(&mut g, 0, &specs[0], &params, x, Mode::Train, &mut nodes).unwrap();
        assert!(stats.is_some());
        let out = g.value(y);
        for ch in 0..3 {
            let vals: Vec<f64> = (0..8)
                .flat_map(|s| (0..4).map(move |i| (s, i)))
                .map(|(s, i)| out.data()[(s * 3 + ch) * 4 + i])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
    }

    #[test]
    fn batch_norm_eval_is_pure() {
        let specs = vec![LayerSpec::batch_norm()];
        let mut net = Network::<f64>::new(specs, vec![2], 0).unwrap();
        // Move running statistics away from the identity.
        let stats = BatchStats {
            mean: vec![0.5, -1.0],
            var: vec![2.0, 0.25],
            count: 10,
        };
        net.commit_batch_stats(&[(0, stats)]).unwrap();
        let before = net.params().clone();
        let x = Tensor::from_f64(vec![3, 2], &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        let run = |net: &Network<f64>| {
            let mut g = Graph::new();
            let xi = g.constant(x.clone());
            let pass = net.forward(&mut g, xi, Mode::Eval).unwrap();
            assert!(pass.batch_stats.is_empty());
            g.value(pass.output).clone()
        };
        assert!(run(&net).bitwise_eq(&run(&net)));
        assert!(net.params().bitwise_eq(&before));
    }

    #[test]
    fn running_statistics_update() {
        let specs = vec![LayerSpec::batch_norm()];
        let mut net = Network::<f64>::new(specs, vec![1], 0).unwrap();
        let stats = BatchStats {
            mean: vec![2.0],
            var: vec![3.0],
            count: 4,
        };
        net.commit_batch_stats(&[(0, stats)]).unwrap();
        let mean = net.params().layer(0, ParamRole::RunningMean).unwrap().data()[0];
        let var = net.params().layer(0, ParamRole::RunningVar).unwrap().data()[0];
        assert!((mean - 0.2).abs() < 1e-12);
        // 0.9·1 + 0.1·3·4/3
        assert!((var - 1.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_batch_in_train_mode() {
        let net = Network::<f64>::new(vec![LayerSpec::fc(3), LayerSpec::batch_norm()], vec![4], 0)
            .unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 4]));
        assert!(matches!(
            net.forward(&mut g, x, Mode::Train),
            Err(Error::DegenerateBatch(_))
        ));
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 4]));
        assert!(net.forward(&mut g, x, Mode::Eval).is_ok());
    }

    #[test]
    fn spec_text_round_trip() {
        let specs = preset_trunk("modified_alexnet").unwrap().specs;
        let text = format_specs(&specs);
        assert_eq!(parse_specs(&text).unwrap(), specs);
        assert!(parse_specs("conv:1:2").is_err());
        assert!(parse_specs("bn:1e-5:1.5").is_err());
    }

    #[test]
    fn conforming_batches_never_raise_shape_errors() {
        for name in ["tiny"] {
            let preset = preset_trunk(name).unwrap();
            let net = Network::<f32>::new(preset.specs, preset.input_shape.clone(), 3).unwrap();
            for n in [2, 3, 5] {
                let mut shape = vec![n];
                shape.extend_from_slice(&preset.input_shape);
                let mut g = Graph::new();
                let x = g.constant(Tensor::full(&shape, 0.25));
                let pass = net.forward(&mut g, x, Mode::Train).unwrap();
                assert_eq!(g.value(pass.output).shape(), &[n, 32]);
            }
        }
    }
}
