//! Binary checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! "DMTL"  u32 version  [u8; 32] catalog digest
//! u32 length, UTF-8 snapshot (`key=value` lines: architecture and training config)
//! u32 count, then per tensor: u16 name length, name, u8 rank, u32 dims, values
//! u64 iteration, u64 seed, u64 epoch, u64 cursor
//! u32 CRC-32 of everything above
//! ```
//!
//! Tensor names are `trunk.<param>` or `head<p>.<param>`. Values are stored
//! at the model's precision: 4 bytes each for `f32`, 8 for `f64`.

use std::path::Path;

use super::{TrainConfig, TrainState};
use crate::dmtl::{AttributeCatalog, DmtlModel};
use crate::error::{Error, Result};
use crate::layers::{format_specs, parse_specs, LayerSpec, Network, ParameterSet};
use crate::tensor::{Precision, Scalar, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DMTL";

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: DmtlModel<T>,
    pub config: TrainConfig,
    pub state: TrainState,
}

fn snapshot<T: Scalar>(model: &DmtlModel<T>, config: &TrainConfig) -> String {
    let mut out = String::new();
    let dims: Vec<String> = model.input_shape().iter().map(|d| d.to_string()).collect();
    out.push_str(&format!("input_shape={}\n", dims.join(",")));
    out.push_str(&format!("trunk={}\n", format_specs(model.trunk().specs())));
    for (p, head) in model.heads().iter().enumerate() {
        out.push_str(&format!("head.{p}={}\n", format_specs(head.specs())));
    }
    for (k, v) in config.to_pairs() {
        out.push_str(&format!("{k}={v}\n"));
    }
    out
}

/// Serializes a model, its configuration and the sampler state.
pub fn encode_checkpoint<T: Scalar>(model: &DmtlModel<T>, config: &TrainConfig, state: &TrainState) -> Result<Vec<u8>> {
    if config.precision != T::PRECISION {
        return Err(Error::Contract(format!(
            "config precision {} differs from the {} model",
            config.precision,
            T::PRECISION
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.catalog().digest());
    let text = snapshot(model, config);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());

    let mut tensors: Vec<(String, &Tensor<T>)> = Vec::new();
    for (name, p) in model.trunk().params().iter() {
        tensors.push((format!("trunk.{name}"), &p.tensor));
    }
    for (i, head) in model.heads().iter().enumerate() {
        for (name, p) in head.params().iter() {
            tensors.push((format!("head{i}.{name}"), &p.tensor));
        }
    }
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Contract(format!("parameter name `{name}` is too long")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Contract(format!("`{name}` has rank {}", t.rank())))?;
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Contract(format!("`{name}` extent {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    for v in [state.iteration, state.seed, state.epoch, state.cursor] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &DmtlModel<T>,
    config: &TrainConfig,
    state: &TrainState,
) -> Result<()> {
    let bytes = encode_checkpoint(model, config, state)?;
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Splits off and verifies the trailer, then checks magic and version.
fn open(bytes: &[u8]) -> Result<Reader<'_>> {
    if bytes.len() < 4 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let found = r.u32("version")?;
    if found != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(r)
}

struct Snapshot {
    input_shape: Vec<usize>,
    trunk: Vec<LayerSpec>,
    heads: Vec<Vec<LayerSpec>>,
    config: TrainConfig,
}

fn parse_snapshot(text: &str) -> Result<Snapshot> {
    let bad = |m: String| Error::Checkpoint(format!("config snapshot: {m}"));
    let mut input_shape = None;
    let mut trunk = None;
    let mut heads: Vec<(usize, Vec<LayerSpec>)> = Vec::new();
    let mut config = TrainConfig::default();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line `{line}`")))?;
        if k == "input_shape" {
            let dims = v
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("bad input shape `{v}`")))?;
            input_shape = Some(dims);
        } else if k == "trunk" {
            trunk = Some(parse_specs(v).map_err(bad)?);
        } else if let Some(p) = k.strip_prefix("head.") {
            let p = p.parse().map_err(|_| bad(format!("bad head key `{k}`")))?;
            heads.push((p, parse_specs(v).map_err(bad)?));
        } else {
            config.set(k, v).map_err(bad)?;
        }
    }
    heads.sort_by_key(|(p, _)| *p);
    if heads.iter().enumerate().any(|(i, (p, _))| i != *p) {
        return Err(bad("head entries are not numbered 0..n".into()));
    }
    Ok(Snapshot {
        input_shape: input_shape.ok_or_else(|| bad("missing input_shape".into()))?,
        trunk: trunk.ok_or_else(|| bad("missing trunk".into()))?,
        heads: heads.into_iter().map(|(_, h)| h).collect(),
        config,
    })
}

/// Precision a checkpoint was written with, after integrity checks.
pub fn peek_precision(bytes: &[u8]) -> Result<Precision> {
    let mut r = open(bytes)?;
    r.take(32, "catalog digest")?;
    let len = r.u32("snapshot length")? as usize;
    let text = std::str::from_utf8(r.take(len, "snapshot")?)
        .map_err(|_| Error::Checkpoint("snapshot is not UTF-8".into()))?;
    Ok(parse_snapshot(text)?.config.precision)
}

/// Restores a checkpoint written for `catalog`.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], catalog: &AttributeCatalog) -> Result<Checkpoint<T>> {
    let mut r = open(bytes)?;
    if r.take(32, "catalog digest")? != catalog.digest() {
        return Err(Error::CatalogDigest);
    }
    let len = r.u32("snapshot length")? as usize;
    let text = std::str::from_utf8(r.take(len, "snapshot")?)
        .map_err(|_| Error::Checkpoint("snapshot is not UTF-8".into()))?;
    let snap = parse_snapshot(text)?;
    if snap.config.precision != T::PRECISION {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} values, requested {}",
            snap.config.precision,
            T::PRECISION
        )));
    }
    if snap.heads.len() != catalog.categories().len() {
        return Err(Error::Checkpoint(format!(
            "{} heads for {} categories",
            snap.heads.len(),
            catalog.categories().len()
        )));
    }

    let mut trunk_params = ParameterSet::new();
    let mut head_params: Vec<ParameterSet<T>> = (0..snap.heads.len()).map(|_| ParameterSet::new()).collect();
    let count = r.u32("tensor count")?;
    for _ in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("`{name}` is too large")))?;
        let width = T::BYTES;
        let raw = r.take(
            numel.checked_mul(width).ok_or_else(|| Error::Checkpoint(format!("`{name}` is too large")))?,
            &name,
        )?;
        let data: Vec<T> = raw.chunks_exact(width).map(T::read_le).collect();
        let tensor = Tensor::new(shape, data)?;
        let (owner, pname) = name
            .split_once('.')
            .ok_or_else(|| Error::Checkpoint(format!("tensor name `{name}` has no owner")))?;
        let role = pname
            .split_once('.')
            .and_then(|(_, s)| crate::layers::ParamRole::from_suffix(s))
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` has an unknown role")))?;
        let set = if owner == "trunk" {
            &mut trunk_params
        } else {
            let p: usize = owner
                .strip_prefix("head")
                .and_then(|p| p.parse().ok())
                .filter(|&p| p < head_params.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` has an unknown owner")))?;
            &mut head_params[p]
        };
        set.insert(pname.to_string(), tensor, role)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let state = TrainState {
        iteration: r.u64("iteration")?,
        seed: r.u64("seed")?,
        epoch: r.u64("epoch")?,
        cursor: r.u64("cursor")?,
    };
    if r.pos != r.bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.bytes.len() - r.pos)));
    }

    let shape_err = |e: Error| Error::Checkpoint(e.to_string());
    let trunk = Network::with_params(snap.trunk, snap.input_shape, trunk_params).map_err(shape_err)?;
    let mut categories = catalog.categories().to_vec();
    let mut heads = Vec::with_capacity(categories.len());
    for ((cat, spec), params) in categories.iter_mut().zip(snap.heads).zip(head_params) {
        cat.head_spec = spec.clone();
        heads.push(Network::with_params(spec, trunk.output_shape().to_vec(), params).map_err(shape_err)?);
    }
    let catalog = AttributeCatalog::new(catalog.attributes().to_vec(), categories)?;
    let model = DmtlModel::from_parts(catalog, trunk, heads)?;
    Ok(Checkpoint {
        model,
        config: snap.config,
        state,
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path, catalog: &AttributeCatalog) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthLayout, SyntheticSpec};
    use crate::layers::LayerSpec;
    use crate::train::Trainer;

    fn setup() -> (crate::data::Dataset, DmtlModel<f32>, TrainConfig) {
        let mut spec = SyntheticSpec::shared_latent(48, 2, 2, 1);
        spec.layout = SynthLayout::Vector { dim: 5 };
        let d = synth_generate(&spec).unwrap();
        let m = DmtlModel::build(d.catalog(), &[LayerSpec::fc(6), LayerSpec::batch_norm(), LayerSpec::ReLU], &[5], 4).unwrap();
        let c = TrainConfig {
            batch_size: 8,
            max_iterations: 20,
            eta: 0.02,
            ..TrainConfig::default()
        };
        (d, m, c)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (d, m, c) = setup();
        let mut t = Trainer::new(m, &d, c.clone()).unwrap();
        t.run_until(&d, 7).unwrap();
        let bytes = encode_checkpoint(t.model(), &c, &t.state()).unwrap();
        let back = decode_checkpoint::<f32>(&bytes, d.catalog()).unwrap();
        assert!(back.model.trunk().params().bitwise_eq(t.model().trunk().params()));
        assert_eq!(&back.model, t.model());
        assert_eq!(back.config, c);
        assert_eq!(back.state, t.state());
        assert_eq!(peek_precision(&bytes).unwrap(), Precision::F32);
    }

    #[test]
    fn f64_models_store_eight_byte_values() {
        let (d, m, c) = setup();
        let m64 = DmtlModel::<f64>::build(d.catalog(), m.trunk().specs(), &[5], 4).unwrap();
        let c64 = TrainConfig { precision: Precision::F64, ..c.clone() };
        let b32 = encode_checkpoint(&m, &c, &TrainState { iteration: 0, seed: 0, epoch: 0, cursor: 0 }).unwrap();
        let b64 = encode_checkpoint(&m64, &c64, &TrainState { iteration: 0, seed: 0, epoch: 0, cursor: 0 }).unwrap();
        assert!(b64.len() > b32.len());
        assert_eq!(decode_checkpoint::<f64>(&b64, d.catalog()).unwrap().model, m64);
        assert!(decode_checkpoint::<f32>(&b64, d.catalog()).is_err());
    }

    #[test]
    fn distinct_failures() {
        let (d, m, c) = setup();
        let state = TrainState { iteration: 0, seed: 0, epoch: 0, cursor: 0 };
        let bytes = encode_checkpoint(&m, &c, &state).unwrap();

        let mut flipped = bytes.clone();
        flipped[60] ^= 0x10;
        assert!(matches!(decode_checkpoint::<f32>(&flipped, d.catalog()), Err(Error::Checksum { .. })));
        assert!(matches!(
            decode_checkpoint::<f32>(&bytes[..bytes.len() / 2], d.catalog()),
            Err(Error::Checksum { .. })
        ));
        assert!(matches!(decode_checkpoint::<f32>(&[], d.catalog()), Err(Error::Checksum { .. })));

        let mut v2 = bytes[..bytes.len() - 4].to_vec();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        let crc = crc32fast::hash(&v2);
        v2.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode_checkpoint::<f32>(&v2, d.catalog()),
            Err(Error::Version { found: 2, expected: 1 })
        ));

        assert!(matches!(
            decode_checkpoint::<f32>(&bytes, &AttributeCatalog::morph()),
            Err(Error::CatalogDigest)
        ));
    }
}
