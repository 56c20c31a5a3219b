//! In-memory datasets, the raw image format and manifest-driven loading.
//!
//! A manifest is a list of `key=value` lines (`#` starts a comment):
//!
//! ```text
//! catalog=catalog.txt
//! labels=labels.txt
//! inputs=images
//! input_kind=image
//! width=16
//! height=16
//! channels=1
//! ```
//!
//! Relative paths resolve against the manifest's directory; `catalog` may
//! also name a shipped preset as `preset:<name>`. With `input_kind=image`,
//! `inputs` is a directory holding `<sample_id>.dimg` files. With
//! `input_kind=vector`, `inputs` is either a directory of `<sample_id>.vec`
//! files (one line of comma-separated reals) or a single table file whose
//! lines are `sample_id,v1,v2,...`; `width` is then the feature length.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::labels::{parse_labels, serialize_labels, LabelRecord};
use crate::dmtl::{AttributeCatalog, Targets};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Samples with a common input shape and catalog-conformant labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    catalog: AttributeCatalog,
    sample_shape: Vec<usize>,
    features: Vec<f32>,
    records: Vec<LabelRecord>,
    provenance: String,
}

impl Dataset {
    /// `features` holds every sample's input back to back, each of
    /// `sample_shape` in row-major order.
    pub fn new(
        catalog: AttributeCatalog,
        sample_shape: Vec<usize>,
        features: Vec<f32>,
        records: Vec<LabelRecord>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if sample_shape.is_empty() || per == 0 {
            return Err(Error::Shape(format!("invalid sample shape {sample_shape:?}")));
        }
        if features.len() != per * records.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} samples of shape {sample_shape:?}",
                features.len(),
                records.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "sample `{}` has a non-finite input value",
                records[i / per].sample_id
            )));
        }
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.sample_id.as_str()) {
                return Err(Error::Label(format!("duplicate sample id `{}`", r.sample_id)));
            }
            r.validate(&catalog)?;
        }
        Ok(Self {
            catalog,
            sample_shape,
            features,
            records,
            provenance: provenance.into(),
        })
    }

    pub fn catalog(&self) -> &AttributeCatalog {
        &self.catalog
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    fn per_sample(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, index: usize) -> &[f32] {
        let per = self.per_sample();
        &self.features[index * per..(index + 1) * per]
    }

    /// Inputs of the given samples stacked into `[n, ...sample_shape]`.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let mut data = Vec::with_capacity(indices.len() * self.per_sample());
        for &i in indices {
            data.extend(self.sample(i).iter().map(|&v| T::of(v as f64)));
        }
        let mut shape = vec![indices.len()];
        shape.extend(&self.sample_shape);
        Tensor::new(shape, data)
    }

    pub fn targets(&self, indices: &[usize]) -> Result<Targets> {
        let rows: Vec<&[_]> = indices.iter().map(|&i| self.records[i].labels.as_slice()).collect();
        Targets::from_rows(&self.catalog, &rows)
    }

    /// The listed samples, in the listed order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.per_sample());
        let mut records = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.sample(i));
            records.push(self.records[i].clone());
        }
        Self::new(
            self.catalog.clone(),
            self.sample_shape.clone(),
            features,
            records,
            format!("{} (subset of {})", self.provenance, self.len()),
        )
    }

    /// The same samples labelled with attribute `attribute` only, under
    /// [`AttributeCatalog::single`].
    pub fn single_attribute(&self, attribute: usize) -> Result<Self> {
        let catalog = self.catalog.single(attribute)?;
        let name = &self.catalog.attributes()[attribute].name;
        let prefix = format!("{name}.");
        let records = self
            .records
            .iter()
            .map(|r| LabelRecord {
                sample_id: r.sample_id.clone(),
                subject_id: r.subject_id.clone(),
                labels: vec![r.labels[attribute]],
                extras: r
                    .extras
                    .iter()
                    .filter(|(k, _)| k.starts_with(&prefix))
                    .map(|(k, v)| (k.clone(), *v))
                    .collect(),
            })
            .collect();
        Self::new(
            catalog,
            self.sample_shape.clone(),
            self.features.clone(),
            records,
            format!("{} (attribute {name})", self.provenance),
        )
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.subject_id.as_str()).collect()
    }
}

/// An uncompressed 8-bit image.
///
/// Encoding: magic `DIMG`, version byte `1`, then little-endian `u32`
/// height, width and channels, then `height·width·channels` bytes in
/// row-major order with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

const DIMG_MAGIC: &[u8; 4] = b"DIMG";
const DIMG_VERSION: u8 = 1;

impl DImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.data.len());
        out.extend_from_slice(DIMG_MAGIC);
        out.push(DIMG_VERSION);
        for d in [self.height, self.width, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 17 || &bytes[..4] != DIMG_MAGIC {
            return Err(Error::format(0, "not a DIMG image"));
        }
        if bytes[4] != DIMG_VERSION {
            return Err(Error::format(0, format!("unsupported DIMG version {}", bytes[4])));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (height, width, channels) = (dim(0), dim(1), dim(2));
        let count = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::format(0, "DIMG dimensions must be positive"))?;
        if bytes.len() - 17 != count {
            return Err(Error::format(
                0,
                format!("DIMG body has {} bytes, header declares {count}", bytes.len() - 17),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data: bytes[17..].to_vec(),
        })
    }

    /// Channel-major values scaled to `[0, 1]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    let v = self.data[(y * self.width + x) * self.channels + c];
                    out[(c * self.height + y) * self.width + x] = v as f32 / 255.0;
                }
            }
        }
        out
    }

    /// Quantizes channel-major values in `[0, 1]` (clamped) to 8 bits.
    pub fn from_chw(channels: usize, height: usize, width: usize, values: &[f32]) -> Self {
        let mut data = vec![0u8; values.len()];
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    let v = values[(c * height + y) * width + x].clamp(0.0, 1.0);
                    data[(y * width + x) * channels + c] = (v * 255.0).round() as u8;
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }
}

/// Nearest-neighbour resize of a `[c, h, w]` tensor.
pub fn resize_nearest<T: Scalar>(image: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    if image.rank() != 3 || height == 0 || width == 0 {
        return Err(Error::Dimension(format!(
            "cannot resize {:?} to {height}x{width}",
            image.shape()
        )));
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        for y in 0..height {
            let sy = y * h / height;
            for x in 0..width {
                let sx = x * w / width;
                out.push(image.data()[(ch * h + sy) * w + sx]);
            }
        }
    }
    Tensor::new(vec![c, height, width], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Image,
    Vector,
}

/// Parsed manifest with paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// File path or `preset:<name>`; absent when the caller supplies the
    /// catalog.
    pub catalog: Option<String>,
    pub labels: PathBuf,
    pub inputs: PathBuf,
    pub kind: InputKind,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

const MANIFEST_KEYS: [&str; 7] = ["catalog", "labels", "inputs", "input_kind", "width", "height", "channels"];

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut values: Vec<Option<(usize, String)>> = vec![None; MANIFEST_KEYS.len()];
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(n, format!("expected `key=value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let slot = MANIFEST_KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::format(n, format!("unknown manifest key `{key}`")))?;
            if values[slot].is_some() {
                return Err(Error::format(n, format!("manifest key `{key}` given twice")));
            }
            if value.is_empty() {
                return Err(Error::format(n, format!("manifest key `{key}` has no value")));
            }
            values[slot] = Some((n, value.to_string()));
        }
        let get = |k: usize| values[k].clone();
        let require = |k: usize| {
            get(k).ok_or_else(|| Error::format(0, format!("manifest lacks `{}`", MANIFEST_KEYS[k])))
        };
        let dim = |k: usize, default: Option<usize>| -> Result<usize> {
            match get(k) {
                Some((n, v)) => v
                    .parse::<usize>()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| Error::format(n, format!("`{}` must be a positive integer", MANIFEST_KEYS[k]))),
                None => default
                    .ok_or_else(|| Error::format(0, format!("manifest lacks `{}`", MANIFEST_KEYS[k]))),
            }
        };
        let (kind_line, kind) = require(3)?;
        let kind = match kind.as_str() {
            "image" => InputKind::Image,
            "vector" => InputKind::Vector,
            other => return Err(Error::format(kind_line, format!("unknown input_kind `{other}`"))),
        };
        let (width, height, channels) = match kind {
            InputKind::Image => (dim(4, None)?, dim(5, None)?, dim(6, None)?),
            InputKind::Vector => {
                let (h, c) = (dim(5, Some(1))?, dim(6, Some(1))?);
                if h != 1 || c != 1 {
                    return Err(Error::format(0, "vector inputs take only `width`"));
                }
                (dim(4, None)?, 1, 1)
            }
        };
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let catalog = get(0).map(|(_, v)| {
            if v.starts_with("preset:") {
                v
            } else {
                resolve(v).to_string_lossy().into_owned()
            }
        });
        Ok(Self {
            catalog,
            labels: resolve(require(1)?.1),
            inputs: resolve(require(2)?.1),
            kind,
            width,
            height,
            channels,
        })
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        match self.kind {
            InputKind::Image => vec![self.channels, self.height, self.width],
            InputKind::Vector => vec![self.width],
        }
    }

    pub fn load_catalog(&self) -> Result<Option<AttributeCatalog>> {
        match &self.catalog {
            None => Ok(None),
            Some(c) => match c.strip_prefix("preset:") {
                Some(name) => AttributeCatalog::preset(name).map(Some),
                None => AttributeCatalog::load(Path::new(c)).map(Some),
            },
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_vector(line_no: usize, text: &str, expected: usize, sample: &str) -> Result<Vec<f32>> {
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f32>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::format(line_no, format!("sample `{sample}`: `{}` is not a finite number", v.trim())))
        })
        .collect::<Result<Vec<f32>>>()?;
    if values.len() != expected {
        return Err(Error::Shape(format!(
            "sample `{sample}` has {} features, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

/// Loads the dataset a manifest describes, with its own catalog.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    load_dataset_with(manifest_path, None)
}

/// Loads a dataset, using `catalog` when given. A catalog named by the
/// manifest must then be identical to it.
pub fn load_dataset_with(manifest_path: &Path, catalog: Option<&AttributeCatalog>) -> Result<Dataset> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest = Manifest::parse(&read_text(manifest_path)?, base)?;
    let own = manifest.load_catalog()?;
    let catalog = match (catalog, own) {
        (Some(given), Some(own)) => {
            if given.digest() != own.digest() {
                return Err(Error::CatalogDigest);
            }
            given.clone()
        }
        (Some(given), None) => given.clone(),
        (None, Some(own)) => own,
        (None, None) => return Err(Error::format(0, "manifest lacks `catalog`")),
    };
    let records = parse_labels(&read_text(&manifest.labels)?, &catalog)?;
    let shape = manifest.sample_shape();
    let per: usize = shape.iter().product();
    let mut features = Vec::with_capacity(per * records.len());
    let other_ext = |kind| match kind {
        InputKind::Image => "vec",
        InputKind::Vector => "dimg",
    };
    if manifest.inputs.is_dir() {
        for r in &records {
            let own_ext = match manifest.kind {
                InputKind::Image => "dimg",
                InputKind::Vector => "vec",
            };
            let path = manifest.inputs.join(format!("{}.{own_ext}", r.sample_id));
            let foreign = manifest.inputs.join(format!("{}.{}", r.sample_id, other_ext(manifest.kind)));
            if foreign.exists() {
                return Err(Error::format(
                    0,
                    format!(
                        "sample `{}` has a `.{}` input in an {} manifest; input kinds cannot be mixed",
                        r.sample_id,
                        other_ext(manifest.kind),
                        if manifest.kind == InputKind::Image { "image" } else { "vector" }
                    ),
                ));
            }
            match manifest.kind {
                InputKind::Image => {
                    let img = DImage::decode(&read(&path)?).map_err(|e| match e {
                        Error::Format { message, .. } => Error::Format {
                            line: 0,
                            message: format!("{}: {message}", path.display()),
                        },
                        other => other,
                    })?;
                    if [img.channels, img.height, img.width] != [manifest.channels, manifest.height, manifest.width] {
                        return Err(Error::Shape(format!(
                            "sample `{}` is {}x{}x{} (h×w×c), manifest declares {}x{}x{}",
                            r.sample_id, img.height, img.width, img.channels, manifest.height, manifest.width, manifest.channels
                        )));
                    }
                    features.extend(img.to_chw());
                }
                InputKind::Vector => {
                    let text = read_text(&path)?;
                    features.extend(parse_vector(1, text.trim(), per, &r.sample_id)?);
                }
            }
        }
    } else {
        if manifest.kind == InputKind::Image {
            return Err(Error::format(0, "image inputs must be a directory of `.dimg` files"));
        }
        let text = read_text(&manifest.inputs)?;
        let mut table = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, rest) = line
                .split_once(',')
                .ok_or_else(|| Error::format(i + 1, "expected `sample_id,v1,v2,...`"))?;
            let id = id.trim();
            if id.ends_with(".dimg") {
                return Err(Error::format(i + 1, "image reference in a vector table; input kinds cannot be mixed"));
            }
            let values = parse_vector(i + 1, rest, per, id)?;
            if table.insert(id.to_string(), values).is_some() {
                return Err(Error::format(i + 1, format!("duplicate input row for `{id}`")));
            }
        }
        for r in &records {
            let v = table
                .get(&r.sample_id)
                .ok_or_else(|| Error::Shape(format!("no input row for sample `{}`", r.sample_id)))?;
            features.extend_from_slice(v);
        }
    }
    Dataset::new(
        catalog,
        shape,
        features,
        records,
        format!("manifest {}", manifest_path.display()),
    )
}

/// Writes `dataset` as catalog, labels, inputs and manifest into `dir`,
/// returning the manifest path. Rank-3 samples are written as images
/// (quantized to 8 bits), everything else as a vector table.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let io = |p: &Path, r: std::io::Result<()>| r.map_err(|e| Error::io(p, e));
    io(dir, std::fs::create_dir_all(dir))?;
    let catalog_path = dir.join("catalog.txt");
    io(&catalog_path, std::fs::write(&catalog_path, dataset.catalog().to_text()))?;
    let labels_path = dir.join("labels.txt");
    io(
        &labels_path,
        std::fs::write(&labels_path, serialize_labels(dataset.records(), dataset.catalog())),
    )?;
    let shape = dataset.sample_shape();
    let mut manifest = String::from("catalog=catalog.txt\nlabels=labels.txt\n");
    if shape.len() == 3 {
        let images = dir.join("images");
        io(&images, std::fs::create_dir_all(&images))?;
        for (i, r) in dataset.records().iter().enumerate() {
            let img = DImage::from_chw(shape[0], shape[1], shape[2], dataset.sample(i));
            let p = images.join(format!("{}.dimg", r.sample_id));
            io(&p, std::fs::write(&p, img.encode()))?;
        }
        let _ = write!(
            manifest,
            "inputs=images\ninput_kind=image\nwidth={}\nheight={}\nchannels={}\n",
            shape[2], shape[1], shape[0]
        );
    } else {
        let mut table = String::new();
        for (i, r) in dataset.records().iter().enumerate() {
            table.push_str(&r.sample_id);
            for v in dataset.sample(i) {
                let _ = write!(table, ",{v:?}");
            }
            table.push('\n');
        }
        let p = dir.join("inputs.csv");
        io(&p, std::fs::write(&p, table))?;
        let _ = write!(
            manifest,
            "inputs=inputs.csv\ninput_kind=vector\nwidth={}\n",
            shape.iter().product::<usize>()
        );
    }
    let manifest_path = dir.join("manifest.txt");
    io(&manifest_path, std::fs::write(&manifest_path, manifest))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmtl::LabelValue;

    fn records(n: usize) -> Vec<LabelRecord> {
        (0..n)
            .map(|i| {
                LabelRecord::new(
                    format!("img{i}"),
                    format!("s{}", i / 2),
                    vec![
                        LabelValue::Ordinal(20.0 + i as f64),
                        LabelValue::Nominal(i % 2),
                        LabelValue::Nominal(i % 3),
                    ],
                )
            })
            .collect()
    }

    fn write_image_set(dir: &Path, n: usize, bad: Option<usize>) -> PathBuf {
        let c = AttributeCatalog::morph();
        std::fs::write(dir.join("catalog.txt"), c.to_text()).unwrap();
        std::fs::write(dir.join("labels.txt"), serialize_labels(&records(n), &c)).unwrap();
        std::fs::create_dir_all(dir.join("img")).unwrap();
        for i in 0..n {
            let (h, w) = if Some(i) == bad { (3, 4) } else { (4, 4) };
            let img = DImage {
                height: h,
                width: w,
                channels: 2,
                data: (0..h * w * 2).map(|v| (v * 7 + i) as u8).collect(),
            };
            std::fs::write(dir.join(format!("img/img{i}.dimg")), img.encode()).unwrap();
        }
        let m = dir.join("manifest.txt");
        std::fs::write(
            &m,
            "# test set\ncatalog=catalog.txt\nlabels=labels.txt\ninputs=img\ninput_kind=image\nwidth=4\nheight=4\nchannels=2\n",
        )
        .unwrap();
        m
    }

    #[test]
    fn loads_four_images() {
        let dir = tempfile::tempdir().unwrap();
        let d = load_dataset(&write_image_set(dir.path(), 4, None)).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.sample_shape(), &[2, 4, 4]);
        // HWC bytes land channel-major: pixel (0,1) channel 1 is byte 3.
        assert_eq!(d.sample(0)[16 + 1], 21.0 / 255.0);
    }

    #[test]
    fn wrong_image_dims_name_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(&write_image_set(dir.path(), 4, Some(2))).unwrap_err();
        assert!(matches!(err, Error::Shape(ref m) if m.contains("img2")), "{err}");
    }

    #[test]
    fn mixed_inputs_are_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_image_set(dir.path(), 4, None);
        std::fs::remove_file(dir.path().join("img/img1.dimg")).unwrap();
        std::fs::write(dir.path().join("img/img1.vec"), "1,2,3").unwrap();
        assert!(matches!(load_dataset(&m), Err(Error::Format { .. })));
    }

    #[test]
    fn vector_round_trip_is_exact() {
        let c = AttributeCatalog::morph();
        let features: Vec<f32> = (0..15).map(|i| (i as f32 * 0.37).sin()).collect();
        let d = Dataset::new(c, vec![3], features, records(5), "test").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(&m).unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.records(), d.records());
    }

    #[test]
    fn manifest_errors() {
        let base = Path::new("/tmp");
        assert!(matches!(
            Manifest::parse("labels=a\ninputs=b\ninput_kind=vector\nwidth=3\ncolour=1\n", base),
            Err(Error::Format { line: 5, .. })
        ));
        assert!(Manifest::parse("labels=a\ninputs=b\ninput_kind=image\nwidth=3\n", base).is_err());
        let m = Manifest::parse("labels=a\ninputs=/x/b\ninput_kind=vector\nwidth=3\n", base).unwrap();
        assert_eq!(m.labels, Path::new("/tmp/a"));
        assert_eq!(m.inputs, Path::new("/x/b"));
    }

    #[test]
    fn dimg_round_trip_and_truncation() {
        let img = DImage { height: 2, width: 3, channels: 1, data: vec![0, 1, 2, 3, 4, 255] };
        let bytes = img.encode();
        assert_eq!(DImage::decode(&bytes).unwrap(), img);
        assert!(DImage::decode(&bytes[..bytes.len() - 1]).is_err());
        let chw = img.to_chw();
        assert_eq!(DImage::from_chw(1, 2, 3, &chw), img);
    }

    #[test]
    fn nearest_resize() {
        let t = Tensor::<f32>::from_f64(vec![1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = resize_nearest(&t, 4, 4).unwrap();
        assert_eq!(
            r.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        assert_eq!(resize_nearest(&r, 2, 2).unwrap(), t);
    }

    #[test]
    fn dataset_rejects_duplicates() {
        let mut r = records(2);
        r[1].sample_id = r[0].sample_id.clone();
        assert!(Dataset::new(AttributeCatalog::morph(), vec![1], vec![0.0, 1.0], r, "x").is_err());
    }
}
