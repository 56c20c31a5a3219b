use std::fmt::Write as _;
use std::path::Path;

use dmtl_core::data::{
    binary_attributes, cooccurrence, load_dataset_with, split_subject_exclusive, synth_generate, write_dataset,
    SynthLayout, SyntheticSpec,
};
use dmtl_core::dmtl::CategorySpec;
use dmtl_core::eval::{dump_predictions, evaluate, EvalOptions};
use dmtl_core::gradcheck::run_suite;
use dmtl_core::layers::{mlp_trunk, parse_specs, preset_head, preset_trunk};
use dmtl_core::train::{decode_checkpoint, peek_precision, save_checkpoint, TRAIN_KEYS};
use dmtl_core::{AttributeCatalog, Dataset, DmtlModel, Error, LayerSpec, Precision, Result, Scalar, TrainConfig, Trainer};

use crate::config::ConfigFile;
use crate::{CooccurArgs, EvalArgs, GradcheckArgs, OutputFormat, PredictArgs, SplitArgs, SynthArgs, TrainArgs};

/// Keys of a training config beyond the optimizer settings.
const MODEL_KEYS: [&str; 3] = ["trunk", "head_hidden", "model_seed"];

const SYNTH_KEYS: [&str; 11] = [
    "catalog",
    "n_samples",
    "n_attributes",
    "latent_dim",
    "noise",
    "label_noise",
    "latent_shift",
    "layout",
    "samples_per_subject",
    "map_seed",
    "seed",
];

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Catalog from a file path or `preset:<name>`.
fn resolve_catalog(arg: &str) -> Result<AttributeCatalog> {
    match arg.strip_prefix("preset:") {
        Some(name) => AttributeCatalog::preset(name),
        None => AttributeCatalog::load(Path::new(arg)),
    }
}

fn load(manifest: &Path, catalog: Option<&str>) -> Result<Dataset> {
    let catalog = catalog.map(resolve_catalog).transpose()?;
    load_dataset_with(manifest, catalog.as_ref())
}

fn with_head_hidden(catalog: &AttributeCatalog, hidden: usize) -> Result<AttributeCatalog> {
    let categories = (0..catalog.categories().len())
        .map(|p| {
            let c: &CategorySpec = &catalog.categories()[p];
            Ok(c.clone().with_head(preset_head(2, &[hidden, catalog.head_width(p)])?))
        })
        .collect::<Result<Vec<_>>>()?;
    AttributeCatalog::new(catalog.attributes().to_vec(), categories)
}

/// Trunk named by the config: `preset:<name>`, `mlp:<w>,<w>,...` or a
/// `;`-separated layer list. Defaults to the tiny conv preset for images and
/// a two-layer MLP for vectors.
fn resolve_trunk(value: Option<&str>, line: usize, input: &[usize]) -> Result<Vec<LayerSpec>> {
    let bad = |m: String| Error::format(line, format!("`trunk`: {m}"));
    match value {
        None if input.len() == 3 => Ok(preset_trunk("tiny")?.specs),
        None => Ok(mlp_trunk(&[64, 32])),
        Some(v) if v.starts_with("preset:") => Ok(preset_trunk(&v["preset:".len()..])?.specs),
        Some(v) if v.starts_with("mlp:") => {
            let widths = v["mlp:".len()..]
                .split(',')
                .map(|w| w.trim().parse::<usize>().map_err(|_| bad(format!("bad width `{w}`"))))
                .collect::<Result<Vec<_>>>()?;
            Ok(mlp_trunk(&widths))
        }
        Some(v) => parse_specs(v).map_err(bad),
    }
}

pub fn train(args: &TrainArgs) -> Result<u8> {
    let keys: Vec<&str> = TRAIN_KEYS.iter().chain(MODEL_KEYS.iter()).copied().collect();
    let mut file = ConfigFile::load(&args.config, &keys)?;
    file.apply_overrides(&args.overrides, &keys)?;
    if let Some(seed) = args.seed {
        file.set("seed", seed.to_string());
    }
    let mut config = TrainConfig::default();
    for (key, value, line) in file.entries() {
        if TRAIN_KEYS.contains(&key) {
            config.set(key, value).map_err(|m| Error::format(line, m))?;
        }
    }
    let mut dataset = load(&args.manifest, Some(&args.catalog))?;
    if file.get("head_hidden").is_some() {
        let hidden = file.parse_or("head_hidden", 0usize)?;
        let catalog = with_head_hidden(dataset.catalog(), hidden)?;
        dataset = Dataset::new(
            catalog,
            dataset.sample_shape().to_vec(),
            dataset.features().to_vec(),
            dataset.records().to_vec(),
            dataset.provenance().to_string(),
        )?;
    }
    let trunk = resolve_trunk(file.get("trunk"), file.line("trunk"), dataset.sample_shape())?;
    let model_seed = file.parse_or("model_seed", config.seed)?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    match config.precision {
        Precision::F32 => train_as::<f32>(&dataset, &trunk, model_seed, config, &args.out),
        Precision::F64 => train_as::<f64>(&dataset, &trunk, model_seed, config, &args.out),
    }
}

fn train_as<T: Scalar>(dataset: &Dataset, trunk: &[LayerSpec], model_seed: u64, config: TrainConfig, out: &Path) -> Result<u8> {
    let model = DmtlModel::<T>::build(dataset.catalog(), trunk, dataset.sample_shape(), model_seed)?;
    let mut trainer = Trainer::new(model, dataset, config)?;
    trainer.run(dataset)?;
    save_checkpoint(&out.join("model.ckpt"), trainer.model(), trainer.config(), &trainer.state())?;
    let mut csv = String::from("iteration,objective\n");
    for (i, v) in trainer.history().iter().enumerate() {
        let _ = writeln!(csv, "{i},{v:?}");
    }
    write_file(&out.join("loss.csv"), csv)?;
    let last = trainer.history().last().copied().unwrap_or(f64::NAN);
    eprintln!("trained {} iterations, final objective {last:.6}", trainer.iteration());
    Ok(0)
}

fn read_checkpoint(path: &Path) -> Result<(Vec<u8>, Precision)> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    let precision = peek_precision(&bytes)?;
    Ok((bytes, precision))
}

fn eval_options(args: &EvalArgs) -> EvalOptions {
    EvalOptions {
        subset: args
            .subset
            .as_ref()
            .map(|s| s.split(',').map(|a| a.trim().to_string()).collect()),
        round_ordinal: args.round,
        global_sigma: args.global_sigma,
        threads: args.threads.max(1),
        ..EvalOptions::default()
    }
}

pub fn eval(args: &EvalArgs) -> Result<u8> {
    let dataset = load(&args.manifest, args.catalog.as_deref())?;
    let (bytes, precision) = read_checkpoint(&args.checkpoint)?;
    let options = eval_options(args);
    let report = match precision {
        Precision::F32 => evaluate(&decode_checkpoint::<f32>(&bytes, dataset.catalog())?.model, &dataset, &options)?,
        Precision::F64 => evaluate(&decode_checkpoint::<f64>(&bytes, dataset.catalog())?.model, &dataset, &options)?,
    };
    let text = match args.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Csv => report.to_csv(),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

pub fn predict(args: &PredictArgs) -> Result<u8> {
    let dataset = load(&args.manifest, args.catalog.as_deref())?;
    let (bytes, precision) = read_checkpoint(&args.checkpoint)?;
    let options = EvalOptions {
        threads: args.threads.max(1),
        ..EvalOptions::default()
    };
    let dump = match precision {
        Precision::F32 => dump_predictions(&decode_checkpoint::<f32>(&bytes, dataset.catalog())?.model, &dataset, &options)?,
        Precision::F64 => dump_predictions(&decode_checkpoint::<f64>(&bytes, dataset.catalog())?.model, &dataset, &options)?,
    };
    emit(args.out.as_deref(), &dump.to_csv())?;
    Ok(0)
}

pub fn cooccur(args: &CooccurArgs) -> Result<u8> {
    let dataset = load(&args.manifest, args.catalog.as_deref())?;
    let indices = match &args.attributes {
        None => binary_attributes(&dataset),
        Some(list) => list
            .split(',')
            .map(|name| {
                let name = name.trim();
                dataset.catalog().attribute_index(name).ok_or_else(|| Error::Lookup {
                    kind: "attribute",
                    name: name.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    emit(args.out.as_deref(), &cooccurrence(&dataset, &indices)?.to_csv())?;
    Ok(0)
}

/// `vector:<dim>` or `image:<c>x<h>x<w>`.
fn parse_layout(value: &str, line: usize) -> Result<SynthLayout> {
    let bad = || Error::format(line, format!("`layout`: expected `vector:<dim>` or `image:<c>x<h>x<w>`, found `{value}`"));
    if let Some(dim) = value.strip_prefix("vector:") {
        return Ok(SynthLayout::Vector {
            dim: dim.parse().map_err(|_| bad())?,
        });
    }
    let dims = value
        .strip_prefix("image:")
        .ok_or_else(bad)?
        .split('x')
        .map(|d| d.parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    match dims[..] {
        [channels, height, width] => Ok(SynthLayout::Image { channels, height, width }),
        _ => Err(bad()),
    }
}

pub fn synth(args: &SynthArgs) -> Result<u8> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p, &SYNTH_KEYS)?,
        None => ConfigFile::default(),
    };
    file.apply_overrides(&args.overrides, &SYNTH_KEYS)?;
    if let Some(seed) = args.seed {
        file.set("seed", seed.to_string());
    }
    let seed = file.parse_or("seed", 0u64)?;
    let n = file.parse_or("n_samples", 200usize)?;
    let latent = file.parse_or("latent_dim", 2usize)?;
    let mut spec = match file.get("catalog") {
        None => SyntheticSpec::shared_latent(n, file.parse_or("n_attributes", 6usize)?, latent, seed),
        Some(c) => {
            // Reuse the shared-latent weight draw for an arbitrary catalog.
            let catalog = resolve_catalog(c)?;
            let weights = SyntheticSpec::shared_latent(n, catalog.len(), latent, seed).weights;
            let mut spec = SyntheticSpec::new(catalog, weights, n, seed);
            spec.map_seed = seed;
            spec
        }
    };
    spec.noise = file.parse_or("noise", spec.noise)?;
    spec.label_noise = file.parse_or("label_noise", spec.label_noise)?;
    spec.latent_shift = file.parse_or("latent_shift", spec.latent_shift)?;
    spec.samples_per_subject = file.parse_or("samples_per_subject", spec.samples_per_subject)?;
    spec.map_seed = file.parse_or("map_seed", spec.map_seed)?;
    if let Some(layout) = file.get("layout") {
        spec.layout = parse_layout(layout, file.line("layout"))?;
    }
    let dataset = synth_generate(&spec)?;
    let manifest = write_dataset(&dataset, &args.out)?;
    eprintln!("wrote {} samples to {}", dataset.len(), manifest.display());
    Ok(0)
}

pub fn split(args: &SplitArgs) -> Result<u8> {
    let dataset = load(&args.manifest, args.catalog.as_deref())?;
    let folds = split_subject_exclusive(&dataset, args.folds, args.seed)?;
    let mut fold_of = vec![0; dataset.len()];
    for (f, members) in folds.iter().enumerate() {
        for &i in members {
            fold_of[i] = f;
        }
    }
    let mut csv = String::from("sample_id,subject_id,fold\n");
    for (r, f) in dataset.records().iter().zip(&fold_of) {
        let _ = writeln!(csv, "{},{},{f}", r.sample_id, r.subject_id);
    }
    emit(args.out.as_deref(), &csv)?;
    Ok(0)
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<u8> {
    let reports = run_suite(args.trials, args.step, args.tolerance)?;
    let mut text = match args.format {
        OutputFormat::Table => format!("{:<24} {:>6} {:>12}  result\n", "op", "trials", "worst"),
        OutputFormat::Csv => String::from("op,trials,worst,passed\n"),
    };
    for r in &reports {
        match args.format {
            OutputFormat::Table => {
                let verdict = if r.passed { "pass" } else { "FAIL" };
                let _ = writeln!(text, "{:<24} {:>6} {:>12.3e}  {verdict}", r.name, r.trials, r.worst);
            }
            OutputFormat::Csv => {
                let _ = writeln!(text, "{},{},{:?},{}", r.name, r.trials, r.worst, r.passed);
            }
        }
    }
    print!("{text}");
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { 4 })
}
