//! The label file format.
//!
//! ```text
//! labels v1
//! img1, subjA, age=23:O, gender=1:N, race=2:N
//! img2, subjA, gender=0:N, race=2:N, age=24.5:O, age.sigma=3.1:O
//! ```
//!
//! Each field pairs a value with its category tag (`N` nominal, `O`
//! ordinal); the attribute name makes the field order irrelevant. Besides
//! one field per catalog attribute a record may carry annotator statistics
//! `<ordinal>.mu` and `<ordinal>.sigma`, both tagged `O`. Blank lines and
//! lines starting with `#` are skipped.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::dmtl::{AttributeCatalog, AttributeKind, CategoryKind, LabelValue};
use crate::error::{Error, Result};

/// Labels of one sample, in catalog attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub labels: Vec<LabelValue>,
    /// Annotator statistics keyed `<attribute>.mu` / `<attribute>.sigma`.
    pub extras: BTreeMap<String, f64>,
}

impl LabelRecord {
    pub fn new(sample_id: impl Into<String>, subject_id: impl Into<String>, labels: Vec<LabelValue>) -> Self {
        Self {
            sample_id: sample_id.into(),
            subject_id: subject_id.into(),
            labels,
            extras: BTreeMap::new(),
        }
    }

    pub fn sigma(&self, attribute: &str) -> Option<f64> {
        self.extras.get(&format!("{attribute}.sigma")).copied()
    }

    pub fn mu(&self, attribute: &str) -> Option<f64> {
        self.extras.get(&format!("{attribute}.mu")).copied()
    }

    /// Checks count, kinds and ranges against `catalog`.
    pub fn validate(&self, catalog: &AttributeCatalog) -> Result<()> {
        if self.labels.len() != catalog.len() {
            return Err(Error::Label(format!(
                "sample `{}` has {} labels for {} attributes",
                self.sample_id,
                self.labels.len(),
                catalog.len()
            )));
        }
        for (value, def) in self.labels.iter().zip(catalog.attributes()) {
            check_value(&self.sample_id, &def.name, &def.kind, value)?;
        }
        for (key, &v) in &self.extras {
            let ok = extra_target(catalog, key).is_some();
            if !ok {
                return Err(Error::Label(format!(
                    "sample `{}`: `{key}` is not an annotator field of an ordinal attribute",
                    self.sample_id
                )));
            }
            if !v.is_finite() || (key.ends_with(".sigma") && v <= 0.0) {
                return Err(Error::Label(format!(
                    "sample `{}`: `{key}` = {v} is not valid",
                    self.sample_id
                )));
            }
        }
        Ok(())
    }
}

fn check_value(sample: &str, name: &str, kind: &AttributeKind, value: &LabelValue) -> Result<()> {
    match (kind, value) {
        (AttributeKind::Nominal { classes }, LabelValue::Nominal(c)) if c < classes => Ok(()),
        (AttributeKind::Ordinal { lo, hi }, LabelValue::Ordinal(v)) if v >= lo && v <= hi => Ok(()),
        (AttributeKind::Nominal { classes }, LabelValue::Nominal(c)) => Err(Error::Label(format!(
            "sample `{sample}`, attribute `{name}`: class {c} outside 0..{classes}"
        ))),
        (AttributeKind::Ordinal { lo, hi }, LabelValue::Ordinal(v)) => Err(Error::Label(format!(
            "sample `{sample}`, attribute `{name}`: value {v} outside {lo}..{hi}"
        ))),
        _ => Err(Error::Label(format!(
            "sample `{sample}`, attribute `{name}`: label kind does not match the catalog"
        ))),
    }
}

/// Ordinal attribute index named by an annotator key.
fn extra_target(catalog: &AttributeCatalog, key: &str) -> Option<usize> {
    let base = key.strip_suffix(".mu").or_else(|| key.strip_suffix(".sigma"))?;
    let index = catalog.attribute_index(base)?;
    matches!(catalog.attributes()[index].kind, AttributeKind::Ordinal { .. }).then_some(index)
}

/// Parses a label file against `catalog`.
pub fn parse_labels(text: &str, catalog: &AttributeCatalog) -> Result<Vec<LabelRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, "labels v1")) => {}
        Some((n, other)) => {
            return Err(Error::format(n, format!("expected header `labels v1`, found `{other}`")))
        }
        None => return Err(Error::format(1, "empty label file")),
    }
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in lines {
        let record = parse_line(n, line, catalog)?;
        if !ids.insert(record.sample_id.clone()) {
            return Err(Error::format(n, format!("duplicate sample id `{}`", record.sample_id)));
        }
        records.push(record);
    }
    Ok(records)
}

fn parse_line(n: usize, line: &str, catalog: &AttributeCatalog) -> Result<LabelRecord> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
        return Err(Error::format(n, "expected `sample_id,subject_id,` followed by label fields"));
    }
    let mut labels: Vec<Option<LabelValue>> = vec![None; catalog.len()];
    let mut extras = BTreeMap::new();
    for field in &fields[2..] {
        let (name, rest) = field
            .split_once('=')
            .ok_or_else(|| Error::format(n, format!("field `{field}` is not `name=value:tag`")))?;
        let (value, tag) = rest
            .rsplit_once(':')
            .ok_or_else(|| Error::format(n, format!("field `{field}` has no category tag")))?;
        let (name, value, tag) = (name.trim(), value.trim(), tag.trim());
        let tag = CategoryKind::from_tag(tag)
            .ok_or_else(|| Error::format(n, format!("field `{field}`: unknown tag `{tag}`")))?;
        if let Some(index) = catalog.attribute_index(name) {
            let def = &catalog.attributes()[index];
            if def.kind.category_kind() != tag {
                return Err(Error::format(
                    n,
                    format!(
                        "attribute `{name}` is tagged `{}` but the catalog declares `{}`",
                        tag.tag(),
                        def.kind.category_kind().tag()
                    ),
                ));
            }
            if labels[index].is_some() {
                return Err(Error::format(n, format!("attribute `{name}` appears twice")));
            }
            let parsed = match tag {
                CategoryKind::Nominal => LabelValue::Nominal(value.parse().map_err(|_| {
                    Error::format(n, format!("attribute `{name}`: `{value}` is not a class index"))
                })?),
                CategoryKind::Ordinal => LabelValue::Ordinal(parse_real(n, name, value)?),
            };
            labels[index] = Some(parsed);
        } else if extra_target(catalog, name).is_some() {
            if tag != CategoryKind::Ordinal {
                return Err(Error::format(n, format!("annotator field `{name}` must be tagged `O`")));
            }
            if extras.insert(name.to_string(), parse_real(n, name, value)?).is_some() {
                return Err(Error::format(n, format!("field `{name}` appears twice")));
            }
        } else {
            return Err(Error::format(n, format!("unknown attribute `{name}`")));
        }
    }
    let missing: Vec<&str> = labels
        .iter()
        .zip(catalog.attributes())
        .filter(|(l, _)| l.is_none())
        .map(|(_, d)| d.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::format(n, format!("missing attributes: {}", missing.join(", "))));
    }
    let record = LabelRecord {
        sample_id: fields[0].to_string(),
        subject_id: fields[1].to_string(),
        labels: labels.into_iter().map(|l| l.expect("checked")).collect(),
        extras,
    };
    record.validate(catalog).map_err(|e| match e {
        Error::Label(m) => Error::Label(format!("line {n}: {m}")),
        other => other,
    })?;
    Ok(record)
}

fn parse_real(n: usize, name: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::format(n, format!("attribute `{name}`: `{value}` is not a finite number")))
}

/// Writes records in catalog order followed by sorted annotator fields.
/// Reals use the shortest representation that parses back exactly.
pub fn serialize_labels(records: &[LabelRecord], catalog: &AttributeCatalog) -> String {
    let mut out = String::from("labels v1\n");
    for r in records {
        let _ = write!(out, "{},{}", r.sample_id, r.subject_id);
        for (value, def) in r.labels.iter().zip(catalog.attributes()) {
            let _ = match value {
                LabelValue::Nominal(c) => write!(out, ",{}={c}:N", def.name),
                LabelValue::Ordinal(v) => write!(out, ",{}={v:?}:O", def.name),
            };
        }
        for (key, v) in &r.extras {
            let _ = write!(out, ",{key}={v:?}:O");
        }
        out.push('\n');
    }
    out
}
