//! Attribute catalogs and their line-oriented text format.
//!
//! ```text
//! catalog v1
//! #category 0,O,holistic,1
//! #category 1,N,local:mouth,1
//! age,O,0..100,0
//! smiling,N,2,1
//! ```
//!
//! Category lines are `#category id,kind,scope,lambda` with kind `N` or `O`
//! and scope `holistic` or `local:<region>`. Attribute lines are
//! `name,kind,params,category_id` where params is the class count for `N`
//! and `lo..hi` for `O`. Blank lines and other lines starting with `#` are
//! ignored. Fields may be padded with whitespace.

use std::fmt::{self, Write as _};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::{preset_head, LayerSpec, DEFAULT_HEAD_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttributeKind {
    Nominal { classes: usize },
    Ordinal { lo: f64, hi: f64 },
}

impl AttributeKind {
    pub fn category_kind(&self) -> CategoryKind {
        match self {
            AttributeKind::Nominal { .. } => CategoryKind::Nominal,
            AttributeKind::Ordinal { .. } => CategoryKind::Ordinal,
        }
    }

    /// Output columns the attribute occupies in its head.
    pub fn width(&self) -> usize {
        match *self {
            AttributeKind::Nominal { classes } => classes,
            AttributeKind::Ordinal { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttributeKind,
    pub category: usize,
}

impl AttributeDef {
    pub fn nominal(name: impl Into<String>, classes: usize, category: usize) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Nominal { classes },
            category,
        }
    }

    pub fn ordinal(name: impl Into<String>, lo: f64, hi: f64, category: usize) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Ordinal { lo, hi },
            category,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CategoryKind {
    Nominal,
    Ordinal,
}

impl CategoryKind {
    pub fn tag(self) -> char {
        match self {
            CategoryKind::Nominal => 'N',
            CategoryKind::Ordinal => 'O',
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "N" => Some(CategoryKind::Nominal),
            "O" => Some(CategoryKind::Ordinal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Holistic,
    Local(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Holistic => f.write_str("holistic"),
            Scope::Local(region) => write!(f, "local:{region}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategorySpec {
    pub id: usize,
    pub kind: CategoryKind,
    pub scope: Scope,
    /// Loss weight of the category.
    pub lambda: f64,
    /// Head layers; left empty, the catalog fills in the default two-layer
    /// head sized for the category.
    pub head_spec: Vec<LayerSpec>,
}

impl CategorySpec {
    pub fn new(id: usize, kind: CategoryKind, scope: Scope) -> Self {
        Self {
            id,
            kind,
            scope,
            lambda: 1.0,
            head_spec: Vec::new(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_head(mut self, head_spec: Vec<LayerSpec>) -> Self {
        self.head_spec = head_spec;
        self
    }
}

/// Attributes grouped into heterogeneous categories.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeCatalog {
    attributes: Vec<AttributeDef>,
    categories: Vec<CategorySpec>,
}

fn invalid(message: impl Into<String>) -> Error {
    Error::Contract(format!("invalid catalog: {}", message.into()))
}

impl AttributeCatalog {
    pub fn new(attributes: Vec<AttributeDef>, mut categories: Vec<CategorySpec>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(invalid("no attributes"));
        }
        for (i, a) in attributes.iter().enumerate() {
            if a.name.is_empty()
                || a.name.contains(|c: char| c == ',' || c == '=' || c == ':' || c.is_whitespace())
            {
                return Err(invalid(format!("attribute name `{}` is not a plain token", a.name)));
            }
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(invalid(format!("duplicate attribute `{}`", a.name)));
            }
            match a.kind {
                AttributeKind::Nominal { classes } if classes < 2 => {
                    return Err(invalid(format!("`{}` needs at least 2 classes", a.name)))
                }
                AttributeKind::Ordinal { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                    return Err(invalid(format!("`{}` has an empty range {lo}..{hi}", a.name)))
                }
                _ => {}
            }
            let Some(cat) = categories.iter().find(|c| c.id == a.category) else {
                return Err(invalid(format!(
                    "`{}` references missing category {}",
                    a.name, a.category
                )));
            };
            if cat.kind != a.kind.category_kind() {
                return Err(invalid(format!(
                    "`{}` is {:?} but category {} is {:?}",
                    a.name,
                    a.kind.category_kind(),
                    cat.id,
                    cat.kind
                )));
            }
        }
        for (i, c) in categories.iter().enumerate() {
            if categories[..i].iter().any(|d| d.id == c.id) {
                return Err(invalid(format!("duplicate category id {}", c.id)));
            }
            if !(c.lambda > 0.0 && c.lambda.is_finite()) {
                return Err(invalid(format!("category {} has lambda {} (must be > 0)", c.id, c.lambda)));
            }
            if let Scope::Local(region) = &c.scope {
                if region.is_empty() || region.contains(|ch: char| ch == ',' || ch.is_whitespace()) {
                    return Err(invalid(format!("category {} has a malformed region `{region}`", c.id)));
                }
            }
            if !attributes.iter().any(|a| a.category == c.id) {
                return Err(invalid(format!("category {} has no attributes", c.id)));
            }
        }
        for c in categories.iter_mut() {
            if c.head_spec.is_empty() {
                let width: usize = attributes
                    .iter()
                    .filter(|a| a.category == c.id)
                    .map(|a| a.kind.width())
                    .sum();
                c.head_spec = preset_head(2, &[DEFAULT_HEAD_HIDDEN, width])?;
            }
        }
        Ok(Self {
            attributes,
            categories,
        })
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn categories(&self) -> &[CategorySpec] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Position of the attribute's category in [`Self::categories`].
    pub fn category_position(&self, attribute: usize) -> usize {
        let id = self.attributes[attribute].category;
        self.categories
            .iter()
            .position(|c| c.id == id)
            .expect("validated catalog")
    }

    /// Attribute indices of the category at `position`, in catalog order.
    pub fn members(&self, position: usize) -> Vec<usize> {
        let id = self.categories[position].id;
        (0..self.attributes.len())
            .filter(|&i| self.attributes[i].category == id)
            .collect()
    }

    /// Output width the head of category `position` must have.
    pub fn head_width(&self, position: usize) -> usize {
        self.members(position)
            .iter()
            .map(|&i| self.attributes[i].kind.width())
            .sum()
    }

    /// Column range of `attribute` inside its head output.
    pub fn column_range(&self, attribute: usize) -> std::ops::Range<usize> {
        let members = self.members(self.category_position(attribute));
        let mut start = 0;
        for &m in &members {
            let width = self.attributes[m].kind.width();
            if m == attribute {
                return start..start + width;
            }
            start += width;
        }
        unreachable!("attribute belongs to its category")
    }

    /// Catalog with only the named attribute, in a fresh category of the same
    /// kind, scope and head.
    pub fn single(&self, attribute: usize) -> Result<Self> {
        let a = self.attributes[attribute].clone();
        let cat = &self.categories[self.category_position(attribute)];
        let mut spec = CategorySpec::new(0, cat.kind, cat.scope.clone()).with_lambda(cat.lambda);
        if self.members(self.category_position(attribute)).len() == 1 {
            spec.head_spec = cat.head_spec.clone();
        }
        Self::new(vec![AttributeDef { category: 0, ..a }], vec![spec])
    }

    /// Canonical text form (see module docs).
    pub fn to_text(&self) -> String {
        let mut out = String::from("catalog v1\n");
        for c in &self.categories {
            let _ = writeln!(out, "#category {},{},{},{}", c.id, c.kind.tag(), c.scope, c.lambda);
        }
        for a in &self.attributes {
            let (tag, params) = match a.kind {
                AttributeKind::Nominal { classes } => ('N', classes.to_string()),
                AttributeKind::Ordinal { lo, hi } => ('O', format!("{lo}..{hi}")),
            };
            let _ = writeln!(out, "{},{tag},{params},{}", a.name, a.category);
        }
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let header = lines.by_ref().find(|(_, l)| !l.is_empty());
        match header {
            Some((_, "catalog v1")) => {}
            Some((n, other)) => {
                return Err(Error::format(n, format!("expected header `catalog v1`, found `{other}`")))
            }
            None => return Err(Error::format(1, "empty catalog")),
        }
        let mut categories = Vec::new();
        let mut attributes = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#category") {
                categories.push(parse_category(n, rest)?);
            } else if line.starts_with('#') {
                continue;
            } else {
                attributes.push(parse_attribute(n, line)?);
            }
        }
        Self::new(attributes, categories).map_err(|e| match e {
            Error::Contract(m) => Error::format(0, m),
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Age (ordinal) in one category; gender and race (nominal) in another.
    pub fn morph() -> Self {
        Self::new(
            vec![
                AttributeDef::ordinal("age", 0.0, 100.0, 0),
                AttributeDef::nominal("gender", 2, 1),
                AttributeDef::nominal("race", 3, 1),
            ],
            vec![
                CategorySpec::new(0, CategoryKind::Ordinal, Scope::Holistic),
                CategorySpec::new(1, CategoryKind::Nominal, Scope::Holistic),
            ],
        )
        .expect("valid preset")
    }

    /// The 40 binary face attributes in one holistic and seven local nominal
    /// categories.
    pub fn celeba() -> Self {
        let mut attributes = Vec::with_capacity(CELEBA_ATTRIBUTES.len());
        for (index, name) in CELEBA_ATTRIBUTES.iter().enumerate() {
            let number = index + 1;
            let category = CELEBA_GROUPS
                .iter()
                .position(|(_, members)| members.contains(&number))
                .expect("every attribute is grouped");
            attributes.push(AttributeDef::nominal(*name, 2, category));
        }
        let categories = CELEBA_GROUPS
            .iter()
            .enumerate()
            .map(|(id, (region, _))| {
                let scope = match region {
                    None => Scope::Holistic,
                    Some(r) => Scope::Local((*r).to_string()),
                };
                CategorySpec::new(id, CategoryKind::Nominal, scope)
            })
            .collect();
        Self::new(attributes, categories).expect("valid preset")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "morph" => Ok(Self::morph()),
            "celeba" => Ok(Self::celeba()),
            other => Err(Error::Lookup {
                kind: "catalog preset",
                name: other.to_string(),
            }),
        }
    }
}

fn parse_category(n: usize, rest: &str) -> Result<CategorySpec> {
    let fields: Vec<&str> = rest.split(',').map(str::trim).collect();
    let [id, kind, scope, lambda] = fields[..] else {
        return Err(Error::format(n, "category line needs `id,kind,scope,lambda`"));
    };
    let id = id
        .parse()
        .map_err(|_| Error::format(n, format!("category id `{id}` is not an integer")))?;
    let kind = CategoryKind::from_tag(kind)
        .ok_or_else(|| Error::format(n, format!("category kind `{kind}` is not N or O")))?;
    let scope = match scope {
        "holistic" => Scope::Holistic,
        s => match s.strip_prefix("local:") {
            Some(region) if !region.is_empty() => Scope::Local(region.to_string()),
            _ => return Err(Error::format(n, format!("scope `{s}` is not holistic or local:<region>"))),
        },
    };
    let lambda: f64 = lambda
        .parse()
        .map_err(|_| Error::format(n, format!("lambda `{lambda}` is not a number")))?;
    Ok(CategorySpec::new(id, kind, scope).with_lambda(lambda))
}

fn parse_attribute(n: usize, line: &str) -> Result<AttributeDef> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let [name, kind, params, category] = fields[..] else {
        return Err(Error::format(n, "attribute line needs `name,kind,params,category_id`"));
    };
    let category = category
        .parse()
        .map_err(|_| Error::format(n, format!("category id `{category}` is not an integer")))?;
    let kind = match kind {
        "N" => AttributeKind::Nominal {
            classes: params
                .parse()
                .map_err(|_| Error::format(n, format!("class count `{params}` is not an integer")))?,
        },
        "O" => {
            let (lo, hi) = params
                .split_once("..")
                .ok_or_else(|| Error::format(n, format!("ordinal range `{params}` is not lo..hi")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(n, format!("range bound `{s}` is not a number")))
            };
            AttributeKind::Ordinal {
                lo: num(lo)?,
                hi: num(hi)?,
            }
        }
        other => return Err(Error::format(n, format!("attribute kind `{other}` is not N or O"))),
    };
    Ok(AttributeDef {
        name: name.to_string(),
        kind,
        category,
    })
}

/// Attribute names of the 40-attribute face preset, in catalog order.
pub const CELEBA_ATTRIBUTES: [&str; 40] = [
    "5_o_clock_shadow",
    "arched_eyebrows",
    "bushy_eyebrows",
    "attractive",
    "bags_under_eyes",
    "bald",
    "bangs",
    "black_hair",
    "blond_hair",
    "brown_hair",
    "gray_hair",
    "big_lips",
    "big_nose",
    "blurry",
    "chubby",
    "double_chin",
    "eyeglasses",
    "goatee",
    "heavy_makeup",
    "high_cheekbones",
    "male",
    "mouth_slightly_open",
    "mustache",
    "narrow_eyes",
    "no_beard",
    "oval_face",
    "pale_skin",
    "pointy_nose",
    "receding_hairline",
    "rosy_cheeks",
    "sideburns",
    "smiling",
    "straight_hair",
    "wavy_hair",
    "wearing_earrings",
    "wearing_hat",
    "wearing_lipstick",
    "wearing_necklace",
    "wearing_necktie",
    "young",
];

/// One-based attribute numbers per subnetwork; `None` marks the holistic one.
const CELEBA_GROUPS: [(Option<&str>, &[usize]); 8] = [
    (None, &[4, 14, 15, 19, 21, 26, 27, 32, 40]),
    (Some("hair"), &[6, 7, 8, 9, 10, 11, 29, 33, 34, 36]),
    (Some("eyes"), &[2, 3, 5, 17, 24]),
    (Some("nose"), &[13, 28]),
    (Some("cheeks"), &[20, 30, 31, 35]),
    (Some("mouth"), &[1, 12, 22, 23, 37]),
    (Some("chin"), &[16, 18, 25]),
    (Some("neck"), &[38, 39]),
];
