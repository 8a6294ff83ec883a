//! Element feature descriptors, invertible one-hot codecs and featurized
//! graph bundles.
//!
//! A [`GraphNodeFeaturization`] pairs each [`ElementFeatureDescriptor`] (what
//! is measured) with a [`OneHotOneCold`] codec (how it is encoded). Encoding
//! is always paired with decoding: categorical features decode exactly,
//! continuous ones decode to the bin interval that contains the value, which
//! is the resolution the network actually sees.
//!
//! Feature matrices are laid out features × atoms: column `k` is the
//! concatenated encoding of atom `k`.

use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomgraph::{AtomGraph, GraphError};
use crate::elementdata::{Block, ElementError, ElementTable, FeatureValue};

/// Version tag of the featurization config document.
pub const FEATURIZATION_FORMAT_VERSION: &str = "feat/1";

pub const DEFAULT_NBINS: usize = 10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("feature `{feature}` is {actual}, not {declared}")]
    KindMismatch { feature: String, declared: FeatureKind, actual: FeatureKind },
    #[error("codec needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("bin range must satisfy lo < hi with finite ends, got [{lo}, {hi}]")]
    BadRange { lo: f64, hi: f64 },
    #[error("log-scale bins need lo > 0, got lo = {0}")]
    LogNonPositive(f64),
    #[error("feature `{0}` has no values in the element table")]
    NoValues(String),
    #[error("categorical codec needs distinct, non-empty categories")]
    BadCategories,
    #[error("binning options do not apply to categorical feature `{0}`")]
    BinningOnCategorical(String),
    #[error("value {value} is not one of the codec's categories")]
    UnknownCategory { value: FeatureValue },
    #[error("value {value} outside codec range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("continuous codec cannot encode categorical value {0}")]
    NotNumeric(FeatureValue),
    #[error("encoded block has length {found}, codec expects {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("encoded block has {ones} ones, expected exactly one")]
    NotOneHot { ones: usize },
    #[error("element `{element}` has no value for feature `{feature}`")]
    MissingValue { element: String, feature: String },
    #[error("featurization scheme has no features")]
    EmptyScheme,
    #[error("featurization config is incomplete: {0}")]
    IncompleteConfig(String),
    #[error("featurization config version `{found}` is not supported (expected {FEATURIZATION_FORMAT_VERSION})")]
    Version { found: String },
    #[error("feature matrix: {0}")]
    MatrixShape(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("featurized document: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Continuous,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Categorical => "categorical",
            FeatureKind::Continuous => "continuous",
        })
    }
}

/// A per-atom feature that depends only on the element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementFeatureDescriptor {
    name: String,
    kind: FeatureKind,
}

impl ElementFeatureDescriptor {
    /// Descriptor for a table column; the kind follows from the column.
    pub fn new(name: &str) -> Result<Self, FeatureError> {
        let kind = match name {
            "block" | "group" | "row" | "atomic_number" => FeatureKind::Categorical,
            "mass" | "electronegativity" | "atomic_radius" => FeatureKind::Continuous,
            other => return Err(ElementError::UnknownFeature(other.to_string()).into()),
        };
        Ok(Self { name: name.to_string(), kind })
    }

    /// Like [`new`](Self::new) but fails if `kind` disagrees with the column.
    pub fn with_kind(name: &str, kind: FeatureKind) -> Result<Self, FeatureError> {
        let d = Self::new(name)?;
        if d.kind != kind {
            return Err(FeatureError::KindMismatch { feature: name.to_string(), declared: kind, actual: d.kind });
        }
        Ok(d)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    /// Looks the feature up for one element.
    pub fn value(&self, table: &ElementTable, element: &str) -> Result<FeatureValue, FeatureError> {
        table
            .lookup(element)?
            .feature(&self.name)?
            .ok_or_else(|| FeatureError::MissingValue { element: element.to_string(), feature: self.name.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// Bin interval returned by continuous decoding: `[lo, hi)`, or `[lo, hi]`
/// for the last bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinInterval {
    pub lo: f64,
    pub hi: f64,
    pub closed_upper: bool,
}

impl BinInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && (v < self.hi || (self.closed_upper && v == self.hi))
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl fmt::Display for BinInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let close = if self.closed_upper { ']' } else { ')' };
        write!(f, "[{:.4}, {:.4}{close}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoded {
    Category(FeatureValue),
    Interval(BinInterval),
}

impl fmt::Display for Decoded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decoded::Category(v) => write!(f, "{v}"),
            Decoded::Interval(i) => write!(f, "{i}"),
        }
    }
}

/// One-hot codec: a bit vector with a single one marking a category or bin.
#[derive(Debug, Clone, PartialEq)]
pub enum OneHotOneCold {
    Categorical {
        categories: Vec<FeatureValue>,
    },
    /// `nbins` bins partitioning `[lo, hi]`, uniform in `v` (linear) or in
    /// `ln v` (log).
    Continuous {
        nbins: usize,
        lo: f64,
        hi: f64,
        scale: Scale,
    },
}

impl OneHotOneCold {
    pub fn categorical(categories: Vec<FeatureValue>) -> Result<Self, FeatureError> {
        let distinct = categories.iter().enumerate().all(|(i, c)| !categories[..i].contains(c));
        if categories.is_empty() || !distinct {
            return Err(FeatureError::BadCategories);
        }
        Ok(Self::Categorical { categories })
    }

    pub fn continuous(nbins: usize, lo: f64, hi: f64, scale: Scale) -> Result<Self, FeatureError> {
        if nbins < 2 {
            return Err(FeatureError::TooFewBins(nbins));
        }
        if scale == Scale::Log && (lo.is_nan() || lo <= 0.0) {
            return Err(FeatureError::LogNonPositive(lo));
        }
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(FeatureError::BadRange { lo, hi });
        }
        Ok(Self::Continuous { nbins, lo, hi, scale })
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Self::Categorical { .. } => FeatureKind::Categorical,
            Self::Continuous { .. } => FeatureKind::Continuous,
        }
    }

    /// Length of the encoded bit vector.
    pub fn len(&self) -> usize {
        match self {
            Self::Categorical { categories } => categories.len(),
            Self::Continuous { nbins, .. } => *nbins,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lower edge of bin `k`; `k == nbins` gives the upper range end.
    /// Edges are non-decreasing with exact `lo` and `hi` at the ends.
    fn edge(&self, k: usize) -> f64 {
        let Self::Continuous { nbins, lo, hi, scale } = *self else {
            unreachable!("edges exist only for continuous codecs")
        };
        if k == 0 {
            return lo;
        }
        if k >= nbins {
            return hi;
        }
        let t = k as f64 / nbins as f64;
        let e = match scale {
            Scale::Linear => lo + (hi - lo) * t,
            Scale::Log => (lo.ln() + (hi.ln() - lo.ln()) * t).exp(),
        };
        e.clamp(lo, hi)
    }

    /// Bin of `v` for a continuous codec.
    pub fn bin_index(&self, v: f64) -> Result<usize, FeatureError> {
        let Self::Continuous { nbins, lo, hi, scale } = *self else {
            return Err(FeatureError::NotNumeric(FeatureValue::Real(v)));
        };
        if !(lo <= v && v <= hi) {
            return Err(FeatureError::OutOfRange { value: v, lo, hi });
        }
        let t = match scale {
            Scale::Linear => (v - lo) / (hi - lo),
            Scale::Log => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
        };
        let mut k = ((t * nbins as f64).floor().max(0.0) as usize).min(nbins - 1);
        // The formula can land one bin off near an edge; the edges decide.
        while k > 0 && v < self.edge(k) {
            k -= 1;
        }
        while k + 1 < nbins && v >= self.edge(k + 1) {
            k += 1;
        }
        Ok(k)
    }

    /// Interval covered by bin `k` of a continuous codec.
    pub fn bin_interval(&self, k: usize) -> BinInterval {
        let nbins = self.len();
        BinInterval { lo: self.edge(k), hi: self.edge(k + 1), closed_upper: k + 1 == nbins }
    }

    pub fn encode(&self, value: &FeatureValue) -> Result<Vec<bool>, FeatureError> {
        let hot = match self {
            Self::Categorical { categories } => {
                categories.iter().position(|c| c == value).ok_or(FeatureError::UnknownCategory { value: *value })?
            }
            Self::Continuous { .. } => {
                let v = value.as_f64().ok_or(FeatureError::NotNumeric(*value))?;
                self.bin_index(v)?
            }
        };
        let mut bits = vec![false; self.len()];
        bits[hot] = true;
        Ok(bits)
    }

    /// Category for categorical codecs, bin interval for continuous ones.
    pub fn decode(&self, bits: &[bool]) -> Result<Decoded, FeatureError> {
        if bits.len() != self.len() {
            return Err(FeatureError::WrongLength { expected: self.len(), found: bits.len() });
        }
        let ones = bits.iter().filter(|&&b| b).count();
        if ones != 1 {
            return Err(FeatureError::NotOneHot { ones });
        }
        let hot = bits.iter().position(|&b| b).expect("one bit set");
        Ok(match self {
            Self::Categorical { categories } => Decoded::Category(categories[hot]),
            Self::Continuous { .. } => Decoded::Interval(self.bin_interval(hot)),
        })
    }
}

/// Builds the codec for `d` from the table's values.
///
/// Categorical features use the table's distinct values in fixed order
/// (blocks s, p, d, f; integers ascending) and reject binning options.
/// Continuous features default to [`DEFAULT_NBINS`] linear bins over the
/// table's min..max.
pub fn make_codec(
    d: &ElementFeatureDescriptor,
    table: &ElementTable,
    nbins: Option<usize>,
    range: Option<(f64, f64)>,
    scale: Option<Scale>,
) -> Result<OneHotOneCold, FeatureError> {
    let values: Vec<FeatureValue> = table.feature_values(d.name())?.into_iter().map(|(_, v)| v).collect();
    if values.is_empty() {
        return Err(FeatureError::NoValues(d.name().to_string()));
    }
    match d.kind() {
        FeatureKind::Categorical => {
            if nbins.is_some() || range.is_some() || scale.is_some() {
                return Err(FeatureError::BinningOnCategorical(d.name().to_string()));
            }
            OneHotOneCold::categorical(ordered_categories(&values))
        }
        FeatureKind::Continuous => {
            let scale = scale.unwrap_or_default();
            let nbins = nbins.unwrap_or(DEFAULT_NBINS);
            let (lo, hi) = match range {
                Some(r) => r,
                None => values
                    .iter()
                    .filter_map(FeatureValue::as_f64)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v))),
            };
            OneHotOneCold::continuous(nbins, lo, hi, scale)
        }
    }
}

fn ordered_categories(values: &[FeatureValue]) -> Vec<FeatureValue> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut ints: Vec<u32> = Vec::new();
    for v in values {
        match *v {
            FeatureValue::Block(b) => blocks.push(b),
            FeatureValue::Integer(i) => ints.push(i),
            FeatureValue::Real(_) => {}
        }
    }
    blocks.sort();
    blocks.dedup();
    ints.sort_unstable();
    ints.dedup();
    blocks.into_iter().map(FeatureValue::Block).chain(ints.into_iter().map(FeatureValue::Integer)).collect()
}

/// One entry of the featurization config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<FeatureValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
}

/// Featurization config document (`feat/1`).
///
/// Omitted codec fields are filled from the element table when the scheme is
/// built. [`GraphNodeFeaturization::to_config`] always writes every field,
/// so saved configs rebuild the exact same scheme without a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizationConfig {
    pub version: String,
    pub features: Vec<FeatureSpec>,
}

impl FeaturizationConfig {
    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check_version()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check_version(&self) -> Result<(), FeatureError> {
        if self.version != FEATURIZATION_FORMAT_VERSION {
            return Err(FeatureError::Version { found: self.version.clone() });
        }
        Ok(())
    }
}

/// Ordered (descriptor, codec) pairs; each atom's feature vector is the
/// concatenation of the encoded blocks in this order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNodeFeaturization {
    features: Vec<(ElementFeatureDescriptor, OneHotOneCold)>,
}

impl GraphNodeFeaturization {
    pub fn new(features: Vec<(ElementFeatureDescriptor, OneHotOneCold)>) -> Result<Self, FeatureError> {
        if features.is_empty() {
            return Err(FeatureError::EmptyScheme);
        }
        for (d, c) in &features {
            if d.kind() != c.kind() {
                return Err(FeatureError::KindMismatch {
                    feature: d.name().to_string(),
                    declared: c.kind(),
                    actual: d.kind(),
                });
            }
        }
        Ok(Self { features })
    }

    /// Scheme with table-derived default codecs for each named feature.
    pub fn with_defaults(names: &[&str], table: &ElementTable) -> Result<Self, FeatureError> {
        let features = names
            .iter()
            .map(|name| {
                let d = ElementFeatureDescriptor::new(name)?;
                let c = make_codec(&d, table, None, None, None)?;
                Ok((d, c))
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        Self::new(features)
    }

    /// Builds the scheme from a config, filling gaps from `table`.
    ///
    /// With `table == None` every codec field must be present.
    pub fn from_config(cfg: &FeaturizationConfig, table: Option<&ElementTable>) -> Result<Self, FeatureError> {
        cfg.check_version()?;
        let features = cfg
            .features
            .iter()
            .map(|spec| {
                let d = ElementFeatureDescriptor::with_kind(&spec.name, spec.kind)?;
                let codec = match spec.kind {
                    FeatureKind::Categorical => {
                        if spec.nbins.is_some() || spec.lo.is_some() || spec.hi.is_some() || spec.scale.is_some() {
                            return Err(FeatureError::BinningOnCategorical(spec.name.clone()));
                        }
                        match (&spec.categories, table) {
                            (Some(cats), _) => OneHotOneCold::categorical(cats.clone())?,
                            (None, Some(t)) => make_codec(&d, t, None, None, None)?,
                            (None, None) => {
                                return Err(FeatureError::IncompleteConfig(format!(
                                    "`{}` lists no categories",
                                    spec.name
                                )))
                            }
                        }
                    }
                    FeatureKind::Continuous => {
                        let range = match (spec.lo, spec.hi) {
                            (Some(lo), Some(hi)) => Some((lo, hi)),
                            (None, None) => None,
                            _ => {
                                return Err(FeatureError::IncompleteConfig(format!(
                                    "`{}` gives only one of lo/hi",
                                    spec.name
                                )))
                            }
                        };
                        match (range, table) {
                            (Some((lo, hi)), _) => OneHotOneCold::continuous(
                                spec.nbins.unwrap_or(DEFAULT_NBINS),
                                lo,
                                hi,
                                spec.scale.unwrap_or_default(),
                            )?,
                            (None, Some(t)) => make_codec(&d, t, spec.nbins, None, spec.scale)?,
                            (None, None) => {
                                return Err(FeatureError::IncompleteConfig(format!("`{}` has no bin range", spec.name)))
                            }
                        }
                    }
                };
                Ok((d, codec))
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        Self::new(features)
    }

    /// Complete config that rebuilds this scheme exactly.
    pub fn to_config(&self) -> FeaturizationConfig {
        let features = self
            .features
            .iter()
            .map(|(d, c)| match c {
                OneHotOneCold::Categorical { categories } => FeatureSpec {
                    name: d.name().to_string(),
                    kind: FeatureKind::Categorical,
                    categories: Some(categories.clone()),
                    nbins: None,
                    lo: None,
                    hi: None,
                    scale: None,
                },
                OneHotOneCold::Continuous { nbins, lo, hi, scale } => FeatureSpec {
                    name: d.name().to_string(),
                    kind: FeatureKind::Continuous,
                    categories: None,
                    nbins: Some(*nbins),
                    lo: Some(*lo),
                    hi: Some(*hi),
                    scale: Some(*scale),
                },
            })
            .collect();
        FeaturizationConfig { version: FEATURIZATION_FORMAT_VERSION.to_string(), features }
    }

    pub fn features(&self) -> &[(ElementFeatureDescriptor, OneHotOneCold)] {
        &self.features
    }

    /// Total encoded length per atom (rows of the feature matrix).
    pub fn encoded_len(&self) -> usize {
        self.features.iter().map(|(_, c)| c.len()).sum()
    }

    /// Row range of each feature's block in the feature matrix.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.features
            .iter()
            .map(|(_, c)| {
                let r = start..start + c.len();
                start = r.end;
                r
            })
            .collect()
    }

    /// Replaces the codec of feature `index`.
    pub fn with_codec(&self, index: usize, codec: OneHotOneCold) -> Result<Self, FeatureError> {
        let mut features = self.features.clone();
        features[index].1 = codec;
        Self::new(features)
    }

    /// Encoded column for one element.
    pub fn encode_element(&self, element: &str, table: &ElementTable) -> Result<Vec<bool>, FeatureError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        for (d, c) in &self.features {
            out.extend(c.encode(&d.value(table, element)?)?);
        }
        Ok(out)
    }
}

/// A graph, the scheme that featurized it and the resulting features × atoms
/// matrix of zeros and ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedAtoms {
    graph: AtomGraph,
    scheme: GraphNodeFeaturization,
    matrix: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct FeaturizedDocument {
    graph: serde_json::Value,
    config: FeaturizationConfig,
    matrix: Vec<Vec<f64>>,
}

impl FeaturizedAtoms {
    /// Bundles parts after checking shape and the one-hot structure.
    pub fn new(graph: AtomGraph, scheme: GraphNodeFeaturization, matrix: DMatrix<f64>) -> Result<Self, FeatureError> {
        let out = Self { graph, scheme, matrix };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<(), FeatureError> {
        let (rows, cols) = self.matrix.shape();
        if rows != self.scheme.encoded_len() {
            return Err(FeatureError::MatrixShape(format!(
                "{rows} rows but the scheme encodes {} per atom",
                self.scheme.encoded_len()
            )));
        }
        if cols != self.graph.len() {
            return Err(FeatureError::MatrixShape(format!(
                "{cols} columns but the graph has {} nodes",
                self.graph.len()
            )));
        }
        if let Some(v) = self.matrix.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(FeatureError::MatrixShape(format!("entry {v} is not 0 or 1")));
        }
        for col in 0..cols {
            for r in self.scheme.block_ranges() {
                let ones = self.matrix.view((r.start, col), (r.len(), 1)).iter().filter(|&&v| v == 1.0).count();
                if ones != 1 {
                    return Err(FeatureError::MatrixShape(format!(
                        "atom {col}, rows {}..{}: {ones} ones in one block",
                        r.start, r.end
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &AtomGraph {
        &self.graph
    }

    pub fn scheme(&self) -> &GraphNodeFeaturization {
        &self.scheme
    }

    /// Features × atoms.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Atoms × features.
    pub fn transposed(&self) -> DMatrix<f64> {
        self.matrix.transpose()
    }

    pub fn source_id(&self) -> Option<&str> {
        self.graph.source_id()
    }

    /// Permutes atoms consistently in the graph and matrix columns.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let matrix = DMatrix::from_fn(self.matrix.nrows(), perm.len(), |r, c| self.matrix[(r, perm[c])]);
        Self { graph: self.graph.permuted(perm), scheme: self.scheme.clone(), matrix }
    }

    /// `{graph, config, matrix}` document.
    pub fn to_json(&self) -> String {
        let doc = FeaturizedDocument {
            graph: self.graph.to_value(),
            config: self.scheme.to_config(),
            matrix: self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("featurized document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let doc: FeaturizedDocument = serde_json::from_str(text)?;
        let graph = AtomGraph::from_value(doc.graph)?;
        let scheme = GraphNodeFeaturization::from_config(&doc.config, None)?;
        let rows = doc.matrix.len();
        let cols = doc.matrix.first().map_or(0, Vec::len);
        if doc.matrix.iter().any(|r| r.len() != cols) {
            return Err(FeatureError::MatrixShape("ragged matrix rows".into()));
        }
        let flat: Vec<f64> = doc.matrix.into_iter().flatten().collect();
        Self::new(graph, scheme, DMatrix::from_row_slice(rows, cols, &flat))
    }
}

/// Encodes every node of `g` with `scheme` and stacks the columns.
pub fn featurize(
    g: &AtomGraph,
    scheme: &GraphNodeFeaturization,
    table: &ElementTable,
) -> Result<FeaturizedAtoms, FeatureError> {
    let rows = scheme.encoded_len();
    let mut matrix = DMatrix::<f64>::zeros(rows, g.len());
    for (col, element) in g.species().iter().enumerate() {
        let bits = scheme.encode_element(element, table)?;
        for (row, bit) in bits.into_iter().enumerate() {
            if bit {
                matrix[(row, col)] = 1.0;
            }
        }
    }
    FeaturizedAtoms::new(g.clone(), scheme.clone(), matrix)
}

/// Featurizes many graphs in parallel; output order matches input.
pub fn featurize_many(
    graphs: &[AtomGraph],
    scheme: &GraphNodeFeaturization,
    table: &ElementTable,
) -> Vec<Result<FeaturizedAtoms, FeatureError>> {
    graphs.par_iter().map(|g| featurize(g, scheme, table)).collect()
}

/// Decodes each atom's column back to `(feature name, value or interval)`.
pub fn decode_features(fa: &FeaturizedAtoms) -> Result<Vec<Vec<(String, Decoded)>>, FeatureError> {
    let ranges = fa.scheme.block_ranges();
    if fa.matrix.nrows() != fa.scheme.encoded_len() {
        return Err(FeatureError::MatrixShape(format!(
            "{} rows but the scheme encodes {}",
            fa.matrix.nrows(),
            fa.scheme.encoded_len()
        )));
    }
    (0..fa.matrix.ncols())
        .map(|col| {
            fa.scheme
                .features
                .iter()
                .zip(&ranges)
                .map(|((d, c), r)| {
                    let bits: Vec<bool> = r.clone().map(|row| fa.matrix[(row, col)] == 1.0).collect();
                    Ok((d.name().to_string(), c.decode(&bits)?))
                })
                .collect()
        })
        .collect()
}
