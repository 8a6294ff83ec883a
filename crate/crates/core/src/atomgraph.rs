//! Weighted crystal graphs built from neighbor cutoffs and distance decay.
//!
//! Every neighbor within the cutoff contributes a weight that decays with
//! distance, anchored so the closest pair in the structure has weight 1.
//! Contributions from several periodic images of the same pair are summed
//! into one adjacency entry; images of an atom onto itself are dropped
//! unless [`GraphOptions::keep_self_loops`] is set.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::order_independent_sum;
use crate::structures::AtomicStructure;

/// Version tag of the adjacency-json document.
pub const GRAPH_FORMAT_VERSION: &str = "agraph/1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cutoff must be a positive finite length, got {0}")]
    NonPositiveCutoff(f64),
    #[error("max_neighbors must be positive")]
    ZeroMaxNeighbors,
    #[error("exponential decay length must be positive, got {0}")]
    NonPositiveDecay(f64),
    #[error("distance {d} is below the minimum neighbor distance {d_min}")]
    BelowMinimum { d: f64, d_min: f64 },
    #[error("minimum neighbor distance must be positive, got {0}")]
    NonPositiveMinimum(f64),
    #[error("weight scheme `{0}` needs a weight function; use build_graph_with")]
    CustomScheme(String),
    #[error("weight function returned {weight} at d = {d}; weights must be positive and finite")]
    BadCustomWeight { d: f64, weight: f64 },
    #[error("invalid adjacency: {0}")]
    InvalidAdjacency(String),
    #[error("graph document version `{found}` is not supported (expected {GRAPH_FORMAT_VERSION})")]
    Version { found: String },
    #[error("graph document: {0}")]
    Json(#[from] serde_json::Error),
}

/// Distance-decay rule for edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightScheme {
    /// `(d_min / d)²`
    InverseSquare,
    /// `exp(-(d - d_min) / decay)`, decay in Å.
    Exponential { decay: f64 },
    /// Every neighbor weighs 1.
    Unit,
    /// Provenance label for graphs built with a caller-supplied function.
    Custom { name: String },
}

impl WeightScheme {
    fn validate(&self) -> Result<(), GraphError> {
        match *self {
            WeightScheme::Exponential { decay } if !(decay > 0.0 && decay.is_finite()) => {
                Err(GraphError::NonPositiveDecay(decay))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Neighbor distance cutoff, Å.
    pub cutoff: f64,
    /// Keep only the nearest `k` neighbors of each atom.
    #[serde(default)]
    pub max_neighbors: Option<usize>,
    pub weight_scheme: WeightScheme,
    /// Divide every weight by the largest one.
    pub normalize_weights: bool,
    /// Keep atom-to-own-image contributions on the diagonal.
    #[serde(default)]
    pub keep_self_loops: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            cutoff: 8.0,
            max_neighbors: None,
            weight_scheme: WeightScheme::InverseSquare,
            normalize_weights: true,
            keep_self_loops: false,
        }
    }
}

impl GraphOptions {
    pub fn with_cutoff(cutoff: f64) -> Self {
        Self { cutoff, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(GraphError::NonPositiveCutoff(self.cutoff));
        }
        if self.max_neighbors == Some(0) {
            return Err(GraphError::ZeroMaxNeighbors);
        }
        self.weight_scheme.validate()
    }
}

/// One neighbor-list entry: atom `neighbor` translated by lattice image
/// `image`, seen from atom `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub center: usize,
    pub neighbor: usize,
    pub image: [i32; 3],
    pub distance: f64,
}

/// Image search range per lattice direction.
///
/// Any image within `cutoff` satisfies `|n_k| ≤ cutoff / h_k + span_k`, where
/// `h_k` is the cell height and `span_k` the fractional extent of the atoms.
fn image_ranges(s: &AtomicStructure, cutoff: f64) -> [i32; 3] {
    let (Some(heights), Some(frac)) = (s.cell_heights(), s.fractional_positions()) else {
        return [0; 3];
    };
    let periodic = s.periodic();
    std::array::from_fn(|k| {
        if !periodic[k] {
            return 0;
        }
        let (lo, hi) = frac.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f[k]), hi.max(f[k])));
        let span = (hi - lo).ceil().max(1.0);
        ((cutoff / heights[k]).ceil() + span) as i32
    })
}

fn image_cmp(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance.total_cmp(&b.distance).then(a.neighbor.cmp(&b.neighbor)).then(a.image.cmp(&b.image))
}

/// All `(center, neighbor image)` pairs within `cutoff`.
///
/// Entries are grouped by center in ascending order; within a center they
/// are sorted by distance, then neighbor index, then image. With
/// `max_neighbors = Some(k)` only the first `k` entries per center remain.
/// Self-images (`center == neighbor`, nonzero image) are included.
pub fn neighbor_list(
    s: &AtomicStructure,
    cutoff: f64,
    max_neighbors: Option<usize>,
) -> Result<Vec<Neighbor>, GraphError> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(GraphError::NonPositiveCutoff(cutoff));
    }
    if max_neighbors == Some(0) {
        return Err(GraphError::ZeroMaxNeighbors);
    }
    let range = image_ranges(s, cutoff);
    let mut images: Vec<([i32; 3], Vector3<f64>)> = Vec::new();
    for a in -range[0]..=range[0] {
        for b in -range[1]..=range[1] {
            for c in -range[2]..=range[2] {
                images.push(([a, b, c], s.translation([a, b, c])));
            }
        }
    }

    let positions = s.positions();
    let mut out = Vec::new();
    for (i, ri) in positions.iter().enumerate() {
        let start = out.len();
        for (j, rj) in positions.iter().enumerate() {
            for (image, shift) in &images {
                if i == j && *image == [0, 0, 0] {
                    continue;
                }
                let distance = ((rj + shift) - ri).norm();
                if distance <= cutoff {
                    out.push(Neighbor { center: i, neighbor: j, image: *image, distance });
                }
            }
        }
        out[start..].sort_by(image_cmp);
        if let Some(k) = max_neighbors {
            out.truncate((start + k).min(out.len()));
        }
    }
    Ok(out)
}

/// Weight of an edge of length `d` given the structure's minimum neighbor
/// distance `d_min`. Always in (0, 1]; exactly 1 at `d == d_min`.
pub fn edge_weight(d: f64, d_min: f64, scheme: &WeightScheme) -> Result<f64, GraphError> {
    if d_min.is_nan() || d_min <= 0.0 {
        return Err(GraphError::NonPositiveMinimum(d_min));
    }
    if d < d_min {
        return Err(GraphError::BelowMinimum { d, d_min });
    }
    scheme.validate()?;
    Ok(match scheme {
        WeightScheme::InverseSquare => {
            let r = d_min / d;
            r * r
        }
        WeightScheme::Exponential { decay } => (-(d - d_min) / decay).exp(),
        WeightScheme::Unit => 1.0,
        WeightScheme::Custom { name } => return Err(GraphError::CustomScheme(name.clone())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphWarning {
    /// No atom has any neighbor within the cutoff (after dropping self-images).
    Edgeless,
}

impl std::fmt::Display for GraphWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphWarning::Edgeless => f.write_str("graph has no edges within the cutoff"),
        }
    }
}

/// Weighted undirected graph over the atoms of a structure.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomGraph {
    species: Vec<String>,
    adjacency: DMatrix<f64>,
    options: GraphOptions,
    source_id: Option<String>,
    warnings: Vec<GraphWarning>,
}

impl AtomGraph {
    /// Assembles a graph from parts, checking the adjacency invariants.
    pub fn from_parts(
        species: Vec<String>,
        adjacency: DMatrix<f64>,
        options: GraphOptions,
        source_id: Option<String>,
    ) -> Result<Self, GraphError> {
        let n = species.len();
        if n == 0 {
            return Err(GraphError::InvalidAdjacency("graph has no nodes".into()));
        }
        if adjacency.nrows() != n || adjacency.ncols() != n {
            return Err(GraphError::InvalidAdjacency(format!(
                "{}x{} adjacency for {n} nodes",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(GraphError::InvalidAdjacency(format!(
                        "entry ({i},{j}) = {w} is not a non-negative finite weight"
                    )));
                }
                if w.to_bits() != adjacency[(j, i)].to_bits() {
                    return Err(GraphError::InvalidAdjacency(format!("not symmetric at ({i},{j})")));
                }
            }
            if !options.keep_self_loops && adjacency[(i, i)] != 0.0 {
                return Err(GraphError::InvalidAdjacency(format!("nonzero diagonal at {i}")));
            }
        }
        let warnings = if adjacency.iter().all(|&w| w == 0.0) { vec![GraphWarning::Edgeless] } else { Vec::new() };
        Ok(Self { species, adjacency, options, source_id, warnings })
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn options(&self) -> &GraphOptions {
        &self.options
    }

    pub fn source_id(&self) -> Option<&str> {
        self.source_id.as_deref()
    }

    pub fn warnings(&self) -> &[GraphWarning] {
        &self.warnings
    }

    pub fn is_edgeless(&self) -> bool {
        self.warnings.contains(&GraphWarning::Edgeless)
    }

    /// Nonzero upper-triangle entries `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.adjacency[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Number of nonzero adjacency entries (both triangles).
    pub fn nnz(&self) -> usize {
        self.adjacency.iter().filter(|&&w| w != 0.0).count()
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let mut row: Vec<f64> = self.adjacency.row(i).iter().copied().collect();
                order_independent_sum(&mut row)
            })
            .collect()
    }

    /// Relabels nodes: node `perm[k]` of `self` becomes node `k`, so the
    /// adjacency maps to `P A Pᵀ`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.len();
        assert_eq!(perm.len(), n, "permutation length");
        let adjacency = DMatrix::from_fn(n, n, |i, j| self.adjacency[(perm[i], perm[j])]);
        Self {
            species: perm.iter().map(|&p| self.species[p].clone()).collect(),
            adjacency,
            options: self.options.clone(),
            source_id: self.source_id.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Builds the weighted graph of `s` with one of the named weight schemes.
pub fn build_graph(s: &AtomicStructure, opts: &GraphOptions) -> Result<AtomGraph, GraphError> {
    opts.validate()?;
    let scheme = opts.weight_scheme.clone();
    assemble(s, opts, |d, d_min| edge_weight(d, d_min, &scheme))
}

/// Builds the graph with a caller-supplied weight function `f(d, d_min)`.
///
/// `opts.weight_scheme` is recorded as provenance only; pass a
/// [`WeightScheme::Custom`] naming the function.
pub fn build_graph_with<F>(s: &AtomicStructure, opts: &GraphOptions, weight: F) -> Result<AtomGraph, GraphError>
where
    F: Fn(f64, f64) -> f64,
{
    opts.validate()?;
    assemble(s, opts, |d, d_min| {
        let w = weight(d, d_min);
        if w > 0.0 && w.is_finite() {
            Ok(w)
        } else {
            Err(GraphError::BadCustomWeight { d, weight: w })
        }
    })
}

fn assemble<F>(s: &AtomicStructure, opts: &GraphOptions, weight: F) -> Result<AtomGraph, GraphError>
where
    F: Fn(f64, f64) -> Result<f64, GraphError>,
{
    let n = s.len();
    let neighbors = neighbor_list(s, opts.cutoff, opts.max_neighbors)?;
    let mut raw = DMatrix::<f64>::zeros(n, n);
    if let Some(d_min) = neighbors.iter().map(|e| e.distance).reduce(f64::min) {
        for e in &neighbors {
            raw[(e.center, e.neighbor)] += weight(e.distance, d_min)?;
        }
    }
    if !opts.keep_self_loops {
        raw.fill_diagonal(0.0);
    }
    let mut adjacency = DMatrix::from_fn(n, n, |i, j| (raw[(i, j)] + raw[(j, i)]) / 2.0);
    if opts.normalize_weights {
        let max = adjacency.max();
        if max > 0.0 {
            adjacency.apply(|w| *w /= max);
        }
    }
    let graph = AtomGraph::from_parts(s.species().to_vec(), adjacency, opts.clone(), None)?;
    if graph.is_edgeless() {
        log::warn!("no neighbors within {} Å; graph over {n} atom(s) has no edges", opts.cutoff);
    }
    Ok(graph)
}

/// Builds graphs for many structures in parallel. Output order matches input.
pub fn build_graphs(structures: &[AtomicStructure], opts: &GraphOptions) -> Vec<Result<AtomGraph, GraphError>> {
    structures.par_iter().map(|s| build_graph(s, opts)).collect()
}

/// `I - D^{-1/2} A D^{-1/2}`; isolated nodes get a 1 on the diagonal and
/// zeros elsewhere in their row and column.
pub fn normalized_laplacian(g: &AtomGraph) -> DMatrix<f64> {
    let n = g.len();
    let scale: Vec<f64> = g.degrees().into_iter().map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let a = g.adjacency();
    DMatrix::from_fn(n, n, |i, j| {
        let off = a[(i, j)] * (scale[i] * scale[j]);
        if i == j {
            1.0 - off
        } else {
            -off
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    AdjacencyJson,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    version: String,
    species: Vec<String>,
    adjacency: Vec<Vec<f64>>,
    options: GraphOptions,
    #[serde(default)]
    source_id: Option<String>,
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl AtomGraph {
    /// Graphviz DOT: one node per atom labeled by species, one undirected
    /// edge per nonzero upper-triangle weight.
    pub fn to_dot(&self) -> String {
        let name = self.source_id.as_deref().unwrap_or("atomgraph");
        let mut out = String::new();
        let _ = writeln!(out, "graph \"{}\" {{", dot_escape(name));
        for (i, sym) in self.species.iter().enumerate() {
            let _ = writeln!(out, "  {i} [label=\"{}\"];", dot_escape(sym));
        }
        // `{w}` prints plain decimals; DOT numerals have no exponent form.
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "  {i} -- {j} [weight={w}];");
        }
        out.push_str("}\n");
        out
    }

    /// Adjacency-json document (`agraph/1`). Weights round-trip bitwise.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph document serializes")
    }

    fn to_document(&self) -> GraphDocument {
        GraphDocument {
            version: GRAPH_FORMAT_VERSION.to_string(),
            species: self.species.clone(),
            adjacency: self.adjacency.row_iter().map(|r| r.iter().copied().collect()).collect(),
            options: self.options.clone(),
            source_id: self.source_id.clone(),
        }
    }

    pub(crate) fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_document()).expect("graph document serializes")
    }

    pub(crate) fn from_value(value: serde_json::Value) -> Result<Self, GraphError> {
        Self::from_document(serde_json::from_value(value)?)
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        Self::from_document(serde_json::from_str(text)?)
    }

    fn from_document(doc: GraphDocument) -> Result<Self, GraphError> {
        if doc.version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::Version { found: doc.version });
        }
        doc.options.validate()?;
        let n = doc.species.len();
        if let Some(row) = doc.adjacency.iter().find(|r| r.len() != n) {
            return Err(GraphError::InvalidAdjacency(format!("row of length {} for {n} nodes", row.len())));
        }
        if doc.adjacency.len() != n {
            return Err(GraphError::InvalidAdjacency(format!("{} rows for {n} nodes", doc.adjacency.len())));
        }
        let flat: Vec<f64> = doc.adjacency.into_iter().flatten().collect();
        let adjacency = DMatrix::from_row_slice(n, n, &flat);
        Self::from_parts(doc.species, adjacency, doc.options, doc.source_id)
    }
}

pub fn export_graph(g: &AtomGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::Dot => g.to_dot(),
        GraphFormat::AdjacencyJson => g.to_json(),
    }
}
