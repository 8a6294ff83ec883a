//! Atomic structures: XYZ / extended-XYZ parsing and periodic distances.
//!
//! Positions are stored Cartesian, in ångström. The cell, when present,
//! holds the lattice vectors as rows. Fractional coordinates are derived on
//! demand.
//!
//! [`AtomicStructure::distance`] applies the minimum-image convention over
//! translations `n ∈ {-1,0,1}³` after wrapping the separation into the
//! home cell. This is exact whenever the distance of interest is below half
//! the smallest cell height; neighbor construction in [`crate::atomgraph`]
//! does its own replication and is exact for any cutoff.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::elementdata::{default_table, normalize_symbol};

/// Cells with |det| at or below this (Å³) are treated as singular.
pub const SINGULAR_CELL_VOLUME: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error("line {line}: expected an atom count, found `{found}`")]
    BadAtomCount { line: usize, found: String },
    #[error("atom count mismatch: header declares {expected} atoms, found {found}")]
    AtomCountMismatch { expected: usize, found: usize },
    #[error("line {line}: expected `Symbol x y z`, found `{found}`")]
    MissingFields { line: usize, found: String },
    #[error("line {line}: unparsable coordinate `{token}`")]
    BadCoordinate { line: usize, token: String },
    #[error("line {line}: unknown element `{symbol}`")]
    UnknownElement { line: usize, symbol: String },
    #[error("unknown element `{0}`")]
    UnknownSpecies(String),
    #[error("line 2: Lattice must hold 9 numbers, found {0}")]
    LatticeLength(usize),
    #[error("line 2: unparsable Lattice entry `{0}`")]
    LatticeValue(String),
    #[error("line 2: bad pbc value `{0}` (expected three of T/F)")]
    BadPbc(String),
    #[error("line 2: unterminated quote in comment line")]
    UnterminatedQuote,
    #[error("singular cell (|det| = {0:e} Å³)")]
    SingularCell(f64),
    #[error("periodic flags set but no cell given")]
    PeriodicWithoutCell,
    #[error("structure has no atoms")]
    Empty,
    #[error("{species} species but {positions} positions")]
    LengthMismatch { species: usize, positions: usize },
    #[error("non-finite coordinate for atom {0}")]
    NonFinite(usize),
    #[error("atom index {index} out of range for {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

/// Species, Cartesian positions and an optional periodic cell.
///
/// Immutable once built; every constructor validates the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicStructure {
    species: Vec<String>,
    positions: Vec<Vector3<f64>>,
    cell: Option<Matrix3<f64>>,
    periodic: [bool; 3],
    /// (cellᵀ)⁻¹, maps Cartesian vectors to fractional coordinates.
    inv_cell_t: Option<Matrix3<f64>>,
}

impl AtomicStructure {
    /// Builds a validated structure. Symbols are case-normalized.
    pub fn new(
        species: Vec<String>,
        positions: Vec<Vector3<f64>>,
        cell: Option<Matrix3<f64>>,
        periodic: [bool; 3],
    ) -> Result<Self, StructureError> {
        if species.len() != positions.len() {
            return Err(StructureError::LengthMismatch { species: species.len(), positions: positions.len() });
        }
        if species.is_empty() {
            return Err(StructureError::Empty);
        }
        let table = default_table();
        let species = species
            .iter()
            .map(|s| {
                let norm = normalize_symbol(s);
                if table.contains(&norm) {
                    Ok(norm)
                } else {
                    Err(StructureError::UnknownSpecies(s.clone()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(StructureError::NonFinite(i));
        }
        let inv_cell_t = match cell {
            Some(c) => {
                let det = c.determinant();
                if det.is_nan() || det.abs() <= SINGULAR_CELL_VOLUME {
                    return Err(StructureError::SingularCell(det.abs()));
                }
                Some(c.transpose().try_inverse().ok_or(StructureError::SingularCell(det.abs()))?)
            }
            None if periodic.iter().any(|&p| p) => return Err(StructureError::PeriodicWithoutCell),
            None => None,
        };
        Ok(Self { species, positions, cell, periodic, inv_cell_t })
    }

    /// A non-periodic structure.
    pub fn molecule(species: Vec<String>, positions: Vec<Vector3<f64>>) -> Result<Self, StructureError> {
        Self::new(species, positions, None, [false; 3])
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

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        self.positions[i]
    }

    /// Lattice vectors as rows.
    pub fn cell(&self) -> Option<&Matrix3<f64>> {
        self.cell.as_ref()
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic.iter().any(|&p| p)
    }

    /// Lattice vector `k` (row `k` of the cell).
    pub fn lattice_vector(&self, k: usize) -> Option<Vector3<f64>> {
        self.cell.map(|c| c.row(k).transpose())
    }

    /// Cartesian translation `n₀a + n₁b + n₂c`.
    pub fn translation(&self, n: [i32; 3]) -> Vector3<f64> {
        match self.cell {
            Some(c) => {
                c.row(0).transpose() * f64::from(n[0])
                    + c.row(1).transpose() * f64::from(n[1])
                    + c.row(2).transpose() * f64::from(n[2])
            }
            None => Vector3::zeros(),
        }
    }

    /// Fractional coordinates of a Cartesian vector; `None` without a cell.
    pub fn to_fractional(&self, v: &Vector3<f64>) -> Option<Vector3<f64>> {
        self.inv_cell_t.map(|m| m * v)
    }

    pub fn fractional_positions(&self) -> Option<Vec<Vector3<f64>>> {
        let m = self.inv_cell_t?;
        Some(self.positions.iter().map(|p| m * p).collect())
    }

    /// Perpendicular distances between opposite cell faces, `V / |b×c|` etc.
    pub fn cell_heights(&self) -> Option<[f64; 3]> {
        let c = self.cell?;
        let (a, b, cc) = (c.row(0).transpose(), c.row(1).transpose(), c.row(2).transpose());
        let volume = c.determinant().abs();
        Some([volume / b.cross(&cc).norm(), volume / cc.cross(&a).norm(), volume / a.cross(&b).norm()])
    }

    /// Minimum-image distance between atoms `i` and `j`.
    ///
    /// For `i == j` only nonzero images count, so a non-periodic structure
    /// yields `f64::INFINITY`.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64, StructureError> {
        let n = self.len();
        for index in [i, j] {
            if index >= n {
                return Err(StructureError::IndexOutOfRange { index, len: n });
            }
        }
        let delta = self.positions[j] - self.positions[i];
        let (Some(cell), Some(inv)) = (self.cell, self.inv_cell_t) else {
            return Ok(if i == j { f64::INFINITY } else { delta.norm() });
        };
        if !self.is_periodic() {
            return Ok(if i == j { f64::INFINITY } else { delta.norm() });
        }

        let mut frac = inv * delta;
        for k in 0..3 {
            if self.periodic[k] {
                frac[k] -= frac[k].round();
            }
        }
        let cell_t = cell.transpose();
        let wrapped = cell_t * frac;
        let range = |k: usize| if self.periodic[k] { -1..=1 } else { 0..=0 };
        let mut best = f64::INFINITY;
        for a in range(0) {
            for b in range(1) {
                for c in range(2) {
                    if i == j && (a, b, c) == (0, 0, 0) {
                        continue;
                    }
                    let shift = cell_t * Vector3::new(f64::from(a), f64::from(b), f64::from(c));
                    best = best.min((wrapped + shift).norm());
                }
            }
        }
        // Self-distance of a wrapped zero vector: every nonzero image is a
        // lattice vector, so `best` is the shortest one in the searched set.
        Ok(best)
    }

    /// Same structure with atom `perm[k]` moved to slot `k`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, StructureError> {
        let species = perm.iter().map(|&p| self.species[p].clone()).collect();
        let positions = perm.iter().map(|&p| self.positions[p]).collect();
        Self::new(species, positions, self.cell, self.periodic)
    }

    /// Same structure with every position shifted by `shift`.
    pub fn translated(&self, shift: Vector3<f64>) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p += shift;
        }
        out
    }
}

fn split_lines(text: &str) -> Vec<&str> {
    text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect()
}

struct Frame<'a> {
    comment: &'a str,
    species: Vec<String>,
    positions: Vec<Vector3<f64>>,
}

fn parse_frame(text: &str) -> Result<Frame<'_>, StructureError> {
    let lines = split_lines(text);
    let count_line = lines.first().copied().unwrap_or("").trim();
    let expected: usize =
        count_line.parse().map_err(|_| StructureError::BadAtomCount { line: 1, found: count_line.to_string() })?;
    let comment = lines.get(1).copied().unwrap_or("");

    let table = default_table();
    let mut species = Vec::with_capacity(expected);
    let mut positions = Vec::with_capacity(expected);
    for (idx, raw) in lines.iter().enumerate().skip(2) {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(StructureError::MissingFields { line: line_no, found: line.to_string() });
        }
        let symbol = normalize_symbol(fields[0]);
        if !table.contains(&symbol) {
            return Err(StructureError::UnknownElement { line: line_no, symbol: fields[0].to_string() });
        }
        let mut xyz = [0.0; 3];
        for (slot, token) in xyz.iter_mut().zip(&fields[1..4]) {
            *slot = token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| StructureError::BadCoordinate { line: line_no, token: token.to_string() })?;
        }
        species.push(symbol);
        positions.push(Vector3::from(xyz));
    }
    if positions.len() != expected {
        return Err(StructureError::AtomCountMismatch { expected, found: positions.len() });
    }
    Ok(Frame { comment, species, positions })
}

/// Parses plain XYZ: atom count, comment, then `Symbol x y z` lines.
///
/// The result is non-periodic regardless of the comment line.
pub fn parse_xyz(text: &str) -> Result<AtomicStructure, StructureError> {
    let frame = parse_frame(text)?;
    AtomicStructure::molecule(frame.species, frame.positions)
}

/// Splits an extended-XYZ comment line into `key=value` pairs.
///
/// Values may be double-quoted. Bare words without `=` are kept with an
/// empty value.
fn comment_pairs(comment: &str) -> Result<Vec<(String, String)>, StructureError> {
    let mut pairs = Vec::new();
    let mut chars = comment.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(c) = chars.next_if(|c| !c.is_whitespace() && *c != '=') {
            key.push(c);
        }
        let mut value = String::new();
        if chars.next_if_eq(&'=').is_some() {
            if chars.next_if_eq(&'"').is_some() {
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(c) => value.push(c),
                        None => return Err(StructureError::UnterminatedQuote),
                    }
                }
            } else {
                while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                    value.push(c);
                }
            }
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn parse_pbc(value: &str) -> Result<[bool; 3], StructureError> {
    let flags: Vec<bool> = value
        .split_whitespace()
        .map(|t| match t {
            "T" | "t" | "True" | "true" | "1" => Ok(true),
            "F" | "f" | "False" | "false" | "0" => Ok(false),
            _ => Err(StructureError::BadPbc(value.to_string())),
        })
        .collect::<Result<_, _>>()?;
    flags.try_into().map_err(|_| StructureError::BadPbc(value.to_string()))
}

/// Parses extended XYZ with `Lattice="ax ay az bx by bz cx cy cz"` and an
/// optional `pbc="T T T"` on the comment line.
///
/// Periodic flags default to all-true when a lattice is given. Without a
/// lattice the structure is non-periodic.
pub fn parse_extxyz(text: &str) -> Result<AtomicStructure, StructureError> {
    let frame = parse_frame(text)?;
    let mut lattice = None;
    let mut pbc = None;
    for (key, value) in comment_pairs(frame.comment)? {
        match key.to_ascii_lowercase().as_str() {
            "lattice" => {
                let numbers = value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| StructureError::LatticeValue(t.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                if numbers.len() != 9 {
                    return Err(StructureError::LatticeLength(numbers.len()));
                }
                lattice = Some(Matrix3::from_row_slice(&numbers));
            }
            "pbc" => pbc = Some(parse_pbc(&value)?),
            _ => {}
        }
    }
    let periodic = match (lattice, pbc) {
        (Some(_), Some(flags)) => flags,
        (Some(_), None) => [true; 3],
        (None, Some(flags)) if flags.iter().any(|&f| f) => return Err(StructureError::PeriodicWithoutCell),
        (None, _) => [false; 3],
    };
    AtomicStructure::new(frame.species, frame.positions, lattice, periodic)
}

/// Parses XYZ or extended XYZ, choosing by the presence of a `Lattice` key.
pub fn parse_structure(text: &str) -> Result<AtomicStructure, StructureError> {
    let comment = split_lines(text).get(1).copied().unwrap_or("");
    if comment.to_ascii_lowercase().contains("lattice=") {
        parse_extxyz(text)
    } else {
        parse_xyz(text)
    }
}

/// Reads and parses a structure file.
pub fn read_structure(path: impl AsRef<Path>) -> Result<AtomicStructure, StructureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| StructureError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_structure(&text)
}

/// Writes XYZ with 8 decimal places. Periodic structures get extended-XYZ
/// `Lattice` and `pbc` keys on the comment line.
pub fn serialize_xyz(s: &AtomicStructure) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", s.len());
    match s.cell() {
        Some(c) => {
            let lattice: Vec<String> = c.transpose().iter().map(|v| format!("{v:.8}")).collect();
            let pbc: Vec<&str> = s.periodic().iter().map(|&p| if p { "T" } else { "F" }).collect();
            let _ = writeln!(out, "Lattice=\"{}\" pbc=\"{}\"", lattice.join(" "), pbc.join(" "));
        }
        None => out.push('\n'),
    }
    for (sym, p) in s.species().iter().zip(s.positions()) {
        let _ = writeln!(out, "{sym} {:.8} {:.8} {:.8}", p.x, p.y, p.z);
    }
    out
}
