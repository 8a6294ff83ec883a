//! Per-element property table backing the element feature descriptors.
//!
//! A default table for Z = 1..=86 is compiled into the crate (see
//! `data/elements.csv` and `data/README.md` for provenance). An override
//! table with the same CSV schema can be loaded from disk.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_TABLE_CSV: &str = include_str!("../data/elements.csv");

/// Header every element table must carry, in this order.
pub const TABLE_HEADER: [&str; 8] =
    ["symbol", "atomic_number", "mass", "block", "group", "row", "electronegativity", "atomic_radius"];

#[derive(Debug, Error)]
pub enum ElementError {
    #[error("element table: {0}")]
    Io(#[from] std::io::Error),
    #[error("element table: malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("element table: header must be `{}`, found `{found}`", TABLE_HEADER.join(","))]
    BadHeader { found: String },
    #[error("element table row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("element table row {row}: duplicate symbol `{symbol}`")]
    DuplicateSymbol { row: usize, symbol: String },
    #[error("element table: atomic numbers must be unique and contiguous from 1, {0}")]
    NonContiguous(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("unknown feature `{0}`; expected one of {names}", names = FEATURE_NAMES.join(", "))]
    UnknownFeature(String),
}

/// Orbital block of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    S,
    P,
    D,
    F,
}

impl Block {
    /// Fixed category order used by encoders.
    pub const ALL: [Block; 4] = [Block::S, Block::P, Block::D, Block::F];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::S => "s",
            Block::P => "p",
            Block::D => "d",
            Block::F => "f",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Block {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "s" | "S" => Ok(Block::S),
            "p" | "P" => Ok(Block::P),
            "d" | "D" => Ok(Block::D),
            "f" | "F" => Ok(Block::F),
            other => Err(format!("bad block token `{other}` (expected s, p, d or f)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementRecord {
    pub symbol: String,
    pub atomic_number: u32,
    /// Standard atomic weight, amu.
    pub mass: f64,
    pub block: Block,
    /// Periodic-table group, 1..=18.
    pub group: u32,
    /// Periodic-table row (period), 1..=7.
    pub row: u32,
    /// Pauling electronegativity.
    pub electronegativity: Option<f64>,
    /// Empirical atomic radius, pm.
    pub atomic_radius: Option<f64>,
}

/// A single feature value read from the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Block(Block),
    Integer(u32),
    Real(f64),
}

impl FeatureValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            FeatureValue::Real(v) => Some(v),
            FeatureValue::Integer(v) => Some(f64::from(v)),
            FeatureValue::Block(_) => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Block(b) => write!(f, "{b}"),
            FeatureValue::Integer(v) => write!(f, "{v}"),
            FeatureValue::Real(v) => write!(f, "{v}"),
        }
    }
}

/// Names of the table columns that can be queried as features.
pub const FEATURE_NAMES: [&str; 7] =
    ["atomic_number", "mass", "block", "group", "row", "electronegativity", "atomic_radius"];

impl ElementRecord {
    /// Value of a named column; `Ok(None)` when the optional cell is empty.
    pub fn feature(&self, name: &str) -> Result<Option<FeatureValue>, ElementError> {
        Ok(match name {
            "atomic_number" => Some(FeatureValue::Integer(self.atomic_number)),
            "mass" => Some(FeatureValue::Real(self.mass)),
            "block" => Some(FeatureValue::Block(self.block)),
            "group" => Some(FeatureValue::Integer(self.group)),
            "row" => Some(FeatureValue::Integer(self.row)),
            "electronegativity" => self.electronegativity.map(FeatureValue::Real),
            "atomic_radius" => self.atomic_radius.map(FeatureValue::Real),
            other => return Err(ElementError::UnknownFeature(other.to_string())),
        })
    }
}

/// Normalizes the case of an element symbol: `"ga"` and `"GA"` become `"Ga"`.
pub fn normalize_symbol(symbol: &str) -> String {
    let mut chars = symbol.trim().chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect(),
        None => String::new(),
    }
}

/// Validated element table, keyed by symbol and ordered by atomic number.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTable {
    records: Vec<ElementRecord>,
    by_symbol: HashMap<String, usize>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    symbol: String,
    atomic_number: String,
    mass: String,
    block: String,
    group: String,
    row: String,
    electronegativity: String,
    atomic_radius: String,
}

fn parse_field<T: FromStr>(row: usize, column: &str, raw: &str) -> Result<T, ElementError> {
    raw.trim().parse().map_err(|_| ElementError::BadRow { row, message: format!("non-numeric {column} `{raw}`") })
}

fn parse_optional(row: usize, column: &str, raw: &str) -> Result<Option<f64>, ElementError> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_field::<f64>(row, column, raw).map(Some)
    }
}

impl ElementTable {
    /// Parses and validates a table from CSV text.
    ///
    /// Row numbers in errors are 1-based file lines (the header is line 1).
    pub fn from_csv_str(text: &str) -> Result<Self, ElementError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.iter().ne(TABLE_HEADER.iter().copied()) {
            return Err(ElementError::BadHeader { found: header.iter().collect::<Vec<_>>().join(",") });
        }

        let mut by_z: BTreeMap<u32, ElementRecord> = BTreeMap::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (idx, result) in reader.deserialize::<CsvRow>().enumerate() {
            let line = idx + 2;
            let raw = result?;
            let symbol = normalize_symbol(&raw.symbol);
            if symbol.is_empty() || !symbol.chars().all(|c| c.is_ascii_alphabetic()) {
                return Err(ElementError::BadRow { row: line, message: format!("bad symbol `{}`", raw.symbol) });
            }
            if seen.insert(symbol.clone(), line).is_some() {
                return Err(ElementError::DuplicateSymbol { row: line, symbol });
            }
            let atomic_number: u32 = parse_field(line, "atomic_number", &raw.atomic_number)?;
            let mass: f64 = parse_field(line, "mass", &raw.mass)?;
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(ElementError::BadRow { row: line, message: format!("mass must be positive, got {mass}") });
            }
            let block: Block = raw.block.parse().map_err(|message| ElementError::BadRow { row: line, message })?;
            let group: u32 = parse_field(line, "group", &raw.group)?;
            if !(1..=18).contains(&group) {
                return Err(ElementError::BadRow { row: line, message: format!("group {group} outside 1..=18") });
            }
            let period: u32 = parse_field(line, "row", &raw.row)?;
            if !(1..=7).contains(&period) {
                return Err(ElementError::BadRow { row: line, message: format!("row {period} outside 1..=7") });
            }
            let record = ElementRecord {
                symbol,
                atomic_number,
                mass,
                block,
                group,
                row: period,
                electronegativity: parse_optional(line, "electronegativity", &raw.electronegativity)?,
                atomic_radius: parse_optional(line, "atomic_radius", &raw.atomic_radius)?,
            };
            if by_z.insert(atomic_number, record).is_some() {
                return Err(ElementError::BadRow {
                    row: line,
                    message: format!("duplicate atomic number {atomic_number}"),
                });
            }
        }

        if by_z.is_empty() {
            return Err(ElementError::NonContiguous("table is empty".into()));
        }
        for (expected, &z) in (1u32..).zip(by_z.keys()) {
            if z != expected {
                return Err(ElementError::NonContiguous(format!("expected atomic number {expected}, found {z}")));
            }
        }

        let records: Vec<ElementRecord> = by_z.into_values().collect();
        let by_symbol = records.iter().enumerate().map(|(i, r)| (r.symbol.clone(), i)).collect();
        Ok(Self { records, by_symbol })
    }

    /// Reads a table from `path`.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ElementError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, symbol: &str) -> Option<&ElementRecord> {
        self.by_symbol.get(symbol).or_else(|| self.by_symbol.get(&normalize_symbol(symbol))).map(|&i| &self.records[i])
    }

    pub fn lookup(&self, symbol: &str) -> Result<&ElementRecord, ElementError> {
        self.get(symbol).ok_or_else(|| ElementError::UnknownElement(symbol.to_string()))
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.get(symbol).is_some()
    }

    /// Records in atomic-number order.
    pub fn records(&self) -> &[ElementRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All non-missing values of a feature, in atomic-number order.
    pub fn feature_values(&self, feature: &str) -> Result<Vec<(String, FeatureValue)>, ElementError> {
        let mut out = Vec::with_capacity(self.records.len());
        for record in &self.records {
            if let Some(value) = record.feature(feature)? {
                out.push((record.symbol.clone(), value));
            }
        }
        Ok(out)
    }
}

/// The bundled table, parsed once.
pub fn default_table() -> &'static ElementTable {
    static TABLE: OnceLock<ElementTable> = OnceLock::new();
    TABLE.get_or_init(|| ElementTable::from_csv_str(DEFAULT_TABLE_CSV).expect("bundled element table is valid"))
}

/// Loads the table at `path`, or the bundled table when `path` is `None`.
pub fn load_table(path: Option<&Path>) -> Result<ElementTable, ElementError> {
    match path {
        Some(p) => ElementTable::from_path(p),
        None => Ok(default_table().clone()),
    }
}

/// Raw CSV text of the bundled table.
pub fn default_table_csv() -> &'static str {
    DEFAULT_TABLE_CSV
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "symbol,atomic_number,mass,block,group,row,electronegativity,atomic_radius";

    #[test]
    fn hydrogen_and_gallium() {
        let t = default_table();
        let h = t.lookup("H").unwrap();
        assert_eq!(h.atomic_number, 1);
        assert_eq!(h.block, Block::S);
        let ga = t.lookup("Ga").unwrap();
        assert_eq!(ga.block, Block::P);
        assert_eq!(ga.group, 13);
        assert_eq!(ga.row, 4);
    }

    #[test]
    fn default_table_spans_h_to_rn() {
        let t = default_table();
        assert_eq!(t.len(), 86);
        assert_eq!(t.records()[85].symbol, "Rn");
    }

    #[test]
    fn lookup_is_case_tolerant() {
        assert_eq!(default_table().lookup("ga").unwrap().symbol, "Ga");
        assert!(matches!(default_table().lookup("Xx"), Err(ElementError::UnknownElement(_))));
    }

    #[test]
    fn block_has_four_categories() {
        let values = default_table().feature_values("block").unwrap();
        let mut blocks: Vec<_> = values
            .iter()
            .map(|(_, v)| match v {
                FeatureValue::Block(b) => *b,
                _ => unreachable!(),
            })
            .collect();
        blocks.sort();
        blocks.dedup();
        assert_eq!(blocks, Block::ALL);
    }

    #[test]
    fn lightest_mass_is_hydrogen() {
        let values = default_table().feature_values("mass").unwrap();
        let (sym, min) =
            values.iter().map(|(s, v)| (s, v.as_f64().unwrap())).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(sym, "H");
        assert_eq!(min, default_table().lookup("H").unwrap().mass);
    }

    #[test]
    fn unknown_feature_is_rejected() {
        assert!(matches!(default_table().feature_values("valence"), Err(ElementError::UnknownFeature(_))));
    }

    #[test]
    fn duplicate_symbol_reports_row() {
        let csv = format!("{HEADER}\nH,1,1.008,s,1,1,2.2,25\nH,2,4.0,s,18,1,,\n");
        match ElementTable::from_csv_str(&csv) {
            Err(ElementError::DuplicateSymbol { row, symbol }) => {
                assert_eq!(row, 3);
                assert_eq!(symbol, "H");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_block_reports_row() {
        let csv = format!("{HEADER}\nH,1,1.008,q,1,1,2.2,25\n");
        match ElementTable::from_csv_str(&csv) {
            Err(ElementError::BadRow { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("block"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_mass_reports_row() {
        let csv = format!("{HEADER}\nH,1,1.008,s,1,1,2.2,25\nHe,2,heavy,s,18,1,,\n");
        match ElementTable::from_csv_str(&csv) {
            Err(ElementError::BadRow { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("mass"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gap_in_atomic_numbers_is_rejected() {
        let csv = format!("{HEADER}\nH,1,1.008,s,1,1,2.2,25\nLi,3,6.94,s,1,2,0.98,145\n");
        assert!(matches!(ElementTable::from_csv_str(&csv), Err(ElementError::NonContiguous(_))));
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = format!("{HEADER}\nH,1,1.008,s,1,1,2.2,25\nHe,2,4.0026,s,18,1,,\n");
        let b = format!("{HEADER}\nHe,2,4.0026,s,18,1,,\nH,1,1.008,s,1,1,2.2,25\n");
        assert_eq!(ElementTable::from_csv_str(&a).unwrap(), ElementTable::from_csv_str(&b).unwrap());
    }

    #[test]
    fn normalize_symbol_cases() {
        assert_eq!(normalize_symbol("ga"), "Ga");
        assert_eq!(normalize_symbol("GA"), "Ga");
        assert_eq!(normalize_symbol(" h "), "H");
    }
}
