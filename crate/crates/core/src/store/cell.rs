use std::cmp::Ordering;

use bytes::Bytes;

/// Full coordinate of one stored version.
///
/// Ordered by row, family and qualifier ascending, then newest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub row: Bytes,
    pub family: String,
    pub qualifier: String,
    pub timestamp: u64,
}

impl CellKey {
    pub fn new(row: impl Into<Bytes>, family: &str, qualifier: &str, timestamp: u64) -> Self {
        CellKey { row: row.into(), family: family.to_owned(), qualifier: qualifier.to_owned(), timestamp }
    }

    /// Smallest key of a row.
    pub(crate) fn row_start(row: &[u8]) -> Self {
        CellKey {
            row: Bytes::copy_from_slice(row),
            family: String::new(),
            qualifier: String::new(),
            timestamp: u64::MAX,
        }
    }

    pub fn same_column(&self, other: &CellKey) -> bool {
        self.row == other.row && self.family == other.family && self.qualifier == other.qualifier
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.row
            .cmp(&other.row)
            .then_with(|| self.family.cmp(&other.family))
            .then_with(|| self.qualifier.cmp(&other.qualifier))
            .then_with(|| other.timestamp.cmp(&self.timestamp))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A versioned value as returned by reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub row_key: Bytes,
    pub family: String,
    pub qualifier: String,
    pub timestamp: u64,
    pub value: Bytes,
}

impl Cell {
    pub(crate) fn from_parts(key: CellKey, value: Bytes) -> Self {
        Cell {
            row_key: key.row,
            family: key.family,
            qualifier: key.qualifier,
            timestamp: key.timestamp,
            value,
        }
    }
}
