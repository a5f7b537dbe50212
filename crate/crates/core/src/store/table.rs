use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bytes::Bytes;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::cell::{Cell, CellKey};
use super::segment::{Segment, ValueRef};
use crate::error::{Error, Result};

pub const SCHEMA_FILE: &str = "schema.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub families: Vec<String>,
    pub max_versions: u32,
}

impl TableSchema {
    pub fn new(name: impl Into<String>, families: &[&str]) -> Self {
        TableSchema {
            name: name.into(),
            families: families.iter().map(|f| f.to_string()).collect(),
            max_versions: 1,
        }
    }

    pub fn with_max_versions(mut self, max_versions: u32) -> Self {
        self.max_versions = max_versions;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let name_ok = !self.name.is_empty()
            && self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !name_ok {
            return Err(Error::Schema(format!("invalid table name {:?}", self.name)));
        }
        if self.families.is_empty() {
            return Err(Error::Schema(format!("table {} declares no column family", self.name)));
        }
        let mut sorted = self.families.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.families.len() || sorted.iter().any(|f| f.is_empty()) {
            return Err(Error::Schema(format!("families of {} must be unique and non-empty", self.name)));
        }
        if self.max_versions == 0 {
            return Err(Error::Schema("max_versions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of a flush that wrote a segment.
#[derive(Debug, Clone)]
pub struct FlushInfo {
    pub path: PathBuf,
    pub cells: usize,
    pub bytes: u64,
}

/// Live rows and latest-version value bytes of a table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TableStats {
    pub rows: u64,
    pub value_bytes: u64,
    pub segments: usize,
}

#[derive(Debug)]
struct TableState {
    memtable: BTreeMap<CellKey, Bytes>,
    segments: Vec<Arc<Segment>>,
    next_timestamp: u64,
    next_segment: u64,
}

/// One table: a sorted in-memory run over zero or more flushed segments.
///
/// A single writer and any number of readers may use a table concurrently.
/// Reads hold the shared lock for their whole duration, so each sees one
/// snapshot; flush holds the exclusive lock.
#[derive(Debug)]
pub struct Table {
    schema: TableSchema,
    dir: PathBuf,
    state: RwLock<TableState>,
}

enum Source<'a> {
    Memory(Bytes),
    Segment(ValueRef<'a>),
}

impl Source<'_> {
    fn load(&self) -> Result<Bytes> {
        match self {
            Source::Memory(b) => Ok(b.clone()),
            Source::Segment(v) => v.load(),
        }
    }

    fn len(&self) -> u64 {
        match self {
            Source::Memory(b) => b.len() as u64,
            Source::Segment(v) => u64::from(v.len()),
        }
    }
}

impl Table {
    pub(crate) fn create(dir: &Path, schema: TableSchema) -> Result<Table> {
        schema.validate()?;
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SCHEMA_FILE), serde_json::to_vec_pretty(&schema)?)?;
        Ok(Table {
            schema,
            dir: dir.to_owned(),
            state: RwLock::new(TableState {
                memtable: BTreeMap::new(),
                segments: Vec::new(),
                next_timestamp: 1,
                next_segment: 1,
            }),
        })
    }

    pub(crate) fn open(dir: &Path) -> Result<Table> {
        let schema: TableSchema = serde_json::from_slice(&fs::read(dir.join(SCHEMA_FILE))?)?;
        schema.validate()?;
        let mut numbered = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let id = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("seg-"))
                .and_then(|n| n.strip_suffix(".sst"))
                .and_then(|n| n.parse::<u64>().ok());
            if let Some(id) = id {
                numbered.push((id, path));
            }
        }
        numbered.sort();
        let mut segments = Vec::with_capacity(numbered.len());
        for (_, path) in &numbered {
            segments.push(Arc::new(Segment::open(path)?));
        }
        let next_timestamp = segments.iter().map(|s| s.max_timestamp()).max().unwrap_or(0) + 1;
        let next_segment = numbered.last().map_or(1, |(id, _)| id + 1);
        Ok(Table {
            schema,
            dir: dir.to_owned(),
            state: RwLock::new(TableState { memtable: BTreeMap::new(), segments, next_timestamp, next_segment }),
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn check_family(&self, family: &str) -> Result<()> {
        if self.schema.families.iter().any(|f| f == family) {
            Ok(())
        } else {
            Err(Error::Schema(format!("family {family:?} not declared on {}", self.schema.name)))
        }
    }

    /// Writes one cell and returns its timestamp.
    pub fn put(&self, row: &[u8], family: &str, qualifier: &str, value: impl Into<Bytes>) -> Result<u64> {
        let mut ts = 0;
        self.put_many(std::iter::once((row, family, qualifier, value.into())), |t| ts = t)?;
        Ok(ts)
    }

    /// Writes a batch of cells under one lock acquisition.
    pub fn put_batch<'a, I>(&self, cells: I) -> Result<usize>
    where
        I: IntoIterator<Item = (&'a [u8], &'a str, &'a str, Bytes)>,
    {
        let mut n = 0;
        self.put_many(cells, |_| n += 1)?;
        Ok(n)
    }

    fn put_many<'a, I, F>(&self, cells: I, mut on_put: F) -> Result<()>
    where
        I: IntoIterator<Item = (&'a [u8], &'a str, &'a str, Bytes)>,
        F: FnMut(u64),
    {
        let mut state = self.state.write();
        for (row, family, qualifier, value) in cells {
            if row.is_empty() {
                return Err(Error::domain("row key must not be empty"));
            }
            self.check_family(family)?;
            let timestamp = state.next_timestamp;
            state.next_timestamp += 1;
            let key = CellKey::new(Bytes::copy_from_slice(row), family, qualifier, timestamp);
            let column_start = CellKey { timestamp: u64::MAX, ..key.clone() };
            state.memtable.insert(key.clone(), value);
            let stale: Vec<CellKey> = state
                .memtable
                .range(column_start..)
                .take_while(|(k, _)| k.same_column(&key))
                .skip(self.schema.max_versions as usize)
                .map(|(k, _)| k.clone())
                .collect();
            for k in stale {
                state.memtable.remove(&k);
            }
            on_put(timestamp);
        }
        Ok(())
    }

    /// Latest version of every column of `row`.
    pub fn get(&self, row: &[u8]) -> Result<Vec<Cell>> {
        self.scan(row, row)
    }

    /// Latest-version cells of rows in `[start, end]`, in key order.
    pub fn scan(&self, start: &[u8], end: &[u8]) -> Result<Vec<Cell>> {
        if start > end {
            return Err(Error::domain("scan start after end"));
        }
        let state = self.state.read();
        let latest = Self::latest(&state, start, Some(end));
        latest
            .into_iter()
            .map(|(key, source)| Ok(Cell::from_parts(key.clone(), source.load()?)))
            .collect()
    }

    /// Up to `max_versions` retained values of one column, newest first.
    pub fn versions(&self, row: &[u8], family: &str, qualifier: &str) -> Result<Vec<(u64, Bytes)>> {
        let state = self.state.read();
        let mut all = Self::candidates(&state, row, Some(row));
        all.retain(|(k, _)| k.family == family && k.qualifier == qualifier);
        all.sort_by(|a, b| a.0.cmp(b.0));
        all.into_iter()
            .take(self.schema.max_versions as usize)
            .map(|(k, s)| Ok((k.timestamp, s.load()?)))
            .collect()
    }

    /// Live row count and latest-value bytes, computed from keys only.
    pub fn stats(&self) -> TableStats {
        let state = self.state.read();
        let latest = Self::latest(&state, &[], None);
        let mut rows = 0u64;
        let mut previous: Option<&Bytes> = None;
        let mut value_bytes = 0u64;
        for (key, source) in &latest {
            if previous != Some(&key.row) {
                rows += 1;
                previous = Some(&key.row);
            }
            value_bytes += source.len();
        }
        TableStats { rows, value_bytes, segments: state.segments.len() }
    }

    pub fn segment_count(&self) -> usize {
        self.state.read().segments.len()
    }

    pub fn memtable_len(&self) -> usize {
        self.state.read().memtable.len()
    }

    /// Persists the in-memory run as a new segment; no-op when empty.
    pub fn flush(&self) -> Result<Option<FlushInfo>> {
        let mut state = self.state.write();
        if state.memtable.is_empty() {
            return Ok(None);
        }
        let path = self.dir.join(format!("seg-{:08}.sst", state.next_segment));
        let Some(segment) = Segment::write(&path, state.memtable.iter())? else {
            return Ok(None);
        };
        let info = FlushInfo { path, cells: segment.cell_count(), bytes: segment.file_bytes() };
        state.next_segment += 1;
        state.segments.push(Arc::new(segment));
        state.memtable.clear();
        Ok(Some(info))
    }

    fn candidates<'s>(state: &'s TableState, start: &[u8], end: Option<&'s [u8]>) -> Vec<(&'s CellKey, Source<'s>)> {
        let lo = CellKey::row_start(start);
        let in_range = |k: &CellKey| end.is_none_or(|e| &k.row[..] <= e);
        let mut out: Vec<(&CellKey, Source<'_>)> = state
            .memtable
            .range(lo..)
            .take_while(|(k, _)| in_range(k))
            .map(|(k, v)| (k, Source::Memory(v.clone())))
            .collect();
        for segment in &state.segments {
            out.extend(segment.range(start, end).map(|(k, v)| (k, Source::Segment(v))));
        }
        out
    }

    // Newest version per column wins; timestamps are unique per table.
    fn latest<'s>(state: &'s TableState, start: &[u8], end: Option<&'s [u8]>) -> Vec<(&'s CellKey, Source<'s>)> {
        let mut all = Self::candidates(state, start, end);
        if !state.segments.is_empty() {
            all.sort_by(|a, b| a.0.cmp(b.0));
        }
        all.dedup_by(|later, earlier| later.0.same_column(earlier.0));
        all
    }
}
