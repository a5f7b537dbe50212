//! Single-node sorted table store.
//!
//! A [`Store`] is a directory holding one subdirectory per table. Each table
//! directory contains its `schema.json` descriptor and numbered immutable
//! segment files (`seg-00000001.sst`, ...). Writes land in an in-memory
//! sorted run until [`Table::flush`] persists it as a new segment; reads
//! merge the run with every segment and the newest timestamp wins.
//!
//! Timestamps are logical counters assigned by the table. There are no
//! deletes and no compaction.

mod cell;
mod segment;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;

pub use cell::{Cell, CellKey};
pub use segment::{Segment, SEGMENT_MAGIC};
pub use table::{FlushInfo, Table, TableSchema, TableStats, SCHEMA_FILE};

use crate::error::{Error, Result};

/// Table holding one unified metadata row per raster.
pub const META_TABLE: &str = "HRasterMetaDataInfoTable";
/// Family of the metadata table holding unified record fields.
pub const META_FAMILY: &str = "m";
/// Family of the metadata table holding tiling layout.
pub const LAYOUT_FAMILY: &str = "r";
/// Family of the per-raster tile tables.
pub const TILE_FAMILY: &str = "t";
pub const TILE_QUALIFIER: &str = "tile";

/// Name of the tile table of raster `raster_id`.
pub fn data_table_name(raster_id: u16) -> String {
    format!("HRasterDataTable_{raster_id:04}")
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    tables: RwLock<BTreeMap<String, Arc<Table>>>,
}

impl Store {
    /// Opens the store at `root`, creating the directory when missing and
    /// loading (and verifying) every table found there.
    pub fn open(root: impl AsRef<Path>) -> Result<Store> {
        let root = root.as_ref().to_owned();
        fs::create_dir_all(&root)?;
        let mut tables = BTreeMap::new();
        for entry in fs::read_dir(&root)? {
            let path = entry?.path();
            if path.join(SCHEMA_FILE).is_file() {
                let table = Table::open(&path)?;
                tables.insert(table.name().to_owned(), Arc::new(table));
            }
        }
        Ok(Store { root, tables: RwLock::new(tables) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create_table(&self, schema: TableSchema) -> Result<Arc<Table>> {
        schema.validate()?;
        let mut tables = self.tables.write();
        if tables.contains_key(&schema.name) {
            return Err(Error::Conflict(format!("table {} already exists", schema.name)));
        }
        let dir = self.root.join(&schema.name);
        let name = schema.name.clone();
        let table = Arc::new(Table::create(&dir, schema)?);
        tables.insert(name, table.clone());
        Ok(table)
    }

    /// Returns the named table, creating it from `schema` when absent.
    pub fn ensure_table(&self, schema: TableSchema) -> Result<Arc<Table>> {
        if let Some(t) = self.table(&schema.name) {
            return Ok(t);
        }
        match self.create_table(schema.clone()) {
            Err(Error::Conflict(_)) => self.table(&schema.name).ok_or(Error::NotFound(schema.name)),
            other => other,
        }
    }

    pub fn table(&self, name: &str) -> Option<Arc<Table>> {
        self.tables.read().get(name).cloned()
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().keys().cloned().collect()
    }

    /// Clean shutdown: flushes every memtable so reopening sees all writes.
    pub fn close(self) -> Result<()> {
        self.flush_all().map(drop)
    }

    /// Flushes every table; returns the number of segments written.
    pub fn flush_all(&self) -> Result<usize> {
        let tables: Vec<Arc<Table>> = self.tables.read().values().cloned().collect();
        let mut written = 0;
        for t in tables {
            written += usize::from(t.flush()?.is_some());
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bytes::Bytes;

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        (dir, store)
    }

    #[test]
    fn create_table_rules() {
        let (_d, s) = store();
        let t = s.create_table(TableSchema::new(data_table_name(1), &[TILE_FAMILY])).unwrap();
        assert_eq!(t.name(), "HRasterDataTable_0001");
        assert!(t.scan(&[0], &[0xff]).unwrap().is_empty());
        assert!(matches!(s.create_table(TableSchema::new("empty", &[])), Err(Error::Schema(_))));
        assert!(matches!(
            s.create_table(TableSchema::new(data_table_name(1), &[TILE_FAMILY])),
            Err(Error::Conflict(_))
        ));
        assert!(s.create_table(TableSchema::new("dup", &["a", "a"])).is_err());
        assert!(s.create_table(TableSchema::new("v0", &["a"]).with_max_versions(0)).is_err());
        assert!(s.create_table(TableSchema::new("../escape", &["a"])).is_err());
    }

    #[test]
    fn put_get_and_versions() {
        let (_d, s) = store();
        let t = s.create_table(TableSchema::new("t1", &["t"])).unwrap();
        t.put(b"k", "t", "a", Bytes::from_static(b"1")).unwrap();
        assert_eq!(t.get(b"k").unwrap()[0].value, Bytes::from_static(b"1"));
        t.put(b"k", "t", "a", Bytes::from_static(b"2")).unwrap();
        let row = t.get(b"k").unwrap();
        assert_eq!(row.len(), 1);
        assert_eq!(row[0].value, Bytes::from_static(b"2"));
        assert_eq!(t.versions(b"k", "t", "a").unwrap().len(), 1);
        t.put(b"k", "t", "b", Bytes::from_static(b"3")).unwrap();
        let row = t.get(b"k").unwrap();
        assert_eq!(row.iter().map(|c| c.qualifier.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(t.get(b"absent").unwrap().is_empty());
        assert!(matches!(t.put(b"k", "x", "a", Bytes::new()), Err(Error::Schema(_))));
        assert!(t.put(b"", "t", "a", Bytes::new()).is_err());
    }

    #[test]
    fn timestamps_increase() {
        let (_d, s) = store();
        let t = s.create_table(TableSchema::new("t1", &["t"])).unwrap();
        let a = t.put(b"k", "t", "a", Bytes::new()).unwrap();
        let b = t.put(b"k", "t", "a", Bytes::new()).unwrap();
        assert!(b > a);
    }

    #[test]
    fn version_bound_across_flushes() {
        let (_d, s) = store();
        let t = s.create_table(TableSchema::new("t1", &["t"]).with_max_versions(2)).unwrap();
        for v in 0u8..5 {
            t.put(b"k", "t", "q", vec![v]).unwrap();
            if v % 2 == 0 {
                t.flush().unwrap();
            }
        }
        let versions = t.versions(b"k", "t", "q").unwrap();
        assert_eq!(versions.iter().map(|(_, v)| v[0]).collect::<Vec<_>>(), vec![4, 3]);
        assert!(versions[0].0 > versions[1].0);
    }

    #[test]
    fn scan_bounds() {
        let (_d, s) = store();
        let t = s.create_table(TableSchema::new("t1", &["t"])).unwrap();
        for k in [1u8, 3, 5, 7] {
            t.put(&[k], "t", "q", vec![k]).unwrap();
        }
        let rows = |a: u8, b: u8| -> Vec<u8> { t.scan(&[a], &[b]).unwrap().iter().map(|c| c.row_key[0]).collect() };
        assert_eq!(rows(0, 9), vec![1, 3, 5, 7]);
        assert_eq!(rows(3, 3), vec![3]);
        assert!(rows(8, 9).is_empty());
        assert!(matches!(t.scan(&[5], &[1]), Err(Error::Domain(_))));
    }

    #[test]
    fn flush_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = Store::open(dir.path()).unwrap();
            let t = s.create_table(TableSchema::new("t1", &["t"])).unwrap();
            assert!(t.flush().unwrap().is_none());
            t.put(b"a", "t", "q", Bytes::from_static(b"old")).unwrap();
            t.put(b"b", "t", "q", Bytes::from_static(b"b")).unwrap();
            t.flush().unwrap().unwrap();
            t.put(b"a", "t", "q", Bytes::from_static(b"new")).unwrap();
            t.flush().unwrap().unwrap();
            assert_eq!(t.segment_count(), 2);
        }
        let s = Store::open(dir.path()).unwrap();
        let t = s.table("t1").unwrap();
        let cells = t.scan(b"a", b"z").unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].value, Bytes::from_static(b"new"));
        assert_eq!(cells[1].value, Bytes::from_static(b"b"));
        let ts = t.put(b"c", "t", "q", Bytes::new()).unwrap();
        assert!(ts > cells[0].timestamp);
        assert_eq!(t.stats().rows, 3);
    }

    #[test]
    fn reopen_reports_corrupt_segment() {
        let dir = tempfile::tempdir().unwrap();
        let seg_path;
        {
            let s = Store::open(dir.path()).unwrap();
            let t = s.create_table(TableSchema::new("t1", &["t"])).unwrap();
            t.put(b"a", "t", "q", vec![7u8; 100]).unwrap();
            seg_path = t.flush().unwrap().unwrap().path;
        }
        let mut raw = fs::read(&seg_path).unwrap();
        raw[40] ^= 1;
        fs::write(&seg_path, raw).unwrap();
        match Store::open(dir.path()) {
            Err(Error::Integrity { path, .. }) => assert_eq!(path, seg_path),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }
}
