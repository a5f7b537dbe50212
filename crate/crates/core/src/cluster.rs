//! Simulated multi-node cluster over independent stores.
//!
//! Placement (BPS) cuts the Hilbert code line into buckets of `bucket_size`
//! consecutive codes and deals the buckets round-robin over the nodes:
//!
//! ```text
//! node = floor(hilbert / bucket_size) mod node_count
//! ```
//!
//! Spatially adjacent tiles in one bucket stay together, while long runs of
//! codes spread evenly. Writes are batched per node (PSS): tiles of the same
//! raster are written in groups of `period_size` and each group is flushed as
//! one segment.
//!
//! On disk a cluster is a directory with `cluster.json` and one store
//! directory per node (`node-000`, `node-001`, ...).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use bytes::Bytes;
use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{KeyRange, TileKey};
use crate::store::{Cell, Store, Table, TableSchema, TILE_FAMILY, TILE_QUALIFIER};

pub const CLUSTER_FILE: &str = "cluster.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub node_count: usize,
    pub bucket_size: u64,
    pub period_size: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { node_count: 4, bucket_size: 64, period_size: 256 }
    }
}

impl ClusterConfig {
    pub fn new(node_count: usize, bucket_size: u64, period_size: usize) -> Result<Self> {
        let cfg = ClusterConfig { node_count, bucket_size, period_size };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 || self.bucket_size == 0 || self.period_size == 0 {
            return Err(Error::domain(format!("cluster parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Node owning `key` under balanced placement.
pub fn assign_node(key: &TileKey, cfg: &ClusterConfig) -> usize {
    node_for_code(u64::from(key.hilbert), cfg)
}

fn node_for_code(code: u64, cfg: &ClusterConfig) -> usize {
    ((code / cfg.bucket_size) % cfg.node_count as u64) as usize
}

/// Nodes holding any code of `range`.
pub fn nodes_for_range(range: &KeyRange, cfg: &ClusterConfig) -> BTreeSet<usize> {
    let codes = range.codes();
    let first = codes.start() / cfg.bucket_size;
    let last = codes.end() / cfg.bucket_size;
    if last - first + 1 >= cfg.node_count as u64 {
        return (0..cfg.node_count).collect();
    }
    (first..=last).map(|b| (b % cfg.node_count as u64) as usize).collect()
}

/// Fraction of `keys` that change node when the node count becomes `new_count`.
pub fn moved_fraction(keys: &[TileKey], cfg: &ClusterConfig, new_count: usize) -> f64 {
    if keys.is_empty() {
        return 0.0;
    }
    let next = ClusterConfig { node_count: new_count.max(1), ..*cfg };
    let moved = keys.iter().filter(|k| assign_node(k, cfg) != assign_node(k, &next)).count();
    moved as f64 / keys.len() as f64
}

/// Per-node tile counts and their balance.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadStats {
    pub counts: Vec<u64>,
    pub bytes: Vec<u64>,
    /// max count / mean count; 1.0 for an empty cluster.
    pub skew: f64,
}

impl LoadStats {
    pub fn from_counts(counts: Vec<u64>, bytes: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let skew = if total == 0 || counts.is_empty() {
            1.0
        } else {
            let mean = total as f64 / counts.len() as f64;
            *counts.iter().max().unwrap() as f64 / mean
        };
        LoadStats { counts, bytes, skew }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeWrite {
    pub tiles: usize,
    pub bytes: u64,
    pub flush_groups: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub per_node: Vec<NodeWrite>,
}

impl IngestReport {
    pub fn tiles(&self) -> usize {
        self.per_node.iter().map(|n| n.tiles).sum()
    }

    pub fn flush_groups(&self) -> usize {
        self.per_node.iter().map(|n| n.flush_groups).sum()
    }
}

/// Cells gathered from several nodes, in key order.
#[derive(Debug, Clone)]
pub struct ScatterScan {
    pub cells: Vec<Cell>,
    pub nodes_touched: usize,
}

#[derive(Debug)]
pub struct Node {
    pub index: usize,
    pub store: Store,
    online: AtomicBool,
}

impl Node {
    pub fn is_online(&self) -> bool {
        self.online.load(Ordering::SeqCst)
    }
}

#[derive(Debug)]
pub struct Cluster {
    root: PathBuf,
    config: ClusterConfig,
    nodes: Vec<Arc<Node>>,
}

fn node_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("node-{index:03}"))
}

impl Cluster {
    /// Creates a new cluster directory; fails if one already exists there.
    pub fn create(root: impl AsRef<Path>, config: ClusterConfig) -> Result<Cluster> {
        config.validate()?;
        let root = root.as_ref().to_owned();
        if root.join(CLUSTER_FILE).exists() {
            return Err(Error::Conflict(format!("cluster already exists at {}", root.display())));
        }
        fs::create_dir_all(&root)?;
        fs::write(root.join(CLUSTER_FILE), serde_json::to_vec_pretty(&config)?)?;
        Self::load(root, config)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Cluster> {
        let root = root.as_ref().to_owned();
        let config: ClusterConfig = serde_json::from_slice(&fs::read(root.join(CLUSTER_FILE))?)?;
        config.validate()?;
        Self::load(root, config)
    }

    fn load(root: PathBuf, config: ClusterConfig) -> Result<Cluster> {
        let nodes = (0..config.node_count)
            .map(|index| {
                let store = Store::open(node_dir(&root, index)).map_err(|e| Error::Node { node: index, source: Box::new(e) })?;
                Ok(Arc::new(Node { index, store, online: AtomicBool::new(true) }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cluster { root, config, nodes })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Arc<Node>] {
        &self.nodes
    }

    /// Simulates a node outage (`false`) or recovery.
    pub fn set_online(&self, node: usize, online: bool) {
        self.nodes[node].online.store(online, Ordering::SeqCst);
    }

    pub fn tile_schema(table: &str) -> TableSchema {
        TableSchema::new(table, &[TILE_FAMILY])
    }

    /// Creates `table` on every node that does not have it yet.
    pub fn ensure_table(&self, table: &str) -> Result<()> {
        for node in &self.nodes {
            node.store
                .ensure_table(Self::tile_schema(table))
                .map_err(|e| Error::Node { node: node.index, source: Box::new(e) })?;
        }
        Ok(())
    }

    /// Places every tile, then writes each node's share in flush groups of
    /// `period_size` tiles of the same raster.
    pub fn ingest_batch(&self, table: &str, tiles: Vec<(TileKey, Bytes)>) -> Result<IngestReport> {
        let mut writer = self.writer(table);
        writer.push(tiles)?;
        writer.finish()
    }

    /// Streaming writer for `table`; see [`BatchWriter`].
    pub fn writer(&self, table: &str) -> BatchWriter<'_> {
        BatchWriter {
            cluster: self,
            table: table.to_owned(),
            pending: vec![BTreeMap::new(); self.nodes.len()],
            report: IngestReport { per_node: vec![NodeWrite::default(); self.nodes.len()] },
        }
    }

    /// Tile counts per node over every tile table.
    pub fn load_stats(&self) -> LoadStats {
        self.load_stats_where(|name| name.starts_with("HRasterDataTable_"))
    }

    /// Tile counts per node for one table.
    pub fn load_stats_for(&self, table: &str) -> LoadStats {
        self.load_stats_where(|name| name == table)
    }

    fn load_stats_where(&self, include: impl Fn(&str) -> bool) -> LoadStats {
        let (counts, bytes) = self
            .nodes
            .iter()
            .map(|node| {
                node.store
                    .table_names()
                    .iter()
                    .filter(|n| include(n))
                    .filter_map(|n| node.store.table(n))
                    .map(|t| t.stats())
                    .fold((0, 0), |(rows, bytes), s| (rows + s.rows, bytes + s.value_bytes))
            })
            .unzip();
        LoadStats::from_counts(counts, bytes)
    }

    /// Scans `ranges` on the nodes that own them and merges in key order.
    pub fn scatter_scan(&self, table: &str, ranges: &[KeyRange]) -> Result<ScatterScan> {
        let mut plan: Vec<Vec<KeyRange>> = vec![Vec::new(); self.nodes.len()];
        for range in ranges {
            for node in nodes_for_range(range, &self.config) {
                plan[node].push(*range);
            }
        }
        let touched: Vec<usize> = (0..plan.len()).filter(|&n| !plan[n].is_empty()).collect();
        let missing: Vec<usize> = touched.iter().copied().filter(|&n| !self.nodes[n].is_online()).collect();
        if !missing.is_empty() {
            return Err(Error::PartialResult { missing_nodes: missing });
        }

        let scan_node = |node: &Node, ranges: &[KeyRange]| -> Result<Vec<Cell>> {
            let Some(t) = node.store.table(table) else { return Ok(Vec::new()) };
            let mut out = Vec::new();
            for r in ranges {
                out.extend(t.scan(&r.start.to_be_bytes(), &r.end.to_be_bytes())?);
            }
            Ok(out)
        };
        let per_node: Vec<Vec<Cell>> = if touched.len() <= 1 {
            touched.iter().map(|&n| scan_node(&self.nodes[n], &plan[n])).collect::<Result<_>>()?
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = touched
                    .iter()
                    .map(|&n| {
                        let node = &self.nodes[n];
                        let ranges = &plan[n];
                        scope.spawn(move || {
                            scan_node(node, ranges).map_err(|e| Error::Node { node: n, source: Box::new(e) })
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("reader thread panicked")).collect::<Result<_>>()
            })?
        };
        let cells = per_node
            .into_iter()
            .kmerge_by(|a, b| (&a.row_key, &a.family, &a.qualifier) < (&b.row_key, &b.family, &b.qualifier))
            .collect();
        Ok(ScatterScan { cells, nodes_touched: touched.len() })
    }

    /// Every tile cell in the cluster, for content comparisons.
    pub fn full_scan(&self, table: &str) -> Result<Vec<Cell>> {
        let all = KeyRange { start: 0, end: u64::MAX };
        let mut cells = Vec::new();
        for node in &self.nodes {
            if let Some(t) = node.store.table(table) {
                cells.extend(t.scan(&all.start.to_be_bytes(), &all.end.to_be_bytes())?);
            }
        }
        cells.sort_by(|a, b| (&a.row_key, &a.family, &a.qualifier).cmp(&(&b.row_key, &b.family, &b.qualifier)));
        Ok(cells)
    }
}

type Batch = Vec<(TileKey, Bytes)>;

/// Buffers placed tiles per node and raster. Whenever a buffer reaches
/// `period_size` tiles it is written and flushed as one segment; nodes with a
/// full group write concurrently. [`BatchWriter::finish`] writes the tails.
pub struct BatchWriter<'c> {
    cluster: &'c Cluster,
    table: String,
    pending: Vec<BTreeMap<u16, Batch>>,
    report: IngestReport,
}

impl BatchWriter<'_> {
    pub fn push(&mut self, tiles: impl IntoIterator<Item = (TileKey, Bytes)>) -> Result<()> {
        let cfg = self.cluster.config;
        for (key, value) in tiles {
            self.pending[assign_node(&key, &cfg)].entry(key.raster_id).or_default().push((key, value));
        }
        self.drain(false)
    }

    pub fn finish(mut self) -> Result<IngestReport> {
        self.drain(true)?;
        Ok(self.report)
    }

    fn drain(&mut self, all: bool) -> Result<()> {
        let period = self.cluster.config.period_size;
        let mut work: Vec<(usize, Vec<Batch>)> = Vec::new();
        for (node, buffers) in self.pending.iter_mut().enumerate() {
            let mut groups = Vec::new();
            for buffer in buffers.values_mut() {
                while buffer.len() >= period {
                    let rest = buffer.split_off(period);
                    groups.push(std::mem::replace(buffer, rest));
                }
                if all && !buffer.is_empty() {
                    groups.push(std::mem::take(buffer));
                }
            }
            buffers.retain(|_, b| !b.is_empty());
            if !groups.is_empty() {
                work.push((node, groups));
            }
        }

        let cluster = self.cluster;
        let table = self.table.as_str();
        let write = |node: usize, groups: Vec<Vec<(TileKey, Bytes)>>| -> Result<NodeWrite> {
            let n = &cluster.nodes[node];
            let fail = |e: Error| Error::Node { node, source: Box::new(e) };
            if !n.is_online() {
                return Err(fail(Error::NotFound("node offline".into())));
            }
            let target = n.store.ensure_table(Cluster::tile_schema(table)).map_err(fail)?;
            let mut report = NodeWrite::default();
            for group in groups {
                write_group(&target, &group).map_err(fail)?;
                report.tiles += group.len();
                report.bytes += group.iter().map(|(_, v)| v.len() as u64).sum::<u64>();
                report.flush_groups += 1;
            }
            Ok(report)
        };
        let results: Vec<(usize, Result<NodeWrite>)> = if work.len() <= 1 {
            work.into_iter().map(|(node, groups)| (node, write(node, groups))).collect()
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = work
                    .into_iter()
                    .map(|(node, groups)| (node, scope.spawn(move || write(node, groups))))
                    .collect();
                handles.into_iter().map(|(node, h)| (node, h.join().expect("writer thread panicked"))).collect()
            })
        };
        for (node, result) in results {
            let done = result?;
            let total = &mut self.report.per_node[node];
            total.tiles += done.tiles;
            total.bytes += done.bytes;
            total.flush_groups += done.flush_groups;
        }
        Ok(())
    }
}

fn write_group(table: &Table, group: &[(TileKey, Bytes)]) -> Result<()> {
    let keys: Vec<[u8; 8]> = group.iter().map(|(k, _)| k.encode()).collect();
    table.put_batch(
        keys.iter()
            .zip(group)
            .map(|(k, (_, v))| (&k[..], TILE_FAMILY, TILE_QUALIFIER, v.clone())),
    )?;
    table.flush()?;
    Ok(())
}
