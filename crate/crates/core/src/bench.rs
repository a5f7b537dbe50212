//! Benchmark harnesses.
//!
//! Experiment A sweeps tile size against data size and times pyramid
//! construction plus storage ("slice") and tile retrieval. Experiment B times
//! ingestion against the simulated node count and data size, for the tile
//! store and the unindexed baseline, and checks both answer queries alike.
//!
//! Inputs are synthetic 4-band images of the requested byte size. Every
//! measurement is repeated `runs` times on fresh stores and reported as the
//! median in milliseconds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::baseline::BaselineStore;
use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::ingest::{plan_layout, pyramid_cells, Engine, IngestOptions};
use crate::metadata::UnifiedMetadata;
use crate::query::{RasterLayout, TileQuery};
use crate::raster::{RasterImage, ALLOWED_TILE_SIZES};
use crate::raster_file::{gen_synthetic, synthetic_name};
use crate::{GeoExtent, GeoPoint};

pub const BANDS: u32 = 4;
pub const MIB: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Tile,
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub experiment: &'static str,
    pub tile_size: u32,
    pub data_size_bytes: u64,
    pub node_count: Option<usize>,
    pub store: Option<StoreKind>,
    pub metric: &'static str,
    /// One value per run, in run order.
    pub samples_ms: Vec<f64>,
}

impl BenchRecord {
    pub fn median_ms(&self) -> f64 {
        median(&self.samples_ms)
    }

    pub fn runs(&self) -> usize {
        self.samples_ms.len()
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Width and height of a `BANDS`-band image of about `bytes` bytes; the
/// width is a power of two so the image center falls on a tile corner.
pub fn synthetic_dims(bytes: u64) -> (u32, u32) {
    let pixels = (bytes / u64::from(BANDS)).max(1);
    let width = 1u64 << ((pixels as f64).sqrt().log2().ceil() as u32);
    let height = (pixels / width).max(1);
    (width as u32, height as u32)
}

fn bench_record(image: &RasterImage) -> UnifiedMetadata {
    let mut m = UnifiedMetadata::empty(chrono::DateTime::UNIX_EPOCH);
    m.satellite_id = "SYN".into();
    m.sensor_id = "GEN".into();
    let e = image.extent;
    (m.top_left_lat, m.top_left_lon) = (e.north, e.west);
    (m.top_right_lat, m.top_right_lon) = (e.north, e.east);
    (m.bottom_right_lat, m.bottom_right_lon) = (e.south, e.east);
    (m.bottom_left_lat, m.bottom_left_lon) = (e.south, e.west);
    m
}

/// Two-by-two pixel box around the image center at level 0.
pub fn center_bbox(layout: &RasterLayout) -> GeoExtent {
    let e = &layout.extent;
    let (cx, cy) = ((e.west + e.east) / 2.0, (e.south + e.north) / 2.0);
    let (dx, dy) = (e.width() / f64::from(layout.width), e.height() / f64::from(layout.height));
    GeoExtent { west: cx - dx / 2.0, east: cx + dx / 2.0, south: cy - dy / 2.0, north: cy + dy / 2.0 }
}

pub fn center_point(layout: &RasterLayout) -> GeoPoint {
    let e = &layout.extent;
    GeoPoint { lon: (e.west + e.east) / 2.0, lat: (e.south + e.north) / 2.0 }
}

/// Milliseconds per call, repeating cheap calls until 20 ms have passed.
fn time_per_call(mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    const BUDGET_MS: f64 = 20.0;
    const MAX_CALLS: u32 = 1000;
    let started = Instant::now();
    let mut calls = 0u32;
    loop {
        f()?;
        calls += 1;
        let spent = started.elapsed().as_secs_f64() * 1e3;
        if spent >= BUDGET_MS || calls >= MAX_CALLS {
            return Ok(spent / f64::from(calls));
        }
    }
}

fn elapsed_ms(started: Instant) -> f64 {
    started.elapsed().as_secs_f64() * 1e3
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(parent: &Path, label: &str) -> Result<Scratch> {
        let dir = parent.join(label);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Scratch(dir))
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn check_common(tile_sizes: &[u32], data_sizes: &[u64], runs: usize) -> Result<()> {
    if runs == 0 || data_sizes.is_empty() || data_sizes.contains(&0) || tile_sizes.is_empty() {
        return Err(Error::domain("benchmarks need at least one run, data size and tile size"));
    }
    if let Some(ts) = tile_sizes.iter().find(|t| !ALLOWED_TILE_SIZES.contains(t)) {
        return Err(Error::domain(format!("tile size {ts} not one of {ALLOWED_TILE_SIZES:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TileSizeBench {
    pub tile_sizes: Vec<u32>,
    pub data_sizes_bytes: Vec<u64>,
    pub runs: usize,
    pub seed: u64,
    pub work_dir: PathBuf,
}

impl TileSizeBench {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        TileSizeBench {
            tile_sizes: ALLOWED_TILE_SIZES.to_vec(),
            data_sizes_bytes: vec![64 * MIB, 256 * MIB, 512 * MIB],
            runs: 5,
            seed: 7,
            work_dir: work_dir.into(),
        }
    }
}

/// Experiment A: slice time and bbox/point response time per tile size and
/// data size.
pub fn bench_tile_size(cfg: &TileSizeBench) -> Result<Vec<BenchRecord>> {
    check_common(&cfg.tile_sizes, &cfg.data_sizes_bytes, cfg.runs)?;
    let mut records = Vec::new();
    for &size in &cfg.data_sizes_bytes {
        let (w, h) = synthetic_dims(size);
        let image = gen_synthetic(w, h, BANDS, cfg.seed)?;
        let data_size_bytes = u64::from(w) * u64::from(h) * u64::from(BANDS);
        for &ts in &cfg.tile_sizes {
            let mut slice = Vec::new();
            let mut bbox = Vec::new();
            let mut point = Vec::new();
            for run in 0..cfg.runs {
                let scratch = Scratch::new(&cfg.work_dir, &format!("a-{size}-{ts}-{run}"))?;
                let engine = Engine::create(&scratch.0, ClusterConfig::default())?;
                let input = image.clone();
                let opts = IngestOptions { tile_size: ts, ..IngestOptions::default() };
                let started = Instant::now();
                let out = engine.ingest_image(input, &synthetic_name(w, h, BANDS, cfg.seed), bench_record(&image), opts)?;
                slice.push(elapsed_ms(started));

                let layout = out.layout;
                let q = TileQuery { raster_id: layout.raster_id, band: 0, level: 0, extent: center_bbox(&layout) };
                bbox.push(time_per_call(|| engine.query_bbox(&q).map(|_| ()))?);
                let p = center_point(&layout);
                point.push(time_per_call(|| engine.query_point(layout.raster_id, 0, 0, p).map(|_| ()))?);
            }
            log::info!("A size={data_size_bytes} ts={ts}: slice {:.1} ms, bbox {:.3} ms", median(&slice), median(&bbox));
            let rec = |metric, samples_ms| BenchRecord {
                experiment: "A",
                tile_size: ts,
                data_size_bytes,
                node_count: None,
                store: None,
                metric,
                samples_ms,
            };
            records.push(rec("slice_time", slice));
            records.push(rec("bbox_response_time", bbox));
            records.push(rec("point_response_time", point));
        }
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct ScalingBench {
    /// Node counts for the ingestion sweep.
    pub node_counts: Vec<usize>,
    /// Data size of the node sweep.
    pub scaling_size_bytes: u64,
    /// Data sizes of the write-time sweep.
    pub data_sizes_bytes: Vec<u64>,
    /// Node count of the write-time sweep.
    pub fixed_nodes: usize,
    pub tile_size: u32,
    pub runs: usize,
    pub seed: u64,
    pub work_dir: PathBuf,
}

impl ScalingBench {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        ScalingBench {
            node_counts: vec![1, 2, 4, 8, 12],
            scaling_size_bytes: 256 * MIB,
            data_sizes_bytes: vec![64 * MIB, 256 * MIB, 512 * MIB],
            fixed_nodes: 4,
            tile_size: 256,
            runs: 5,
            seed: 11,
            work_dir: work_dir.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalingOutcome {
    pub records: Vec<BenchRecord>,
    /// Queries whose tile sets differed between the two stores.
    pub mismatches: Vec<String>,
    /// Queries compared between the two stores.
    pub compared: usize,
    /// Tile-count skew per node count of the node sweep.
    pub skews: Vec<(usize, f64)>,
}

fn ingest_baseline(dir: &Path, shards: usize, image: RasterImage, layout: &RasterLayout) -> Result<BaselineStore> {
    let store = BaselineStore::open(dir, shards)?;
    pyramid_cells(image, layout, |batch| store.append(batch))?;
    Ok(store)
}

/// Queries compared between stores: the center box, the full extent at the
/// top level, and a quarter of the image at level 0.
fn parity_queries(layout: &RasterLayout) -> Vec<TileQuery> {
    let e = layout.extent;
    let quarter = GeoExtent {
        west: e.west + e.width() * 0.3,
        east: e.west + e.width() * 0.55,
        south: e.south + e.height() * 0.2,
        north: e.south + e.height() * 0.45,
    };
    let top = layout.level_count - 1;
    [(0, center_bbox(layout)), (top, e), (0, quarter), (1.min(top), quarter)]
        .into_iter()
        .map(|(level, extent)| TileQuery { raster_id: layout.raster_id, band: 1 % layout.band_count, level, extent })
        .collect()
}

/// Experiment B: ingestion wall time per node count, write time per data
/// size, bbox latency and result parity, for both stores.
pub fn bench_scaling(cfg: &ScalingBench) -> Result<ScalingOutcome> {
    check_common(&[cfg.tile_size], &cfg.data_sizes_bytes, cfg.runs)?;
    if cfg.node_counts.contains(&0) || cfg.fixed_nodes == 0 || cfg.scaling_size_bytes == 0 {
        return Err(Error::domain("node counts and sizes must be positive"));
    }
    let opts = IngestOptions { tile_size: cfg.tile_size, ..IngestOptions::default() };
    let mut out = ScalingOutcome { records: Vec::new(), mismatches: Vec::new(), compared: 0, skews: Vec::new() };
    let rec = |data_size_bytes, node_count, store, metric, samples_ms| BenchRecord {
        experiment: "B",
        tile_size: cfg.tile_size,
        data_size_bytes,
        node_count: Some(node_count),
        store: Some(store),
        metric,
        samples_ms,
    };

    let (w, h) = synthetic_dims(cfg.scaling_size_bytes);
    let image = gen_synthetic(w, h, BANDS, cfg.seed)?;
    let name = synthetic_name(w, h, BANDS, cfg.seed);
    let bytes = u64::from(w) * u64::from(h) * u64::from(BANDS);
    for &n in &cfg.node_counts {
        let (mut tile, mut base) = (Vec::new(), Vec::new());
        let mut skew = 1.0;
        for run in 0..cfg.runs {
            let scratch = Scratch::new(&cfg.work_dir, &format!("b-nodes-{n}-{run}"))?;
            let engine = Engine::create(scratch.0.join("tile"), ClusterConfig { node_count: n, ..ClusterConfig::default() })?;
            let input = image.clone();
            let started = Instant::now();
            engine.ingest_image(input, &name, bench_record(&image), opts)?;
            tile.push(elapsed_ms(started));
            skew = engine.cluster().load_stats().skew;

            let layout = plan_layout(1, &name, &image, opts)?;
            let input = image.clone();
            let started = Instant::now();
            ingest_baseline(&scratch.0.join("baseline"), n, input, &layout)?;
            base.push(elapsed_ms(started));
        }
        log::info!("B nodes={n}: tile {:.1} ms, baseline {:.1} ms, skew {skew:.3}", median(&tile), median(&base));
        out.skews.push((n, skew));
        out.records.push(rec(bytes, n, StoreKind::Tile, "ingest_time", tile));
        out.records.push(rec(bytes, n, StoreKind::Baseline, "ingest_time", base));
    }
    drop(image);

    for &size in &cfg.data_sizes_bytes {
        let (w, h) = synthetic_dims(size);
        let image = gen_synthetic(w, h, BANDS, cfg.seed)?;
        let name = synthetic_name(w, h, BANDS, cfg.seed);
        let bytes = u64::from(w) * u64::from(h) * u64::from(BANDS);
        let n = cfg.fixed_nodes;
        let (mut tile_w, mut base_w, mut tile_q, mut base_q) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for run in 0..cfg.runs {
            let scratch = Scratch::new(&cfg.work_dir, &format!("b-size-{size}-{run}"))?;
            let engine = Engine::create(scratch.0.join("tile"), ClusterConfig { node_count: n, ..ClusterConfig::default() })?;
            let input = image.clone();
            let started = Instant::now();
            let layout = engine.ingest_image(input, &name, bench_record(&image), opts)?.layout;
            tile_w.push(elapsed_ms(started));

            let input = image.clone();
            let started = Instant::now();
            let baseline = ingest_baseline(&scratch.0.join("baseline"), n, input, &layout)?;
            base_w.push(elapsed_ms(started));

            let q = TileQuery { raster_id: layout.raster_id, band: 0, level: 0, extent: center_bbox(&layout) };
            tile_q.push(time_per_call(|| engine.query_bbox(&q).map(|_| ()))?);
            base_q.push(time_per_call(|| baseline.query_tiles(&layout, &q).map(|_| ()))?);

            if run == 0 {
                for q in parity_queries(&layout) {
                    let indexed = engine.query_bbox(&q)?;
                    let scanned = baseline.query_tiles(&layout, &q)?;
                    out.compared += 1;
                    if !indexed.missing.is_empty() || indexed.tiles != scanned {
                        out.mismatches.push(format!("size {bytes} level {} box {:?}", q.level, q.extent));
                    }
                }
            }
        }
        log::info!(
            "B size={bytes}: write tile {:.1} ms baseline {:.1} ms; bbox tile {:.3} ms baseline {:.3} ms",
            median(&tile_w),
            median(&base_w),
            median(&tile_q),
            median(&base_q)
        );
        out.records.push(rec(bytes, n, StoreKind::Tile, "write_time", tile_w));
        out.records.push(rec(bytes, n, StoreKind::Baseline, "write_time", base_w));
        out.records.push(rec(bytes, n, StoreKind::Tile, "bbox_response_time", tile_q));
        out.records.push(rec(bytes, n, StoreKind::Baseline, "bbox_response_time", base_q));
    }
    Ok(out)
}

#[derive(Serialize)]
struct RowA<'a> {
    experiment: &'a str,
    tile_size: u32,
    data_size_bytes: u64,
    metric: &'a str,
    median_value_ms: f64,
    runs: usize,
}

#[derive(Serialize)]
struct RowB<'a> {
    experiment: &'a str,
    tile_size: u32,
    data_size_bytes: u64,
    node_count: usize,
    store: StoreKind,
    metric: &'a str,
    median_value_ms: f64,
    runs: usize,
}

/// Writes Experiment A records as CSV with a header row.
pub fn write_csv_tile_size(records: &[BenchRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(RowA {
            experiment: r.experiment,
            tile_size: r.tile_size,
            data_size_bytes: r.data_size_bytes,
            metric: r.metric,
            median_value_ms: r.median_ms(),
            runs: r.runs(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes Experiment B records as CSV with a header row.
pub fn write_csv_scaling(records: &[BenchRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let (Some(node_count), Some(store)) = (r.node_count, r.store) else {
            return Err(Error::domain(format!("record {} lacks node count or store", r.metric)));
        };
        w.serialize(RowB {
            experiment: r.experiment,
            tile_size: r.tile_size,
            data_size_bytes: r.data_size_bytes,
            node_count,
            store,
            metric: r.metric,
            median_value_ms: r.median_ms(),
            runs: r.runs(),
        })?;
    }
    w.flush()?;
    Ok(())
}
