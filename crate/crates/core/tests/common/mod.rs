#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bytes::Bytes;
use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rastile::metadata::{normalize_at, parse_source, Dialect, Field, FieldMapping, UnifiedMetadata};
use rastile::store::{Store, TableSchema};
use rastile::cluster::ClusterConfig;
use rastile::ingest::{Engine, IngestOptions};
use rastile::query::{mosaic, RasterLayout, TileQuery};
use rastile::raster_file::gen_synthetic;
use rastile::{GeoExtent, TileAddress};

pub fn fixture(name: &str) -> String {
    // resolves from this crate and from crates that include this module by path
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[derive(Debug, Default)]
pub struct OracleStats {
    pub puts: usize,
    pub gets: usize,
    pub scans: usize,
    pub version_reads: usize,
    pub flushes: usize,
    pub reopens: usize,
}

type Column = (Vec<u8>, String, String);

const FAMILIES: [&str; 2] = ["a", "b"];
const QUALIFIERS: [&str; 3] = ["x", "y", "zz"];
const MAX_VERSIONS: u32 = 3;

fn row(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = rng.gen_range(1..=3);
    (0..len).map(|_| rng.gen_range(0..6u8) * 40).collect()
}

/// Latest cells of rows in `[start, end]` per the reference.
fn expected_scan(reference: &BTreeMap<Column, Vec<(u64, Bytes)>>, start: &[u8], end: &[u8]) -> Vec<(Column, u64, Bytes)> {
    reference
        .iter()
        .filter(|((r, _, _), _)| r.as_slice() >= start && r.as_slice() <= end)
        .map(|(col, versions)| {
            let (ts, v) = versions.last().unwrap();
            (col.clone(), *ts, v.clone())
        })
        .collect()
}

/// Drives `ops` random operations against a store under `dir` and an
/// in-memory reference; the first divergence is returned as an error.
pub fn run_store_oracle(dir: &Path, seed: u64, ops: usize) -> Result<OracleStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reference: BTreeMap<Column, Vec<(u64, Bytes)>> = BTreeMap::new();
    let mut stats = OracleStats::default();
    let mut store = Store::open(dir).map_err(|e| e.to_string())?;
    let schema = TableSchema::new("oracle", &FAMILIES).with_max_versions(MAX_VERSIONS);
    let mut table = store.create_table(schema).map_err(|e| e.to_string())?;
    let mut last_ts = 0u64;

    for step in 0..ops {
        let fail = |what: String| format!("op {step} (seed {seed}): {what}");
        match rng.gen_range(0..100) {
            0..=44 => {
                let (r, f, q) = (row(&mut rng), FAMILIES[rng.gen_range(0..2)], QUALIFIERS[rng.gen_range(0..3)]);
                let len = rng.gen_range(0..24);
                let value: Bytes = (0..len).map(|_| rng.gen::<u8>()).collect::<Vec<_>>().into();
                let ts = table.put(&r, f, q, value.clone()).map_err(|e| fail(e.to_string()))?;
                if ts <= last_ts {
                    return Err(fail(format!("timestamp {ts} not after {last_ts}")));
                }
                last_ts = ts;
                reference.entry((r, f.to_owned(), q.to_owned())).or_default().push((ts, value));
                stats.puts += 1;
            }
            45..=64 => {
                let r = row(&mut rng);
                let got: Vec<(Column, u64, Bytes)> = table
                    .get(&r)
                    .map_err(|e| fail(e.to_string()))?
                    .into_iter()
                    .map(|c| ((c.row_key.to_vec(), c.family, c.qualifier), c.timestamp, c.value))
                    .collect();
                let want = expected_scan(&reference, &r, &r);
                if got != want {
                    return Err(fail(format!("get {r:?}: got {got:?}, want {want:?}")));
                }
                stats.gets += 1;
            }
            65..=79 => {
                let (mut a, mut b) = (row(&mut rng), row(&mut rng));
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                let got: Vec<(Column, u64, Bytes)> = table
                    .scan(&a, &b)
                    .map_err(|e| fail(e.to_string()))?
                    .into_iter()
                    .map(|c| ((c.row_key.to_vec(), c.family, c.qualifier), c.timestamp, c.value))
                    .collect();
                let want = expected_scan(&reference, &a, &b);
                if got != want {
                    return Err(fail(format!("scan {a:?}..={b:?}: {} cells, want {}", got.len(), want.len())));
                }
                stats.scans += 1;
            }
            80..=91 => {
                let (r, f, q) = (row(&mut rng), FAMILIES[rng.gen_range(0..2)], QUALIFIERS[rng.gen_range(0..3)]);
                let got = table.versions(&r, f, q).map_err(|e| fail(e.to_string()))?;
                let want: Vec<(u64, Bytes)> = reference
                    .get(&(r.clone(), f.to_owned(), q.to_owned()))
                    .map(|v| v.iter().rev().take(MAX_VERSIONS as usize).cloned().collect())
                    .unwrap_or_default();
                if got != want {
                    return Err(fail(format!("versions {r:?}/{f}/{q}: got {got:?}, want {want:?}")));
                }
                stats.version_reads += 1;
            }
            92..=97 => {
                table.flush().map_err(|e| fail(e.to_string()))?;
                stats.flushes += 1;
            }
            _ => {
                drop(table);
                store.close().map_err(|e| fail(e.to_string()))?;
                store = Store::open(dir).map_err(|e| fail(e.to_string()))?;
                table = store.table("oracle").ok_or_else(|| fail("table lost on reopen".into()))?;
                stats.reopens += 1;
            }
        }
    }
    // final full comparison after one more restart
    drop(table);
    store.close().map_err(|e| e.to_string())?;
    let store = Store::open(dir).map_err(|e| e.to_string())?;
    let table = store.table("oracle").ok_or("table lost on final reopen")?;
    let got = table.scan(&[], &[0xff; 4]).map_err(|e| e.to_string())?.len();
    if got != reference.len() {
        return Err(format!("final scan has {got} cells, reference {}", reference.len()));
    }
    Ok(stats)
}

pub fn fixed_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 2, 3, 4, 5).unwrap()
}

pub fn normalize_fixture(name: &str, dialect: Dialect) -> rastile::Result<UnifiedMetadata> {
    normalize_at(&parse_source(&fixture(name), dialect)?, fixed_now())
}

/// Fields filled by both built-in dialect mappings.
pub fn shared_fields() -> Vec<Field> {
    let a = FieldMapping::builtin(Dialect::LandsatMtl).fields();
    let b = FieldMapping::builtin(Dialect::Zy3Kv).fields();
    a.intersection(&b).copied().collect()
}

/// Independent pixel-level model of one pyramid level.
pub struct LevelModel {
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
    pub dx: f64,
    pub dy: f64,
    pub width: u32,
    pub height: u32,
}

impl LevelModel {
    pub fn new(extent: &GeoExtent, native_w: u32, native_h: u32, level: u32) -> Self {
        let scale = f64::from(1u32 << level);
        let (mut width, mut height) = (native_w, native_h);
        for _ in 0..level {
            width = width.div_ceil(2);
            height = height.div_ceil(2);
        }
        LevelModel {
            west: extent.west,
            east: extent.east,
            south: extent.south,
            north: extent.north,
            dx: (extent.east - extent.west) / f64::from(native_w) * scale,
            dy: (extent.north - extent.south) / f64::from(native_h) * scale,
            width,
            height,
        }
    }

    /// West and east edge of pixel column `x`.
    pub fn col_edges(&self, x: u32) -> (f64, f64) {
        let lo = if x == 0 { self.west } else { self.west + f64::from(x) * self.dx };
        let hi = if x + 1 >= self.width { self.east } else { self.west + f64::from(x + 1) * self.dx };
        (lo, hi)
    }

    /// South and north edge of pixel row `y` (row 0 is northmost).
    pub fn row_edges(&self, y: u32) -> (f64, f64) {
        let lo = if y + 1 >= self.height { self.south } else { self.north - f64::from(y + 1) * self.dy };
        let hi = if y == 0 { self.north } else { self.north - f64::from(y) * self.dy };
        (lo, hi)
    }

    /// Inclusive pixel window selected by `bbox`, by testing every pixel.
    pub fn select(&self, bbox: &GeoExtent) -> Option<(u32, u32, u32, u32)> {
        let pick = |q0: f64, q1: f64, lo: f64, hi: f64, last: bool| {
            if q0 == q1 {
                lo <= q0 && (q0 < hi || (last && q0 == hi))
            } else {
                q0 < hi && lo < q1
            }
        };
        let xs: Vec<u32> = (0..self.width)
            .filter(|&x| {
                let (lo, hi) = self.col_edges(x);
                pick(bbox.west, bbox.east, lo, hi, x + 1 == self.width)
            })
            .collect();
        let ys: Vec<u32> = (0..self.height)
            .filter(|&y| {
                let (lo, hi) = self.row_edges(y);
                pick(bbox.south, bbox.north, lo, hi, y == 0)
            })
            .collect();
        Some((*xs.first()?, *ys.first()?, *xs.last()?, *ys.last()?))
    }
}

/// Reference 2x2 mean reduction, rounding half up, partial blocks at edges.
pub fn reduce(w: u32, h: u32, px: &[u8]) -> (u32, u32, Vec<u8>) {
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity((ow * oh) as usize);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut vals = Vec::with_capacity(4);
            for y in 2 * oy..(2 * oy + 2).min(h) {
                for x in 2 * ox..(2 * ox + 2).min(w) {
                    vals.push(f64::from(px[(y * w + x) as usize]));
                }
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            out.push((mean + 0.5).floor() as u8);
        }
    }
    (ow, oh, out)
}

/// Random query boxes over `m`, biased towards pixel and tile edges.
pub fn random_bbox(rng: &mut ChaCha8Rng, m: &LevelModel, tile_size: u32) -> GeoExtent {
    let span_x = m.east - m.west;
    let span_y = m.north - m.south;
    let mut coord = |lo: f64, span: f64, edge: &dyn Fn(u32) -> f64, cells: u32| -> f64 {
        match rng.gen_range(0..4) {
            0 => lo - 0.1 * span + rng.gen::<f64>() * 1.2 * span,
            1 => edge(rng.gen_range(0..=cells)),
            2 => edge(rng.gen_range(0..=cells.div_ceil(tile_size)) * tile_size),
            _ => lo + rng.gen::<f64>() * span,
        }
    };
    let x_edge = |k: u32| if k == 0 { m.west } else { m.col_edges(k - 1).1 };
    let y_edge = |k: u32| if k == 0 { m.north } else { m.row_edges(k - 1).0 };
    let (mut w, mut e) = (coord(m.west, span_x, &x_edge, m.width), coord(m.west, span_x, &x_edge, m.width));
    let (mut s, mut n) = (coord(m.south, span_y, &y_edge, m.height), coord(m.south, span_y, &y_edge, m.height));
    if rng.gen_bool(0.15) {
        e = w;
    }
    if rng.gen_bool(0.15) {
        n = s;
    }
    if w > e {
        std::mem::swap(&mut w, &mut e);
    }
    if s > n {
        std::mem::swap(&mut s, &mut n);
    }
    GeoExtent { west: w, east: e, south: s, north: n }
}

pub const ORACLE_TILE: u32 = 128;

/// An engine holding one ingested synthetic image plus its level stack.
pub struct Fixture {
    pub engine: Engine,
    pub layout: RasterLayout,
    /// `levels[level][band]` as `(width, height, samples)` from [`reduce`].
    pub levels: Vec<Vec<(u32, u32, Vec<u8>)>>,
}

pub fn ingest_fixture(dir: &Path, width: u32, height: u32, bands: u32, packed: bool) -> Fixture {
    let image = gen_synthetic(width, height, bands, 11).unwrap();
    let engine = Engine::create(dir, ClusterConfig::new(3, 4, 8).unwrap()).unwrap();
    let mut levels = vec![image
        .bands
        .iter()
        .map(|b| (b.width, b.height, b.samples.clone()))
        .collect::<Vec<_>>()];
    let mut record = UnifiedMetadata::empty(fixed_now());
    record.satellite_id = "SYN".into();
    record.sensor_id = "GEN".into();
    let opts = IngestOptions { tile_size: ORACLE_TILE, level_count: None, packed };
    let outcome = engine.ingest_image(image, "fixture", record, opts).unwrap();
    let layout = outcome.layout;
    while levels.len() < layout.level_count as usize {
        let next = levels.last().unwrap().iter().map(|(w, h, px)| reduce(*w, *h, px)).collect();
        levels.push(next);
    }
    Fixture { engine, layout, levels }
}

/// Crop of `(w, h, samples)` over an inclusive pixel window.
pub fn crop(level: &(u32, u32, Vec<u8>), x0: u32, y0: u32, x1: u32, y1: u32) -> Vec<u8> {
    let w = level.0;
    (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| (y * w + x) as usize)).map(|i| level.2[i]).collect()
}

/// Compares `per_level` random box queries per level and band against the
/// pixel model; returns the number of queries checked.
pub fn run_query_oracle(f: &Fixture, seed: u64, per_level: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = &f.layout;
    let ts = l.tile_size;
    let mut checked = 0;
    for level in 0..l.level_count {
        let model = LevelModel::new(&l.extent, l.width, l.height, level);
        for i in 0..per_level {
            let band = (i as u32) % l.band_count;
            let bbox = random_bbox(&mut rng, &model, ts);
            let q = TileQuery { raster_id: l.raster_id, band, level, extent: bbox };
            let result = f.engine.query_bbox(&q).map_err(|e| format!("{bbox:?}: {e}"))?;
            let ctx = format!("level {level} band {band} {bbox:?}");
            let Some((x0, y0, x1, y1)) = model.select(&bbox) else {
                if !result.tiles.is_empty() || result.window.is_some() {
                    return Err(format!("{ctx}: expected nothing, got {:?}", result.addresses()));
                }
                checked += 1;
                continue;
            };
            let want: Vec<TileAddress> = (y0 / ts..=y1 / ts)
                .flat_map(|row| (x0 / ts..=x1 / ts).map(move |col| TileAddress { level, row, col }))
                .collect();
            if result.addresses() != want || !result.missing.is_empty() {
                return Err(format!("{ctx}: tiles {:?}, want {want:?}", result.addresses()));
            }
            let px = result.window.as_ref().unwrap().pixels;
            if (px.x0, px.y0, px.x1, px.y1) != (x0, y0, x1, y1) {
                return Err(format!("{ctx}: window {px:?}, want {:?}", (x0, y0, x1, y1)));
            }
            let got = mosaic(&result).map_err(|e| format!("{ctx}: {e}"))?;
            if got.samples != crop(&f.levels[level as usize][band as usize], x0, y0, x1, y1) {
                return Err(format!("{ctx}: mosaic pixels differ"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}
