//! End-to-end ingestion and the engine handle used by the CLI.
//!
//! A data directory holds the cluster (`cluster.json`, `node-*/`) and a
//! `catalog/` store with the metadata table. Each image gets a fresh id, a
//! tile table on every node, and one metadata row keyed by its id with the
//! unified record in family `m` and its storage layout in family `r`.

use std::path::{Path, PathBuf};

use bytes::Bytes;
use parking_lot::Mutex;

use crate::cluster::{Cluster, ClusterConfig, IngestReport, CLUSTER_FILE};
use crate::error::{Error, Result};
use crate::grid::TileAddress;
use crate::hilbert::{bbox_to_ranges, KeyRange, TileKey};
use crate::metadata::{self, metadata_row_key, Dialect, UnifiedMetadata};
use crate::query::{self, QueryResult, RasterLayout, TileQuery};
use crate::raster::{level_count_for, slice_level, LevelBands, PyramidSpec, RasterBand, RasterImage, Tile};
use crate::raster_file::read_raster;
use crate::store::{Store, TableSchema, LAYOUT_FAMILY, META_FAMILY, META_TABLE};
use crate::tile_cell::encode_tiles;
use crate::GeoPoint;

pub const CATALOG_DIR: &str = "catalog";
pub const LAYOUT_QUALIFIER: &str = "layout";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub tile_size: u32,
    /// Defaults to every level down to a single tile.
    pub level_count: Option<u32>,
    /// Store all bands of an address in one cell.
    pub packed: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { tile_size: crate::raster::DEFAULT_TILE_SIZE, level_count: None, packed: true }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub layout: RasterLayout,
    pub cells: usize,
    pub report: IngestReport,
    pub key_ranges: Vec<KeyRange>,
}

pub struct Engine {
    root: PathBuf,
    cluster: Cluster,
    catalog: Store,
    ingest_lock: Mutex<()>,
}

impl Engine {
    pub fn create(root: impl AsRef<Path>, config: ClusterConfig) -> Result<Engine> {
        let root = root.as_ref();
        let cluster = Cluster::create(root, config)?;
        Self::with_cluster(root, cluster)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Engine> {
        let root = root.as_ref();
        if !root.join(CLUSTER_FILE).exists() {
            return Err(Error::NotFound(format!("no data directory at {}", root.display())));
        }
        let cluster = Cluster::open(root)?;
        Self::with_cluster(root, cluster)
    }

    pub fn open_or_create(root: impl AsRef<Path>, config: ClusterConfig) -> Result<Engine> {
        if root.as_ref().join(CLUSTER_FILE).exists() {
            Self::open(root)
        } else {
            Self::create(root, config)
        }
    }

    fn with_cluster(root: &Path, cluster: Cluster) -> Result<Engine> {
        let catalog = Store::open(root.join(CATALOG_DIR))?;
        catalog.ensure_table(TableSchema::new(META_TABLE, &[META_FAMILY, LAYOUT_FAMILY]))?;
        Ok(Engine { root: root.to_owned(), cluster, catalog, ingest_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn catalog(&self) -> &Store {
        &self.catalog
    }

    fn meta_table(&self) -> std::sync::Arc<crate::store::Table> {
        self.catalog.table(META_TABLE).expect("metadata table is created on open")
    }

    /// Layouts of every ingested image, by id.
    pub fn layouts(&self) -> Result<Vec<RasterLayout>> {
        self.meta_table()
            .scan(&[0, 0], &[0xff, 0xff])?
            .into_iter()
            .filter(|c| c.family == LAYOUT_FAMILY && c.qualifier == LAYOUT_QUALIFIER)
            .map(|c| Ok(serde_json::from_slice(&c.value)?))
            .collect()
    }

    pub fn layout(&self, raster_id: u16) -> Result<RasterLayout> {
        let cells = self.meta_table().get(&metadata_row_key(raster_id))?;
        let cell = cells
            .iter()
            .find(|c| c.family == LAYOUT_FAMILY && c.qualifier == LAYOUT_QUALIFIER)
            .ok_or_else(|| Error::NotFound(format!("raster {raster_id} is not ingested")))?;
        Ok(serde_json::from_slice(&cell.value)?)
    }

    pub fn metadata(&self, raster_id: u16) -> Result<UnifiedMetadata> {
        let cells = self.meta_table().get(&metadata_row_key(raster_id))?;
        if cells.is_empty() {
            return Err(Error::NotFound(format!("raster {raster_id} is not ingested")));
        }
        metadata::from_row(&cells)
    }

    /// Reads a raster file and a metadata document, then ingests them.
    pub fn ingest_files(
        &self,
        raster: impl AsRef<Path>,
        metadata_path: impl AsRef<Path>,
        dialect: Dialect,
        opts: IngestOptions,
    ) -> Result<IngestOutcome> {
        let text = std::fs::read_to_string(metadata_path)?;
        let mut record = metadata::normalize(&metadata::parse_source(&text, dialect)?)?;
        if record.file_path.is_none() {
            record.file_path = Some(raster.as_ref().display().to_string());
        }
        record.ensure_valid()?;
        let (header, image) = read_raster(raster)?;
        self.ingest_image(image, &header.name, record, opts)
    }

    /// Builds the pyramid level by level and writes it through the cluster.
    pub fn ingest_image(
        &self,
        image: RasterImage,
        name: &str,
        mut record: UnifiedMetadata,
        opts: IngestOptions,
    ) -> Result<IngestOutcome> {
        record.ensure_valid()?;
        let _guard = self.ingest_lock.lock();
        let existing = self.layouts()?;
        if existing.iter().any(|l| l.name == name) {
            return Err(Error::Conflict(format!("an image named {name:?} is already ingested")));
        }
        let raster_id = existing.iter().map(|l| l.raster_id).max().unwrap_or(0).checked_add(1)
            .ok_or_else(|| Error::domain("raster id space exhausted"))?;
        let layout = plan_layout(raster_id, name, &image, opts)?;

        let table = layout.table_name();
        self.cluster.ensure_table(&table)?;
        let mut writer = self.cluster.writer(&table);
        let cells = pyramid_cells(image, &layout, |batch| writer.push(batch))?;
        let report = writer.finish()?;

        let key_ranges = self.key_ranges(&layout)?;
        record.level = Some(i64::from(layout.level_count));
        record.tiles_codes = Some(key_ranges.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","));
        if record.image_name.is_none() {
            record.image_name = Some(name.to_owned());
        }
        let row = metadata_row_key(raster_id);
        let mut puts: Vec<(&str, &str, Bytes)> =
            metadata::to_row(&record).into_iter().map(|(q, v)| (META_FAMILY, q, v)).collect();
        puts.push((LAYOUT_FAMILY, LAYOUT_QUALIFIER, Bytes::from(serde_json::to_vec(&layout)?)));
        let meta = self.meta_table();
        meta.put_batch(puts.into_iter().map(|(f, q, v)| (&row[..], f, q, v)))?;
        meta.flush()?;
        log::info!("ingested raster {raster_id} ({name}): {cells} cells in {} flush groups", report.flush_groups());
        Ok(IngestOutcome { layout, cells, report, key_ranges })
    }

    /// Key ranges spanning every stored tile of an image.
    pub fn key_ranges(&self, layout: &RasterLayout) -> Result<Vec<KeyRange>> {
        let bands: Vec<u32> = if layout.packed { vec![0] } else { (0..layout.band_count).collect() };
        let mut out = Vec::new();
        for level in 0..layout.level_count {
            let (rows, cols) = layout.grid_shape(level);
            for &b in &bands {
                out.extend(bbox_to_ranges(
                    layout.raster_id,
                    layout.band_key(b),
                    level as u8,
                    layout.order(level),
                    0..=rows - 1,
                    0..=cols - 1,
                )?);
            }
        }
        Ok(out)
    }

    pub fn query_bbox(&self, q: &TileQuery) -> Result<QueryResult> {
        query::query_bbox(&self.cluster, &self.layout(q.raster_id)?, q)
    }

    pub fn query_point(&self, raster_id: u16, band: u32, level: u32, p: GeoPoint) -> Result<Tile> {
        query::query_point(&self.cluster, &self.layout(raster_id)?, band, level, p)
    }
}

/// Layout an image will get when ingested with `opts`.
pub fn plan_layout(raster_id: u16, name: &str, image: &RasterImage, opts: IngestOptions) -> Result<RasterLayout> {
    let max_levels = level_count_for(image.width, image.height, opts.tile_size);
    let spec = PyramidSpec::new(opts.tile_size, opts.level_count.unwrap_or(max_levels))?;
    if spec.level_count > max_levels || spec.level_count > u32::from(u8::MAX) {
        return Err(Error::domain(format!(
            "{} levels requested, a {}x{} image supports at most {max_levels}",
            spec.level_count, image.width, image.height
        )));
    }
    let layout = RasterLayout {
        raster_id,
        name: name.to_owned(),
        width: image.width,
        height: image.height,
        band_count: image.band_count() as u32,
        tile_size: spec.tile_size,
        level_count: spec.level_count,
        extent: image.extent,
        packed: opts.packed,
    };
    layout.validate()?;
    Ok(layout)
}

/// Builds the pyramid of `image` one level at a time and hands its keyed
/// cells to `sink`, one tile row per call. Returns the number of cells.
pub fn pyramid_cells(
    image: RasterImage,
    layout: &RasterLayout,
    mut sink: impl FnMut(Vec<(TileKey, Bytes)>) -> Result<()>,
) -> Result<usize> {
    let ts = layout.tile_size;
    let mut cells = 0usize;
    let mut levels: Vec<LevelBands> =
        image.bands.into_iter().map(|b| LevelBands::new(b, layout.level_count)).collect();
    for level in 0..layout.level_count {
        let bands = levels
            .iter_mut()
            .map(|it| it.next().expect("one band per level").map(|(_, b)| b))
            .collect::<Result<Vec<_>>>()?;
        let (rows, _) = layout.grid_shape(level);
        for row in 0..rows {
            let strips: Vec<Vec<Tile>> = bands
                .iter()
                .enumerate()
                .map(|(i, band)| tile_row(band, ts, level, row, i as u32))
                .collect::<Result<_>>()?;
            let mut batch = Vec::new();
            for col in 0..strips[0].len() {
                if layout.packed {
                    let tiles: Vec<&Tile> = strips.iter().map(|s| &s[col]).collect();
                    batch.push((layout.key(level, 0, row, col as u32)?, encode_tiles(&tiles)?));
                } else {
                    for (b, strip) in strips.iter().enumerate() {
                        batch.push((layout.key(level, b as u32, row, col as u32)?, encode_tiles(&[&strip[col]])?));
                    }
                }
            }
            cells += batch.len();
            sink(batch)?;
        }
    }
    Ok(cells)
}

/// Tiles of grid row `row`, cut from the matching strip of `band`.
fn tile_row(band: &RasterBand, tile_size: u32, level: u32, row: u32, band_index: u32) -> Result<Vec<Tile>> {
    let y0 = row * tile_size;
    let strip = band.crop(0, y0, band.width, (y0 + tile_size).min(band.height))?;
    let mut tiles = slice_level(&strip, tile_size, level, band_index);
    for t in &mut tiles {
        t.address = TileAddress::new(level, row, t.address.col);
    }
    Ok(tiles)
}
