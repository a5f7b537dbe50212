//! Georeferenced retrieval from stored pyramids.
//!
//! Every pyramid level spans the image extent. Level `p` has pixels of
//! `2^p` native pixels, so the last pixel column and row may reach past the
//! image edge and are clipped to it. Pixel and tile cells are half-open
//! (west and south inclusive) except along the image's east and north edges,
//! which are closed. A bbox with positive width selects the cells its
//! half-open interior meets; a degenerate side behaves as a point.

use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::grid::TileAddress;
use crate::hilbert::{bbox_to_ranges, hilbert_decode, hilbert_encode, order_for_level, TileKey, PACKED_BAND};
use crate::raster::{grid_shape, level_dims, RasterBand, Tile};
use crate::store::data_table_name;
use crate::tile_cell::decode_tile;
use crate::{GeoExtent, GeoPoint};

/// How one image is stored: dimensions, pyramid shape and georeference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterLayout {
    pub raster_id: u16,
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub band_count: u32,
    pub tile_size: u32,
    pub level_count: u32,
    pub extent: GeoExtent,
    /// All bands of an address share one cell.
    pub packed: bool,
}

/// Inclusive pixel rectangle of one level, row 0 at the north edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelWindow {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelWindow {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }
}

/// Tile rectangle and pixel window selected by a bbox at one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileWindow {
    pub level: u32,
    pub rows: RangeInclusive<u32>,
    pub cols: RangeInclusive<u32>,
    pub pixels: PixelWindow,
}

impl TileWindow {
    pub fn addresses(&self) -> impl Iterator<Item = TileAddress> + '_ {
        self.rows
            .clone()
            .flat_map(move |r| self.cols.clone().map(move |c| TileAddress::new(self.level, r, c)))
    }

    pub fn tile_count(&self) -> usize {
        self.rows.clone().count() * self.cols.clone().count()
    }
}

/// Cells of one level axis in ascending coordinate order.
struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
    cells: u32,
    /// Edges are measured back from `hi` (rows hang from the north edge).
    from_hi: bool,
}

impl Axis {
    fn edge(&self, k: u32) -> f64 {
        if k == 0 {
            self.lo
        } else if k >= self.cells {
            self.hi
        } else if self.from_hi {
            self.hi - f64::from(self.cells - k) * self.step
        } else {
            self.lo + f64::from(k) * self.step
        }
    }

    /// Inclusive ascending index span of cells selected by `[q0, q1]`.
    fn span(&self, q0: f64, q1: f64) -> Option<(u32, u32)> {
        if q0 == q1 {
            if q0 < self.lo || q0 > self.hi {
                return None;
            }
            let j = first_false(self.cells, |j| self.edge(j) <= q0).max(1) - 1;
            return Some((j, j));
        }
        let first = first_false(self.cells, |j| self.edge(j + 1) <= q0);
        let end = first_false(self.cells, |j| self.edge(j) < q1);
        (first < end).then(|| (first, end - 1))
    }
}

/// Smallest `j` in `0..n` with `!pred(j)`, or `n`; `pred` must be monotone.
fn first_false(n: u32, pred: impl Fn(u32) -> bool) -> u32 {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Whether `[q0, q1]` (or the point `q0 == q1`) selects cell `[lo, hi)`.
pub fn axis_selects(q0: f64, q1: f64, lo: f64, hi: f64, hi_closed: bool) -> bool {
    if q0 == q1 {
        lo <= q0 && (q0 < hi || (hi_closed && q0 == hi))
    } else {
        q0 < hi && lo < q1
    }
}

impl RasterLayout {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.band_count == 0 || self.level_count == 0 || self.tile_size == 0 {
            return Err(Error::domain(format!("degenerate raster layout {self:?}")));
        }
        if !self.packed && self.band_count >= u32::from(PACKED_BAND) {
            return Err(Error::domain("too many bands for per-band cells"));
        }
        self.extent.validate()
    }

    pub fn table_name(&self) -> String {
        data_table_name(self.raster_id)
    }

    pub fn check_level(&self, level: u32) -> Result<()> {
        if level >= self.level_count {
            return Err(Error::domain(format!("level {level} out of range, image has {} levels", self.level_count)));
        }
        Ok(())
    }

    pub fn check_band(&self, band: u32) -> Result<()> {
        if band >= self.band_count {
            return Err(Error::domain(format!("band {band} out of range, image has {} bands", self.band_count)));
        }
        Ok(())
    }

    /// Pixel dimensions of `level`.
    pub fn level_dims(&self, level: u32) -> (u32, u32) {
        level_dims(self.width, self.height, level)
    }

    /// Tile grid `(rows, cols)` of `level`.
    pub fn grid_shape(&self, level: u32) -> (u32, u32) {
        let (w, h) = self.level_dims(level);
        grid_shape(w, h, self.tile_size)
    }

    /// Hilbert order used for the keys of `level`.
    pub fn order(&self, level: u32) -> u32 {
        let (rows, cols) = self.grid_shape(level);
        order_for_level(rows, cols)
    }

    /// Band field of the row key holding `band`.
    pub fn band_key(&self, band: u32) -> u8 {
        if self.packed {
            PACKED_BAND
        } else {
            band as u8
        }
    }

    pub fn key(&self, level: u32, band: u32, row: u32, col: u32) -> Result<TileKey> {
        let code = hilbert_encode(self.order(level), col, row)?;
        TileKey::try_new(self.raster_id.into(), level.into(), self.band_key(band).into(), code)
    }

    /// Tile address of a stored key of this image.
    pub fn address_of(&self, key: &TileKey) -> Result<TileAddress> {
        let level = u32::from(key.level);
        self.check_level(level)?;
        let (col, row) = hilbert_decode(self.order(level), u64::from(key.hilbert))?;
        Ok(TileAddress::new(level, row, col))
    }

    fn axes(&self, level: u32) -> (Axis, Axis) {
        let (w, h) = self.level_dims(level);
        let scale = f64::from(1u32 << level.min(31));
        let e = &self.extent;
        let x = Axis {
            lo: e.west,
            hi: e.east,
            step: e.width() / f64::from(self.width) * scale,
            cells: w,
            from_hi: false,
        };
        let y = Axis {
            lo: e.south,
            hi: e.north,
            step: e.height() / f64::from(self.height) * scale,
            cells: h,
            from_hi: true,
        };
        (x, y)
    }

    /// Geographic extent of a tile, clipped to the image.
    pub fn tile_extent(&self, address: TileAddress) -> Result<GeoExtent> {
        self.check_level(address.level)?;
        let (rows, cols) = self.grid_shape(address.level);
        if address.row >= rows || address.col >= cols {
            return Err(Error::domain(format!("tile {address} outside the {rows}x{cols} grid")));
        }
        let (w, h) = self.level_dims(address.level);
        let (x, y) = self.axes(address.level);
        let ts = self.tile_size;
        Ok(GeoExtent {
            west: x.edge(address.col * ts),
            east: x.edge(((address.col + 1) * ts).min(w)),
            south: y.edge(h - ((address.row + 1) * ts).min(h)),
            north: y.edge(h - address.row * ts),
        })
    }

    /// Tiles and pixels of `level` selected by `bbox`; `None` when disjoint.
    pub fn resolve(&self, level: u32, bbox: &GeoExtent) -> Result<Option<TileWindow>> {
        self.check_level(level)?;
        check_bbox(bbox)?;
        let (x, y) = self.axes(level);
        let Some((x0, x1)) = x.span(bbox.west, bbox.east) else { return Ok(None) };
        let Some((j0, j1)) = y.span(bbox.south, bbox.north) else { return Ok(None) };
        let (y0, y1) = (y.cells - 1 - j1, y.cells - 1 - j0);
        let ts = self.tile_size;
        Ok(Some(TileWindow {
            level,
            rows: y0 / ts..=y1 / ts,
            cols: x0 / ts..=x1 / ts,
            pixels: PixelWindow { x0, y0, x1, y1 },
        }))
    }

    /// Geographic extent of a pixel window of `window.level`.
    pub fn window_extent(&self, window: &TileWindow) -> GeoExtent {
        let (_, h) = self.level_dims(window.level);
        let (x, y) = self.axes(window.level);
        let px = window.pixels;
        GeoExtent {
            west: x.edge(px.x0),
            east: x.edge(px.x1 + 1),
            south: y.edge(h - 1 - px.y1),
            north: y.edge(h - px.y0),
        }
    }

    /// Whether a tile intersects `bbox` by direct extent comparison.
    pub fn tile_selected(&self, address: TileAddress, bbox: &GeoExtent) -> Result<bool> {
        let t = self.tile_extent(address)?;
        Ok(axis_selects(bbox.west, bbox.east, t.west, t.east, t.east == self.extent.east)
            && axis_selects(bbox.south, bbox.north, t.south, t.north, t.north == self.extent.north))
    }
}

fn check_bbox(b: &GeoExtent) -> Result<()> {
    let finite = [b.west, b.east, b.south, b.north].iter().all(|v| v.is_finite());
    if !finite || b.west > b.east || b.south > b.north {
        return Err(Error::domain(format!("invalid query box {b:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileQuery {
    pub raster_id: u16,
    pub band: u32,
    pub level: u32,
    pub extent: GeoExtent,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    /// Tiles found, ordered by row then column.
    pub tiles: Vec<Tile>,
    /// Addresses inside the window with no stored tile.
    pub missing: Vec<TileAddress>,
    pub window: Option<TileWindow>,
    pub ranges_scanned: usize,
    pub nodes_touched: usize,
    pub elapsed: Duration,
}

impl QueryResult {
    pub fn addresses(&self) -> Vec<TileAddress> {
        self.tiles.iter().map(|t| t.address).collect()
    }
}

fn check_query(layout: &RasterLayout, q: &TileQuery) -> Result<()> {
    if q.raster_id != layout.raster_id {
        return Err(Error::domain(format!("query for raster {} against layout of {}", q.raster_id, layout.raster_id)));
    }
    layout.check_level(q.level)?;
    layout.check_band(q.band)
}

/// Fetches every tile of `q.level` that `q.extent` selects.
pub fn query_bbox(cluster: &Cluster, layout: &RasterLayout, q: &TileQuery) -> Result<QueryResult> {
    let started = Instant::now();
    check_query(layout, q)?;
    let Some(window) = layout.resolve(q.level, &q.extent)? else {
        return Ok(QueryResult {
            tiles: Vec::new(),
            missing: Vec::new(),
            window: None,
            ranges_scanned: 0,
            nodes_touched: 0,
            elapsed: started.elapsed(),
        });
    };
    let ranges = bbox_to_ranges(
        layout.raster_id,
        layout.band_key(q.band),
        q.level as u8,
        layout.order(q.level),
        window.rows.clone(),
        window.cols.clone(),
    )?;
    let scan = cluster.scatter_scan(&layout.table_name(), &ranges)?;
    let slot = if layout.packed { q.band as usize } else { 0 };
    let mut tiles = Vec::with_capacity(window.tile_count());
    for cell in &scan.cells {
        let address = layout.address_of(&TileKey::decode(&cell.row_key)?)?;
        if window.rows.contains(&address.row) && window.cols.contains(&address.col) {
            tiles.push(decode_tile(&cell.value, address, slot, q.band)?);
        }
    }
    tiles.sort_by_key(|t| (t.address.row, t.address.col));
    tiles.dedup_by_key(|t| t.address);
    let missing = window
        .addresses()
        .filter(|a| tiles.binary_search_by_key(&(a.row, a.col), |t| (t.address.row, t.address.col)).is_err())
        .collect();
    Ok(QueryResult {
        tiles,
        missing,
        window: Some(window),
        ranges_scanned: ranges.len(),
        nodes_touched: scan.nodes_touched,
        elapsed: started.elapsed(),
    })
}

/// The tile whose extent contains `p`.
pub fn query_point(cluster: &Cluster, layout: &RasterLayout, band: u32, level: u32, p: GeoPoint) -> Result<Tile> {
    let e = &layout.extent;
    let inside = p.lon >= e.west && p.lon <= e.east && p.lat >= e.south && p.lat <= e.north;
    if !inside {
        return Err(Error::NotFound(format!("point ({}, {}) outside raster {}", p.lon, p.lat, layout.raster_id)));
    }
    let q = TileQuery {
        raster_id: layout.raster_id,
        band,
        level,
        extent: GeoExtent { west: p.lon, east: p.lon, south: p.lat, north: p.lat },
    };
    let mut result = query_bbox(cluster, layout, &q)?;
    if let Some(a) = result.missing.first() {
        return Err(Error::NotFound(format!("tile {a} of raster {} is not stored", layout.raster_id)));
    }
    result.tiles.pop().ok_or_else(|| Error::NotFound("no tile at point".into()))
}

/// Pixels of the query window, cut from the result's tiles.
pub fn mosaic(result: &QueryResult) -> Result<RasterBand> {
    if !result.missing.is_empty() {
        return Err(Error::IncompleteMosaic { missing: result.missing.clone() });
    }
    let window = result.window.as_ref().ok_or_else(|| Error::domain("empty query result has no mosaic"))?;
    let px = window.pixels;
    let (w, h) = (px.width() as usize, px.height() as usize);
    let mut out = vec![0u8; w * h];
    let mut covered = 0usize;
    for t in &result.tiles {
        let ts = t.tile_size;
        let (tx0, ty0) = (t.address.col * ts, t.address.row * ts);
        let x_lo = px.x0.max(tx0);
        let x_hi = px.x1.min(tx0 + t.valid_width - 1);
        let y_lo = px.y0.max(ty0);
        let y_hi = px.y1.min(ty0 + t.valid_height - 1);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        let run = (x_hi - x_lo + 1) as usize;
        for y in y_lo..=y_hi {
            let src = ((y - ty0) * ts + (x_lo - tx0)) as usize;
            let dst = (y - px.y0) as usize * w + (x_lo - px.x0) as usize;
            out[dst..dst + run].copy_from_slice(&t.pixels[src..src + run]);
        }
        covered += run * (y_hi - y_lo + 1) as usize;
    }
    if covered != w * h {
        return Err(Error::IncompleteMosaic { missing: window.addresses().collect() });
    }
    RasterBand::new(px.width(), px.height(), out)
}
