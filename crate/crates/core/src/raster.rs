//! In-memory rasters and the per-image tile pyramid.
//!
//! Pyramid level 0 is the native resolution; each higher level halves both
//! dimensions (rounding up) with a 2x2 box mean. Every level is cut into
//! square tiles of `tile_size` pixels, row 0 at the top of the image. Edge
//! tiles are zero-padded and remember how much of them is real content.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TileAddress;
use crate::GeoExtent;

pub const DEFAULT_TILE_SIZE: u32 = 256;
pub const ALLOWED_TILE_SIZES: [u32; 4] = [128, 256, 512, 1024];

/// One band of 8-bit samples, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterBand {
    pub width: u32,
    pub height: u32,
    pub samples: Vec<u8>,
}

impl RasterBand {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("band dimensions must be positive"));
        }
        if samples.len() as u64 != u64::from(width) * u64::from(height) {
            return Err(Error::domain(format!(
                "band of {width}x{height} needs {} samples, got {}",
                u64::from(width) * u64::from(height),
                samples.len()
            )));
        }
        Ok(RasterBand { width, height, samples })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.samples[y as usize * self.width as usize + x as usize]
    }

    /// Copies the window `[x0, x1) x [y0, y1)`.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<RasterBand> {
        if x0 >= x1 || y0 >= y1 || x1 > self.width || y1 > self.height {
            return Err(Error::domain(format!(
                "crop window [{x0},{x1})x[{y0},{y1}) outside {}x{}",
                self.width, self.height
            )));
        }
        let w = (x1 - x0) as usize;
        let mut samples = Vec::with_capacity(w * (y1 - y0) as usize);
        for y in y0..y1 {
            let start = y as usize * self.width as usize + x0 as usize;
            samples.extend_from_slice(&self.samples[start..start + w]);
        }
        RasterBand::new(x1 - x0, y1 - y0, samples)
    }
}

/// A multi-band image in band-sequential layout with its georeference.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub bands: Vec<RasterBand>,
    pub extent: GeoExtent,
}

impl RasterImage {
    pub fn new(bands: Vec<RasterBand>, extent: GeoExtent) -> Result<Self> {
        let first = bands.first().ok_or_else(|| Error::domain("image needs at least one band"))?;
        let (width, height) = (first.width, first.height);
        if let Some(i) = bands.iter().position(|b| b.width != width || b.height != height) {
            return Err(Error::domain(format!(
                "band {i} is {}x{}, expected {width}x{height}",
                bands[i].width, bands[i].height
            )));
        }
        extent.validate()?;
        Ok(RasterImage { width, height, bands, extent })
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidSpec {
    pub tile_size: u32,
    pub level_count: u32,
}

impl PyramidSpec {
    pub fn new(tile_size: u32, level_count: u32) -> Result<Self> {
        let spec = PyramidSpec { tile_size, level_count };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !ALLOWED_TILE_SIZES.contains(&self.tile_size) {
            return Err(Error::domain(format!(
                "tile size {} not one of {ALLOWED_TILE_SIZES:?}",
                self.tile_size
            )));
        }
        if self.level_count == 0 {
            return Err(Error::domain("level count must be at least 1"));
        }
        Ok(())
    }
}

/// A square block of one level of one band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub address: TileAddress,
    pub band: u32,
    pub tile_size: u32,
    pub pixels: Vec<u8>,
    pub valid_width: u32,
    pub valid_height: u32,
}

impl Tile {
    /// Pixel value at tile-local `(x, y)`.
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.tile_size as usize + x as usize]
    }
}

/// Number of pyramid levels needed until the coarsest fits in one tile.
pub fn level_count_for(width: u32, height: u32, tile_size: u32) -> u32 {
    let largest = u64::from(width.max(height));
    let tile = u64::from(tile_size.max(1));
    let mut levels = 1;
    while tile << (levels - 1) < largest {
        levels += 1;
    }
    levels
}

/// Dimensions of pyramid level `level` for a native `width x height` image.
pub fn level_dims(width: u32, height: u32, level: u32) -> (u32, u32) {
    (0..level).fold((width, height), |(w, h), _| (w.div_ceil(2), h.div_ceil(2)))
}

/// Tile grid shape (rows, cols) of a `width x height` level.
pub fn grid_shape(width: u32, height: u32, tile_size: u32) -> (u32, u32) {
    (height.div_ceil(tile_size), width.div_ceil(tile_size))
}

/// Halves a band with a 2x2 box mean, rounding half up.
pub fn downsample(band: &RasterBand) -> Result<RasterBand> {
    if band.width < 2 && band.height < 2 {
        return Err(Error::domain("cannot downsample a 1x1 band"));
    }
    let (sw, sh) = (band.width as usize, band.height as usize);
    let (w, h) = (sw.div_ceil(2), sh.div_ceil(2));
    let mut out = Vec::with_capacity(w * h);
    for oy in 0..h {
        let y0 = oy * 2;
        let top = &band.samples[y0 * sw..(y0 + 1) * sw];
        let bottom = (y0 + 1 < sh).then(|| &band.samples[(y0 + 1) * sw..(y0 + 2) * sw]);
        for ox in 0..w {
            let x0 = ox * 2;
            let mut sum = u32::from(top[x0]);
            let mut n = 1u32;
            if x0 + 1 < sw {
                sum += u32::from(top[x0 + 1]);
                n += 1;
            }
            if let Some(row) = bottom {
                sum += u32::from(row[x0]);
                n += 1;
                if x0 + 1 < sw {
                    sum += u32::from(row[x0 + 1]);
                    n += 1;
                }
            }
            out.push(((2 * sum + n) / (2 * n)) as u8);
        }
    }
    RasterBand::new(w as u32, h as u32, out)
}

/// Cuts one level into zero-padded tiles in row-major grid order.
pub fn slice_level(band: &RasterBand, tile_size: u32, level: u32, band_index: u32) -> Vec<Tile> {
    let (rows, cols) = grid_shape(band.width, band.height, tile_size);
    let ts = tile_size as usize;
    let mut tiles = Vec::with_capacity(rows as usize * cols as usize);
    for row in 0..rows {
        for col in 0..cols {
            let x0 = col * tile_size;
            let y0 = row * tile_size;
            let valid_width = (band.width - x0).min(tile_size);
            let valid_height = (band.height - y0).min(tile_size);
            let mut pixels = vec![0u8; ts * ts];
            for dy in 0..valid_height as usize {
                let src = (y0 as usize + dy) * band.width as usize + x0 as usize;
                pixels[dy * ts..dy * ts + valid_width as usize]
                    .copy_from_slice(&band.samples[src..src + valid_width as usize]);
            }
            tiles.push(Tile {
                address: TileAddress::new(level, row, col),
                band: band_index,
                tile_size,
                pixels,
                valid_width,
                valid_height,
            });
        }
    }
    tiles
}

/// Stitches a complete level grid back into a band, dropping padding.
pub fn reassemble(tiles: &[Tile], level: u32) -> Result<RasterBand> {
    let tiles: Vec<&Tile> = tiles.iter().filter(|t| t.address.level == level).collect();
    let first = tiles
        .first()
        .ok_or_else(|| Error::IncompleteMosaic { missing: vec![TileAddress::new(level, 0, 0)] })?;
    let ts = first.tile_size;
    let rows = tiles.iter().map(|t| t.address.row).max().unwrap_or(0) + 1;
    let cols = tiles.iter().map(|t| t.address.col).max().unwrap_or(0) + 1;

    let mut slots: Vec<Option<&Tile>> = vec![None; rows as usize * cols as usize];
    for t in &tiles {
        if t.tile_size != ts {
            return Err(Error::domain("tiles of mixed size in one level"));
        }
        slots[(t.address.row * cols + t.address.col) as usize] = Some(t);
    }
    let missing: Vec<TileAddress> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|&(r, c)| slots[(r * cols + c) as usize].is_none())
        .map(|(r, c)| TileAddress::new(level, r, c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteMosaic { missing });
    }

    let last = |r: u32, c: u32| slots[(r * cols + c) as usize].unwrap();
    let width = (cols - 1) * ts + last(0, cols - 1).valid_width;
    let height = (rows - 1) * ts + last(rows - 1, 0).valid_height;
    let mut samples = vec![0u8; width as usize * height as usize];
    for t in slots.into_iter().flatten() {
        let x0 = (t.address.col * ts) as usize;
        let y0 = (t.address.row * ts) as usize;
        let vw = t.valid_width as usize;
        if x0 + vw > width as usize || y0 + t.valid_height as usize > height as usize {
            return Err(Error::domain(format!("tile {} overruns the mosaic", t.address)));
        }
        for dy in 0..t.valid_height as usize {
            let dst = (y0 + dy) * width as usize + x0;
            let src = dy * ts as usize;
            samples[dst..dst + vw].copy_from_slice(&t.pixels[src..src + vw]);
        }
    }
    RasterBand::new(width, height, samples)
}

/// Iterates the resolution levels of one band, native first.
pub struct LevelBands {
    next: Option<RasterBand>,
    level: u32,
    level_count: u32,
}

impl LevelBands {
    pub fn new(band: RasterBand, level_count: u32) -> Self {
        LevelBands { next: Some(band), level: 0, level_count }
    }
}

impl Iterator for LevelBands {
    type Item = Result<(u32, RasterBand)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.level >= self.level_count {
            return None;
        }
        let current = self.next.take()?;
        let level = self.level;
        self.level += 1;
        if self.level < self.level_count {
            match downsample(&current) {
                Ok(d) => self.next = Some(d),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok((level, current)))
    }
}

/// Tiles of one band at one level.
#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub level: u32,
    pub width: u32,
    pub height: u32,
    pub tiles: Vec<Tile>,
}

/// Per-band, per-level tile sets.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub spec: PyramidSpec,
    pub bands: Vec<Vec<PyramidLevel>>,
}

impl Pyramid {
    pub fn tile_count(&self) -> usize {
        self.bands.iter().flatten().map(|l| l.tiles.len()).sum()
    }

    pub fn addresses(&self) -> BTreeSet<(u32, TileAddress)> {
        self.bands
            .iter()
            .flatten()
            .flat_map(|l| l.tiles.iter().map(|t| (t.band, t.address)))
            .collect()
    }
}

/// Builds a separate pyramid for every band of `image`.
pub fn build_pyramid(image: &RasterImage, spec: PyramidSpec) -> Result<Pyramid> {
    spec.validate()?;
    let max_levels = level_count_for(image.width, image.height, spec.tile_size);
    if spec.level_count > max_levels {
        return Err(Error::domain(format!(
            "{} levels requested, a {}x{} image supports at most {max_levels}",
            spec.level_count, image.width, image.height
        )));
    }
    let mut bands = Vec::with_capacity(image.bands.len());
    for (index, band) in image.bands.iter().enumerate() {
        if band.width != image.width || band.height != image.height {
            return Err(Error::domain(format!("band {index} does not match image dimensions")));
        }
        let mut levels = Vec::with_capacity(spec.level_count as usize);
        for step in LevelBands::new(band.clone(), spec.level_count) {
            let (level, data) = step?;
            levels.push(PyramidLevel {
                level,
                width: data.width,
                height: data.height,
                tiles: slice_level(&data, spec.tile_size, level, index as u32),
            });
        }
        bands.push(levels);
    }
    Ok(Pyramid { spec, bands })
}
