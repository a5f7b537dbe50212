//! Hilbert curve codec, tile row keys and key-range decomposition.
//!
//! The curve uses the classic rotate-and-accumulate formulation with code 0
//! at `(x=0, y=0)` and code 1 at `(x=0, y=1)`. Tile grids address `x` as the
//! column and `y` as the row.
//!
//! Row keys are eight big-endian bytes:
//!
//! ```text
//!  63        48 47     40 39     32 31                    0
//! +------------+---------+---------+-----------------------+
//! | raster_id  |  level  |  band   |     hilbert code      |
//! +------------+---------+---------+-----------------------+
//! ```
//!
//! so byte order and numeric order agree and every (raster, level, band)
//! prefix is one contiguous key run.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest curve order whose codes fit the 32-bit key field.
pub const MAX_ORDER: u32 = 16;

/// Band value marking a cell that packs every band of a tile.
pub const PACKED_BAND: u8 = 255;

fn check_order(order: u32) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::domain(format!("curve order {order} outside 1..={MAX_ORDER}")));
    }
    Ok(())
}

/// Position of cell `(x, y)` along the order-`order` curve.
pub fn hilbert_encode(order: u32, x: u32, y: u32) -> Result<u64> {
    check_order(order)?;
    let side = 1u64 << order;
    if u64::from(x) >= side || u64::from(y) >= side {
        return Err(Error::domain(format!("cell ({x}, {y}) outside the {side}x{side} grid")));
    }
    let (mut x, mut y) = (u64::from(x), u64::from(y));
    let mut code = 0u64;
    let mut s = side >> 1;
    while s > 0 {
        let rx = u64::from(x & s != 0);
        let ry = u64::from(y & s != 0);
        code += s * s * ((3 * rx) ^ ry);
        rotate(side, &mut x, &mut y, rx, ry);
        s >>= 1;
    }
    Ok(code)
}

/// Cell `(x, y)` at position `code` of the order-`order` curve.
pub fn hilbert_decode(order: u32, code: u64) -> Result<(u32, u32)> {
    check_order(order)?;
    let side = 1u64 << order;
    if code >= side * side {
        return Err(Error::domain(format!("code {code} outside order {order}")));
    }
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = code;
    let mut s = 1u64;
    while s < side {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        rotate(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s <<= 1;
    }
    Ok((x as u32, y as u32))
}

#[inline]
fn rotate(n: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = n - 1 - *x;
            *y = n - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

/// Smallest curve order whose square holds a `rows x cols` grid.
pub fn order_for_level(rows: u32, cols: u32) -> u32 {
    let largest = rows.max(cols).max(1);
    (u32::BITS - (largest - 1).leading_zeros()).max(1)
}

/// Decoded form of a tile row key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileKey {
    pub raster_id: u16,
    pub level: u8,
    pub band: u8,
    pub hilbert: u32,
}

impl TileKey {
    pub const LEN: usize = 8;

    pub const fn new(raster_id: u16, level: u8, band: u8, hilbert: u32) -> Self {
        TileKey { raster_id, level, band, hilbert }
    }

    /// Builds a key from wider integers, rejecting values that overflow a field.
    pub fn try_new(raster_id: u64, level: u64, band: u64, hilbert: u64) -> Result<Self> {
        let field = |name: &str, v: u64, bits: u32| -> Result<u64> {
            if v >> bits != 0 {
                Err(Error::domain(format!("{name} {v} does not fit in {bits} bits")))
            } else {
                Ok(v)
            }
        };
        Ok(TileKey {
            raster_id: field("raster_id", raster_id, 16)? as u16,
            level: field("level", level, 8)? as u8,
            band: field("band", band, 8)? as u8,
            hilbert: field("hilbert", hilbert, 32)? as u32,
        })
    }

    pub fn to_u64(self) -> u64 {
        u64::from(self.raster_id) << 48
            | u64::from(self.level) << 40
            | u64::from(self.band) << 32
            | u64::from(self.hilbert)
    }

    pub fn from_u64(v: u64) -> Self {
        TileKey {
            raster_id: (v >> 48) as u16,
            level: (v >> 40) as u8,
            band: (v >> 32) as u8,
            hilbert: v as u32,
        }
    }

    pub fn encode(self) -> [u8; 8] {
        self.to_u64().to_be_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let raw: [u8; 8] = bytes
            .try_into()
            .map_err(|_| Error::format(format!("row key must be 8 bytes, got {}", bytes.len())))?;
        Ok(TileKey::from_u64(u64::from_be_bytes(raw)))
    }
}

pub fn encode_tile_key(key: TileKey) -> [u8; 8] {
    key.encode()
}

pub fn decode_tile_key(bytes: &[u8]) -> Result<TileKey> {
    TileKey::decode(bytes)
}

/// Inclusive run of encoded row keys sharing one raster/level/band prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyRange {
    pub start: u64,
    pub end: u64,
}

impl KeyRange {
    pub fn new(start: TileKey, end: TileKey) -> Result<Self> {
        if (start.raster_id, start.level, start.band) != (end.raster_id, end.level, end.band) {
            return Err(Error::domain("key range must not cross a raster/level/band prefix"));
        }
        if start.hilbert > end.hilbert {
            return Err(Error::domain("key range start after end"));
        }
        Ok(KeyRange { start: start.to_u64(), end: end.to_u64() })
    }

    pub fn start_key(&self) -> TileKey {
        TileKey::from_u64(self.start)
    }

    pub fn end_key(&self) -> TileKey {
        TileKey::from_u64(self.end)
    }

    /// Hilbert codes covered, inclusive.
    pub fn codes(&self) -> RangeInclusive<u64> {
        u64::from(self.start_key().hilbert)..=u64::from(self.end_key().hilbert)
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl std::fmt::Display for KeyRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}-{:016x}", self.start, self.end)
    }
}

/// Maximal runs of curve codes covering the cells of a row/col rectangle.
///
/// Quadrants wholly inside the rectangle emit one run, disjoint ones are
/// dropped and straddling ones recurse; touching runs are merged afterwards.
pub fn hilbert_ranges(
    order: u32,
    rows: RangeInclusive<u32>,
    cols: RangeInclusive<u32>,
) -> Result<Vec<(u64, u64)>> {
    check_order(order)?;
    let side = 1u64 << order;
    if rows.is_empty() || cols.is_empty() {
        return Ok(Vec::new());
    }
    if u64::from(*rows.end()) >= side || u64::from(*cols.end()) >= side {
        return Err(Error::domain(format!(
            "rectangle rows {rows:?} cols {cols:?} outside the {side}x{side} grid"
        )));
    }
    let rect = Rect {
        x0: u64::from(*cols.start()),
        x1: u64::from(*cols.end()),
        y0: u64::from(*rows.start()),
        y1: u64::from(*rows.end()),
    };
    let mut out = Vec::new();
    collect_ranges(order, 0, side, &rect, &mut out)?;

    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(out.len());
    for (start, end) in out {
        match merged.last_mut() {
            Some(last) if last.1 + 1 == start => last.1 = end,
            _ => merged.push((start, end)),
        }
    }
    Ok(merged)
}

struct Rect {
    x0: u64,
    x1: u64,
    y0: u64,
    y1: u64,
}

// Each aligned quadrant is one contiguous code block; its corner cell is
// found by decoding the block's first code.
fn collect_ranges(order: u32, first: u64, side: u64, rect: &Rect, out: &mut Vec<(u64, u64)>) -> Result<()> {
    let (cx, cy) = hilbert_decode(order, first)?;
    let x0 = u64::from(cx) / side * side;
    let y0 = u64::from(cy) / side * side;
    let (x1, y1) = (x0 + side - 1, y0 + side - 1);
    if x1 < rect.x0 || x0 > rect.x1 || y1 < rect.y0 || y0 > rect.y1 {
        return Ok(());
    }
    if x0 >= rect.x0 && x1 <= rect.x1 && y0 >= rect.y0 && y1 <= rect.y1 {
        out.push((first, first + side * side - 1));
        return Ok(());
    }
    let half = side / 2;
    for quadrant in 0..4 {
        collect_ranges(order, first + quadrant * half * half, half, rect, out)?;
    }
    Ok(())
}

/// Key ranges covering a tile rectangle of one raster level and band.
pub fn bbox_to_ranges(
    raster_id: u16,
    band: u8,
    level: u8,
    order: u32,
    rows: RangeInclusive<u32>,
    cols: RangeInclusive<u32>,
) -> Result<Vec<KeyRange>> {
    hilbert_ranges(order, rows, cols)?
        .into_iter()
        .map(|(start, end)| {
            KeyRange::new(
                TileKey::try_new(raster_id.into(), level.into(), band.into(), start)?,
                TileKey::try_new(raster_id.into(), level.into(), band.into(), end)?,
            )
        })
        .collect()
}
