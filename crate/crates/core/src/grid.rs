//! Global plate-carrée tile grid.
//!
//! Level `k` splits the world into `2^k` rows of latitude and `2^(k+1)`
//! columns of longitude, so every tile is a `180 / 2^k` degree square. Row 0
//! is the southernmost band and column 0 starts at the antimeridian.
//!
//! Tile extents are west/south-inclusive and east/north-exclusive, except at
//! the world's east and north edges which are closed: `lon = 180` lands in the
//! last column and `lat = 90` in the last row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Coord;

/// Deepest level whose row/col indices fit comfortably in `u32`.
pub const MAX_GRID_LEVEL: u32 = 30;

/// Identity of a tile: pyramid or grid level plus row/col position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileAddress {
    pub level: u32,
    pub row: u32,
    pub col: u32,
}

impl TileAddress {
    pub const fn new(level: u32, row: u32, col: u32) -> Self {
        TileAddress { level, row, col }
    }

    /// Checks the address against the global grid shape of its level.
    pub fn check_global(&self) -> Result<()> {
        if self.level > MAX_GRID_LEVEL {
            return Err(Error::domain(format!("grid level {} too deep", self.level)));
        }
        let rows = 1u64 << self.level;
        if u64::from(self.row) >= rows || u64::from(self.col) >= 2 * rows {
            return Err(Error::domain(format!(
                "tile {self:?} outside the {rows}x{} grid of level {}",
                2 * rows,
                self.level
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for TileAddress {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.level, self.row, self.col)
    }
}

/// Longitude/latitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoPoint<T> {
    pub lon: T,
    pub lat: T,
}

impl<T: Coord> GeoPoint<T> {
    /// Builds a point inside the closed world rectangle.
    pub fn new(lon: T, lat: T) -> Result<Self> {
        let p = GeoPoint { lon, lat };
        if !p.in_world() {
            return Err(Error::domain(format!("point ({lon}, {lat}) outside the world")));
        }
        Ok(p)
    }

    pub fn in_world(&self) -> bool {
        let (w, e, s, n) = world::<T>();
        self.lon >= w && self.lon <= e && self.lat >= s && self.lat <= n
    }
}

/// Bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoExtent<T> {
    pub west: T,
    pub east: T,
    pub south: T,
    pub north: T,
}

impl<T: Coord> GeoExtent<T> {
    pub fn new(west: T, east: T, south: T, north: T) -> Result<Self> {
        let extent = GeoExtent { west, east, south, north };
        extent.validate()?;
        Ok(extent)
    }

    pub fn world() -> Self {
        let (west, east, south, north) = world::<T>();
        GeoExtent { west, east, south, north }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, e, s, n) = world::<T>();
        let ordered = self.west < self.east && self.south < self.north;
        let inside = self.west >= w && self.east <= e && self.south >= s && self.north <= n;
        if !(ordered && inside) {
            return Err(Error::domain(format!("invalid extent {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> T {
        self.east - self.west
    }

    pub fn height(&self) -> T {
        self.north - self.south
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Half-open containment with the world's east/north edges closed.
    pub fn contains(&self, p: &GeoPoint<T>) -> bool {
        let (_, world_east, _, world_north) = world::<T>();
        let in_lon = p.lon >= self.west
            && (p.lon < self.east || (self.east == world_east && p.lon == world_east));
        let in_lat = p.lat >= self.south
            && (p.lat < self.north || (self.north == world_north && p.lat == world_north));
        in_lon && in_lat
    }

    /// Whether `other` lies within `self` (closed comparison).
    pub fn covers(&self, other: &GeoExtent<T>) -> bool {
        other.west >= self.west
            && other.east <= self.east
            && other.south >= self.south
            && other.north <= self.north
    }

    /// True when the interiors overlap.
    pub fn overlaps_interior(&self, other: &GeoExtent<T>) -> bool {
        self.west < other.east
            && other.west < self.east
            && self.south < other.north
            && other.south < self.north
    }
}

fn world<T: Coord>() -> (T, T, T, T) {
    (T::lit(-180.0), T::lit(180.0), T::lit(-90.0), T::lit(90.0))
}

/// Edge length in degrees of a level-`k` tile.
pub fn tile_span<T: Coord>(level: u32) -> T {
    T::lit(180.0) / T::lit((1u64 << level) as f64)
}

/// Global tile containing `p` at grid level `level`.
pub fn tile_address_of<T: Coord>(p: GeoPoint<T>, level: u32) -> Result<TileAddress> {
    if level > MAX_GRID_LEVEL {
        return Err(Error::domain(format!("grid level {level} too deep")));
    }
    if !p.in_world() {
        return Err(Error::domain(format!("point ({}, {}) outside the world", p.lon, p.lat)));
    }
    let span: T = tile_span(level);
    let rows = 1u64 << level;
    let cols = rows << 1;
    let index = |offset: T, count: u64| -> u64 {
        let raw = (offset / span).floor().to_u64().unwrap_or(0);
        // the closed upper world edge maps to the last index instead of wrapping
        raw.min(count - 1) % count
    };
    let row = index(p.lat + T::lit(90.0), rows);
    let col = index(p.lon + T::lit(180.0), cols);
    Ok(TileAddress::new(level, row as u32, col as u32))
}

/// Geographic extent of a global grid tile.
pub fn extent_of<T: Coord>(a: TileAddress) -> Result<GeoExtent<T>> {
    a.check_global()?;
    let span: T = tile_span(a.level);
    let west = T::lit(f64::from(a.col)) * span - T::lit(180.0);
    let south = T::lit(f64::from(a.row)) * span - T::lit(90.0);
    Ok(GeoExtent { west, east: west + span, south, north: south + span })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(level: u32, row: u32, col: u32) -> TileAddress {
        TileAddress::new(level, row, col)
    }

    #[test]
    fn address_examples() {
        let p = GeoPoint::new(0.0_f64, 0.0).unwrap();
        assert_eq!(tile_address_of(p, 1).unwrap(), addr(1, 1, 2));
        let p = GeoPoint::new(-180.0_f64, -90.0).unwrap();
        assert_eq!(tile_address_of(p, 0).unwrap(), addr(0, 0, 0));
        let p = GeoPoint::new(179.9_f64, 89.9).unwrap();
        assert_eq!(tile_address_of(p, 2).unwrap(), addr(2, 3, 7));
        let p = GeoPoint::new(179.9_f32, 89.9).unwrap();
        assert_eq!(tile_address_of(p, 2).unwrap(), addr(2, 3, 7));
    }

    #[test]
    fn closed_world_edges_clamp() {
        let p = GeoPoint::new(180.0_f64, 90.0).unwrap();
        assert_eq!(tile_address_of(p, 3).unwrap(), addr(3, 7, 15));
        let e = extent_of::<f64>(addr(3, 7, 15)).unwrap();
        assert!(e.contains(&p));
    }

    #[test]
    fn out_of_world_is_domain_error() {
        assert!(GeoPoint::new(180.5_f64, 0.0).is_err());
        let p = GeoPoint { lon: 0.0_f64, lat: -91.0 };
        assert!(matches!(tile_address_of(p, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn extent_examples() {
        let e = extent_of::<f64>(addr(1, 1, 2)).unwrap();
        assert_eq!((e.west, e.east, e.south, e.north), (0.0, 90.0, 0.0, 90.0));
        let e = extent_of::<f64>(addr(0, 0, 0)).unwrap();
        assert_eq!((e.west, e.east, e.south, e.north), (-180.0, 0.0, -90.0, 90.0));
        let e = extent_of::<f32>(addr(2, 3, 7)).unwrap();
        assert_eq!((e.west, e.east, e.south, e.north), (135.0, 180.0, 45.0, 90.0));
    }

    #[test]
    fn extent_rejects_off_grid() {
        assert!(extent_of::<f64>(addr(1, 2, 0)).is_err());
        assert!(extent_of::<f64>(addr(1, 0, 4)).is_err());
        assert!(extent_of::<f64>(addr(1, 1, 3)).is_ok());
    }

    #[test]
    fn extent_validation() {
        assert!(GeoExtent::new(10.0_f64, 5.0, 0.0, 1.0).is_err());
        assert!(GeoExtent::new(-181.0_f64, 5.0, 0.0, 1.0).is_err());
        assert!(GeoExtent::new(-180.0_f64, 180.0, -90.0, 90.0).is_ok());
    }
}
