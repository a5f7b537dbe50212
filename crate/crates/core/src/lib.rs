//! Tile-pyramid storage for large raster imagery.
//!
//! Images are cut into multi-resolution pyramids of fixed-size tiles, each tile
//! is keyed by a 64-bit row key whose low word is the tile's position along a
//! Hilbert curve, and the keyed cells are spread over a simulated cluster of
//! sorted key-value stores. Satellite metadata in several source dialects is
//! normalized into one archival record kept next to the tiles.
//!
//! Module map:
//!
//! - [`grid`]: global lon/lat tile grid and geographic extents
//! - [`raster`]: bands, downsampling, slicing and pyramid construction
//! - [`hilbert`]: curve codec, row keys and key-range decomposition
//! - [`metadata`]: dialect parsing, normalization and validation
//! - [`store`]: single-node sorted table store with persisted segments
//! - [`cluster`]: balanced placement, periodic batching, scatter scans
//! - [`query`]: bbox and point retrieval plus mosaicking
//! - [`ingest`], [`raster_file`], [`baseline`], [`bench`]: the end-to-end pipeline

pub mod baseline;
pub mod bench;
pub mod cluster;
pub mod error;
pub mod grid;
pub mod hilbert;
pub mod ingest;
pub mod metadata;
pub mod query;
pub mod raster;
pub mod raster_file;
pub mod scalar;
pub mod store;
pub mod tile_cell;

pub use error::{Error, Result};
pub use grid::TileAddress;
pub use hilbert::{KeyRange, TileKey};
pub use scalar::Coord;

/// Double-precision point; the precision used by the storage pipeline.
pub type GeoPoint = grid::GeoPoint<f64>;
/// Double-precision bounding box.
pub type GeoExtent = grid::GeoExtent<f64>;
pub type GeoPoint32 = grid::GeoPoint<f32>;
pub type GeoExtent32 = grid::GeoExtent<f32>;

/// Environment variable that overrides the data directory of the CLI.
pub const DATA_DIR_ENV: &str = "RASTILE_DATA_DIR";
