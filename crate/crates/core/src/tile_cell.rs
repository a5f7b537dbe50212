//! Value layout of a tile cell.
//!
//! ```text
//! tile_size:u16 valid_width:u16 valid_height:u16 band_count:u8 reserved:u8
//! band payloads, tile_size^2 bytes each, in band order
//! ```
//!
//! A packed cell (band field [`crate::hilbert::PACKED_BAND`] in its key) holds
//! every band of one address; an unpacked cell holds exactly one.

use bytes::{BufMut, Bytes, BytesMut};

use crate::error::{Error, Result};
use crate::grid::TileAddress;
use crate::raster::Tile;

pub const HEADER_LEN: usize = 8;

/// Concatenates co-located tiles of the same geometry into one cell value.
pub fn encode_tiles(tiles: &[&Tile]) -> Result<Bytes> {
    let first = tiles.first().ok_or_else(|| Error::domain("no tiles to encode"))?;
    if tiles.len() > usize::from(u8::MAX) {
        return Err(Error::domain(format!("{} bands do not fit one cell", tiles.len())));
    }
    let ts = first.tile_size as usize;
    let mut out = BytesMut::with_capacity(HEADER_LEN + tiles.len() * ts * ts);
    out.put_u16(first.tile_size as u16);
    out.put_u16(first.valid_width as u16);
    out.put_u16(first.valid_height as u16);
    out.put_u8(tiles.len() as u8);
    out.put_u8(0);
    for t in tiles {
        if t.address != first.address
            || t.tile_size != first.tile_size
            || t.valid_width != first.valid_width
            || t.valid_height != first.valid_height
        {
            return Err(Error::domain(format!("tile {} band {} does not match band {}", t.address, t.band, first.band)));
        }
        out.put_slice(&t.pixels);
    }
    Ok(out.freeze())
}

/// Number of bands stored in a cell value.
pub fn band_count(value: &[u8]) -> Result<usize> {
    header(value).map(|h| h.3)
}

fn header(value: &[u8]) -> Result<(u32, u32, u32, usize)> {
    if value.len() < HEADER_LEN {
        return Err(Error::format("tile cell shorter than its header"));
    }
    let be = |i: usize| u32::from(u16::from_be_bytes([value[i], value[i + 1]]));
    let (ts, vw, vh, bands) = (be(0), be(2), be(4), usize::from(value[6]));
    let plane = ts as usize * ts as usize;
    if ts == 0 || vw == 0 || vh == 0 || vw > ts || vh > ts || bands == 0 || value.len() != HEADER_LEN + bands * plane {
        return Err(Error::format(format!("inconsistent tile cell header ({ts}, {vw}, {vh}, {bands}, len {})", value.len())));
    }
    Ok((ts, vw, vh, bands))
}

/// Extracts the `slot`-th band of a cell as a tile at `address`.
pub fn decode_tile(value: &[u8], address: TileAddress, slot: usize, band: u32) -> Result<Tile> {
    let (tile_size, valid_width, valid_height, bands) = header(value)?;
    if slot >= bands {
        return Err(Error::format(format!("cell holds {bands} bands, band slot {slot} requested")));
    }
    let plane = tile_size as usize * tile_size as usize;
    let start = HEADER_LEN + slot * plane;
    Ok(Tile {
        address,
        band,
        tile_size,
        pixels: value[start..start + plane].to_vec(),
        valid_width,
        valid_height,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(band: u32, fill: u8) -> Tile {
        Tile {
            address: TileAddress::new(1, 2, 3),
            band,
            tile_size: 128,
            pixels: vec![fill; 128 * 128],
            valid_width: 100,
            valid_height: 128,
        }
    }

    #[test]
    fn packed_round_trip() {
        let tiles: Vec<Tile> = (0..4).map(|b| tile(b, b as u8 * 10)).collect();
        let refs: Vec<&Tile> = tiles.iter().collect();
        let cell = encode_tiles(&refs).unwrap();
        assert_eq!(cell.len(), HEADER_LEN + 4 * 128 * 128);
        assert_eq!(band_count(&cell).unwrap(), 4);
        for (i, t) in tiles.iter().enumerate() {
            assert_eq!(&decode_tile(&cell, t.address, i, t.band).unwrap(), t);
        }
        assert!(decode_tile(&cell, tiles[0].address, 4, 4).is_err());
    }

    #[test]
    fn mismatched_or_corrupt_cells() {
        let mut other = tile(1, 0);
        other.valid_width = 128;
        assert!(encode_tiles(&[&tile(0, 0), &other]).is_err());
        let cell = encode_tiles(&[&tile(0, 5)]).unwrap();
        assert!(band_count(&cell[..cell.len() - 1]).is_err());
        assert!(band_count(&cell[..4]).is_err());
    }
}
