//! Raw raster input files.
//!
//! ```text
//! header := 10 fields of 32 ASCII bytes, space padded:
//!           magic "RSR1", width, height, band_count, sample_type "u8",
//!           west, south, east, north, name
//! payload := band_count * width * height sample bytes, band sequential
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{RasterBand, RasterImage};
use crate::GeoExtent;

pub const MAGIC: &str = "RSR1";
pub const SAMPLE_TYPE: &str = "u8";
pub const FIELD_LEN: usize = 32;
pub const HEADER_LEN: usize = 10 * FIELD_LEN;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterFileHeader {
    pub width: u32,
    pub height: u32,
    pub band_count: u32,
    pub extent: GeoExtent,
    pub name: String,
}

impl RasterFileHeader {
    pub fn new(width: u32, height: u32, band_count: u32, extent: GeoExtent, name: impl Into<String>) -> Result<Self> {
        let h = RasterFileHeader { width, height, band_count, extent, name: name.into() };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.band_count == 0 {
            return Err(Error::domain(format!(
                "raster needs positive dimensions and bands, got {}x{}x{}",
                self.width, self.height, self.band_count
            )));
        }
        if self.band_count > u32::from(u8::MAX) - 1 {
            return Err(Error::domain(format!("at most 254 bands, got {}", self.band_count)));
        }
        if self.name.is_empty() || self.name.len() > FIELD_LEN || !self.name.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(Error::domain(format!("raster name {:?} must be 1-32 printable ASCII bytes", self.name)));
        }
        self.extent.validate()
    }

    pub fn band_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn payload_len(&self) -> u64 {
        self.band_len() as u64 * u64::from(self.band_count)
    }

    pub fn encode(&self) -> Result<[u8; HEADER_LEN]> {
        self.validate()?;
        let e = &self.extent;
        let fields = [
            MAGIC.to_owned(),
            self.width.to_string(),
            self.height.to_string(),
            self.band_count.to_string(),
            SAMPLE_TYPE.to_owned(),
            coord_text(e.west)?,
            coord_text(e.south)?,
            coord_text(e.east)?,
            coord_text(e.north)?,
            self.name.clone(),
        ];
        let mut out = [b' '; HEADER_LEN];
        for (i, f) in fields.iter().enumerate() {
            out[i * FIELD_LEN..i * FIELD_LEN + f.len()].copy_from_slice(f.as_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(format!("raster header needs {HEADER_LEN} bytes, got {}", bytes.len())));
        }
        let field = |i: usize| -> Result<&str> {
            std::str::from_utf8(&bytes[i * FIELD_LEN..(i + 1) * FIELD_LEN])
                .map(str::trim_end)
                .map_err(|_| Error::format(format!("raster header field {i} is not ASCII")))
        };
        if field(0)? != MAGIC {
            return Err(Error::format(format!("not a raster file (magic {:?})", field(0)?)));
        }
        if field(4)? != SAMPLE_TYPE {
            return Err(Error::format(format!("unsupported sample type {:?}", field(4)?)));
        }
        let int = |i: usize| -> Result<u32> {
            let f = field(i)?;
            f.parse().map_err(|_| Error::format(format!("bad integer {f:?} in raster header")))
        };
        let float = |i: usize| -> Result<f64> {
            let f = field(i)?;
            f.parse().map_err(|_| Error::format(format!("bad coordinate {f:?} in raster header")))
        };
        let extent = GeoExtent { west: float(5)?, south: float(6)?, east: float(7)?, north: float(8)? };
        let h = RasterFileHeader {
            width: int(1)?,
            height: int(2)?,
            band_count: int(3)?,
            extent,
            name: field(9)?.to_owned(),
        };
        h.validate().map_err(|e| Error::format(format!("invalid raster header: {e}")))?;
        Ok(h)
    }
}

fn coord_text(v: f64) -> Result<String> {
    let plain = v.to_string();
    let text = if plain.len() <= FIELD_LEN { plain } else { format!("{v:e}") };
    if text.len() > FIELD_LEN {
        return Err(Error::domain(format!("coordinate {v} does not fit the header")));
    }
    Ok(text)
}

pub fn write_raster(path: impl AsRef<Path>, image: &RasterImage, name: &str) -> Result<RasterFileHeader> {
    let header = RasterFileHeader::new(image.width, image.height, image.band_count() as u32, image.extent, name)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header.encode()?)?;
    for band in &image.bands {
        out.write_all(&band.samples)?;
    }
    out.flush()?;
    Ok(header)
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<(RasterFileHeader, RasterImage)> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let actual = file.metadata()?.len();
    let mut input = BufReader::new(file);
    let mut head = [0u8; HEADER_LEN];
    input
        .read_exact(&mut head)
        .map_err(|_| Error::format(format!("{} is too short for a raster header", path.display())))?;
    let header = RasterFileHeader::decode(&head)?;
    let expected = HEADER_LEN as u64 + header.payload_len();
    if actual != expected {
        return Err(Error::format(format!("{} has {actual} bytes, header implies {expected}", path.display())));
    }
    let mut bands = Vec::with_capacity(header.band_count as usize);
    for _ in 0..header.band_count {
        let mut samples = vec![0u8; header.band_len()];
        input.read_exact(&mut samples)?;
        bands.push(RasterBand::new(header.width, header.height, samples)?);
    }
    let image = RasterImage::new(bands, header.extent)?;
    Ok((header, image))
}

/// Georeference given to generated images: one degree square at 10E 20N.
pub fn synthetic_extent() -> GeoExtent {
    GeoExtent { west: 10.0, east: 11.0, south: 20.0, north: 21.0 }
}

pub fn synthetic_name(width: u32, height: u32, bands: u32, seed: u64) -> String {
    format!("syn-{width}x{height}x{bands}-{seed}")
}

/// Deterministic pseudorandom image; band `b` draws from the stream right
/// after band `b - 1`.
pub fn gen_synthetic(width: u32, height: u32, bands: u32, seed: u64) -> Result<RasterImage> {
    if width == 0 || height == 0 || bands == 0 {
        return Err(Error::domain(format!("synthetic image needs positive dimensions, got {width}x{height}x{bands}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = (0..bands)
        .map(|_| {
            let mut samples = vec![0u8; width as usize * height as usize];
            rng.fill_bytes(&mut samples);
            RasterBand::new(width, height, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    RasterImage::new(bands, synthetic_extent())
}

/// Generates and writes a synthetic raster file.
pub fn write_synthetic(path: impl AsRef<Path>, width: u32, height: u32, bands: u32, seed: u64) -> Result<RasterFileHeader> {
    let image = gen_synthetic(width, height, bands, seed)?;
    write_raster(path, &image, &synthetic_name(width, height, bands, seed))
}
