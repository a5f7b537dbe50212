//! Unindexed comparison store.
//!
//! Records are appended to one or more logs in arrival order, dealt
//! round-robin over the logs. Nothing is sorted or indexed, so every query
//! reads every log from start to end.
//!
//! ```text
//! record := key:u64 value_len:u32 value
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use bytes::Bytes;
use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::hilbert::TileKey;
use crate::query::{RasterLayout, TileQuery};
use crate::raster::Tile;
use crate::tile_cell::decode_tile;

const READ_BUFFER: usize = 1 << 20;

pub struct BaselineStore {
    dir: PathBuf,
    logs: Vec<Mutex<BufWriter<File>>>,
    next: Mutex<usize>,
}

fn log_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("log-{i:03}.bin"))
}

impl BaselineStore {
    /// Opens (or starts) `shards` append logs under `dir`.
    pub fn open(dir: impl AsRef<Path>, shards: usize) -> Result<Self> {
        if shards == 0 {
            return Err(Error::domain("baseline store needs at least one log"));
        }
        let dir = dir.as_ref().to_owned();
        fs::create_dir_all(&dir)?;
        let logs = (0..shards)
            .map(|i| {
                let f = OpenOptions::new().create(true).append(true).open(log_path(&dir, i))?;
                Ok(Mutex::new(BufWriter::new(f)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BaselineStore { dir, logs, next: Mutex::new(0) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn shard_count(&self) -> usize {
        self.logs.len()
    }

    /// Appends `records`, one writer per log running concurrently.
    pub fn append(&self, records: Vec<(TileKey, Bytes)>) -> Result<()> {
        let n = self.logs.len();
        let mut per_log: Vec<Vec<(TileKey, Bytes)>> = vec![Vec::new(); n];
        {
            let mut next = self.next.lock();
            for r in records {
                per_log[*next].push(r);
                *next = (*next + 1) % n;
            }
        }
        let write = |log: &Mutex<BufWriter<File>>, records: Vec<(TileKey, Bytes)>| -> Result<()> {
            let mut out = log.lock();
            for (key, value) in records {
                out.write_all(&key.to_u64().to_be_bytes())?;
                out.write_all(&(value.len() as u32).to_be_bytes())?;
                out.write_all(&value)?;
            }
            out.flush()?;
            Ok(())
        };
        if n == 1 {
            return write(&self.logs[0], per_log.pop().unwrap());
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .logs
                .iter()
                .zip(per_log)
                .filter(|(_, r)| !r.is_empty())
                .map(|(log, records)| scope.spawn(move || write(log, records)))
                .collect();
            handles.into_iter().try_for_each(|h| h.join().expect("baseline writer panicked"))
        })
    }

    /// Every record matching `keep`, found by reading all logs in full.
    pub fn scan(&self, keep: impl Fn(&TileKey) -> bool + Sync) -> Result<Vec<(TileKey, Bytes)>> {
        let read = |i: usize| -> Result<Vec<(TileKey, Bytes)>> {
            let mut input = BufReader::with_capacity(READ_BUFFER, File::open(log_path(&self.dir, i))?);
            let mut out = Vec::new();
            let mut head = [0u8; 12];
            let mut value = Vec::new();
            loop {
                match input.read_exact(&mut head) {
                    Ok(()) => {}
                    Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
                    Err(e) => return Err(e.into()),
                }
                let key = TileKey::from_u64(u64::from_be_bytes(head[..8].try_into().unwrap()));
                let len = u32::from_be_bytes(head[8..].try_into().unwrap()) as usize;
                value.resize(len, 0);
                input.read_exact(&mut value).map_err(|_| Error::Integrity {
                    path: log_path(&self.dir, i),
                    message: "truncated record".into(),
                })?;
                if keep(&key) {
                    out.push((key, Bytes::copy_from_slice(&value)));
                }
            }
            Ok(out)
        };
        let mut all: Vec<(TileKey, Bytes)> = if self.logs.len() == 1 {
            read(0)?
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..self.logs.len()).map(|i| scope.spawn(move || read(i))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("baseline reader panicked"))
                    .collect::<Result<Vec<_>>>()
            })?
            .into_iter()
            .flatten()
            .collect()
        };
        all.sort_by_key(|(k, _)| *k);
        Ok(all)
    }

    /// Tiles a bbox query selects, by filtering a full scan.
    pub fn query_tiles(&self, layout: &RasterLayout, q: &TileQuery) -> Result<Vec<Tile>> {
        layout.check_level(q.level)?;
        layout.check_band(q.band)?;
        let Some(window) = layout.resolve(q.level, &q.extent)? else { return Ok(Vec::new()) };
        let band_key = layout.band_key(q.band);
        let records = self.scan(|k| {
            k.raster_id == layout.raster_id
                && u32::from(k.level) == q.level
                && k.band == band_key
                && layout
                    .address_of(k)
                    .map(|a| window.rows.contains(&a.row) && window.cols.contains(&a.col))
                    .unwrap_or(false)
        })?;
        let slot = if layout.packed { q.band as usize } else { 0 };
        let mut tiles = records
            .iter()
            .map(|(k, v)| decode_tile(v, layout.address_of(k)?, slot, q.band))
            .collect::<Result<Vec<_>>>()?;
        tiles.sort_by_key(|t| (t.address.row, t.address.col));
        Ok(tiles)
    }

    /// Bytes held by all logs.
    pub fn size_bytes(&self) -> Result<u64> {
        (0..self.logs.len()).try_fold(0, |acc, i| Ok(acc + fs::metadata(log_path(&self.dir, i))?.len()))
    }
}
