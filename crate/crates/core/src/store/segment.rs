//! Immutable sorted runs of cells on disk.
//!
//! All integers are big-endian.
//!
//! ```text
//! block   := payload_len:u32 payload crc32(payload):u32
//! cell    := row_len:u32 row fam_len:u16 fam qual_len:u16 qual ts:u64 value_len:u32 value
//! footer  := cell_count:u64 block_count:u32 max_ts:u64
//!            min_key_len:u32 min_key max_key_len:u32 max_key
//! trailer := footer_len:u32 crc32(footer):u32 magic:[u8; 8]
//! file    := block* footer trailer
//! ```
//!
//! Values are not kept in memory: opening a segment verifies every checksum
//! and keeps only the key index with value offsets.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use bytes::Bytes;

use super::cell::CellKey;
use crate::error::{Error, Result};

pub const SEGMENT_MAGIC: [u8; 8] = *b"RTSEG\0\0\x01";
const TRAILER_LEN: u64 = 16;
const BLOCK_TARGET: usize = 64 * 1024;

#[derive(Debug, Clone)]
struct IndexEntry {
    key: CellKey,
    offset: u64,
    len: u32,
}

#[derive(Debug)]
pub struct Segment {
    path: PathBuf,
    file: File,
    index: Vec<IndexEntry>,
    max_timestamp: u64,
    bytes: u64,
}

impl Segment {
    /// Writes a sorted run. Returns `None` when `cells` is empty.
    pub fn write<'a, I>(path: &Path, cells: I) -> Result<Option<Segment>>
    where
        I: IntoIterator<Item = (&'a CellKey, &'a Bytes)>,
    {
        let mut cells = cells.into_iter().peekable();
        if cells.peek().is_none() {
            return Ok(None);
        }
        let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);
        let mut index = Vec::new();
        let mut block: Vec<u8> = Vec::with_capacity(BLOCK_TARGET * 2);
        let mut pending: Vec<IndexEntry> = Vec::new();
        let mut written = 0u64;
        let mut block_count = 0u32;
        let mut max_timestamp = 0u64;
        let mut previous: Option<&CellKey> = None;

        let mut emit = |block: &mut Vec<u8>, pending: &mut Vec<IndexEntry>, out: &mut BufWriter<File>| -> Result<()> {
            out.write_all(&(block.len() as u32).to_be_bytes())?;
            out.write_all(block)?;
            out.write_all(&crc32fast::hash(block).to_be_bytes())?;
            for mut entry in pending.drain(..) {
                entry.offset += written + 4;
                index.push(entry);
            }
            written += block.len() as u64 + 8;
            block_count += 1;
            block.clear();
            Ok(())
        };

        for (key, value) in cells {
            if previous.is_some_and(|p| p >= key) {
                return Err(Error::domain("segment cells must be strictly sorted"));
            }
            previous = Some(key);
            max_timestamp = max_timestamp.max(key.timestamp);
            encode_key(&mut block, key)?;
            block.extend_from_slice(&(value.len() as u32).to_be_bytes());
            pending.push(IndexEntry { key: key.clone(), offset: block.len() as u64, len: value.len() as u32 });
            block.extend_from_slice(value);
            if block.len() >= BLOCK_TARGET {
                emit(&mut block, &mut pending, &mut out)?;
            }
        }
        if !block.is_empty() {
            emit(&mut block, &mut pending, &mut out)?;
        }

        let mut footer = Vec::new();
        footer.extend_from_slice(&(index.len() as u64).to_be_bytes());
        footer.extend_from_slice(&block_count.to_be_bytes());
        footer.extend_from_slice(&max_timestamp.to_be_bytes());
        for key in [&index[0].key.row, &index[index.len() - 1].key.row] {
            footer.extend_from_slice(&(key.len() as u32).to_be_bytes());
            footer.extend_from_slice(key);
        }
        out.write_all(&footer)?;
        out.write_all(&(footer.len() as u32).to_be_bytes())?;
        out.write_all(&crc32fast::hash(&footer).to_be_bytes())?;
        out.write_all(&SEGMENT_MAGIC)?;
        let file = out.into_inner().map_err(|e| e.into_error())?;
        drop(file);

        let bytes = written + footer.len() as u64 + TRAILER_LEN;
        Ok(Some(Segment {
            path: path.to_owned(),
            file: File::open(path)?,
            index,
            max_timestamp,
            bytes,
        }))
    }

    /// Opens and fully verifies a segment file.
    pub fn open(path: &Path) -> Result<Segment> {
        let corrupt = |message: String| Error::Integrity { path: path.to_owned(), message };
        let mut file = File::open(path)?;
        let file_len = file.metadata()?.len();
        if file_len < TRAILER_LEN {
            return Err(corrupt("file shorter than trailer".into()));
        }
        let mut trailer = [0u8; TRAILER_LEN as usize];
        file.seek(SeekFrom::Start(file_len - TRAILER_LEN))?;
        file.read_exact(&mut trailer)?;
        if trailer[8..] != SEGMENT_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let footer_len = u64::from(u32::from_be_bytes(trailer[0..4].try_into().unwrap()));
        let footer_crc = u32::from_be_bytes(trailer[4..8].try_into().unwrap());
        let data_len = file_len
            .checked_sub(TRAILER_LEN + footer_len)
            .ok_or_else(|| corrupt("footer longer than file".into()))?;
        let mut footer = vec![0u8; footer_len as usize];
        file.seek(SeekFrom::Start(data_len))?;
        file.read_exact(&mut footer)?;
        if crc32fast::hash(&footer) != footer_crc {
            return Err(corrupt("footer checksum mismatch".into()));
        }
        let mut fr = Cursor::new(&footer);
        let parsed = (|| -> Option<_> {
            let count = fr.u64()?;
            let blocks = fr.u32()?;
            let max_ts = fr.u64()?;
            let min_len = fr.u32()? as usize;
            let min = fr.take(min_len)?.to_vec();
            let max_len = fr.u32()? as usize;
            let max = fr.take(max_len)?.to_vec();
            Some((count, blocks, max_ts, min, max))
        })();
        let (cell_count, block_count, max_ts, min_key, max_key) =
            parsed.ok_or_else(|| corrupt("truncated footer".into()))?;

        file.seek(SeekFrom::Start(0))?;
        let mut reader = BufReader::with_capacity(1 << 20, file);
        let mut index: Vec<IndexEntry> = Vec::with_capacity(cell_count as usize);
        let mut position = 0u64;
        let mut blocks_seen = 0u32;
        let mut block = Vec::new();
        while position < data_len {
            let mut word = [0u8; 4];
            reader.read_exact(&mut word)?;
            let len = u32::from_be_bytes(word) as usize;
            if position + 8 + len as u64 > data_len {
                return Err(corrupt(format!("block at {position} overruns data region")));
            }
            block.resize(len, 0);
            reader.read_exact(&mut block)?;
            reader.read_exact(&mut word)?;
            if crc32fast::hash(&block) != u32::from_be_bytes(word) {
                return Err(corrupt(format!("block at {position} checksum mismatch")));
            }
            let mut cur = Cursor::new(&block);
            while !cur.done() {
                let (key, len) = decode_cell_header(&mut cur)
                    .ok_or_else(|| corrupt(format!("malformed cell in block at {position}")))?;
                let offset = position + 4 + cur.pos as u64;
                cur.take(len as usize).ok_or_else(|| corrupt("value overruns block".into()))?;
                if index.last().is_some_and(|prev| prev.key >= key) {
                    return Err(corrupt("cells out of order".into()));
                }
                index.push(IndexEntry { key, offset, len });
            }
            position += len as u64 + 8;
            blocks_seen += 1;
        }
        let consistent = index.len() as u64 == cell_count
            && blocks_seen == block_count
            && index.first().is_some_and(|e| e.key.row[..] == min_key[..])
            && index.last().is_some_and(|e| e.key.row[..] == max_key[..])
            && index.iter().map(|e| e.key.timestamp).max() == Some(max_ts);
        if !consistent {
            return Err(corrupt("footer does not match contents".into()));
        }
        Ok(Segment {
            path: path.to_owned(),
            file: reader.into_inner(),
            index,
            max_timestamp: max_ts,
            bytes: file_len,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn cell_count(&self) -> usize {
        self.index.len()
    }

    pub fn max_timestamp(&self) -> u64 {
        self.max_timestamp
    }

    pub fn file_bytes(&self) -> u64 {
        self.bytes
    }

    pub fn min_row(&self) -> &[u8] {
        &self.index[0].key.row
    }

    pub fn max_row(&self) -> &[u8] {
        &self.index[self.index.len() - 1].key.row
    }

    /// Keys with row in `[start, end]`, with their value handles.
    pub(crate) fn range<'s>(
        &'s self,
        start: &[u8],
        end: Option<&'s [u8]>,
    ) -> impl Iterator<Item = (&'s CellKey, ValueRef<'s>)> + 's {
        let lo = CellKey::row_start(start);
        let first = self.index.partition_point(|e| e.key < lo);
        self.index[first..]
            .iter()
            .take_while(move |e| end.is_none_or(|end| &e.key.row[..] <= end))
            .map(move |e| (&e.key, ValueRef { segment: self, offset: e.offset, len: e.len }))
    }

    fn read(&self, offset: u64, len: u32) -> Result<Bytes> {
        let mut buf = vec![0u8; len as usize];
        self.file.read_exact_at(&mut buf, offset)?;
        Ok(Bytes::from(buf))
    }
}

/// Lazily read value stored in a segment.
#[derive(Clone, Copy)]
pub(crate) struct ValueRef<'a> {
    segment: &'a Segment,
    offset: u64,
    len: u32,
}

impl ValueRef<'_> {
    pub(crate) fn load(&self) -> Result<Bytes> {
        self.segment.read(self.offset, self.len)
    }

    pub(crate) fn len(&self) -> u32 {
        self.len
    }
}

fn encode_key(buf: &mut Vec<u8>, key: &CellKey) -> Result<()> {
    if key.family.len() > usize::from(u16::MAX) || key.qualifier.len() > usize::from(u16::MAX) {
        return Err(Error::domain("family or qualifier longer than 65535 bytes"));
    }
    buf.extend_from_slice(&(key.row.len() as u32).to_be_bytes());
    buf.extend_from_slice(&key.row);
    buf.extend_from_slice(&(key.family.len() as u16).to_be_bytes());
    buf.extend_from_slice(key.family.as_bytes());
    buf.extend_from_slice(&(key.qualifier.len() as u16).to_be_bytes());
    buf.extend_from_slice(key.qualifier.as_bytes());
    buf.extend_from_slice(&key.timestamp.to_be_bytes());
    Ok(())
}

fn decode_cell_header(cur: &mut Cursor<'_>) -> Option<(CellKey, u32)> {
    let row_len = cur.u32()? as usize;
    let row = Bytes::copy_from_slice(cur.take(row_len)?);
    let fam_len = cur.u16()? as usize;
    let family = std::str::from_utf8(cur.take(fam_len)?).ok()?.to_owned();
    let qual_len = cur.u16()? as usize;
    let qualifier = std::str::from_utf8(cur.take(qual_len)?).ok()?.to_owned();
    let timestamp = cur.u64()?;
    let value_len = cur.u32()?;
    Some((CellKey { row, family, qualifier, timestamp }, value_len))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_be_bytes(self.take(2)?.try_into().ok()?))
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_be_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_be_bytes(self.take(8)?.try_into().ok()?))
    }
}
