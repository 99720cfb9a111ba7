//! The `.wtif` container: a subset of little-endian classic TIFF.
//!
//! Each IFD describes one pyramid level, finest first, and carries exactly
//! these tags:
//!
//! | tag | name                      | value                       |
//! |-----|---------------------------|-----------------------------|
//! | 256 | ImageWidth                | SHORT or LONG               |
//! | 257 | ImageLength               | SHORT or LONG               |
//! | 258 | BitsPerSample             | 8,8,8                       |
//! | 259 | Compression               | 1 (none) or 7 (JPEG)        |
//! | 262 | PhotometricInterpretation | 2 (RGB)                     |
//! | 322 | TileWidth                 | multiple of 16              |
//! | 323 | TileLength                | multiple of 16              |
//! | 324 | TileOffsets               | one per tile, row-major     |
//! | 325 | TileByteCounts            | one per tile                |
//!
//! Other tags are ignored by the reader. Edge tiles are stored padded to the
//! full tile size; uncompressed tiles are exactly `tw*th*3` bytes and JPEG
//! tiles are complete, self-contained JFIF streams.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use super::SlideError;
use crate::codec;
use crate::raster::RasterTile;

pub const TAG_IMAGE_WIDTH: u16 = 256;
pub const TAG_IMAGE_LENGTH: u16 = 257;
pub const TAG_BITS_PER_SAMPLE: u16 = 258;
pub const TAG_COMPRESSION: u16 = 259;
pub const TAG_PHOTOMETRIC: u16 = 262;
pub const TAG_TILE_WIDTH: u16 = 322;
pub const TAG_TILE_LENGTH: u16 = 323;
pub const TAG_TILE_OFFSETS: u16 = 324;
pub const TAG_TILE_BYTE_COUNTS: u16 = 325;

const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;

const MAX_LEVELS: usize = 32;
const MAX_TILE_SIDE: u32 = 4096;
const MIN_TILE_SIDE: u32 = 16;
const MAX_IMAGE_SIDE: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageCompression {
    None,
    Jpeg { quality: u8 },
}

impl StorageCompression {
    fn tag_value(self) -> u16 {
        match self {
            StorageCompression::None => 1,
            StorageCompression::Jpeg { .. } => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WtifOptions {
    pub tile_width: u32,
    pub tile_height: u32,
    pub compression: StorageCompression,
}

impl Default for WtifOptions {
    fn default() -> Self {
        WtifOptions {
            tile_width: 256,
            tile_height: 256,
            compression: StorageCompression::None,
        }
    }
}

/// Positional, thread-safe byte access to the container.
#[derive(Debug)]
pub(crate) enum ByteSource {
    File { file: File, len: u64 },
    Memory(Arc<[u8]>),
}

impl ByteSource {
    pub(crate) fn len(&self) -> u64 {
        match self {
            ByteSource::File { len, .. } => *len,
            ByteSource::Memory(m) => m.len() as u64,
        }
    }

    pub(crate) fn read_at(&self, offset: u64, buf: &mut [u8]) -> Result<(), SlideError> {
        let end = offset
            .checked_add(buf.len() as u64)
            .filter(|e| *e <= self.len())
            .ok_or_else(|| {
                SlideError::MalformedContainer(format!(
                    "read of {} bytes at {offset} past end of file ({})",
                    buf.len(),
                    self.len()
                ))
            })?;
        match self {
            ByteSource::Memory(m) => {
                buf.copy_from_slice(&m[offset as usize..end as usize]);
                Ok(())
            }
            ByteSource::File { file, .. } => {
                read_exact_at(file, buf, offset)?;
                Ok(())
            }
        }
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

/// Geometry and tile table of one parsed level.
#[derive(Debug, Clone)]
pub(crate) struct LevelLayout {
    pub width: u32,
    pub height: u32,
    pub tile_width: u32,
    pub tile_height: u32,
    pub jpeg: bool,
    pub offsets: Vec<u64>,
    pub byte_counts: Vec<u64>,
}

impl LevelLayout {
    pub(crate) fn tiles_across(&self) -> u32 {
        self.width.div_ceil(self.tile_width)
    }

    pub(crate) fn tiles_down(&self) -> u32 {
        self.height.div_ceil(self.tile_height)
    }

    /// Decode the full (padded) tile at grid position (`col`, `row`).
    pub(crate) fn decode_tile(&self, src: &ByteSource, col: u32, row: u32) -> Result<RasterTile, SlideError> {
        if col >= self.tiles_across() || row >= self.tiles_down() {
            return Err(SlideError::DecodeError(format!("tile {col},{row} outside the level grid")));
        }
        let idx = (row * self.tiles_across() + col) as usize;
        let mut buf = vec![0u8; self.byte_counts[idx] as usize];
        src.read_at(self.offsets[idx], &mut buf)?;
        let tile = if self.jpeg {
            codec::decode_jpeg(&buf).map_err(|e| SlideError::DecodeError(format!("tile {col},{row}: {e}")))?
        } else {
            RasterTile::from_raw(self.tile_width, self.tile_height, buf)
                .map_err(|e| SlideError::DecodeError(e.to_string()))?
        };
        if tile.dimensions() != (self.tile_width, self.tile_height) {
            return Err(SlideError::DecodeError(format!(
                "tile {col},{row} decoded to {}x{}, expected {}x{}",
                tile.width(),
                tile.height(),
                self.tile_width,
                self.tile_height
            )));
        }
        Ok(tile)
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    typ: u16,
    count: u32,
    raw: [u8; 4],
}

fn malformed(msg: impl Into<String>) -> SlideError {
    SlideError::MalformedContainer(msg.into())
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn tag_name(tag: u16) -> &'static str {
    match tag {
        TAG_IMAGE_WIDTH => "ImageWidth",
        TAG_IMAGE_LENGTH => "ImageLength",
        TAG_BITS_PER_SAMPLE => "BitsPerSample",
        TAG_COMPRESSION => "Compression",
        TAG_PHOTOMETRIC => "PhotometricInterpretation",
        TAG_TILE_WIDTH => "TileWidth",
        TAG_TILE_LENGTH => "TileLength",
        TAG_TILE_OFFSETS => "TileOffsets",
        TAG_TILE_BYTE_COUNTS => "TileByteCounts",
        _ => "unknown",
    }
}

fn read_values(src: &ByteSource, tag: u16, e: &Entry) -> Result<Vec<u64>, SlideError> {
    let size: u64 = match e.typ {
        TYPE_SHORT => 2,
        TYPE_LONG => 4,
        other => {
            return Err(malformed(format!(
                "{} has field type {other}, expected SHORT or LONG",
                tag_name(tag)
            )))
        }
    };
    if e.count == 0 {
        return Err(malformed(format!("{} has no values", tag_name(tag))));
    }
    let total = size * e.count as u64;
    let bytes = if total <= 4 {
        e.raw[..total as usize].to_vec()
    } else {
        let offset = le_u32(&e.raw) as u64;
        if offset + total > src.len() {
            return Err(malformed(format!(
                "{} values at {offset}..{} outside file of {} bytes",
                tag_name(tag),
                offset + total,
                src.len()
            )));
        }
        let mut buf = vec![0u8; total as usize];
        src.read_at(offset, &mut buf)?;
        buf
    };
    Ok(bytes
        .chunks_exact(size as usize)
        .map(|c| if size == 2 { le_u16(c) as u64 } else { le_u32(c) as u64 })
        .collect())
}

fn scalar(src: &ByteSource, tags: &BTreeMap<u16, Entry>, tag: u16) -> Result<u64, SlideError> {
    let e = tags
        .get(&tag)
        .ok_or_else(|| malformed(format!("missing required tag {} ({tag})", tag_name(tag))))?;
    if e.count != 1 {
        return Err(malformed(format!(
            "{} must have exactly one value, has {}",
            tag_name(tag),
            e.count
        )));
    }
    Ok(read_values(src, tag, e)?[0])
}

fn array(src: &ByteSource, tags: &BTreeMap<u16, Entry>, tag: u16) -> Result<Vec<u64>, SlideError> {
    let e = tags
        .get(&tag)
        .ok_or_else(|| malformed(format!("missing required tag {} ({tag})", tag_name(tag))))?;
    read_values(src, tag, e)
}

/// Parse and validate every IFD. Nothing is decoded; tile payloads are only
/// range-checked.
pub(crate) fn parse(src: &ByteSource) -> Result<Vec<LevelLayout>, SlideError> {
    let len = src.len();
    if len < 8 {
        return Err(malformed(format!("truncated header ({len} bytes)")));
    }
    let mut header = [0u8; 8];
    src.read_at(0, &mut header)?;
    match &header[0..2] {
        b"II" => {}
        b"MM" => return Err(SlideError::UnsupportedFeature("big-endian byte order".into())),
        other => return Err(malformed(format!("bad byte-order magic {other:02x?}"))),
    }
    match le_u16(&header[2..4]) {
        42 => {}
        43 => return Err(SlideError::UnsupportedFeature("BigTIFF".into())),
        v => return Err(malformed(format!("bad TIFF version {v}"))),
    }
    let mut next = le_u32(&header[4..8]) as u64;
    if next == 0 {
        return Err(malformed("no image file directory"));
    }

    let mut levels: Vec<LevelLayout> = Vec::new();
    let mut visited = HashSet::new();
    while next != 0 {
        if levels.len() >= MAX_LEVELS {
            return Err(malformed(format!("more than {MAX_LEVELS} IFDs")));
        }
        if !visited.insert(next) {
            return Err(malformed(format!("IFD chain loops back to offset {next}")));
        }
        if next < 8 || next + 2 > len {
            return Err(malformed(format!("IFD offset {next} outside file of {len} bytes")));
        }
        let mut count_buf = [0u8; 2];
        src.read_at(next, &mut count_buf)?;
        let count = le_u16(&count_buf) as u64;
        if count == 0 {
            return Err(malformed(format!("IFD at {next} has no entries")));
        }
        let ifd_len = count * 12 + 4;
        if next + 2 + ifd_len > len {
            return Err(malformed(format!(
                "IFD at {next} with {count} entries runs past end of file"
            )));
        }
        let mut body = vec![0u8; ifd_len as usize];
        src.read_at(next + 2, &mut body)?;
        let mut tags = BTreeMap::new();
        for chunk in body[..(count * 12) as usize].chunks_exact(12) {
            let tag = le_u16(&chunk[0..2]);
            let entry = Entry {
                typ: le_u16(&chunk[2..4]),
                count: le_u32(&chunk[4..8]),
                raw: [chunk[8], chunk[9], chunk[10], chunk[11]],
            };
            if tags.insert(tag, entry).is_some() {
                return Err(malformed(format!("duplicate tag {tag} in IFD at {next}")));
            }
        }
        levels.push(parse_level(src, &tags, levels.len())?);
        next = le_u32(&body[(count * 12) as usize..]) as u64;
    }

    check_pyramid(&levels)?;
    check_tile_extents(&levels, len)?;
    Ok(levels)
}

fn parse_level(src: &ByteSource, tags: &BTreeMap<u16, Entry>, index: usize) -> Result<LevelLayout, SlideError> {
    let ctx = |msg: String| malformed(format!("level {index}: {msg}"));
    let width = scalar(src, tags, TAG_IMAGE_WIDTH)?;
    let height = scalar(src, tags, TAG_IMAGE_LENGTH)?;
    if width == 0 || height == 0 {
        return Err(ctx(format!("zero image dimension {width}x{height}")));
    }
    if width > MAX_IMAGE_SIDE as u64 || height > MAX_IMAGE_SIDE as u64 {
        return Err(SlideError::UnsupportedFeature(format!(
            "level {index}: image {width}x{height} exceeds {MAX_IMAGE_SIDE} per side"
        )));
    }

    let bits = array(src, tags, TAG_BITS_PER_SAMPLE)?;
    if bits.len() != 3 {
        return Err(SlideError::UnsupportedFeature(format!(
            "level {index}: {} samples per pixel, only RGB is supported",
            bits.len()
        )));
    }
    if bits.iter().any(|b| *b != 8) {
        return Err(SlideError::UnsupportedFeature(format!(
            "level {index}: bits per sample {bits:?}, only 8 is supported"
        )));
    }

    let jpeg = match scalar(src, tags, TAG_COMPRESSION)? {
        1 => false,
        7 => true,
        other => {
            return Err(SlideError::UnsupportedFeature(format!(
                "level {index}: compression {other}"
            )))
        }
    };
    match scalar(src, tags, TAG_PHOTOMETRIC)? {
        2 => {}
        other => {
            return Err(SlideError::UnsupportedFeature(format!(
                "level {index}: photometric interpretation {other}, only RGB (2) is supported"
            )))
        }
    }

    let tile_width = scalar(src, tags, TAG_TILE_WIDTH)?;
    let tile_height = scalar(src, tags, TAG_TILE_LENGTH)?;
    for (name, v) in [("tile width", tile_width), ("tile length", tile_height)] {
        if v < MIN_TILE_SIDE as u64 || v % 16 != 0 {
            return Err(ctx(format!("{name} {v} must be a multiple of 16 and at least 16")));
        }
        if v > MAX_TILE_SIDE as u64 {
            return Err(SlideError::UnsupportedFeature(format!(
                "level {index}: {name} {v} exceeds {MAX_TILE_SIDE}"
            )));
        }
    }
    let (width, height) = (width as u32, height as u32);
    let (tile_width, tile_height) = (tile_width as u32, tile_height as u32);
    let expected = width.div_ceil(tile_width) as u64 * height.div_ceil(tile_height) as u64;

    let offsets = array(src, tags, TAG_TILE_OFFSETS)?;
    let byte_counts = array(src, tags, TAG_TILE_BYTE_COUNTS)?;
    if offsets.len() as u64 != expected {
        return Err(ctx(format!(
            "{} tile offsets for a {expected}-tile grid",
            offsets.len()
        )));
    }
    if byte_counts.len() as u64 != expected {
        return Err(ctx(format!(
            "{} tile byte counts for a {expected}-tile grid",
            byte_counts.len()
        )));
    }
    let raw_tile = tile_width as u64 * tile_height as u64 * 3;
    for (i, &c) in byte_counts.iter().enumerate() {
        if c == 0 {
            return Err(ctx(format!("tile {i} has zero byte count")));
        }
        if !jpeg && c != raw_tile {
            return Err(ctx(format!(
                "uncompressed tile {i} has {c} bytes, expected {raw_tile}"
            )));
        }
    }
    Ok(LevelLayout {
        width,
        height,
        tile_width,
        tile_height,
        jpeg,
        offsets,
        byte_counts,
    })
}

fn check_pyramid(levels: &[LevelLayout]) -> Result<(), SlideError> {
    for pair in levels.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.width > prev.width.div_ceil(2) || cur.height > prev.height.div_ceil(2) {
            return Err(malformed(format!(
                "level {}x{} is not at most half of the previous {}x{}",
                cur.width, cur.height, prev.width, prev.height
            )));
        }
    }
    Ok(())
}

fn check_tile_extents(levels: &[LevelLayout], file_len: u64) -> Result<(), SlideError> {
    let mut extents: Vec<(u64, u64)> = Vec::new();
    for (li, level) in levels.iter().enumerate() {
        for (i, (&off, &cnt)) in level.offsets.iter().zip(&level.byte_counts).enumerate() {
            let end = off + cnt;
            if off < 8 || end > file_len {
                return Err(malformed(format!(
                    "level {li} tile {i} extent {off}..{end} outside data area of {file_len}-byte file"
                )));
            }
            extents.push((off, end));
        }
    }
    extents.sort_unstable();
    for w in extents.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(malformed(format!(
                "overlapping tile extents {}..{} and {}..{}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    Ok(())
}

/// Serialize a pyramid (finest level first) as a `.wtif` container.
pub fn encode_wtif(levels: &[RasterTile], opts: &WtifOptions) -> Result<Vec<u8>, SlideError> {
    if levels.is_empty() {
        return Err(SlideError::InvalidSpec("no levels to write".into()));
    }
    for (name, v) in [("tile width", opts.tile_width), ("tile height", opts.tile_height)] {
        if v < MIN_TILE_SIDE || v % 16 != 0 || v > MAX_TILE_SIDE {
            return Err(SlideError::InvalidSpec(format!(
                "{name} {v} must be a multiple of 16 in {MIN_TILE_SIDE}..={MAX_TILE_SIDE}"
            )));
        }
    }
    for pair in levels.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.width() > a.width().div_ceil(2) || b.height() > a.height().div_ceil(2) {
            return Err(SlideError::InvalidSpec(
                "each level must be at most half the previous".into(),
            ));
        }
    }
    if let StorageCompression::Jpeg { quality } = opts.compression {
        codec::JpegSettings::new(quality).map_err(|e| SlideError::InvalidSpec(e.to_string()))?;
    }

    let (tw, th) = (opts.tile_width, opts.tile_height);
    let mut out = vec![b'I', b'I', 42, 0, 0, 0, 0, 0];
    let mut tables: Vec<(Vec<u64>, Vec<u64>)> = Vec::with_capacity(levels.len());
    for level in levels {
        let across = level.width().div_ceil(tw);
        let down = level.height().div_ceil(th);
        let mut offsets = Vec::with_capacity((across * down) as usize);
        let mut counts = Vec::with_capacity((across * down) as usize);
        for row in 0..down {
            for col in 0..across {
                let mut tile = RasterTile::black(tw, th);
                let x = col * tw;
                let y = row * th;
                let w = tw.min(level.width() - x);
                let h = th.min(level.height() - y);
                tile.blit_window(level, x, y, w, h, 0, 0);
                let payload = match opts.compression {
                    StorageCompression::None => tile.into_bytes(),
                    StorageCompression::Jpeg { quality } => codec::encode_jpeg(&tile, quality)
                        .map_err(|e| SlideError::InvalidSpec(e.to_string()))?,
                };
                offsets.push(out.len() as u64);
                counts.push(payload.len() as u64);
                out.extend_from_slice(&payload);
                if out.len() % 2 == 1 {
                    out.push(0);
                }
            }
        }
        tables.push((offsets, counts));
    }

    let mut prev_next_ptr = 4usize;
    for (level, (offsets, counts)) in levels.iter().zip(&tables) {
        if out.len() % 2 == 1 {
            out.push(0);
        }
        let ifd_start = out.len();
        patch_u32(&mut out, prev_next_ptr, ifd_start as u64)?;
        const N: usize = 9;
        let ifd_size = 2 + N * 12 + 4;
        let mut extra = ifd_start + ifd_size;
        let bits_at = extra;
        extra += 6;
        let offsets_at = extra;
        let ext_offsets = offsets.len() > 1;
        if ext_offsets {
            extra += offsets.len() * 4;
        }
        let counts_at = extra;

        let mut ifd = Vec::with_capacity(ifd_size);
        ifd.extend_from_slice(&(N as u16).to_le_bytes());
        let mut entry = |tag: u16, typ: u16, count: u32, value: u32| {
            ifd.extend_from_slice(&tag.to_le_bytes());
            ifd.extend_from_slice(&typ.to_le_bytes());
            ifd.extend_from_slice(&count.to_le_bytes());
            if typ == TYPE_SHORT && count == 1 {
                ifd.extend_from_slice(&(value as u16).to_le_bytes());
                ifd.extend_from_slice(&[0, 0]);
            } else {
                ifd.extend_from_slice(&value.to_le_bytes());
            }
        };
        let n_tiles = offsets.len() as u32;
        entry(TAG_IMAGE_WIDTH, TYPE_LONG, 1, level.width());
        entry(TAG_IMAGE_LENGTH, TYPE_LONG, 1, level.height());
        entry(TAG_BITS_PER_SAMPLE, TYPE_SHORT, 3, to_u32(bits_at)?);
        entry(TAG_COMPRESSION, TYPE_SHORT, 1, opts.compression.tag_value() as u32);
        entry(TAG_PHOTOMETRIC, TYPE_SHORT, 1, 2);
        entry(TAG_TILE_WIDTH, TYPE_LONG, 1, tw);
        entry(TAG_TILE_LENGTH, TYPE_LONG, 1, th);
        if ext_offsets {
            entry(TAG_TILE_OFFSETS, TYPE_LONG, n_tiles, to_u32(offsets_at)?);
            entry(TAG_TILE_BYTE_COUNTS, TYPE_LONG, n_tiles, to_u32(counts_at)?);
        } else {
            entry(TAG_TILE_OFFSETS, TYPE_LONG, 1, to_u32(offsets[0] as usize)?);
            entry(TAG_TILE_BYTE_COUNTS, TYPE_LONG, 1, to_u32(counts[0] as usize)?);
        }
        ifd.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&ifd);
        prev_next_ptr = ifd_start + 2 + N * 12;
        for _ in 0..3 {
            out.extend_from_slice(&8u16.to_le_bytes());
        }
        if ext_offsets {
            for &o in offsets {
                out.extend_from_slice(&to_u32(o as usize)?.to_le_bytes());
            }
            for &c in counts {
                out.extend_from_slice(&to_u32(c as usize)?.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn to_u32(v: usize) -> Result<u32, SlideError> {
    u32::try_from(v).map_err(|_| SlideError::UnsupportedFeature("container exceeds 4 GiB".into()))
}

fn patch_u32(buf: &mut [u8], at: usize, value: u64) -> Result<(), SlideError> {
    let v = to_u32(value as usize)?;
    buf[at..at + 4].copy_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn write_wtif(path: &Path, levels: &[RasterTile], opts: &WtifOptions) -> Result<(), SlideError> {
    let bytes = encode_wtif(levels, opts)?;
    std::fs::write(path, bytes)?;
    Ok(())
}
