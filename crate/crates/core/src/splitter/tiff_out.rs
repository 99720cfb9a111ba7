//! Minimal baseline TIFF writer for split tiles: single IFD, uncompressed,
//! 8-bit RGB, strip-based.

use std::path::Path;

use crate::raster::RasterTile;

const STRIP_TARGET_BYTES: u32 = 8192;

pub fn encode_rgb_tiff(tile: &RasterTile) -> Vec<u8> {
    let (w, h) = tile.dimensions();
    let row_bytes = w * 3;
    let rows_per_strip = (STRIP_TARGET_BYTES / row_bytes.max(1)).clamp(1, h);
    let strips = h.div_ceil(rows_per_strip);

    let pixels = tile.as_bytes();
    let data_start = 8u32;
    let mut offsets = Vec::with_capacity(strips as usize);
    let mut counts = Vec::with_capacity(strips as usize);
    for s in 0..strips {
        let rows = rows_per_strip.min(h - s * rows_per_strip);
        offsets.push(data_start + s * rows_per_strip * row_bytes);
        counts.push(rows * row_bytes);
    }

    let mut out = Vec::with_capacity(pixels.len() + 512 + strips as usize * 8);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(pixels);
    if out.len() % 2 == 1 {
        out.push(0);
    }

    // Out-of-line values follow the IFD.
    const N: u32 = 12;
    let ifd_at = out.len() as u32;
    let mut extra = ifd_at + 2 + N * 12 + 4;
    let bits_at = extra;
    extra += 6;
    let xres_at = extra;
    extra += 8;
    let yres_at = extra;
    extra += 8;
    let offsets_at = extra;
    if strips > 1 {
        extra += strips * 4;
    }
    let counts_at = extra;

    out[4..8].copy_from_slice(&ifd_at.to_le_bytes());
    out.extend_from_slice(&(N as u16).to_le_bytes());
    let mut entry = |tag: u16, typ: u16, count: u32, value: u32| {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&typ.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        if typ == 3 && count == 1 {
            out.extend_from_slice(&(value as u16).to_le_bytes());
            out.extend_from_slice(&[0, 0]);
        } else {
            out.extend_from_slice(&value.to_le_bytes());
        }
    };
    entry(256, 4, 1, w);
    entry(257, 4, 1, h);
    entry(258, 3, 3, bits_at);
    entry(259, 3, 1, 1);
    entry(262, 3, 1, 2);
    if strips > 1 {
        entry(273, 4, strips, offsets_at);
    } else {
        entry(273, 4, 1, offsets[0]);
    }
    entry(277, 3, 1, 3);
    entry(278, 4, 1, rows_per_strip);
    if strips > 1 {
        entry(279, 4, strips, counts_at);
    } else {
        entry(279, 4, 1, counts[0]);
    }
    entry(282, 5, 1, xres_at);
    entry(283, 5, 1, yres_at);
    entry(296, 3, 1, 1);
    out.extend_from_slice(&0u32.to_le_bytes());
    for _ in 0..3 {
        out.extend_from_slice(&8u16.to_le_bytes());
    }
    for _ in 0..2 {
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&1u32.to_le_bytes());
    }
    if strips > 1 {
        for o in &offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        for c in &counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn write_rgb_tiff(path: &Path, tile: &RasterTile) -> std::io::Result<()> {
    std::fs::write(path, encode_rgb_tiff(tile))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(bytes: &[u8]) -> RasterTile {
        let mut dec = tiff::decoder::Decoder::new(std::io::Cursor::new(bytes)).unwrap();
        let (w, h) = dec.dimensions().unwrap();
        assert_eq!(dec.colortype().unwrap(), tiff::ColorType::RGB(8));
        match dec.read_image().unwrap() {
            tiff::decoder::DecodingResult::U8(v) => RasterTile::from_raw(w, h, v).unwrap(),
            _ => panic!("unexpected sample type"),
        }
    }

    #[test]
    fn independent_decoder_reads_tiles() {
        for (w, h) in [(1, 1), (3, 2), (17, 300), (512, 288)] {
            let tile = RasterTile::from_fn(w, h, |x, y| [x as u8, y as u8, (x * 7 + y) as u8]);
            assert_eq!(decode(&encode_rgb_tiff(&tile)), tile, "{w}x{h}");
        }
    }
}
