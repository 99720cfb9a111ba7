#![allow(dead_code)]

use std::path::Path;

use slidepress_core::RasterTile;

/// Luma from the floating-point BT.601 weights, rounded half up.
pub fn luma_oracle(p: [u8; 3]) -> u8 {
    let s = 299 * p[0] as u64 + 587 * p[1] as u64 + 114 * p[2] as u64;
    (s as f64 / 1000.0).round() as u8
}

/// Row labels A, B, .., Z, AA, AB, .. produced by counting like an odometer
/// whose digits run A..Z and which grows a new leading A on overflow.
pub fn row_labels(n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut digits: Vec<u8> = vec![b'A'];
    for _ in 0..n {
        out.push(String::from_utf8(digits.clone()).unwrap());
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, b'A');
                break;
            }
            i -= 1;
            if digits[i] == b'Z' {
                digits[i] = b'A';
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    out
}

/// Average over `f`×`f` blocks, clipping blocks at the right and bottom edges.
pub fn box_filter(img: &RasterTile, f: u32) -> RasterTile {
    let (w, h) = img.dimensions();
    let ow = w.div_ceil(f);
    let oh = h.div_ceil(f);
    RasterTile::from_fn(ow, oh, |ox, oy| {
        let mut sum = [0u64; 3];
        let mut n = 0u64;
        for y in oy * f..((oy + 1) * f).min(h) {
            for x in ox * f..((ox + 1) * f).min(w) {
                let p = img.pixel(x, y);
                for c in 0..3 {
                    sum[c] += p[c] as u64;
                }
                n += 1;
            }
        }
        let avg = |s: u64| ((s + n / 2) / n) as u8;
        [avg(sum[0]), avg(sum[1]), avg(sum[2])]
    })
}

/// Decode an RGB 8-bit TIFF with the `tiff` crate.
pub fn read_tiff(path: &Path) -> RasterTile {
    let file = std::fs::File::open(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut dec = tiff::decoder::Decoder::new(std::io::BufReader::new(file)).unwrap();
    let (w, h) = dec.dimensions().unwrap();
    assert_eq!(dec.colortype().unwrap(), tiff::ColorType::RGB(8), "{}", path.display());
    match dec.read_image().unwrap() {
        tiff::decoder::DecodingResult::U8(data) => RasterTile::from_raw(w, h, data).unwrap(),
        _ => panic!("{}: not 8-bit", path.display()),
    }
}

/// Enumerate Deep Zoom tiles by repeated halving of the image and stepping
/// across each level in tile-size strides. Yields
/// `(level, col, row, x, y, w, h)` and the level sizes finest first.
pub fn dzi_tiles(width: u32, height: u32, tile: u32, overlap: u32) -> (Vec<(u32, u32)>, Vec<[u32; 7]>) {
    let mut sizes = vec![(width, height)];
    while sizes.last().unwrap() != &(1, 1) {
        let (w, h) = *sizes.last().unwrap();
        sizes.push(((w + 1) / 2, (h + 1) / 2));
    }
    let top = sizes.len() as u32 - 1;
    let mut tiles = Vec::new();
    for (i, &(w, h)) in sizes.iter().enumerate() {
        let level = top - i as u32;
        let mut row = 0;
        let mut y = 0;
        while y < h {
            let mut col = 0;
            let mut x = 0;
            while x < w {
                let x0 = x.saturating_sub(overlap);
                let y0 = y.saturating_sub(overlap);
                let x1 = (x + tile + overlap).min(w);
                let y1 = (y + tile + overlap).min(h);
                tiles.push([level, col, row, x0, y0, x1 - x0, y1 - y0]);
                x += tile;
                col += 1;
            }
            y += tile;
            row += 1;
        }
    }
    (sizes, tiles)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}
