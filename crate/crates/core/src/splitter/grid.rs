//! Split plans and grid labels.

use crate::slide_io::Region;

/// Row-major partition of a level into tiles. Cells in the last column and
/// row keep their remainder size.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub columns: u32,
    pub rows: u32,
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub row: u32,
    pub column: u32,
    pub region: Region,
}

impl GridCell {
    pub fn label(&self) -> String {
        tile_name(self.row, self.column)
    }
}

/// Partition a `level_width`×`level_height` level into tiles of at most
/// `tile_width`×`tile_height`.
pub fn plan_level(level_width: u32, level_height: u32, tile_width: u32, tile_height: u32, magnification: f64) -> TileGrid {
    let columns = level_width.div_ceil(tile_width);
    let rows = level_height.div_ceil(tile_height);
    let mut cells = Vec::with_capacity(columns as usize * rows as usize);
    for row in 0..rows {
        for column in 0..columns {
            let x = column * tile_width;
            let y = row * tile_height;
            cells.push(GridCell {
                row,
                column,
                region: Region::new(
                    x,
                    y,
                    tile_width.min(level_width - x),
                    tile_height.min(level_height - y),
                    magnification,
                ),
            });
        }
    }
    TileGrid { columns, rows, cells }
}

/// Row letters in bijective base 26 (A..Z, AA, AB, ...) followed by the
/// 1-based column number: (0,0) is "A1", (27,9) is "AB10".
pub fn tile_name(row: u32, column: u32) -> String {
    let mut letters = Vec::new();
    let mut n = row as u64 + 1;
    while n > 0 {
        n -= 1;
        letters.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    letters.reverse();
    let mut s = String::from_utf8(letters).expect("ascii");
    s.push_str(&(column as u64 + 1).to_string());
    s
}

/// Inverse of [`tile_name`].
pub fn parse_tile_name(label: &str) -> Option<(u32, u32)> {
    let split = label.find(|c: char| c.is_ascii_digit())?;
    let (letters, digits) = label.split_at(split);
    if letters.is_empty() || !letters.bytes().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    if digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut row: u64 = 0;
    for b in letters.bytes() {
        row = row.checked_mul(26)?.checked_add((b - b'A') as u64 + 1)?;
    }
    let column: u64 = digits.parse().ok()?;
    Some((u32::try_from(row - 1).ok()?, u32::try_from(column - 1).ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_examples() {
        let g = plan_level(1000, 800, 512, 512, 40.0);
        assert_eq!((g.columns, g.rows), (2, 2));
        let dims: Vec<(u32, u32)> = g.cells.iter().map(|c| (c.region.width, c.region.height)).collect();
        assert_eq!(dims, vec![(512, 512), (488, 512), (512, 288), (488, 288)]);

        let g = plan_level(512, 512, 512, 512, 40.0);
        assert_eq!(g.cells.len(), 1);
        assert_eq!((g.cells[0].region.width, g.cells[0].region.height), (512, 512));

        let g = plan_level(4096, 3072, 256, 256, 40.0);
        assert_eq!((g.columns, g.rows, g.cells.len()), (16, 12, 192));
    }

    #[test]
    fn names() {
        assert_eq!(tile_name(0, 0), "A1");
        assert_eq!(tile_name(0, 1), "A2");
        assert_eq!(tile_name(0, 2), "A3");
        assert_eq!(tile_name(1, 0), "B1");
        assert_eq!(tile_name(25, 0), "Z1");
        assert_eq!(tile_name(26, 0), "AA1");
        assert_eq!(tile_name(27, 9), "AB10");
        assert_eq!(tile_name(701, 0), "ZZ1");
        assert_eq!(tile_name(702, 0), "AAA1");
    }

    #[test]
    fn parse_inverts_names() {
        for row in [0, 1, 25, 26, 27, 701, 702, 18277] {
            for col in [0, 9, 99] {
                assert_eq!(parse_tile_name(&tile_name(row, col)), Some((row, col)));
            }
        }
        assert_eq!(parse_tile_name("a1"), None);
        assert_eq!(parse_tile_name("A0"), None);
        assert_eq!(parse_tile_name("12"), None);
        assert_eq!(parse_tile_name("A"), None);
    }
}
