//! Co-occurrence heatmap as PNG plus the matrix as CSV.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use super::CooccurrenceMatrix;
use crate::GOAL_COUNT;

pub const HEATMAP_CELL_PX: u32 = 24;
pub const MIN_COLOR: [u8; 3] = [255, 255, 255];
pub const MAX_COLOR: [u8; 3] = [165, 0, 38];

fn shade(value: u32, max: u32) -> Rgb<u8> {
    if max == 0 {
        return Rgb(MIN_COLOR);
    }
    let t = f64::from(value) / f64::from(max);
    let mix = |lo: u8, hi: u8| (f64::from(lo) + (f64::from(hi) - f64::from(lo)) * t).round() as u8;
    Rgb([mix(MIN_COLOR[0], MAX_COLOR[0]), mix(MIN_COLOR[1], MAX_COLOR[1]), mix(MIN_COLOR[2], MAX_COLOR[2])])
}

/// One square per cell, goal 1 at the top left. The scale runs linearly
/// from zero to the matrix maximum.
pub fn heatmap_png(matrix: &CooccurrenceMatrix) -> Vec<u8> {
    let side = HEATMAP_CELL_PX * GOAL_COUNT as u32;
    let max = matrix.max();
    let img = RgbImage::from_fn(side, side, |x, y| {
        let (i, j) = ((y / HEATMAP_CELL_PX) as usize, (x / HEATMAP_CELL_PX) as usize);
        shade(matrix.cells[i][j], max)
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding to memory");
    out.into_inner()
}

pub fn heatmap_csv(matrix: &CooccurrenceMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["goal".to_string()];
    header.extend((1..=GOAL_COUNT).map(|g| g.to_string()));
    w.write_record(&header).expect("in-memory write");
    for (i, row) in matrix.cells.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(u32::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("ASCII output")
}

/// Writes `heatmap.png` and `matrix.csv` into `dir`.
pub fn write_heatmap(matrix: &CooccurrenceMatrix, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("heatmap.png"), heatmap_png(matrix))?;
    std::fs::write(dir.join("matrix.csv"), heatmap_csv(matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::tests::fixture;
    use crate::analytics::{load_tag_sets, DiagonalMode};
    use crate::Dataset;

    fn decode(bytes: &[u8]) -> RgbImage {
        image::load_from_memory_with_format(bytes, ImageFormat::Png).unwrap().to_rgb8()
    }

    fn center(i: u8, j: u8) -> (u32, u32) {
        let c = |g: u8| (u32::from(g) - 1) * HEATMAP_CELL_PX + HEATMAP_CELL_PX / 2;
        (c(j), c(i))
    }

    #[test]
    fn zero_matrix_is_uniform() {
        let m = CooccurrenceMatrix {
            dataset: Dataset::Formal,
            mode: DiagonalMode::AnyCardinality,
            cells: vec![vec![0; 17]; 17],
        };
        let img = decode(&heatmap_png(&m));
        assert!(img.pixels().all(|p| p.0 == MIN_COLOR));
    }

    #[test]
    fn formal_maximum_sits_at_goal_ten() {
        let sets = load_tag_sets(&fixture("tags/formal.jsonl")).unwrap();
        let m = CooccurrenceMatrix::from_tag_sets(Dataset::Formal, &sets, DiagonalMode::AnyCardinality).unwrap();
        let bytes = heatmap_png(&m);
        assert_eq!(bytes, heatmap_png(&m));
        let img = decode(&bytes);
        let (x, y) = center(10, 10);
        assert_eq!(img.get_pixel(x, y).0, MAX_COLOR);
        let maxed = img.pixels().filter(|p| p.0 == MAX_COLOR).count() as u32;
        assert_eq!(maxed, HEATMAP_CELL_PX * HEATMAP_CELL_PX);
        let (x, y) = center(5, 7);
        assert_eq!(img.get_pixel(x, y).0, MIN_COLOR);
        let csv = heatmap_csv(&m);
        assert!(csv.lines().nth(10).unwrap().starts_with("10,"));
        assert_eq!(csv.lines().count(), 18);
    }
}
