//! Heatmap rendering: a symmetric blue-white-red colour map, PGM/PNG output
//! and labelled grids of heatmap cells.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{CliError, Result};
use crate::font;

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: color.repeat(width * height),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&color);
    }

    pub fn blit(&mut self, src: &RgbImage, x0: usize, y0: usize) {
        for y in 0..src.height {
            let dst = 3 * ((y0 + y) * self.width + x0);
            let row = &src.data[3 * y * src.width..3 * (y + 1) * src.width];
            self.data[dst..dst + row.len()].copy_from_slice(row);
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> RgbImage {
        let mut out = RgbImage::filled(width, height, BLACK);
        for y in 0..height {
            let src = 3 * ((y0 + y) * self.width + x0);
            out.data[3 * y * width..3 * (y + 1) * width]
                .copy_from_slice(&self.data[src..src + 3 * width]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

fn channel(fraction: f64) -> u8 {
    (255.0 * (1.0 - fraction)).round() as u8
}

/// Colour for a normalized value in `[-1, 1]`: white at zero, red for
/// positive and blue for negative relevance. `-v` maps to `v` with the red and
/// blue channels swapped.
pub fn diverging_color(v: f64) -> [u8; 3] {
    let m = v.abs().min(1.0);
    let c = channel(m);
    if v > 0.0 {
        [255, c, c]
    } else if v < 0.0 {
        [c, c, 255]
    } else {
        WHITE
    }
}

fn normalize(values: &[f64]) -> Result<Vec<f64>> {
    if !values.iter().all(|v| v.is_finite()) {
        return Err(CliError::Core(dtd_core::Error::NonFinite("relevance map")));
    }
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(if max == 0.0 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| v / max).collect()
    })
}

fn check_square(values: &[f64], side: usize) -> Result<()> {
    if values.len() != side * side {
        return Err(CliError::Usage(format!(
            "relevance map has {} values, expected {side}x{side}",
            values.len()
        )));
    }
    Ok(())
}

/// Colour heatmap of a `side × side` map, normalized by its largest absolute
/// value and upscaled by `upscale` with nearest-neighbour blocks.
pub fn render_heatmap(relevance: &[f64], side: usize, upscale: usize) -> Result<RgbImage> {
    check_square(relevance, side)?;
    let normalized = normalize(relevance)?;
    let n = side * upscale;
    let mut img = RgbImage::filled(n, n, WHITE);
    for y in 0..n {
        for x in 0..n {
            img.set(
                x,
                y,
                diverging_color(normalized[(y / upscale) * side + x / upscale]),
            );
        }
    }
    Ok(img)
}

/// Grayscale magnitude map: `255·|v| / max|v|`.
pub fn render_magnitude(relevance: &[f64], side: usize, upscale: usize) -> Result<GrayImage> {
    check_square(relevance, side)?;
    let normalized = normalize(relevance)?;
    let n = side * upscale;
    let mut data = vec![0u8; n * n];
    for y in 0..n {
        for x in 0..n {
            let v = normalized[(y / upscale) * side + x / upscale];
            data[y * n + x] = (255.0 * v.abs()).round() as u8;
        }
    }
    Ok(GrayImage {
        width: n,
        height: n,
        data,
    })
}

pub fn pgm_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    std::fs::write(path, pgm_bytes(img)).map_err(|e| CliError::io(path, e))
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    let png_err = |e: png::EncodingError| CliError::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&img.data).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

/// Geometry of a labelled grid of square cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub cell: usize,
    pub gap: usize,
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
}

impl GridLayout {
    pub fn cell_origin(&self, row: usize, col: usize) -> (usize, usize) {
        (
            self.left + col * (self.cell + self.gap),
            self.top + row * (self.cell + self.gap),
        )
    }
}

const LABEL_SCALE: usize = 2;
const MARGIN: usize = 4;

/// Composes `cells[row][col]` into one image with row labels on the left and
/// column labels on top.
pub fn compose_grid(
    cells: &[Vec<RgbImage>],
    row_labels: &[String],
    col_labels: &[String],
    corner: &str,
) -> Result<(RgbImage, GridLayout)> {
    let rows = cells.len();
    let cols = cells.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || cells.iter().any(|r| r.len() != cols) {
        return Err(CliError::Usage(
            "grid needs a non-empty rectangular set of cells".into(),
        ));
    }
    let cell = cells[0][0].width;
    if cells
        .iter()
        .flatten()
        .any(|c| c.width != cell || c.height != cell)
    {
        return Err(CliError::Usage(
            "grid cells must share one square size".into(),
        ));
    }
    let gap = 2;
    let label_h = font::text_height(LABEL_SCALE);
    let row_label_w = row_labels
        .iter()
        .chain(std::iter::once(&corner.to_string()))
        .map(|s| font::text_width(s, LABEL_SCALE))
        .max()
        .unwrap_or(0);
    let left = MARGIN + row_label_w + MARGIN;
    let top = MARGIN + label_h + MARGIN;
    let width = left + cols * cell + (cols - 1) * gap + MARGIN;
    let height = top + rows * cell + (rows - 1) * gap + MARGIN;
    let layout = GridLayout {
        rows,
        cols,
        cell,
        gap,
        left,
        top,
        width,
        height,
    };

    let mut img = RgbImage::filled(width, height, WHITE);
    font::draw_text(&mut img, corner, MARGIN, MARGIN, LABEL_SCALE, BLACK);
    for (c, label) in col_labels.iter().enumerate().take(cols) {
        let (x, _) = layout.cell_origin(0, c);
        let w = font::text_width(label, LABEL_SCALE);
        let x = x + cell.saturating_sub(w) / 2;
        font::draw_text(&mut img, label, x, MARGIN, LABEL_SCALE, BLACK);
    }
    for (r, row) in cells.iter().enumerate() {
        let (_, y) = layout.cell_origin(r, 0);
        if let Some(label) = row_labels.get(r) {
            let ly = y + cell.saturating_sub(label_h) / 2;
            font::draw_text(&mut img, label, MARGIN, ly, LABEL_SCALE, BLACK);
        }
        for (c, tile) in row.iter().enumerate() {
            let (x, y) = layout.cell_origin(r, c);
            img.blit(tile, x, y);
        }
    }
    Ok((img, layout))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_is_uniform_midpoint() {
        let img = render_heatmap(&[0.0; 784], 28, 2).unwrap();
        assert_eq!((img.width, img.height), (56, 56));
        assert!(img.data.chunks(3).all(|p| p == WHITE));
        let gray = render_magnitude(&[0.0; 784], 28, 1).unwrap();
        assert!(gray.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn single_positive_pixel_is_saturated_red() {
        let mut map = vec![0.0; 784];
        map[28 * 3 + 5] = 0.7;
        let img = render_heatmap(&map, 28, 1).unwrap();
        for y in 0..28 {
            for x in 0..28 {
                let expected = if (x, y) == (5, 3) { [255, 0, 0] } else { WHITE };
                assert_eq!(img.pixel(x, y), expected);
            }
        }
    }

    #[test]
    fn negation_mirrors_colors() {
        let map: Vec<f64> = (0..784)
            .map(|i| ((i as f64) * 0.37).sin() * (i % 7) as f64)
            .collect();
        let neg: Vec<f64> = map.iter().map(|v| -v).collect();
        let a = render_heatmap(&map, 28, 1).unwrap();
        let b = render_heatmap(&neg, 28, 1).unwrap();
        for (pa, pb) in a.data.chunks(3).zip(b.data.chunks(3)) {
            assert_eq!([pa[0], pa[1], pa[2]], [pb[2], pb[1], pb[0]]);
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut map = vec![0.0; 784];
        map[0] = f64::NAN;
        assert!(render_heatmap(&map, 28, 1).is_err());
        assert!(render_heatmap(&[0.0; 10], 28, 1).is_err());
    }

    #[test]
    fn pgm_header() {
        let gray = render_magnitude(&[1.0; 4], 2, 1).unwrap();
        assert_eq!(pgm_bytes(&gray), b"P5\n2 2\n255\n\xff\xff\xff\xff".to_vec());
    }

    #[test]
    fn grid_places_every_cell() {
        let tiles: Vec<Vec<RgbImage>> = (0..3)
            .map(|r| {
                (0..2)
                    .map(|c| RgbImage::filled(8, 8, [r as u8 * 40, c as u8 * 90, 7]))
                    .collect()
            })
            .collect();
        let rows: Vec<String> = vec!["Z".into(), "W+".into(), "A+".into()];
        let cols: Vec<String> = vec!["0.0".into(), "0.2".into()];
        let (img, layout) = compose_grid(&tiles, &rows, &cols, "SIGMA").unwrap();
        assert_eq!((layout.rows, layout.cols), (3, 2));
        assert_eq!((img.width, img.height), (layout.width, layout.height));
        for (r, row) in tiles.iter().enumerate() {
            for (c, tile) in row.iter().enumerate() {
                let (x, y) = layout.cell_origin(r, c);
                assert_eq!(&img.crop(x, y, 8, 8), tile);
            }
        }
    }
}
