//! Minimal raster charts: filled rectangles and a 5x7 bitmap font.

use image::{Rgb, RgbImage};

pub(crate) const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub(crate) const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
pub(crate) const GREY: Rgb<u8> = Rgb([200, 200, 200]);
pub(crate) const SERIES: [Rgb<u8>; 3] = [Rgb([66, 114, 196]), Rgb([237, 125, 49]), Rgb([112, 173, 71])];

const SCALE: u32 = 2;
const GLYPH_W: u32 = 6 * SCALE;

#[rustfmt::skip]
const FONT: &[(char, [u8; 7])] = &[
    ('A', [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001]),
    ('B', [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110]),
    ('C', [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110]),
    ('D', [0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100]),
    ('E', [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111]),
    ('F', [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000]),
    ('G', [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111]),
    ('H', [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001]),
    ('I', [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110]),
    ('J', [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100]),
    ('K', [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001]),
    ('L', [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111]),
    ('M', [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001]),
    ('N', [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001]),
    ('O', [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110]),
    ('P', [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000]),
    ('Q', [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101]),
    ('R', [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001]),
    ('S', [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110]),
    ('T', [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100]),
    ('U', [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110]),
    ('V', [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100]),
    ('W', [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010]),
    ('X', [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001]),
    ('Y', [0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100]),
    ('Z', [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111]),
    ('0', [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110]),
    ('1', [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110]),
    ('2', [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111]),
    ('3', [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110]),
    ('4', [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010]),
    ('5', [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110]),
    ('6', [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110]),
    ('7', [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000]),
    ('8', [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110]),
    ('9', [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100]),
    ('.', [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100]),
    (',', [0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b00100, 0b01000]),
    ('-', [0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000]),
    ('+', [0b00000, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0b00000]),
    (':', [0b00000, 0b01100, 0b01100, 0b00000, 0b01100, 0b01100, 0b00000]),
    ('/', [0b00000, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b00000]),
    ('(', [0b00010, 0b00100, 0b01000, 0b01000, 0b01000, 0b00100, 0b00010]),
    (')', [0b01000, 0b00100, 0b00010, 0b00010, 0b00010, 0b00100, 0b01000]),
    ('=', [0b00000, 0b00000, 0b11111, 0b00000, 0b11111, 0b00000, 0b00000]),
    ('<', [0b00010, 0b00100, 0b01000, 0b10000, 0b01000, 0b00100, 0b00010]),
    ('>', [0b01000, 0b00100, 0b00010, 0b00001, 0b00010, 0b00100, 0b01000]),
    ('%', [0b11000, 0b11001, 0b00010, 0b00100, 0b01000, 0b10011, 0b00011]),
    ('_', [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b11111]),
];

fn glyph(c: char) -> [u8; 7] {
    let c = c.to_ascii_uppercase();
    FONT.iter().find(|(g, _)| *g == c).map_or([0; 7], |(_, rows)| *rows)
}

pub(crate) fn text_width(text: &str) -> u32 {
    text.chars().count() as u32 * GLYPH_W
}

pub(crate) const TEXT_HEIGHT: u32 = 7 * SCALE;

pub(crate) struct Canvas {
    pub img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            img: RgbImage::from_pixel(width, height, WHITE),
        }
    }

    pub fn rect(&mut self, x: u32, y: u32, w: u32, h: u32, color: Rgb<u8>) {
        let (iw, ih) = self.img.dimensions();
        for yy in y..(y + h).min(ih) {
            for xx in x..(x + w).min(iw) {
                self.img.put_pixel(xx, yy, color);
            }
        }
    }

    pub fn text(&mut self, x: u32, y: u32, text: &str, color: Rgb<u8>) {
        for (k, c) in text.chars().enumerate() {
            let x0 = x + k as u32 * GLYPH_W;
            for (r, bits) in glyph(c).iter().enumerate() {
                for col in 0..5u32 {
                    if bits & (1 << (4 - col)) != 0 {
                        self.rect(x0 + col * SCALE, y + r as u32 * SCALE, SCALE, SCALE, color);
                    }
                }
            }
        }
    }

    pub fn text_centered(&mut self, cx: u32, y: u32, text: &str, color: Rgb<u8>) {
        self.text(cx.saturating_sub(text_width(text) / 2), y, text, color);
    }

    pub fn text_right(&mut self, right: u32, y: u32, text: &str, color: Rgb<u8>) {
        self.text(right.saturating_sub(text_width(text)), y, text, color);
    }
}

/// Row-normalized heatmap with the count printed in each cell.
pub(crate) fn heatmap(title: &str, row_labels: &[&str], col_labels: &[&str], counts: &[Vec<usize>], rates: &[Vec<f64>]) -> RgbImage {
    const CELL: u32 = 64;
    let left = row_labels.iter().map(|l| text_width(l)).max().unwrap_or(0) + 24;
    let top = 4 * TEXT_HEIGHT + 32;
    let width = left + CELL * col_labels.len() as u32 + 16;
    let height = top + CELL * row_labels.len() as u32 + TEXT_HEIGHT + 24;
    let mut c = Canvas::new(width, height);
    c.text(8, 8, title, BLACK);
    c.text_centered(left + CELL * col_labels.len() as u32 / 2, 8 + TEXT_HEIGHT + 12, "PREDICTED", BLACK);
    for (j, l) in col_labels.iter().enumerate() {
        c.text_centered(left + CELL * j as u32 + CELL / 2, top - TEXT_HEIGHT - 8, l, BLACK);
    }
    c.text(8, height - TEXT_HEIGHT - 8, "ROWS: GOLD", BLACK);
    for (i, l) in row_labels.iter().enumerate() {
        let y = top + CELL * i as u32;
        c.text_right(left - 12, y + (CELL - TEXT_HEIGHT) / 2, l, BLACK);
        for j in 0..col_labels.len() {
            let rate = rates[i][j].clamp(0.0, 1.0);
            let shade = |full: u8| (255.0 - (255.0 - full as f64) * rate).round() as u8;
            let fill = Rgb([shade(8), shade(48), shade(107)]);
            let x = left + CELL * j as u32;
            c.rect(x, y, CELL, CELL, fill);
            c.rect(x, y, CELL, 1, GREY);
            c.rect(x, y, 1, CELL, GREY);
            let ink = if rate > 0.5 { WHITE } else { BLACK };
            c.text_centered(x + CELL / 2, y + (CELL - TEXT_HEIGHT) / 2, &counts[i][j].to_string(), ink);
        }
    }
    c.img
}

pub(crate) struct Series<'a> {
    pub name: &'a str,
    /// One value in `[0, 1]` per category.
    pub values: Vec<f64>,
}

/// Grouped bars on a fixed 0–1 axis; `notes` is printed under each category label.
pub(crate) fn grouped_bars(title: &str, x_title: &str, categories: &[String], notes: &[String], series: &[Series]) -> RgbImage {
    const PLOT_H: u32 = 300;
    const BAR_W: u32 = 14;
    let group_w = (BAR_W * series.len() as u32 + 16).max(
        categories
            .iter()
            .chain(notes)
            .map(|s| text_width(s) + 8)
            .max()
            .unwrap_or(0),
    );
    let left = text_width("1.0") + 24;
    let top = 3 * TEXT_HEIGHT + 32;
    let legend_w: u32 = series.iter().map(|s| text_width(s.name) + 40).sum();
    let width = (left + group_w * categories.len().max(1) as u32 + 16).max(legend_w + 16).max(text_width(title) + 16);
    let height = top + PLOT_H + 4 * TEXT_HEIGHT + 40;
    let mut c = Canvas::new(width, height);
    c.text(8, 8, title, BLACK);
    let mut lx = 8;
    for (k, s) in series.iter().enumerate() {
        c.rect(lx, 8 + TEXT_HEIGHT + 8, TEXT_HEIGHT, TEXT_HEIGHT, SERIES[k % SERIES.len()]);
        c.text(lx + TEXT_HEIGHT + 6, 8 + TEXT_HEIGHT + 8, s.name, BLACK);
        lx += text_width(s.name) + 40;
    }
    let base = top + PLOT_H;
    for tick in 0..=4u32 {
        let y = base - PLOT_H * tick / 4;
        c.rect(left, y, width - left - 8, 1, GREY);
        c.text_right(left - 6, y.saturating_sub(TEXT_HEIGHT / 2), &format!("{:.2}", tick as f64 / 4.0), BLACK);
    }
    c.rect(left, top, 1, PLOT_H + 1, BLACK);
    for (g, cat) in categories.iter().enumerate() {
        let gx = left + group_w * g as u32;
        let bars_w = BAR_W * series.len() as u32;
        let x0 = gx + (group_w - bars_w) / 2;
        for (k, s) in series.iter().enumerate() {
            let v = s.values.get(g).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            let h = (v * PLOT_H as f64).round() as u32;
            c.rect(x0 + BAR_W * k as u32, base - h, BAR_W - 2, h, SERIES[k % SERIES.len()]);
        }
        c.text_centered(gx + group_w / 2, base + 8, cat, BLACK);
        if let Some(note) = notes.get(g) {
            c.text_centered(gx + group_w / 2, base + 8 + TEXT_HEIGHT + 6, note, BLACK);
        }
    }
    c.text_centered(left + group_w * categories.len() as u32 / 2, height - TEXT_HEIGHT - 8, x_title, BLACK);
    c.img
}

pub(crate) fn encode_png(img: &RgbImage) -> crate::error::Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| crate::error::Error::Data(format!("cannot encode png: {e}")))?;
    Ok(out.into_inner())
}
