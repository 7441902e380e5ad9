//! Minimal raster primitives: z-buffered triangles, lines, discs, digits.

use image::{Rgb, RgbImage};

/// Z-buffered triangle fill over one view. `ids` records which primitive
/// won each pixel (`u32::MAX` for background).
pub struct DepthTarget {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub ids: Vec<u32>,
}

impl DepthTarget {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self { width, height, depth: vec![f64::INFINITY; n], ids: vec![u32::MAX; n] }
    }

    /// Fills the triangle, sampling at pixel centres. Smaller depth is nearer.
    pub fn fill_triangle(&mut self, p: [[f64; 3]; 3], id: u32) {
        let area = edge(p[0], p[1], p[2]);
        if area.abs() < 1e-12 {
            return;
        }
        let min_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
        let max_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min(self.width as f64 - 1.0) as i64;
        let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
        let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min(self.height as f64 - 1.0) as i64;
        for y in min_y..=max_y {
            for x in min_x..=max_x {
                let c = [x as f64 + 0.5, y as f64 + 0.5, 0.0];
                let w0 = edge(p[1], p[2], c) / area;
                let w1 = edge(p[2], p[0], c) / area;
                let w2 = edge(p[0], p[1], c) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * p[0][2] + w1 * p[1][2] + w2 * p[2][2];
                let k = (y as u32 * self.width + x as u32) as usize;
                if z < self.depth[k] {
                    self.depth[k] = z;
                    self.ids[k] = id;
                }
            }
        }
    }
}

/// Twice the signed area of (a, b, c) in the xy-plane.
pub fn edge(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>, clip: (i64, i64, i64, i64)) {
    let (x0, y0, x1, y1) = clip;
    if x >= x0 && y >= y0 && x < x1 && y < y1 {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Bresenham line between continuous pixel positions, clipped to `clip`
/// (x0, y0, x1, y1 exclusive).
pub fn draw_line(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], color: Rgb<u8>, clip: (i64, i64, i64, i64)) {
    let (mut x0, mut y0) = (a[0].floor() as i64, a[1].floor() as i64);
    let (x1, y1) = (b[0].floor() as i64, b[1].floor() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color, clip);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Filled disc of the given radius centred on a continuous position.
pub fn draw_disc(img: &mut RgbImage, c: [f64; 2], radius: f64, color: Rgb<u8>, clip: (i64, i64, i64, i64)) {
    let r = radius.ceil() as i64;
    let (cx, cy) = (c[0].floor() as i64, c[1].floor() as i64);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            let (fx, fy) = (x as f64 + 0.5 - c[0], y as f64 + 0.5 - c[1]);
            if fx * fx + fy * fy <= radius * radius {
                put(img, x, y, color, clip);
            }
        }
    }
}

const GLYPH_W: i64 = 3;
const GLYPH_H: i64 = 5;

/// 3x5 digit bitmaps, one row per entry, MSB on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn digit_pixels(text: &str, scale: i64) -> (Vec<(i64, i64)>, i64, i64) {
    let mut px = Vec::new();
    let advance = (GLYPH_W + 1) * scale;
    for (i, ch) in text.chars().enumerate() {
        let Some(d) = ch.to_digit(10) else { continue };
        let glyph = DIGITS[d as usize];
        for (gy, row) in glyph.iter().enumerate() {
            for gx in 0..GLYPH_W {
                if row >> (GLYPH_W - 1 - gx) & 1 == 1 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            px.push((i as i64 * advance + gx * scale + sx, gy as i64 * scale + sy));
                        }
                    }
                }
            }
        }
    }
    let n = text.chars().count() as i64;
    let width = (n * advance - scale).max(0);
    (px, width, GLYPH_H * scale)
}

/// Draws a decimal label centred on `c` with a one-pixel contrasting outline.
pub fn draw_label(
    img: &mut RgbImage,
    c: [f64; 2],
    text: &str,
    scale: i64,
    fill: Rgb<u8>,
    outline: Rgb<u8>,
    clip: (i64, i64, i64, i64),
) {
    let (pixels, w, h) = digit_pixels(text, scale);
    let ox = c[0].floor() as i64 - w / 2;
    let oy = c[1].floor() as i64 - h / 2;
    for &(x, y) in &pixels {
        for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (-1, 1), (1, -1)] {
            put(img, ox + x + dx, oy + y + dy, outline, clip);
        }
    }
    for &(x, y) in &pixels {
        put(img, ox + x, oy + y, fill, clip);
    }
}
