//! Grayscale image loading and summed-area tables.
//!
//! Intensities are normalized to `[0, 1]` at load time. Only single-channel
//! 8-bit inputs are accepted: binary and ASCII portable graymaps (`P5`/`P2`)
//! and 8-bit grayscale PNG. Color inputs are rejected rather than converted.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Largest accepted width or height.
pub const MAX_DIMENSION: usize = 16384;

/// Row-major single-channel image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::CorruptImage(format!("zero dimension {width}x{height}")));
        }
        if width > MAX_DIMENSION || height > MAX_DIMENSION {
            return Err(Error::UnsupportedFormat(format!(
                "{width}x{height} exceeds the {MAX_DIMENSION} pixel limit"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::CorruptImage(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::CorruptImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(GrayImage { width, height, pixels })
    }

    /// Builds an image by evaluating `f(x, y)`, clamping each value to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                pixels.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Summed-area table: `at(x, y)` is the sum of all pixels with column `<= x`
/// and row `<= y`.
///
/// Internally the table carries a leading zero row and column so that box sums
/// need no boundary branches.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    // (width + 1) x (height + 1), padded
    table: Vec<f64>,
}

pub fn integral_image(img: &GrayImage) -> IntegralImage {
    let (w, h) = (img.width, img.height);
    let stride = w + 1;
    let mut table = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0.0;
        let src = &img.pixels[y * w..(y + 1) * w];
        for (x, &p) in src.iter().enumerate() {
            row_sum += p;
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
        }
    }
    IntegralImage { width: w, height: h, table }
}

impl IntegralImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Inclusive prefix sum at `(x, y)`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[(y + 1) * (self.width + 1) + x + 1]
    }

    pub fn total(&self) -> f64 {
        self.at(self.width - 1, self.height - 1)
    }

    /// Sum over the inclusive rectangle `[x0, x1] x [y0, y1]` after clamping it
    /// to the image. Fails only when nothing of the rectangle remains.
    pub fn box_sum(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> Result<f64> {
        self.clamp_rect(x0, y0, x1, y1)
            .map(|(a, b, c, d)| self.padded_sum(a, b, c, d))
            .ok_or(Error::EmptyRectangle)
    }

    /// Same as [`box_sum`](Self::box_sum) but treats a void rectangle as zero,
    /// which is what zero padding outside the image would give.
    #[inline]
    pub fn box_sum_or_zero(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        match self.clamp_rect(x0, y0, x1, y1) {
            Some((a, b, c, d)) => self.padded_sum(a, b, c, d),
            None => 0.0,
        }
    }

    /// Sum of a `w x h` block whose top-left corner is `(x, y)`.
    #[inline]
    pub(crate) fn block(&self, x: i64, y: i64, w: i64, h: i64) -> f64 {
        self.box_sum_or_zero(x, y, x + w - 1, y + h - 1)
    }

    #[inline]
    fn clamp_rect(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> Option<(usize, usize, usize, usize)> {
        let xa = x0.max(0);
        let ya = y0.max(0);
        let xb = x1.min(self.width as i64 - 1);
        let yb = y1.min(self.height as i64 - 1);
        if xa > xb || ya > yb {
            return None;
        }
        Some((xa as usize, ya as usize, xb as usize, yb as usize))
    }

    #[inline]
    fn padded_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        let t = &self.table;
        t[(y1 + 1) * s + x1 + 1] - t[y0 * s + x1 + 1] - t[(y1 + 1) * s + x0] + t[y0 * s + x0]
    }
}

/// Loads a grayscale image, dispatching on the file's magic bytes.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::FileNotFound(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    decode(&bytes)
}

/// Decodes an in-memory PGM or PNG payload.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(b"P3") || bytes.starts_with(b"P6") {
        Err(Error::UnsupportedFormat("color portable pixmap".into()))
    } else {
        Err(Error::UnsupportedFormat("unrecognized magic bytes".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let corrupt = |e: png::DecodingError| Error::CorruptImage(format!("png: {e}"));
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(corrupt)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!("png color type {:?}", info.color_type)));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!("png bit depth {:?}", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    if w > MAX_DIMENSION || h > MAX_DIMENSION {
        return Err(Error::UnsupportedFormat(format!("{w}x{h} exceeds the {MAX_DIMENSION} pixel limit")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptImage("png: output size overflow".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(frame.line_size).take(h) {
        pixels.extend(row[..w].iter().map(|&v| f64::from(v) / 255.0));
    }
    GrayImage::new(w, h, pixels)
}

struct PgmHeader {
    ascii: bool,
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_pgm_header(bytes: &[u8]) -> Result<PgmHeader> {
    let ascii = &bytes[..2] == b"P2";
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::CorruptImage("truncated pgm header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptImage("pgm header field out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::CorruptImage("missing whitespace after pgm header".into())),
    }
    let [width, height, maxval] = fields;
    if maxval == 0 {
        return Err(Error::CorruptImage("pgm maxval is zero".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("pgm maxval {maxval} (more than 8 bits)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::CorruptImage(format!("zero dimension {width}x{height}")));
    }
    if width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(Error::UnsupportedFormat(format!(
            "{width}x{height} exceeds the {MAX_DIMENSION} pixel limit"
        )));
    }
    Ok(PgmHeader { ascii, width, height, maxval, data_start: pos })
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let hdr = parse_pgm_header(bytes)?;
    let n = hdr.width * hdr.height;
    let max = hdr.maxval as f64;
    let body = &bytes[hdr.data_start..];
    let raw: Vec<usize> = if hdr.ascii {
        let text = std::str::from_utf8(body).map_err(|_| Error::CorruptImage("non-ascii P2 body".into()))?;
        let values = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| Error::CorruptImage(format!("bad P2 value {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != n {
            return Err(Error::CorruptImage(format!("expected {n} P2 values, got {}", values.len())));
        }
        values
    } else {
        if body.len() != n {
            return Err(Error::CorruptImage(format!("expected {n} P5 bytes, got {}", body.len())));
        }
        body.iter().map(|&b| b as usize).collect()
    };
    if let Some(v) = raw.iter().find(|&&v| v > hdr.maxval) {
        return Err(Error::CorruptImage(format!("value {v} exceeds maxval {}", hdr.maxval)));
    }
    GrayImage::new(hdr.width, hdr.height, raw.into_iter().map(|v| v as f64 / max).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

/// Quantizes to 8 bits and serializes as a portable graymap with maxval 255.
pub fn encode_pgm(img: &GrayImage, encoding: PgmEncoding) -> Vec<u8> {
    let q = |v: f64| (v * 255.0).round() as u8;
    match encoding {
        PgmEncoding::Binary => {
            let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
            out.extend(img.pixels.iter().map(|&v| q(v)));
            out
        }
        PgmEncoding::Ascii => {
            let mut out = format!("P2\n{} {}\n255\n", img.width, img.height);
            for row in img.pixels.chunks(img.width) {
                let line: Vec<String> = row.iter().map(|&v| q(v).to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>, encoding: PgmEncoding) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(img, encoding))?;
    Ok(())
}
