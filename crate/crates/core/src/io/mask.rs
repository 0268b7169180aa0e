//! Binary silhouettes stored as 8-bit PGM (P5).

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::camera::CameraParams;

pub const FOREGROUND: u8 = 255;

/// Binary mask, row-major, values in `{0, 255}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    pub view: usize,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl MaskImage {
    pub fn new(view: usize, width: u32, height: u32) -> Self {
        MaskImage {
            view,
            width,
            height,
            pixels: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_fn(view: usize, width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = MaskImage::new(view, width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[(y * self.width + x) as usize] != 0
    }

    /// Like [`get`](Self::get) but out-of-image coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.pixels[(y * self.width + x) as usize] = if on { FOREGROUND } else { 0 };
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn same_size(&self, o: &MaskImage) -> bool {
        self.width == o.width && self.height == o.height
    }

    /// `(|A & B|, |A | B|)`.
    pub fn intersection_union(&self, o: &MaskImage) -> (usize, usize) {
        debug_assert!(self.same_size(o));
        let mut inter = 0;
        let mut uni = 0;
        for (a, b) in self.pixels.iter().zip(&o.pixels) {
            let (a, b) = (*a != 0, *b != 0);
            inter += (a && b) as usize;
            uni += (a || b) as usize;
        }
        (inter, uni)
    }

    /// Shrinks by an integer factor; an output pixel is set when at least half
    /// of its source block is set.
    pub fn downsample(&self, factor: u32) -> MaskImage {
        if factor <= 1 {
            return self.clone();
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut out = MaskImage::new(self.view, w, h);
        for oy in 0..h {
            for ox in 0..w {
                let mut on = 0u32;
                let mut total = 0u32;
                for y in oy * factor..((oy + 1) * factor).min(self.height) {
                    for x in ox * factor..((ox + 1) * factor).min(self.width) {
                        total += 1;
                        on += self.get(x, y) as u32;
                    }
                }
                out.set(ox, oy, 2 * on >= total);
            }
        }
        out
    }

    /// Morphological dilation (`radius > 0`) or erosion (`radius < 0`) with a
    /// Euclidean disk.
    pub fn morph(&self, radius: i32) -> MaskImage {
        if radius == 0 {
            return self.clone();
        }
        let r = radius.abs() as i64;
        let offsets: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let dilate = radius > 0;
        MaskImage::from_fn(self.view, self.width, self.height, |x, y| {
            let (x, y) = (x as i64, y as i64);
            if dilate {
                offsets.iter().any(|(dx, dy)| self.get_signed(x + dx, y + dy))
            } else {
                offsets.iter().all(|(dx, dy)| self.get_signed(x + dx, y + dy))
            }
        })
    }

    pub fn to_pgm(&self, comment: Option<&str>) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 64);
        out.extend_from_slice(b"P5\n");
        if let Some(c) = comment {
            for l in c.lines() {
                out.extend_from_slice(format!("# {l}\n").as_bytes());
            }
        }
        out.extend_from_slice(format!("{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Parses a binary PGM, thresholding at 128.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<MaskImage> {
    let err = |m: &str| Error::parse(path, m);
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(err("malformed PGM header"));
    }
    match bytes[1] {
        b'5' => {}
        b'2' | b'1' | b'3' | b'4' | b'6' => return Err(err("unsupported PGM variant")),
        _ => return Err(err("malformed PGM header")),
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(err("malformed PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("malformed PGM header"))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(err("malformed PGM header"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || w > u32::MAX as u64 || h > u32::MAX as u64 {
        return Err(err("malformed PGM header: zero or oversized dimensions"));
    }
    if maxval != 255 {
        return Err(err("unsupported PGM maxval (expected 255)"));
    }
    let n = (w * h) as usize;
    if bytes.len() - pos < n {
        return Err(err("truncated PGM pixel data"));
    }
    let pixels = bytes[pos..pos + n]
        .iter()
        .map(|&p| if p >= 128 { FOREGROUND } else { 0 })
        .collect();
    Ok(MaskImage {
        view: 0,
        width: w as u32,
        height: h as u32,
        pixels,
    })
}

pub fn load_mask(path: &Path) -> Result<MaskImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

/// Loads a mask for `cam`, checking its dimensions.
pub fn load_view_mask(path: &Path, cam: &CameraParams) -> Result<MaskImage> {
    let mut m = load_mask(path)?;
    if m.width != cam.width || m.height != cam.height {
        return Err(Error::InvalidMask(format!(
            "{}: dimension mismatch with camera {}: mask {}x{}, camera {}x{}",
            path.display(),
            cam.id,
            m.width,
            m.height,
            cam.width,
            cam.height
        )));
    }
    m.view = cam.id;
    Ok(m)
}

pub fn save_mask(path: &Path, mask: &MaskImage, comment: Option<&str>) -> Result<()> {
    super::write_bytes(path, &mask.to_pgm(comment))
}
