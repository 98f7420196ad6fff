//! Multi-channel frames, the binary PGM (P5) codec and summed-area tables.
//!
//! Frames are stored as one PGM file per channel, named `<frame>_c<channel>.pgm`.
//! Intensities are kept as `f64` in `[0, 1]` after dividing by the file's maxval.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Rect;

/// Channel index of the membrane signal.
pub const MEMBRANE: usize = 0;
/// Channel index of the nucleus signal.
pub const NUCLEUS: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelImage {
    width: usize,
    height: usize,
    channels: Vec<Vec<f64>>,
}

impl MultiChannelImage {
    /// Builds an image from row-major channel buffers, validating shape and range.
    pub fn new(width: usize, height: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidInput("image needs at least one channel".into()));
        }
        for c in &channels {
            if c.len() != width * height {
                return Err(Error::InvalidInput(format!(
                    "channel buffer holds {} values, expected {}",
                    c.len(),
                    width * height
                )));
            }
            if let Some(v) = c.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
                return Err(Error::InvalidInput(format!("intensity {v} outside [0, 1]")));
            }
        }
        Ok(MultiChannelImage { width, height, channels })
    }

    pub fn zeros(width: usize, height: usize, channel_count: usize) -> Self {
        assert!(width > 0 && height > 0 && channel_count > 0);
        MultiChannelImage { width, height, channels: vec![vec![0.0; width * height]; channel_count] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.channels[c][y * self.width + x]
    }

    /// Mutable access for generators; callers must keep values in `[0, 1]`.
    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.channels[c]
    }

    /// Summed-area tables for every channel.
    pub fn integrals(&self) -> Vec<IntegralImage> {
        (0..self.channel_count())
            .map(|c| build_integral(self, c).expect("channel index in range"))
            .collect()
    }
}

/// Summed-area table of one channel: entry `(x, y)` is the sum over `[0, x) x [0, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    /// Image width (the table is one wider).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Sum over the rectangle after clipping it to the image; empty rectangles sum to 0.
    #[inline]
    pub fn rect_sum(&self, rect: Rect) -> f64 {
        let r = rect.clip(self.width, self.height);
        if r.area() == 0 {
            return 0.0;
        }
        let (x0, y0, x1, y1) = (r.x0 as usize, r.y0 as usize, r.x1 as usize, r.y1 as usize);
        self.at(x1, y1) - self.at(x0, y1) - self.at(x1, y0) + self.at(x0, y0)
    }
}

pub fn build_integral(image: &MultiChannelImage, channel: usize) -> Result<IntegralImage> {
    if channel >= image.channel_count() {
        return Err(Error::ChannelOutOfRange { channel, channels: image.channel_count() });
    }
    let (w, h) = (image.width, image.height);
    let stride = w + 1;
    let mut table = vec![0.0; stride * (h + 1)];
    let px = &image.channels[channel];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += px[y * w + x];
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    Ok(IntegralImage { width: w, height: h, table })
}

/// Raw single-channel PGM contents, samples normalized by maxval.
#[derive(Clone, Debug, PartialEq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f64>,
}

pub fn read_pgm(path: &Path) -> Result<Gray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::MalformedPgm { path: path.to_path_buf(), reason: reason.into() };

    let mut pos = 0;
    let mut token = || -> Option<String> {
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
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token().as_deref() != Some("P5") {
        return Err(bad("missing P5 magic"));
    }
    let mut number = |what: &str| -> Result<usize> {
        token()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| bad(&format!("invalid {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 {
        return Err(Error::ZeroMaxval(path.to_path_buf()));
    }
    if maxval > 65535 {
        return Err(bad("maxval exceeds 65535"));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster"));
    }
    pos += 1;

    let n = width * height;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(bad("truncated raster"));
    }
    let scale = maxval as f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let v = if wide {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
        } else {
            raster[i] as usize
        };
        if v > maxval {
            return Err(bad("sample exceeds maxval"));
        }
        samples.push(v as f64 / scale);
    }
    Ok(Gray { width, height, samples })
}

/// Writes `samples` (values in `[0, 1]`) quantized to `maxval` as binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, samples: &[f64], maxval: u16) -> Result<()> {
    if maxval == 0 {
        return Err(Error::InvalidInput("maxval must be positive".into()));
    }
    if samples.len() != width * height {
        return Err(Error::InvalidInput("sample count does not match dimensions".into()));
    }
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    let m = maxval as f64;
    for &v in samples {
        let q = (v.clamp(0.0, 1.0) * m).round() as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Loads one PGM per channel into a single image.
pub fn load_image<P: AsRef<Path>>(paths: &[P]) -> Result<MultiChannelImage> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("no channel files given".into()));
    }
    let mut dims = None;
    let mut channels = Vec::with_capacity(paths.len());
    for p in paths {
        let g = read_pgm(p.as_ref())?;
        match dims {
            None => dims = Some((g.width, g.height)),
            Some(d) if d != (g.width, g.height) => {
                return Err(Error::DimensionMismatch { expected: d, found: (g.width, g.height) })
            }
            _ => {}
        }
        channels.push(g.samples);
    }
    let (w, h) = dims.expect("at least one channel");
    MultiChannelImage::new(w, h, channels)
}

/// Path of channel `c` for a frame stem: `<dir>/<frame>_c<c>.pgm`.
pub fn channel_path(dir: &Path, frame: &str, c: usize) -> PathBuf {
    dir.join(format!("{frame}_c{c}.pgm"))
}

/// Loads `<dir>/<frame>_c*.pgm` for `channel_count` channels.
pub fn load_frame(dir: &Path, frame: &str, channel_count: usize) -> Result<MultiChannelImage> {
    let paths: Vec<PathBuf> = (0..channel_count).map(|c| channel_path(dir, frame, c)).collect();
    load_image(&paths)
}

/// Writes every channel of `image` as `<dir>/<frame>_c<c>.pgm`.
pub fn save_frame(image: &MultiChannelImage, dir: &Path, frame: &str, maxval: u16) -> Result<()> {
    for c in 0..image.channel_count() {
        write_pgm(&channel_path(dir, frame, c), image.width, image.height, image.channel(c), maxval)?;
    }
    Ok(())
}
