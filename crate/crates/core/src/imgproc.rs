//! Grayscale views, preprocessing and the image difference function.
//!
//! Intensities are stored as `f64` in `[0, 1]`. Eight-bit sources map
//! `v -> v / 255`, so difference magnitudes do not depend on quantization.

use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Default working resolution used for matching.
pub const DEFAULT_WORKING_WIDTH: usize = 90;
pub const DEFAULT_WORKING_HEIGHT: usize = 25;

/// Row-major grayscale pixel grid with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        check_shape(width, height, pixels.len())?;
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Maps 8-bit samples to `value / 255`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        check_shape(width, height, bytes.len())?;
        Ok(Self {
            width,
            height,
            pixels: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }

    /// Quantizes to 8 bits with round-to-nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// The image as it reads back after an 8-bit round trip.
    pub fn quantized(&self) -> Self {
        Self::from_u8(self.width, self.height, &self.to_u8()).expect("shape preserved")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Total pixel count `P`.
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    /// Columns `[start, start + len)` taken cyclically.
    pub fn crop_columns_wrapped(&self, start: isize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidImage("empty crop".into()));
        }
        let w = self.width as isize;
        Self::from_fn(len, self.height, |r, c| {
            let src = (start + c as isize).rem_euclid(w) as usize;
            self.get(r, src)
        })
    }
}

/// Row-major RGB pixel grid, each channel in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        check_shape(width, height, pixels.len())?;
        if pixels.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidImage("channel outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Maps interleaved 8-bit RGB samples to `value / 255`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} RGB bytes, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|px| {
                [
                    f64::from(px[0]) / 255.0,
                    f64::from(px[1]) / 255.0,
                    f64::from(px[2]) / 255.0,
                ]
            })
            .collect::<Vec<_>>();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }
}

/// A captured frame before preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl Frame {
    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            Frame::Gray(g) => g.dimensions(),
            Frame::Rgb(c) => (c.width(), c.height()),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        match self {
            Frame::Gray(g) => g.clone(),
            Frame::Rgb(c) => to_grayscale(c),
        }
    }

    pub fn into_gray(self) -> GrayImage {
        match self {
            Frame::Gray(g) => g,
            Frame::Rgb(c) => to_grayscale(&c),
        }
    }
}

impl From<GrayImage> for Frame {
    fn from(img: GrayImage) -> Self {
        Frame::Gray(img)
    }
}

impl From<RgbImage> for Frame {
    fn from(img: RgbImage) -> Self {
        Frame::Rgb(img)
    }
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::InvalidImage(format!(
            "{width}x{height} needs {} pixels, got {len}",
            width * height
        )));
    }
    Ok(())
}

/// Per-pixel BT.601 luma.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let [wr, _, wb] = LUMA_WEIGHTS;
    // Weights sum to one, so luma = g + wr (r - g) + wb (b - g); neutral grays map exactly.
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| (g + wr * (r - g) + wb * (b - g)).clamp(0.0, 1.0))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Source spans overlapping each output cell along one axis: `(index, weight)`.
fn pooling_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let w = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Box-average pooling onto an `out_w` x `out_h` grid.
///
/// Each output pixel is the area-weighted mean of the (possibly fractional)
/// source rectangle it covers.
pub fn downsample(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidImage(format!(
            "dimensions must be positive, got {out_w}x{out_h}"
        )));
    }
    if out_w > img.width || out_h > img.height {
        return Err(Error::TargetExceedsSource {
            target_w: out_w,
            target_h: out_h,
            source_w: img.width,
            source_h: img.height,
        });
    }
    if (out_w, out_h) == img.dimensions() {
        return Ok(img.clone());
    }
    let wx = pooling_weights(img.width, out_w);
    let wy = pooling_weights(img.height, out_h);
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for ys in &wy {
        for xs in &wx {
            // Accumulate offsets from an anchor pixel so constant regions stay exact.
            let anchor = img.get(ys[0].0, xs[0].0);
            let mut acc = 0.0;
            let mut total = 0.0;
            for &(y, wyv) in ys {
                let row = img.row(y);
                for &(x, wxv) in xs {
                    let w = wyv * wxv;
                    acc += w * (row[x] - anchor);
                    total += w;
                }
            }
            pixels.push((anchor + acc / total).clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage {
        width: out_w,
        height: out_h,
        pixels,
    })
}

/// Sum of squared differences over two equal-length slices.
#[inline]
pub(crate) fn sum_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn ensure_same_shape(x: &GrayImage, y: &GrayImage) -> Result<()> {
    if x.dimensions() != y.dimensions() {
        return Err(Error::IncompatibleDimensions {
            left_w: x.width,
            left_h: x.height,
            right_w: y.width,
            right_h: y.height,
        });
    }
    Ok(())
}

/// Image difference: `sqrt(sum((x - y)^2)) / P` with `P = width * height`.
pub fn idf(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    ensure_same_shape(x, y)?;
    Ok(idf_unchecked(x, y))
}

#[inline]
pub(crate) fn idf_unchecked(x: &GrayImage, y: &GrayImage) -> f64 {
    sum_sq_diff(&x.pixels, &y.pixels).sqrt() / x.pixels.len() as f64
}

/// Cyclic column shift: output column `c` is input column `(c - shift) mod width`.
///
/// On a panoramic image this is an azimuthal rotation.
pub fn roll_columns(img: &GrayImage, shift: isize) -> GrayImage {
    let w = img.width;
    let s = shift.rem_euclid(w as isize) as usize;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for r in 0..img.height {
        let row = img.row(r);
        pixels.extend_from_slice(&row[w - s..]);
        pixels.extend_from_slice(&row[..w - s]);
    }
    GrayImage {
        width: w,
        height: img.height,
        pixels,
    }
}

/// One point of a rotational difference curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidfSample {
    pub angle_deg: f64,
    pub diff: f64,
}

/// Difference-versus-angle samples; `min_index` is the lowest index attaining the minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct RidfCurve {
    samples: Vec<RidfSample>,
    min_index: usize,
}

impl RidfCurve {
    pub fn new(samples: Vec<RidfSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySweep);
        }
        for (i, pair) in samples.windows(2).enumerate() {
            if !(pair[1].angle_deg > pair[0].angle_deg) {
                return Err(Error::AnglesNotIncreasing {
                    index: i + 1,
                    previous: pair[0].angle_deg,
                    angle: pair[1].angle_deg,
                });
            }
        }
        let min_index = argmin(samples.iter().map(|s| s.diff)).expect("non-empty");
        Ok(Self { samples, min_index })
    }

    pub fn samples(&self) -> &[RidfSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min_index(&self) -> usize {
        self.min_index
    }

    pub fn min_sample(&self) -> RidfSample {
        self.samples[self.min_index]
    }

    pub fn max_diff(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.diff)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the samples within `fraction` of the curve range above the
    /// minimum contain a run of at least `min_run` consecutive samples that
    /// includes the minimum.
    pub fn has_wide_minimum(&self, fraction: f64, min_run: usize) -> bool {
        let min = self.min_sample().diff;
        let cutoff = min + fraction * (self.max_diff() - min);
        let within = |i: usize| self.samples[i].diff <= cutoff;
        let mut lo = self.min_index;
        while lo > 0 && within(lo - 1) {
            lo -= 1;
        }
        let mut hi = self.min_index;
        while hi + 1 < self.samples.len() && within(hi + 1) {
            hi += 1;
        }
        hi - lo + 1 >= min_run
    }
}

/// Index of the smallest value; ties go to the lowest index.
pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Rotational IDF of `current` against `snapshot` over column shifts
/// `0, step, 2*step, ... < width`. Sample `k` is shift `k * step`, labelled
/// `k * step * 360 / width` degrees.
pub fn ridf_panoramic(current: &GrayImage, snapshot: &GrayImage, step: usize) -> Result<RidfCurve> {
    ensure_same_shape(current, snapshot)?;
    if step == 0 {
        return Err(Error::InvalidImage("column stride must be at least 1".into()));
    }
    let w = current.width;
    let p = current.pixel_count() as f64;
    let deg_per_col = 360.0 / w as f64;
    let samples = (0..w)
        .step_by(step)
        .map(|s| {
            // roll(current, s)[c] = current[(c - s) mod w], split into two runs per row.
            let ss: f64 = (0..current.height)
                .map(|r| {
                    let cur = current.row(r);
                    let snap = snapshot.row(r);
                    sum_sq_diff(&cur[..w - s], &snap[s..]) + sum_sq_diff(&cur[w - s..], &snap[..s])
                })
                .sum();
            RidfSample {
                angle_deg: s as f64 * deg_per_col,
                diff: ss.sqrt() / p,
            }
        })
        .collect();
    RidfCurve::new(samples)
}
