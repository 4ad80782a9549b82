//! Route memory and the perfect-memory matcher.
//!
//! Every training view is kept verbatim. A query is compared against all of
//! them and the most familiar (lowest difference) snapshot wins.

use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{
    self, argmin, downsample, Frame, GrayImage, RidfCurve, RidfSample, DEFAULT_WORKING_HEIGHT,
    DEFAULT_WORKING_WIDTH,
};

/// Camera field of view assumed when none is given.
pub const DEFAULT_FOV_DEG: f64 = 90.0;

/// Capture parameters recorded with a route.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureParams {
    /// Working resolution.
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Frame stride used at ingestion.
    pub stride: usize,
}

impl Default for CaptureParams {
    fn default() -> Self {
        Self {
            width: DEFAULT_WORKING_WIDTH,
            height: DEFAULT_WORKING_HEIGHT,
            fov_deg: DEFAULT_FOV_DEG,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub index: usize,
    pub image: Frame,
    pub heading_deg: Option<f64>,
    pub position_label: Option<String>,
    pub captured_at: Option<DateTime<Utc>>,
}

impl Snapshot {
    pub fn new(index: usize, image: impl Into<Frame>) -> Self {
        Self {
            index,
            image: image.into(),
            heading_deg: None,
            position_label: None,
            captured_at: None,
        }
    }
}

/// Letters, digits, dash and underscore only.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// An ordered, non-empty list of snapshots sharing one frame size.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    name: String,
    snapshots: Vec<Snapshot>,
    params: CaptureParams,
}

impl Route {
    pub fn new(name: impl Into<String>, snapshots: Vec<Snapshot>, params: CaptureParams) -> Result<Self> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(Error::InvalidName(name));
        }
        let first = snapshots.first().ok_or(Error::EmptyRoute)?;
        let dims = first.image.dimensions();
        for (i, snap) in snapshots.iter().enumerate() {
            if snap.index != i {
                return Err(Error::InconsistentCapture(format!(
                    "snapshot at position {i} has index {}",
                    snap.index
                )));
            }
            if snap.image.dimensions() != dims {
                return Err(Error::InconsistentCapture(format!(
                    "frame {i} is {:?}, expected {:?}",
                    snap.image.dimensions(),
                    dims
                )));
            }
        }
        Ok(Self {
            name,
            snapshots,
            params,
        })
    }

    /// Numbers `frames` in order.
    pub fn from_frames<F: Into<Frame>>(
        name: impl Into<String>,
        frames: impl IntoIterator<Item = F>,
        params: CaptureParams,
    ) -> Result<Self> {
        let snapshots = frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| Snapshot::new(i, f))
            .collect();
        Self::new(name, snapshots, params)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn params(&self) -> &CaptureParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn frame_dimensions(&self) -> (usize, usize) {
        self.snapshots[0].image.dimensions()
    }
}

/// Grayscale and downsample a frame to the working resolution.
pub fn preprocess(frame: &Frame, width: usize, height: usize) -> Result<GrayImage> {
    let gray = frame.to_gray();
    if gray.dimensions() == (width, height) {
        return Ok(gray);
    }
    downsample(&gray, width, height)
}

/// A preprocessed route: every snapshot is grayscale at working resolution.
#[derive(Clone, Debug)]
pub struct RouteMemory {
    route: Route,
    max_pairwise: OnceLock<f64>,
}

/// Preprocesses every frame of `route` to `working_w` x `working_h`, keeping order.
pub fn build_memory(route: Route, working_w: usize, working_h: usize) -> Result<RouteMemory> {
    let Route {
        name,
        snapshots,
        params,
    } = route;
    let snapshots = snapshots
        .into_iter()
        .map(|s| {
            Ok(Snapshot {
                image: Frame::Gray(preprocess(&s.image, working_w, working_h)?),
                ..s
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let params = CaptureParams {
        width: working_w,
        height: working_h,
        ..params
    };
    Ok(RouteMemory {
        route: Route::new(name, snapshots, params)?,
        max_pairwise: OnceLock::new(),
    })
}

/// Outcome of comparing one query against the whole memory.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub best_index: usize,
    pub best_diff: f64,
    pub diffs: Vec<f64>,
}

impl RouteMemory {
    /// Memory over images already at a common working resolution.
    pub fn from_images(
        name: impl Into<String>,
        images: Vec<GrayImage>,
        params: CaptureParams,
    ) -> Result<Self> {
        let (w, h) = images.first().ok_or(Error::EmptyRoute)?.dimensions();
        let route = Route::from_frames(name, images, CaptureParams { width: w, height: h, ..params })?;
        Ok(Self {
            route,
            max_pairwise: OnceLock::new(),
        })
    }

    /// Memory at the working resolution recorded in the route parameters,
    /// capped at the stored frame size.
    pub fn from_route(route: Route) -> Result<Self> {
        let (fw, fh) = route.frame_dimensions();
        let (w, h) = (route.params().width.min(fw), route.params().height.min(fh));
        build_memory(route, w, h)
    }

    /// One-snapshot memory used for single-image matching.
    pub fn single(reference: GrayImage) -> Self {
        Self::from_images("single", vec![reference], CaptureParams::default())
            .expect("one image is a valid route")
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn into_route(self) -> Route {
        self.route
    }

    pub fn name(&self) -> &str {
        self.route.name()
    }

    pub fn len(&self) -> usize {
        self.route.len()
    }

    pub fn is_empty(&self) -> bool {
        self.route.is_empty()
    }

    pub fn working_resolution(&self) -> (usize, usize) {
        (self.route.params.width, self.route.params.height)
    }

    pub fn snapshot(&self, index: usize) -> &GrayImage {
        match &self.route.snapshots[index].image {
            Frame::Gray(g) => g,
            Frame::Rgb(_) => unreachable!("memory snapshots are preprocessed"),
        }
    }

    pub fn images(&self) -> impl ExactSizeIterator<Item = &GrayImage> + '_ {
        (0..self.len()).map(move |k| self.snapshot(k))
    }

    /// Compares `query` (already at working resolution) against every snapshot.
    pub fn match_view(&self, query: &GrayImage) -> Result<MatchResult> {
        imgproc::ensure_same_shape(query, self.snapshot(0))?;
        let diffs: Vec<f64> = self
            .images()
            .map(|snap| imgproc::idf_unchecked(query, snap))
            .collect();
        let best_index = argmin(diffs.iter().copied()).expect("memory is non-empty");
        Ok(MatchResult {
            best_index,
            best_diff: diffs[best_index],
            diffs,
        })
    }

    /// Preprocesses a raw frame to working resolution, then matches it.
    pub fn match_frame(&self, frame: &Frame) -> Result<MatchResult> {
        let (w, h) = self.working_resolution();
        self.match_view(&preprocess(frame, w, h)?)
    }

    /// Best difference per sweep frame, labelled by the caller's angles.
    pub fn ridf_sweep(&self, sweep: &[(f64, GrayImage)]) -> Result<RidfCurve> {
        if sweep.is_empty() {
            return Err(Error::EmptySweep);
        }
        let samples = sweep
            .iter()
            .map(|(angle, frame)| {
                Ok(RidfSample {
                    angle_deg: *angle,
                    diff: self.match_view(frame)?.best_diff,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RidfCurve::new(samples)
    }

    /// Largest difference between any two snapshots; computed once.
    pub fn max_pairwise_idf(&self) -> f64 {
        *self.max_pairwise.get_or_init(|| {
            let mut max = 0.0f64;
            for i in 0..self.len() {
                for j in i + 1..self.len() {
                    max = max.max(imgproc::idf_unchecked(self.snapshot(i), self.snapshot(j)));
                }
            }
            max
        })
    }
}
