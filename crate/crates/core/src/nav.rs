//! Follow-route sessions and familiarity feedback.
//!
//! Each live frame is matched against the route memory and its difference is
//! mapped to a tone (low difference, high pitch) and a haptic flag.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{argmin, downsample, idf, GrayImage};
use crate::route::RouteMemory;

pub const DEFAULT_TONE_MIN_HZ: f64 = 200.0;
pub const DEFAULT_TONE_MAX_HZ: f64 = 2000.0;
/// Haptic threshold as a fraction of the difference range above `d_min`.
pub const DEFAULT_HAPTIC_FRACTION: f64 = 0.2;
/// Half-width of the running envelope before a second distinct difference arrives.
pub const RUNNING_EPSILON: f64 = 1e-6;

/// Difference range, tone range and haptic threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCalibration {
    d_min: f64,
    d_max: f64,
    f_min: f64,
    f_max: f64,
    haptic_threshold: f64,
}

impl FeedbackCalibration {
    pub fn new(d_min: f64, d_max: f64, f_min: f64, f_max: f64, haptic_threshold: f64) -> Result<Self> {
        let all = [d_min, d_max, f_min, f_max, haptic_threshold];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCalibration("values must be finite".into()));
        }
        if d_min >= d_max {
            return Err(Error::InvalidCalibration(format!("d_min {d_min} >= d_max {d_max}")));
        }
        if f_min >= f_max {
            return Err(Error::InvalidCalibration(format!("f_min {f_min} >= f_max {f_max}")));
        }
        if !(d_min..=d_max).contains(&haptic_threshold) {
            return Err(Error::InvalidCalibration(format!(
                "haptic threshold {haptic_threshold} outside [{d_min}, {d_max}]"
            )));
        }
        Ok(Self {
            d_min,
            d_max,
            f_min,
            f_max,
            haptic_threshold,
        })
    }

    /// Fixed calibration from a pass over the memory: `d_min = 0`,
    /// `d_max` = largest pairwise snapshot difference.
    ///
    /// A memory whose snapshots are all identical falls back to the largest
    /// possible difference at its resolution, `1 / sqrt(P)`.
    pub fn from_memory(memory: &RouteMemory, settings: &FeedbackSettings) -> Result<Self> {
        let mut d_max = memory.max_pairwise_idf();
        if d_max <= 0.0 {
            d_max = 1.0 / (memory.snapshot(0).pixel_count() as f64).sqrt();
        }
        Self::with_range(0.0, d_max, settings)
    }

    fn with_range(d_min: f64, d_max: f64, settings: &FeedbackSettings) -> Result<Self> {
        Self::new(
            d_min,
            d_max,
            settings.tone_min_hz,
            settings.tone_max_hz,
            settings.haptic.threshold(d_min, d_max),
        )
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn haptic_threshold(&self) -> f64 {
        self.haptic_threshold
    }
}

/// Linear inverse map from difference to tone; out-of-range differences clamp.
pub fn tone_for_diff(diff: f64, calib: &FeedbackCalibration) -> f64 {
    if diff <= calib.d_min {
        return calib.f_max;
    }
    if diff >= calib.d_max {
        return calib.f_min;
    }
    let f = calib.f_min
        + (calib.f_max - calib.f_min) * (calib.d_max - diff) / (calib.d_max - calib.d_min);
    f.clamp(calib.f_min, calib.f_max)
}

pub fn haptic_for_diff(diff: f64, calib: &FeedbackCalibration) -> bool {
    diff < calib.haptic_threshold
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    /// Range fixed from the route memory at session start.
    #[default]
    Fixed,
    /// Range widened to cover every difference seen so far.
    Running,
}

impl std::str::FromStr for CalibrationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "running" => Ok(Self::Running),
            other => Err(format!("unknown calibration mode {other:?} (expected fixed or running)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum HapticRule {
    /// Threshold at `d_min + fraction * (d_max - d_min)`.
    Fraction(f64),
    /// Absolute difference, clamped into the current range.
    Absolute(f64),
}

impl HapticRule {
    fn threshold(&self, d_min: f64, d_max: f64) -> f64 {
        match *self {
            HapticRule::Fraction(f) => d_min + f.clamp(0.0, 1.0) * (d_max - d_min),
            HapticRule::Absolute(t) => t.clamp(d_min, d_max),
        }
    }
}

impl Default for HapticRule {
    fn default() -> Self {
        HapticRule::Fraction(DEFAULT_HAPTIC_FRACTION)
    }
}

/// How a session turns differences into feedback.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackSettings {
    pub mode: CalibrationMode,
    pub tone_min_hz: f64,
    pub tone_max_hz: f64,
    pub haptic: HapticRule,
}

impl Default for FeedbackSettings {
    fn default() -> Self {
        Self {
            mode: CalibrationMode::Fixed,
            tone_min_hz: DEFAULT_TONE_MIN_HZ,
            tone_max_hz: DEFAULT_TONE_MAX_HZ,
            haptic: HapticRule::default(),
        }
    }
}

/// Feedback emitted for one processed frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamiliarityUpdate {
    pub frame_seq: u64,
    pub best_index: usize,
    pub diff: f64,
    pub tone_hz: f64,
    pub haptic: bool,
}

/// A follow-route session over a shared route memory.
///
/// Frames must be fed in arrival order; `frame_seq` counts from 0.
#[derive(Debug, Clone)]
pub struct NavSession {
    memory: Arc<RouteMemory>,
    settings: FeedbackSettings,
    calib: Option<FeedbackCalibration>,
    history: Vec<FamiliarityUpdate>,
}

impl NavSession {
    pub fn new(memory: Arc<RouteMemory>, settings: FeedbackSettings) -> Result<Self> {
        if settings.tone_min_hz >= settings.tone_max_hz || !settings.tone_min_hz.is_finite() || !settings.tone_max_hz.is_finite() {
            return Err(Error::InvalidCalibration(format!(
                "tone range [{}, {}] is empty",
                settings.tone_min_hz, settings.tone_max_hz
            )));
        }
        let calib = match settings.mode {
            CalibrationMode::Fixed => Some(FeedbackCalibration::from_memory(&memory, &settings)?),
            CalibrationMode::Running => None,
        };
        Ok(Self {
            memory,
            settings,
            calib,
            history: Vec::new(),
        })
    }

    /// Session with an explicit fixed calibration.
    pub fn with_calibration(memory: Arc<RouteMemory>, calib: FeedbackCalibration) -> Self {
        Self {
            memory,
            settings: FeedbackSettings {
                mode: CalibrationMode::Fixed,
                tone_min_hz: calib.f_min,
                tone_max_hz: calib.f_max,
                haptic: HapticRule::Absolute(calib.haptic_threshold),
            },
            calib: Some(calib),
            history: Vec::new(),
        }
    }

    pub fn memory(&self) -> &Arc<RouteMemory> {
        &self.memory
    }

    pub fn mode(&self) -> CalibrationMode {
        self.settings.mode
    }

    /// Current calibration; `None` for a running session that has seen no frames.
    pub fn calibration(&self) -> Option<&FeedbackCalibration> {
        self.calib.as_ref()
    }

    pub fn history(&self) -> &[FamiliarityUpdate] {
        &self.history
    }

    /// Matches `frame` against the memory, downsampling it first if needed.
    pub fn process_frame(&mut self, frame: &GrayImage) -> Result<FamiliarityUpdate> {
        let (w, h) = self.memory.working_resolution();
        let result = if frame.dimensions() == (w, h) {
            self.memory.match_view(frame)?
        } else {
            self.memory.match_view(&downsample(frame, w, h)?)?
        };
        let diff = result.best_diff;
        if self.settings.mode == CalibrationMode::Running {
            self.widen(diff)?;
        }
        let calib = self.calib.as_ref().expect("calibrated before use");
        let update = FamiliarityUpdate {
            frame_seq: self.history.len() as u64,
            best_index: result.best_index,
            diff,
            tone_hz: tone_for_diff(diff, calib),
            haptic: haptic_for_diff(diff, calib),
        };
        self.history.push(update);
        Ok(update)
    }

    fn widen(&mut self, diff: f64) -> Result<()> {
        let (d_min, d_max) = match &self.calib {
            None => (diff - RUNNING_EPSILON, diff + RUNNING_EPSILON),
            Some(c) => (c.d_min.min(diff), c.d_max.max(diff)),
        };
        self.calib = Some(FeedbackCalibration::with_range(d_min, d_max, &self.settings)?);
        Ok(())
    }
}

/// Angle of the smallest difference in a sweep; ties go to the lowest angle.
pub fn sweep_heading_estimate(updates: &[(f64, FamiliarityUpdate)]) -> Result<f64> {
    if updates.is_empty() {
        return Err(Error::EmptySweep);
    }
    for (i, pair) in updates.windows(2).enumerate() {
        if !(pair[1].0 > pair[0].0) {
            return Err(Error::AnglesNotIncreasing {
                index: i + 1,
                previous: pair[0].0,
                angle: pair[1].0,
            });
        }
    }
    let best = argmin(updates.iter().map(|(_, u)| u.diff)).expect("non-empty");
    Ok(updates[best].0)
}

/// Compares one frame against a single reference image.
///
/// Both are reduced to their common (smallest) resolution first.
pub fn single_match(
    reference: &GrayImage,
    frame: &GrayImage,
    calib: &FeedbackCalibration,
) -> Result<FamiliarityUpdate> {
    let w = reference.width().min(frame.width());
    let h = reference.height().min(frame.height());
    let reference = downsample(reference, w, h)?;
    let frame = downsample(frame, w, h)?;
    let diff = idf(&reference, &frame)?;
    Ok(FamiliarityUpdate {
        frame_seq: 0,
        best_index: 0,
        diff,
        tone_hz: tone_for_diff(diff, calib),
        haptic: haptic_for_diff(diff, calib),
    })
}
