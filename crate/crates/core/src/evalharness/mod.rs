//! Sweep-dataset evaluation.
//!
//! A dataset holds, per route position, a rotational sweep (frames labelled
//! with their angle relative to the route heading) and forward-facing test
//! frames taken at lateral offsets from the route. Two kinds of probe are
//! evaluated per position:
//!
//! * on-route: the sweep against the whole route memory;
//! * test: the sweep against one forward-facing test frame, i.e. the
//!   rotational difference curve of the route sweep seen from the test
//!   position.
//!
//! Every probe yields a curve, a heading estimate (its argmin angle) and an
//! angular error against the route heading, 0.

mod dataset;
mod plot;
mod stats;
pub mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{downsample, GrayImage, RidfCurve};
use crate::route::{CaptureParams, Route, RouteMemory};

pub use dataset::{load_dataset, sweep_angle, sweep_file_name, visible_files, write_dataset, GEOMETRY_FILE};
pub use plot::{emit_plot_data, parse_ridf_csv};
pub use stats::{boxplot_stats, quantile, ErrorSummary};
pub use synth::{synth_world, Landmark, Position, SynthParams, SynthWorld};

/// Angular difference on the circle, in `[0, 180]`.
pub fn angular_error(estimated_deg: f64, true_deg: f64) -> f64 {
    let d = (estimated_deg - true_deg).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGeometry {
    pub sweep_arc_deg: f64,
    /// Spacing between neighbouring test positions.
    pub step_cm: f64,
}

impl Default for SweepGeometry {
    fn default() -> Self {
        Self {
            sweep_arc_deg: 180.0,
            step_cm: 7.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPosition {
    pub route_index: usize,
    /// `(angle_deg, view)`; angle 0 is the route heading, positive to the right.
    pub sweep_frames: Vec<(f64, GrayImage)>,
    /// `(lateral_offset_cm, forward view)`.
    pub test_frames: Vec<(f64, GrayImage)>,
}

impl SweepPosition {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_frames.is_empty() {
            return Err(Error::EmptyInput("sweep position has no sweep frames"));
        }
        for (i, pair) in self.sweep_frames.windows(2).enumerate() {
            if !(pair[1].0 > pair[0].0) {
                return Err(Error::AnglesNotIncreasing {
                    index: i + 1,
                    previous: pair[0].0,
                    angle: pair[1].0,
                });
            }
        }
        for (i, (a, _)) in self.test_frames.iter().enumerate() {
            if self.test_frames[..i].iter().any(|(b, _)| b == a) {
                return Err(Error::InconsistentCapture(format!("duplicate lateral offset {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepDataset {
    positions: Vec<SweepPosition>,
    geometry: SweepGeometry,
}

impl SweepDataset {
    pub fn new(positions: Vec<SweepPosition>, geometry: SweepGeometry) -> Result<Self> {
        for p in &positions {
            p.validate()?;
        }
        Ok(Self { positions, geometry })
    }

    pub fn positions(&self) -> &[SweepPosition] {
        &self.positions
    }

    pub fn geometry(&self) -> &SweepGeometry {
        &self.geometry
    }

    /// Copy with every frame downsampled to `width x height`.
    pub fn to_resolution(&self, width: usize, height: usize) -> Result<Self> {
        let resize = |frames: &[(f64, GrayImage)]| {
            frames
                .iter()
                .map(|(label, img)| Ok((*label, downsample(img, width, height)?)))
                .collect::<Result<Vec<_>>>()
        };
        let positions = self
            .positions
            .iter()
            .map(|p| {
                Ok(SweepPosition {
                    route_index: p.route_index,
                    sweep_frames: resize(&p.sweep_frames)?,
                    test_frames: resize(&p.test_frames)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            positions,
            geometry: self.geometry,
        })
    }

    /// Total sweep frames over all positions.
    pub fn sweep_len(&self) -> usize {
        self.positions.iter().map(|p| p.sweep_frames.len()).sum()
    }
}

/// Curve, heading estimate and error for one comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub curve: RidfCurve,
    pub estimate_deg: f64,
    pub error_deg: f64,
}

impl Probe {
    fn from_curve(curve: RidfCurve) -> Self {
        let estimate_deg = curve.min_sample().angle_deg;
        Self {
            error_deg: angular_error(estimate_deg, 0.0),
            estimate_deg,
            curve,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionResult {
    pub route_index: usize,
    pub on_route: Probe,
    /// `(lateral_offset_cm, probe)` in dataset order.
    pub tests: Vec<(f64, Probe)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub positions: Vec<PositionResult>,
    pub on_route_summary: ErrorSummary,
    /// Test-probe errors grouped by lateral offset, ascending.
    pub by_offset: Vec<(f64, ErrorSummary)>,
}

impl Evaluation {
    pub fn offset_summary(&self, offset_cm: f64) -> Option<&ErrorSummary> {
        self.by_offset
            .iter()
            .find(|(o, _)| *o == offset_cm)
            .map(|(_, s)| s)
    }
}

fn evaluate_position(position: &SweepPosition, memory: &RouteMemory) -> Result<PositionResult> {
    let on_route = Probe::from_curve(memory.ridf_sweep(&position.sweep_frames)?);
    let tests = position
        .test_frames
        .iter()
        .map(|(offset, view)| {
            let single = RouteMemory::single(view.clone());
            Ok((*offset, Probe::from_curve(single.ridf_sweep(&position.sweep_frames)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PositionResult {
        route_index: position.route_index,
        on_route,
        tests,
    })
}

/// Runs every probe of every position; positions are processed in parallel.
pub fn evaluate(dataset: &SweepDataset, memory: &RouteMemory) -> Result<Evaluation> {
    if dataset.positions.is_empty() {
        return Err(Error::EmptyInput("dataset has no positions"));
    }
    let positions = dataset
        .positions
        .par_iter()
        .map(|p| evaluate_position(p, memory))
        .collect::<Result<Vec<_>>>()?;

    let on_route_summary =
        boxplot_stats(&positions.iter().map(|p| p.on_route.error_deg).collect::<Vec<_>>())?;
    let mut offsets: Vec<f64> = positions
        .iter()
        .flat_map(|p| p.tests.iter().map(|(o, _)| *o))
        .collect();
    offsets.sort_by(f64::total_cmp);
    offsets.dedup();
    let by_offset = offsets
        .into_iter()
        .map(|o| {
            let errors: Vec<f64> = positions
                .iter()
                .flat_map(|p| p.tests.iter().filter(|(t, _)| *t == o).map(|(_, pr)| pr.error_deg))
                .collect();
            Ok((o, boxplot_stats(&errors)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        positions,
        on_route_summary,
        by_offset,
    })
}

/// Layout of a synthetic evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub positions: usize,
    pub position_spacing_cm: f64,
    pub angle_step_deg: f64,
    pub geometry: SweepGeometry,
    pub test_positions: usize,
    pub working_width: usize,
    pub working_height: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            positions: 8,
            position_spacing_cm: 50.0,
            angle_step_deg: 5.0,
            geometry: SweepGeometry::default(),
            test_positions: 4,
            working_width: crate::imgproc::DEFAULT_WORKING_WIDTH,
            working_height: crate::imgproc::DEFAULT_WORKING_HEIGHT,
        }
    }
}

impl ScenarioParams {
    /// Sweep angles from `-arc/2` to `+arc/2` inclusive.
    pub fn sweep_angles(&self) -> Vec<f64> {
        let half = self.geometry.sweep_arc_deg / 2.0;
        let steps = (self.geometry.sweep_arc_deg / self.angle_step_deg).round() as i64;
        (0..=steps).map(|i| -half + i as f64 * self.angle_step_deg).collect()
    }

    /// Lateral offsets `0, step, 2 * step, ...`.
    pub fn test_offsets(&self) -> Vec<f64> {
        (0..self.test_positions).map(|i| i as f64 * self.geometry.step_cm).collect()
    }
}

/// A training route plus the sweep dataset recorded along it.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthScenario {
    /// Forward-facing views at each position, at working resolution.
    pub route: Route,
    pub dataset: SweepDataset,
}

/// Renders a route and sweep dataset from `world`.
///
/// Views are downsampled to the working resolution and quantized to 8 bits,
/// as a camera would deliver them.
pub fn synth_scenario(world: &SynthWorld, params: &ScenarioParams) -> Result<SynthScenario> {
    let capture = |pano: &GrayImage, heading: f64| -> Result<GrayImage> {
        let view = world.view_from_panorama(pano, heading);
        Ok(downsample(&view, params.working_width, params.working_height)?.quantized())
    };
    let angles = params.sweep_angles();
    let offsets = params.test_offsets();
    let mut forward = Vec::with_capacity(params.positions);
    let mut positions = Vec::with_capacity(params.positions);
    for k in 0..params.positions {
        let along = k as f64 * params.position_spacing_cm;
        let pano = world.panorama_at(Position::new(along, 0.0));
        let sweep_frames = angles
            .iter()
            .map(|&a| Ok((a, capture(&pano, a)?)))
            .collect::<Result<Vec<_>>>()?;
        let test_frames = offsets
            .iter()
            .map(|&o| {
                let pano = world.panorama_at(Position::new(along, o));
                Ok((o, capture(&pano, 0.0)?))
            })
            .collect::<Result<Vec<_>>>()?;
        forward.push(capture(&pano, 0.0)?);
        positions.push(SweepPosition {
            route_index: k,
            sweep_frames,
            test_frames,
        });
    }
    let route = Route::from_frames(
        format!("synth-{}", world.seed()),
        forward,
        CaptureParams {
            width: params.working_width,
            height: params.working_height,
            fov_deg: world.params().fov_deg,
            stride: 1,
        },
    )?;
    Ok(SynthScenario {
        route,
        dataset: SweepDataset::new(positions, params.geometry)?,
    })
}
