//! Deterministic synthetic world for desk-scale evaluation.
//!
//! The scene is a cylinder of view directions around a reference point:
//! a sky whose brightness varies with azimuth (sun side brighter), a band of
//! distant hills with a blurred skyline and a set of soft-edged landmarks at
//! finite distances.
//! Moving the observer shifts each landmark's azimuth by the first-order
//! parallax `(along * sin(az) - lateral * cos(az)) / distance`; the sky and
//! hills are far enough to show no parallax.
//!
//! Azimuths are degrees clockwise from the route heading. Panorama column 0
//! starts at azimuth -180, so azimuth 0 sits at column `width / 2`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::GrayImage;

/// Observer position in centimetres: `along` the route heading, `lateral` to its right.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub along_cm: f64,
    pub lateral_cm: f64,
}

impl Position {
    pub fn new(along_cm: f64, lateral_cm: f64) -> Self {
        Self { along_cm, lateral_cm }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub landmark_count: usize,
    /// Range of landmark angular widths in degrees.
    pub angular_size_deg: (f64, f64),
    /// Largest brightness offset of a landmark from its background.
    pub contrast: f64,
    /// Range of landmark distances in centimetres.
    pub distance_cm: (f64, f64),
    /// Amplitude of the azimuthal brightness gradient of the sky.
    pub sun_contrast: f64,
    pub fov_deg: f64,
    /// Panorama columns covering 360 degrees.
    pub pano_width: usize,
    pub pano_height: usize,
    /// Elevation of the top and bottom image rows in degrees.
    pub elevation_top_deg: f64,
    pub elevation_bottom_deg: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            landmark_count: 8,
            angular_size_deg: (30.0, 80.0),
            contrast: 0.08,
            distance_cm: (60.0, 300.0),
            sun_contrast: 0.3,
            fov_deg: 90.0,
            pano_width: 1440,
            pano_height: 100,
            elevation_top_deg: 15.0,
            elevation_bottom_deg: -10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub azimuth_deg: f64,
    pub distance_cm: f64,
    pub width_deg: f64,
    pub top_elevation_deg: f64,
    /// Brightness offset from the background behind the landmark.
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthWorld {
    seed: u64,
    params: SynthParams,
    sun_azimuth_deg: f64,
    /// `(amplitude_deg, frequency, phase)` terms of the hill skyline.
    hills: Vec<(f64, f64, f64)>,
    landmarks: Vec<Landmark>,
    panorama: GrayImage,
}

/// Wraps an angle to `[-180, 180)`.
pub fn wrap_deg(a: f64) -> f64 {
    (a + 180.0).rem_euclid(360.0) - 180.0
}

/// Builds the world for `seed`; identical seeds give identical worlds.
pub fn synth_world(seed: u64, params: SynthParams) -> Result<SynthWorld> {
    if !(params.fov_deg > 0.0 && params.fov_deg <= 360.0) {
        return Err(Error::InvalidImage(format!("fov {} outside (0, 360]", params.fov_deg)));
    }
    if params.pano_width == 0 || params.pano_height == 0 {
        return Err(Error::InvalidImage("panorama must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sun_azimuth_deg = rng.random_range(-180.0..180.0);
    let hills = (1..=3)
        .map(|k| (rng.random_range(0.5..2.0) / k as f64, k as f64, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let (wmin, wmax) = params.angular_size_deg;
    let (dmin, dmax) = params.distance_cm;
    let mut landmarks: Vec<Landmark> = (0..params.landmark_count)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Landmark {
                azimuth_deg: rng.random_range(-180.0..180.0),
                distance_cm: rng.random_range(dmin..=dmax),
                width_deg: rng.random_range(wmin..=wmax),
                top_elevation_deg: rng.random_range(2.0..params.elevation_top_deg.max(2.5)),
                contrast: sign * params.contrast * rng.random_range(0.5..1.0),
            }
        })
        .collect();
    // Far to near so nearer landmarks occlude.
    landmarks.sort_by(|a, b| b.distance_cm.total_cmp(&a.distance_cm));
    let mut world = SynthWorld {
        seed,
        params,
        sun_azimuth_deg,
        hills,
        landmarks,
        panorama: GrayImage::constant(1, 1, 0.0)?,
    };
    world.panorama = world.panorama_at(Position::default());
    Ok(world)
}

const SKYLINE_BLEND_DEG: f64 = 4.0;

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Raised-cosine profile of half-width `half`, 1 at the centre.
fn soft_profile(offset_deg: f64, half: f64) -> f64 {
    if offset_deg.abs() >= half {
        0.0
    } else {
        0.5 * (1.0 + (PI * offset_deg / half).cos())
    }
}

impl SynthWorld {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &SynthParams {
        &self.params
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    /// The full 360 degree scene at the reference point.
    pub fn panorama(&self) -> &GrayImage {
        &self.panorama
    }

    /// Azimuth of a landmark seen from `pos` under the first-order parallax model.
    pub fn apparent_azimuth(&self, lm: &Landmark, pos: Position) -> f64 {
        let az = lm.azimuth_deg.to_radians();
        let shift = (pos.along_cm * az.sin() - pos.lateral_cm * az.cos()) / lm.distance_cm;
        wrap_deg(lm.azimuth_deg + shift.to_degrees())
    }

    fn skyline_deg(&self, az_deg: f64) -> f64 {
        let az = az_deg.to_radians();
        1.0 + self
            .hills
            .iter()
            .map(|&(amp, k, phase)| amp * (k * az + phase).sin())
            .sum::<f64>()
    }

    /// Full panorama seen from `pos`.
    pub fn panorama_at(&self, pos: Position) -> GrayImage {
        let p = &self.params;
        let (w, h) = (p.pano_width, p.pano_height);
        let col_deg = 360.0 / w as f64;
        let row_deg = (p.elevation_top_deg - p.elevation_bottom_deg) / h as f64;
        let apparent: Vec<(f64, &Landmark)> = self
            .landmarks
            .iter()
            .map(|lm| (self.apparent_azimuth(lm, pos), lm))
            .collect();
        let mut pixels = vec![0.0; w * h];
        for c in 0..w {
            let az = -180.0 + (c as f64 + 0.5) * col_deg;
            let sun = (az - self.sun_azimuth_deg).to_radians().cos();
            let skyline = self.skyline_deg(az);
            // Horizontal coverage of each landmark at this column.
            let cover: Vec<(f64, &Landmark)> = apparent
                .iter()
                .map(|&(laz, lm)| (soft_profile(wrap_deg(az - laz), lm.width_deg / 2.0), lm))
                .filter(|(a, _)| *a > 0.0)
                .collect();
            for r in 0..h {
                let el = p.elevation_top_deg - (r as f64 + 0.5) * row_deg;
                let sky = 0.6 + p.sun_contrast * sun + 0.004 * el;
                let land = if el > 0.0 { 0.38 } else { 0.28 + 0.005 * el } + p.sun_contrast / 3.0 * sun;
                let t = smoothstep((el - skyline) / SKYLINE_BLEND_DEG + 0.5);
                let mut v = land + (sky - land) * t;
                for &(alpha, lm) in &cover {
                    // One-degree soft top edge.
                    let top = (lm.top_elevation_deg - el + 0.5).clamp(0.0, 1.0);
                    let a = alpha * top;
                    v = v * (1.0 - a) + (v + lm.contrast) * a;
                }
                pixels[r * w + c] = v.clamp(0.0, 1.0);
            }
        }
        GrayImage::new(w, h, pixels).expect("valid panorama")
    }

    /// Number of panorama columns spanned by the camera field of view.
    pub fn fov_columns(&self) -> usize {
        ((self.params.fov_deg * self.params.pano_width as f64 / 360.0).round() as usize)
            .clamp(1, self.params.pano_width)
    }

    /// Camera window of `panorama` centred on `heading_deg`, at panorama resolution.
    pub fn view_from_panorama(&self, panorama: &GrayImage, heading_deg: f64) -> GrayImage {
        let w = panorama.width() as isize;
        let shift = (heading_deg * w as f64 / 360.0).round() as isize;
        let cols = self.fov_columns() as isize;
        let start = w / 2 + shift - cols / 2;
        panorama
            .crop_columns_wrapped(start, cols as usize)
            .expect("non-empty window")
    }

    /// The view from `pos` facing `heading_deg`, at panorama resolution.
    pub fn render_view(&self, pos: Position, heading_deg: f64) -> GrayImage {
        self.view_from_panorama(&self.panorama_at(pos), heading_deg)
    }
}
