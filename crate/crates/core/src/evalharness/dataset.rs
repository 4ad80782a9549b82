//! On-disk sweep datasets.
//!
//! ```text
//! <dir>/geometry.json            optional; defaults when absent
//! <dir>/pos_<k>/sweep/a<deci-degrees>.pgm   e.g. a-0900.pgm, a0000.pgm, a0450.pgm
//! <dir>/pos_<k>/test/off_<cm>.pgm          e.g. off_0.pgm, off_7.pgm, off_10.5.pgm
//! ```
//!
//! Angles are stored in tenths of a degree. Any decodable image format is
//! accepted on load; frames are written as 8-bit PGM.

use std::fs;
use std::path::{Path, PathBuf};

use super::{SweepDataset, SweepGeometry, SweepPosition};
use crate::error::{Error, Result};
use crate::imgproc::GrayImage;
use crate::store::{decode_gray, encode_pgm};

pub const GEOMETRY_FILE: &str = "geometry.json";
const SWEEP_DIR: &str = "sweep";
const TEST_DIR: &str = "test";

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedDataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// File name of a sweep frame at `angle_deg`, e.g. `a-0900.pgm`.
pub fn sweep_file_name(angle_deg: f64) -> Result<String> {
    let tenths = (angle_deg * 10.0).round();
    if (tenths / 10.0 - angle_deg).abs() > 1e-9 {
        return Err(Error::InvalidImage(format!("sweep angle {angle_deg} is not a multiple of 0.1")));
    }
    let t = tenths as i64;
    let sign = if t < 0 { "-" } else { "" };
    Ok(format!("a{sign}{:04}.pgm", t.abs()))
}

/// Angle encoded in a sweep frame file name, if it follows the `a<deci-degrees>` pattern.
pub fn sweep_angle(path: &Path) -> Option<f64> {
    labelled_value(path, "a").ok().map(|t| t / 10.0)
}

/// Non-hidden entries of `dir`, sorted by path.
pub fn visible_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        files.push(entry.path());
    }
    files.sort();
    Ok(files)
}

/// Parses `<prefix><number>.<ext>`.
fn labelled_value(path: &Path, prefix: &str) -> Result<f64> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| malformed(path, "unreadable file name"))?;
    if path.extension().is_none() {
        return Err(malformed(path, "missing image extension"));
    }
    stem.strip_prefix(prefix)
        .and_then(|n| n.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .ok_or_else(|| malformed(path, format!("expected {prefix}<number>")))
}

fn read_labelled(dir: &Path, prefix: &str, scale: f64) -> Result<Vec<(f64, GrayImage)>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut frames = Vec::new();
    for path in visible_files(dir)? {
        let value = labelled_value(&path, prefix)? / scale;
        let bytes = fs::read(&path)?;
        frames.push((value, decode_gray(&bytes, &path)?, path));
    }
    frames.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in frames.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(malformed(
                &pair[1].2,
                format!("duplicate label {} (also {})", pair[1].0, pair[0].2.display()),
            ));
        }
    }
    Ok(frames.into_iter().map(|(v, img, _)| (v, img)).collect())
}

pub fn load_dataset(dir: &Path) -> Result<SweepDataset> {
    if !dir.is_dir() {
        return Err(malformed(dir, "not a directory"));
    }
    let geometry_path = dir.join(GEOMETRY_FILE);
    let geometry = if geometry_path.is_file() {
        serde_json::from_slice(&fs::read(&geometry_path)?)
            .map_err(|e| malformed(&geometry_path, e.to_string()))?
    } else {
        SweepGeometry::default()
    };
    let mut positions = Vec::new();
    for path in visible_files(dir)? {
        if path.file_name().and_then(|n| n.to_str()) == Some(GEOMETRY_FILE) {
            continue;
        }
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("pos_"))
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|_| path.is_dir())
            .ok_or_else(|| malformed(&path, "expected a pos_<index> directory"))?;
        let sweep_frames = read_labelled(&path.join(SWEEP_DIR), "a", 10.0)?;
        if sweep_frames.is_empty() {
            return Err(malformed(&path, "position has no sweep frames"));
        }
        let test_frames = read_labelled(&path.join(TEST_DIR), "off_", 1.0)?;
        positions.push(SweepPosition {
            route_index: index,
            sweep_frames,
            test_frames,
        });
    }
    if positions.is_empty() {
        return Err(malformed(dir, "no positions"));
    }
    positions.sort_by_key(|p| p.route_index);
    for pair in positions.windows(2) {
        if pair[0].route_index == pair[1].route_index {
            return Err(malformed(dir, format!("duplicate position {}", pair[1].route_index)));
        }
    }
    SweepDataset::new(positions, geometry)
}

/// Writes `dataset` under `dir`, which must not already hold a dataset.
pub fn write_dataset(dataset: &SweepDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(GEOMETRY_FILE), serde_json::to_vec_pretty(dataset.geometry())?)?;
    for p in dataset.positions() {
        let pos_dir = dir.join(format!("pos_{}", p.route_index));
        let sweep = pos_dir.join(SWEEP_DIR);
        fs::create_dir_all(&sweep)?;
        for (angle, img) in &p.sweep_frames {
            fs::write(sweep.join(sweep_file_name(*angle)?), encode_pgm(img))?;
        }
        if !p.test_frames.is_empty() {
            let test = pos_dir.join(TEST_DIR);
            fs::create_dir_all(&test)?;
            for (offset, img) in &p.test_frames {
                fs::write(test.join(format!("off_{offset}.pgm")), encode_pgm(img))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(v: u8) -> GrayImage {
        GrayImage::from_u8(3, 2, &[v; 6]).unwrap()
    }

    fn dataset() -> SweepDataset {
        let positions = (0..3)
            .map(|k| SweepPosition {
                route_index: k * 2,
                sweep_frames: vec![(-90.0, img(1)), (-2.5, img(2)), (0.0, img(3)), (45.0, img(4))],
                test_frames: vec![(0.0, img(5)), (7.0, img(6)), (10.5, img(7))],
            })
            .collect();
        SweepDataset::new(positions, SweepGeometry { sweep_arc_deg: 180.0, step_cm: 7.0 }).unwrap()
    }

    #[test]
    fn angle_names() {
        assert_eq!(sweep_file_name(-90.0).unwrap(), "a-0900.pgm");
        assert_eq!(sweep_file_name(0.0).unwrap(), "a0000.pgm");
        assert_eq!(sweep_file_name(45.0).unwrap(), "a0450.pgm");
        assert_eq!(sweep_file_name(-2.5).unwrap(), "a-0025.pgm");
        assert!(sweep_file_name(1.25).is_err());
    }

    #[test]
    fn angle_parsing() {
        assert_eq!(sweep_angle(Path::new("x/a-0900.pgm")), Some(-90.0));
        assert_eq!(sweep_angle(Path::new("a0025.png")), Some(2.5));
        assert_eq!(sweep_angle(Path::new("frame_00001.pgm")), None);
        assert_eq!(sweep_angle(Path::new("a0100")), None);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset();
        write_dataset(&ds, dir.path()).unwrap();
        assert!(dir.path().join("pos_4/sweep/a-0900.pgm").is_file());
        assert!(dir.path().join("pos_2/test/off_10.5.pgm").is_file());
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn positions_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        let positions = [10, 9, 0]
            .into_iter()
            .map(|k| SweepPosition { route_index: k, sweep_frames: vec![(0.0, img(k as u8))], test_frames: vec![] })
            .collect();
        write_dataset(&SweepDataset::new(positions, SweepGeometry::default()).unwrap(), dir.path()).unwrap();
        let idx: Vec<usize> = load_dataset(dir.path()).unwrap().positions().iter().map(|p| p.route_index).collect();
        assert_eq!(idx, vec![0, 9, 10]);
    }

    #[test]
    fn malformed_name_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dataset(), dir.path()).unwrap();
        let bad = dir.path().join("pos_0/sweep/left.pgm");
        fs::write(&bad, encode_pgm(&img(0))).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("left.pgm"), "{err}");
    }

    #[test]
    fn duplicate_angle_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dataset(), dir.path()).unwrap();
        fs::write(dir.path().join("pos_2/sweep/a450.pgm"), encode_pgm(&img(0))).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::MalformedDataset { .. }));
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn empty_position_and_stray_entries() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).is_err());
        fs::create_dir_all(dir.path().join("pos_0/sweep")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("pos_0"), "{err}");
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dataset(), dir.path()).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("notes.txt"));
    }

    #[test]
    fn undecodable_frame_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dataset(), dir.path()).unwrap();
        fs::write(dir.path().join("pos_0/test/off_3.pgm"), b"garbage").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("off_3.pgm"), "{err}");
    }
}
