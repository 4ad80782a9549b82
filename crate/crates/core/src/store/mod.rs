//! Route persistence.
//!
//! Layout of a saved route:
//!
//! ```text
//! <root>/<name>/manifest.json
//! <root>/<name>/frames/frame_00000.pgm
//! <root>/<name>/frames/frame_00001.pgm
//! ...
//! ```
//!
//! Frames are 8-bit binary PGM. The manifest checksum is SHA-256 over the
//! concatenated frame file bytes in manifest order. Writes go to a hidden
//! staging directory first and are renamed into place, so a route directory
//! is either complete or absent.

mod catalog;
pub mod codec;

use std::fs;
use std::path::{Component, Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::debug;

use crate::error::{Error, Result};
use crate::imgproc::Frame;
use crate::route::{is_valid_name, CaptureParams, Route};

pub use catalog::{CatalogEntry, LocalStore};
pub use codec::{decode_frame, decode_gray, encode_pgm};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_DIR: &str = "frames";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteManifest {
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub frame_files: Vec<String>,
    pub params: CaptureParams,
    pub checksum: String,
}

impl RouteManifest {
    /// Checks name rules, a non-empty frame list and safe relative paths.
    pub fn validate(&self) -> Result<()> {
        if !is_valid_name(&self.name) {
            return Err(Error::InvalidName(self.name.clone()));
        }
        if self.frame_files.is_empty() {
            return Err(Error::EmptyRoute);
        }
        for f in &self.frame_files {
            let ok = !f.is_empty()
                && Path::new(f)
                    .components()
                    .all(|c| matches!(c, Component::Normal(_)));
            if !ok {
                return Err(Error::InvalidImage(format!("unsafe frame path {f:?}")));
            }
        }
        Ok(())
    }
}

/// Relative path of frame `i` inside a route directory.
pub fn frame_file_name(i: usize) -> String {
    format!("{FRAMES_DIR}/frame_{i:05}.pgm")
}

/// Lower-case hex SHA-256 over the given byte chunks in order.
pub fn checksum<'a>(chunks: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut hasher = Sha256::new();
    for c in chunks {
        hasher.update(c);
    }
    hex::encode(hasher.finalize())
}

/// Current time, or `SOURCE_DATE_EPOCH` when set, for reproducible manifests.
pub fn timestamp_now() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
        .unwrap_or_else(Utc::now)
}

fn list_frame_files(source_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(source_dir)? {
        let entry = entry?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && entry.file_type()?.is_file() {
            files.push(entry.path());
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Builds a route from the image files in `source_dir`.
///
/// Filenames in lexicographic order define frame order; frames
/// `0, stride, 2 * stride, ...` are kept. Hidden files are ignored.
pub fn ingest_frames(source_dir: &Path, name: &str, stride: usize, params: CaptureParams) -> Result<Route> {
    if stride == 0 {
        return Err(Error::InconsistentCapture("stride must be at least 1".into()));
    }
    let files = list_frame_files(source_dir)?;
    if files.is_empty() {
        return Err(Error::NoFrames(source_dir.to_path_buf()));
    }
    let frames = files
        .iter()
        .step_by(stride)
        .map(|path| {
            let bytes = fs::read(path)?;
            decode_frame(&bytes, path)
        })
        .collect::<Result<Vec<Frame>>>()?;
    debug!(kept = frames.len(), total = files.len(), stride, "ingested frames");
    Route::from_frames(name, frames, CaptureParams { stride, ..params })
}

/// Encoded frame files and manifest for a route, not yet on disk.
pub(crate) fn encode_route(route: &Route) -> (RouteManifest, Vec<Vec<u8>>) {
    let frames: Vec<Vec<u8>> = route
        .snapshots()
        .iter()
        .map(|s| encode_pgm(&s.image.to_gray()))
        .collect();
    let manifest = RouteManifest {
        name: route.name().to_string(),
        created_at: timestamp_now(),
        frame_files: (0..frames.len()).map(frame_file_name).collect(),
        params: *route.params(),
        checksum: checksum(frames.iter().map(Vec::as_slice)),
    };
    (manifest, frames)
}

/// Writes `root/<name>/` atomically and returns its manifest.
///
/// Frames are stored as 8-bit grayscale. An existing route of the same name
/// is an error unless `overwrite` is set.
pub fn save_route(route: &Route, root_dir: &Path, overwrite: bool) -> Result<RouteManifest> {
    let (manifest, frames) = encode_route(route);
    LocalStore::new(root_dir)?.commit(&manifest, &frames, overwrite)?;
    Ok(manifest)
}

/// Reads the manifest in `dir`.
pub fn read_manifest(dir: &Path) -> Result<RouteManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotARoute(dir.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let manifest: RouteManifest = serde_json::from_str(&text)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Reads every frame file of a manifest and verifies the checksum.
pub fn read_verified_frames(dir: &Path, manifest: &RouteManifest) -> Result<Vec<Vec<u8>>> {
    let frames = manifest
        .frame_files
        .iter()
        .map(|f| {
            let path = dir.join(f);
            fs::read(&path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFrame(path),
                _ => e.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let actual = checksum(frames.iter().map(Vec::as_slice));
    if actual != manifest.checksum {
        return Err(Error::CorruptRoute {
            name: manifest.name.clone(),
            expected: manifest.checksum.clone(),
            actual,
        });
    }
    Ok(frames)
}

/// Loads a saved route, verifying its checksum before decoding.
pub fn load_route(dir: &Path) -> Result<Route> {
    let manifest = read_manifest(dir)?;
    let frames = read_verified_frames(dir, &manifest)?;
    route_from_parts(&manifest, &frames, dir)
}

pub(crate) fn route_from_parts(manifest: &RouteManifest, frames: &[Vec<u8>], dir: &Path) -> Result<Route> {
    let images = manifest
        .frame_files
        .iter()
        .zip(frames)
        .map(|(f, bytes)| decode_gray(bytes, &dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    Route::from_frames(manifest.name.clone(), images, manifest.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::{GrayImage, RgbImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_route(seed: u64, n: usize) -> Route {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let imgs: Vec<GrayImage> = (0..n)
            .map(|_| GrayImage::new(6, 4, (0..24).map(|_| rng.random::<f64>()).collect()).unwrap())
            .collect();
        Route::from_frames("walk-1", imgs, CaptureParams { width: 6, height: 4, ..Default::default() }).unwrap()
    }

    fn quantized(route: &Route) -> Route {
        let imgs: Vec<GrayImage> = route.snapshots().iter().map(|s| s.image.to_gray().quantized()).collect();
        Route::from_frames(route.name(), imgs, *route.params()).unwrap()
    }

    fn write_frames(dir: &Path, n: usize) {
        for i in 0..n {
            let img = GrayImage::constant(4, 2, i as f64 / 255.0).unwrap();
            fs::write(dir.join(format!("img_{i:03}.pgm")), encode_pgm(&img)).unwrap();
        }
    }

    #[test]
    fn ingest_stride_selection() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), 5);
        let all = ingest_frames(dir.path(), "r", 1, CaptureParams::default()).unwrap();
        assert_eq!(all.len(), 5);
        for (i, s) in all.snapshots().iter().enumerate() {
            assert_eq!(s.image.to_gray().get(0, 0), i as f64 / 255.0);
        }
        let every_other = ingest_frames(dir.path(), "r", 2, CaptureParams::default()).unwrap();
        let firsts: Vec<f64> = every_other.snapshots().iter().map(|s| s.image.to_gray().get(0, 0) * 255.0).collect();
        assert_eq!(firsts, vec![0.0, 2.0, 4.0]);
        assert_eq!(every_other.params().stride, 2);
    }

    #[test]
    fn ingest_stride_count_matches_enumeration() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), 100);
        let route = ingest_frames(dir.path(), "r", 7, CaptureParams::default()).unwrap();
        let expected: Vec<usize> = (0..100).filter(|i| i % 7 == 0).collect();
        assert_eq!(route.len(), expected.len());
        assert_eq!(route.len(), 15);
        for (s, i) in route.snapshots().iter().zip(expected) {
            assert_eq!((s.image.to_gray().get(0, 0) * 255.0).round() as usize, i);
        }
    }

    #[test]
    fn ingest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingest_frames(dir.path(), "r", 1, CaptureParams::default()).unwrap_err();
        assert!(err.to_string().contains("no frames"));
        fs::write(dir.path().join("a.png"), b"garbage").unwrap();
        let err = ingest_frames(dir.path(), "r", 1, CaptureParams::default()).unwrap_err();
        assert!(err.to_string().contains("a.png"));
    }

    #[test]
    fn ingest_keeps_color() {
        let dir = tempfile::tempdir().unwrap();
        image::RgbImage::from_raw(2, 2, [255, 0, 0].repeat(4))
            .unwrap()
            .save(dir.path().join("f.png"))
            .unwrap();
        let route = ingest_frames(dir.path(), "c", 1, CaptureParams::default()).unwrap();
        assert!(matches!(route.snapshots()[0].image, Frame::Rgb(_)));
    }

    #[test]
    fn save_load_round_trip() {
        let root = tempfile::tempdir().unwrap();
        let route = random_route(1, 4);
        let manifest = save_route(&route, root.path(), false).unwrap();
        assert_eq!(manifest.frame_files.len(), 4);
        let loaded = load_route(&root.path().join("walk-1")).unwrap();
        assert_eq!(loaded, quantized(&route));
        // Already-quantized routes round-trip exactly.
        save_route(&loaded, root.path(), true).unwrap();
        assert_eq!(load_route(&root.path().join("walk-1")).unwrap(), loaded);
    }

    #[test]
    fn save_color_route_stores_gray() {
        let root = tempfile::tempdir().unwrap();
        let rgb = RgbImage::new(2, 1, vec![[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]).unwrap();
        let route = Route::from_frames("rgb", vec![rgb], CaptureParams::default()).unwrap();
        save_route(&route, root.path(), false).unwrap();
        let loaded = load_route(&root.path().join("rgb")).unwrap();
        assert_eq!(loaded.snapshots()[0].image.to_gray().pixels(), &[1.0, 0.0]);
    }

    #[test]
    fn manifest_lists_frames_and_checksum() {
        let root = tempfile::tempdir().unwrap();
        let manifest = save_route(&random_route(2, 3), root.path(), false).unwrap();
        assert_eq!(
            manifest.frame_files,
            vec!["frames/frame_00000.pgm", "frames/frame_00001.pgm", "frames/frame_00002.pgm"]
        );
        let dir = root.path().join("walk-1");
        let mut hasher = Sha256::new();
        for f in &manifest.frame_files {
            hasher.update(fs::read(dir.join(f)).unwrap());
        }
        assert_eq!(hex::encode(hasher.finalize()), manifest.checksum);
        let on_disk: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
        let mut keys: Vec<&str> = on_disk.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, vec!["checksum", "created_at", "frame_files", "name", "params"]);
    }

    #[test]
    fn save_collision_and_overwrite() {
        let root = tempfile::tempdir().unwrap();
        save_route(&random_route(3, 2), root.path(), false).unwrap();
        let err = save_route(&random_route(4, 2), root.path(), false).unwrap_err();
        assert!(matches!(err, Error::NameCollision(_)));
        let replacement = random_route(5, 3);
        save_route(&replacement, root.path(), true).unwrap();
        assert_eq!(load_route(&root.path().join("walk-1")).unwrap(), quantized(&replacement));
        let leftovers: Vec<_> = fs::read_dir(root.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn load_errors() {
        let root = tempfile::tempdir().unwrap();
        assert!(matches!(load_route(root.path()), Err(Error::NotARoute(_))));

        save_route(&random_route(6, 3), root.path(), false).unwrap();
        let dir = root.path().join("walk-1");
        fs::remove_file(dir.join("frames/frame_00001.pgm")).unwrap();
        let err = load_route(&dir).unwrap_err();
        assert!(err.to_string().contains("frame_00001.pgm"));
    }

    #[test]
    fn every_single_bit_flip_is_detected() {
        let root = tempfile::tempdir().unwrap();
        save_route(&random_route(7, 2), root.path(), false).unwrap();
        let frame = root.path().join("walk-1/frames/frame_00001.pgm");
        let original = fs::read(&frame).unwrap();
        for pos in 0..original.len() {
            let mut corrupt = original.clone();
            corrupt[pos] ^= 1 << (pos % 8);
            fs::write(&frame, &corrupt).unwrap();
            let err = load_route(&root.path().join("walk-1")).unwrap_err();
            assert!(matches!(err, Error::CorruptRoute { .. }), "byte {pos}");
        }
    }

    #[test]
    fn empty_route_cannot_be_built_or_saved() {
        let manifest = RouteManifest {
            name: "e".into(),
            created_at: Utc::now(),
            frame_files: vec![],
            params: CaptureParams::default(),
            checksum: checksum([]),
        };
        assert!(matches!(manifest.validate(), Err(Error::EmptyRoute)));
        assert!(Route::from_frames("e", Vec::<GrayImage>::new(), CaptureParams::default()).is_err());
    }

    #[test]
    fn manifest_rejects_escaping_paths() {
        let mut manifest = RouteManifest {
            name: "e".into(),
            created_at: Utc::now(),
            frame_files: vec!["../outside.pgm".into()],
            params: CaptureParams::default(),
            checksum: String::new(),
        };
        assert!(manifest.validate().is_err());
        manifest.frame_files = vec!["/etc/passwd".into()];
        assert!(manifest.validate().is_err());
    }
}
