use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{checksum, decode_gray, read_manifest, read_verified_frames, route_from_parts, RouteManifest, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::route::{is_valid_name, Route};

const STAGING_PREFIX: &str = ".staging-";
const TRASH_PREFIX: &str = ".trash-";

/// One row of the route catalog.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub frame_count: usize,
}

/// A directory of saved routes.
///
/// Hidden entries (staging and trash directories) are never listed.
#[derive(Clone, Debug)]
pub struct LocalStore {
    root: PathBuf,
}

impl LocalStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn route_dir(&self, name: &str) -> Result<PathBuf> {
        if !is_valid_name(name) {
            return Err(Error::InvalidName(name.to_string()));
        }
        Ok(self.root.join(name))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.route_dir(name)
            .map(|d| d.join(MANIFEST_FILE).is_file())
            .unwrap_or(false)
    }

    /// Routes with a readable manifest, sorted by name.
    pub fn list(&self) -> Result<Vec<CatalogEntry>> {
        let mut entries = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') || !entry.file_type()?.is_dir() {
                continue;
            }
            match read_manifest(&entry.path()) {
                Ok(m) => entries.push(CatalogEntry {
                    name: m.name,
                    created_at: m.created_at,
                    frame_count: m.frame_files.len(),
                }),
                Err(Error::NotARoute(_)) => {}
                Err(e) => warn!(route = %name, error = %e, "skipping unreadable route"),
            }
        }
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(entries)
    }

    pub fn manifest(&self, name: &str) -> Result<RouteManifest> {
        read_manifest(&self.route_dir(name)?)
    }

    pub fn frame_bytes(&self, name: &str, index: usize) -> Result<Vec<u8>> {
        let dir = self.route_dir(name)?;
        let manifest = read_manifest(&dir)?;
        let file = manifest
            .frame_files
            .get(index)
            .ok_or_else(|| Error::MissingFrame(dir.join(format!("#{index}"))))?;
        let path = dir.join(file);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFrame(path),
            _ => e.into(),
        })
    }

    pub fn load(&self, name: &str) -> Result<Route> {
        super::load_route(&self.route_dir(name)?)
    }

    /// Manifest plus checksum-verified frame bytes.
    pub fn read_bundle(&self, name: &str) -> Result<(RouteManifest, Vec<Vec<u8>>)> {
        let dir = self.route_dir(name)?;
        let manifest = read_manifest(&dir)?;
        let frames = read_verified_frames(&dir, &manifest)?;
        Ok((manifest, frames))
    }

    /// Verifies a manifest against its frame bytes without touching disk.
    pub fn verify_bundle(manifest: &RouteManifest, frames: &[Vec<u8>]) -> Result<()> {
        manifest.validate()?;
        if frames.len() != manifest.frame_files.len() {
            return Err(Error::InconsistentCapture(format!(
                "manifest lists {} frames, got {}",
                manifest.frame_files.len(),
                frames.len()
            )));
        }
        let actual = checksum(frames.iter().map(Vec::as_slice));
        if actual != manifest.checksum {
            return Err(Error::CorruptRoute {
                name: manifest.name.clone(),
                expected: manifest.checksum.clone(),
                actual,
            });
        }
        // Frames must decode and agree on size.
        route_from_parts(manifest, frames, Path::new(&manifest.name)).map(|_| ())
    }

    /// Adds a new route; fails with `NameCollision` if the name is taken.
    pub fn import(&self, manifest: &RouteManifest, frames: &[Vec<u8>]) -> Result<()> {
        self.commit(manifest, frames, false)
    }

    /// Verifies, writes into a staging directory and renames it into place.
    pub(crate) fn commit(&self, manifest: &RouteManifest, frames: &[Vec<u8>], overwrite: bool) -> Result<()> {
        Self::verify_bundle(manifest, frames)?;
        let target = self.route_dir(&manifest.name)?;
        if target.exists() && !overwrite {
            return Err(Error::NameCollision(manifest.name.clone()));
        }
        let staging = self.root.join(format!("{STAGING_PREFIX}{:016x}", rand::random::<u64>()));
        let staged = self.write_staging(&staging, manifest, frames);
        if let Err(e) = staged {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        let trash = if overwrite && target.exists() {
            let trash = self.root.join(format!("{TRASH_PREFIX}{:016x}", rand::random::<u64>()));
            fs::rename(&target, &trash)?;
            Some(trash)
        } else {
            None
        };
        if let Err(e) = fs::rename(&staging, &target) {
            let _ = fs::remove_dir_all(&staging);
            if let Some(trash) = &trash {
                let _ = fs::rename(trash, &target);
            }
            return Err(if target.exists() {
                Error::NameCollision(manifest.name.clone())
            } else {
                e.into()
            });
        }
        if let Some(trash) = trash {
            fs::remove_dir_all(trash)?;
        }
        debug!(route = %manifest.name, frames = frames.len(), "committed route");
        Ok(())
    }

    fn write_staging(&self, staging: &Path, manifest: &RouteManifest, frames: &[Vec<u8>]) -> Result<()> {
        for (file, bytes) in manifest.frame_files.iter().zip(frames) {
            let path = staging.join(file);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, bytes)?;
        }
        fs::write(staging.join(MANIFEST_FILE), serde_json::to_vec_pretty(manifest)?)?;
        Ok(())
    }

    pub fn delete(&self, name: &str) -> Result<()> {
        let dir = self.route_dir(name)?;
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(Error::NotARoute(dir));
        }
        let trash = self.root.join(format!("{TRASH_PREFIX}{:016x}", rand::random::<u64>()));
        fs::rename(&dir, &trash)?;
        fs::remove_dir_all(trash)?;
        Ok(())
    }

    /// Removes leftover staging and trash directories from interrupted writes.
    pub fn purge_incomplete(&self) -> Result<usize> {
        let mut removed = 0;
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with(STAGING_PREFIX) || name.starts_with(TRASH_PREFIX) {
                fs::remove_dir_all(entry.path())?;
                removed += 1;
            }
        }
        Ok(removed)
    }

    /// Decodes frame `index` as grayscale.
    pub fn frame_image(&self, name: &str, index: usize) -> Result<crate::imgproc::GrayImage> {
        let bytes = self.frame_bytes(name, index)?;
        decode_gray(&bytes, &self.route_dir(name)?.join(format!("#{index}")))
    }
}
