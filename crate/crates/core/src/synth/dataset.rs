use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{encode_recording, write_truth_csv};
use super::{DatasetSpec, Renderer};
use crate::rng::{derive_seed, Stream};
use crate::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLevel {
    pub level_db: f64,
    pub floor_seed: u64,
    pub truth_events: usize,
    pub recording: DatasetFile,
    pub truth: DatasetFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub scene_sha256: String,
    pub levels: Vec<ManifestLevel>,
}

impl Manifest {
    pub fn level(&self, level_db: f64) -> Option<&ManifestLevel> {
        self.levels.iter().find(|l| l.level_db == level_db)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn level_stem(level_db: f64) -> String {
    format!("level_{level_db}db")
}

/// Renders every grid level and writes recordings, truth sidecars and the manifest.
///
/// Files are written under temporary names and renamed once everything has
/// succeeded; on failure every file created by this call is removed.
pub fn write_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let scene = spec.build_scene()?;
    let renderer = Renderer::new(&scene, spec)?;
    let scene_sha256 = sha256_hex(scene.to_canonical_json()?.as_bytes());

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let (dominant, truth) = renderer.dominant(&scene.active_units());
        let field = renderer.neighbor_field();

        let rendered: Vec<Result<(f64, Vec<u8>)>> = spec
            .noise_levels_db
            .par_iter()
            .map(|&level| {
                let floor = renderer.floor(level)?;
                let rec = renderer.compose(&[&dominant, &field.signal, &floor], level, Vec::new());
                Ok((level, encode_recording(&rec)?))
            })
            .collect();

        let mut levels = Vec::new();
        for (index, r) in rendered.into_iter().enumerate() {
            let (level, bytes) = r?;
            let stem = level_stem(level);
            let rec_name = format!("{stem}.zydr");
            let truth_name = format!("{stem}_truth.csv");

            let tmp = out_dir.join(format!("{rec_name}.tmp"));
            written.push(tmp.clone());
            std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;

            let tmp_truth = out_dir.join(format!("{truth_name}.tmp"));
            written.push(tmp_truth.clone());
            write_truth_csv(&tmp_truth, &truth)?;
            let truth_bytes = std::fs::read(&tmp_truth).map_err(|e| Error::io(&tmp_truth, e))?;

            levels.push(ManifestLevel {
                level_db: level,
                floor_seed: derive_seed(spec.seed, Stream::Floor, index as u64),
                truth_events: truth.len(),
                recording: DatasetFile {
                    file: rec_name,
                    sha256: sha256_hex(&bytes),
                },
                truth: DatasetFile {
                    file: truth_name,
                    sha256: sha256_hex(&truth_bytes),
                },
            });
        }

        let manifest = Manifest {
            format_version: 1,
            spec: spec.clone(),
            scene_sha256,
            levels,
        };
        let tmp_manifest = out_dir.join(format!("{MANIFEST_NAME}.tmp"));
        written.push(tmp_manifest.clone());
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format("manifest", e.to_string()))?;
        std::fs::write(&tmp_manifest, json).map_err(|e| Error::io(&tmp_manifest, e))?;

        for tmp in written.clone() {
            let name = tmp.to_string_lossy().trim_end_matches(".tmp").to_string();
            std::fs::rename(&tmp, &name).map_err(|e| Error::io(&tmp, e))?;
            let idx = written.iter().position(|p| p == &tmp).expect("tracked");
            written[idx] = PathBuf::from(name);
        }
        Ok(manifest)
    })();

    if result.is_err() {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
    }
    result
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Integrity(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))
}

/// Reads a listed file and checks its hash; returns the bytes.
pub fn verify_file(dir: &Path, f: &DatasetFile) -> Result<Vec<u8>> {
    let path = dir.join(&f.file);
    let bytes = std::fs::read(&path)
        .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    let actual = sha256_hex(&bytes);
    if actual != f.sha256 {
        return Err(Error::Integrity(format!(
            "{}: sha256 {actual} does not match manifest {}",
            path.display(),
            f.sha256
        )));
    }
    Ok(bytes)
}
