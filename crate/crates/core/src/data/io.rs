use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mmct::{read_tensor, write_tensor};
use super::{Annotations, BinaryGrid, Dataset, VideoSample};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// `manifest.json` of a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Segments per video (T).
    pub segments: usize,
    /// Event classes (K).
    pub classes: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub class_names: Vec<String>,
    pub video_ids: Vec<String>,
}

/// `<id>.labels.json`: integer 0/1 rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub audio: Vec<Vec<u8>>,
    pub visual: Vec<Vec<u8>>,
    pub video: Vec<u8>,
}

impl From<&Annotations> for LabelsFile {
    fn from(a: &Annotations) -> Self {
        LabelsFile {
            audio: a.audio.to_rows(),
            visual: a.visual.to_rows(),
            video: a.video.iter().map(|&v| v as u8).collect(),
        }
    }
}

impl LabelsFile {
    fn into_annotations(self) -> Result<Annotations> {
        let audio = BinaryGrid::from_rows(&self.audio)
            .map_err(|e| Error::Validation(format!("audio: {e}")))?;
        let visual = BinaryGrid::from_rows(&self.visual)
            .map_err(|e| Error::Validation(format!("visual: {e}")))?;
        let video = self
            .video
            .iter()
            .enumerate()
            .map(|(k, &v)| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Validation(format!(
                    "video label {k} is {other}, expected 0 or 1"
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok(Annotations {
            video,
            audio,
            visual,
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("video id `{id}` is not a safe file stem")))
    }
}

pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for v in &dataset.videos {
        check_id(&v.id)?;
        write_tensor(dir.join(format!("{}.a.mmct", v.id)), &v.raw_a)?;
        write_tensor(dir.join(format!("{}.v.mmct", v.id)), &v.raw_v)?;
        write_json(&dir.join(format!("{}.labels.json", v.id)), &LabelsFile::from(&v.ann))?;
    }
    write_json(&dir.join(MANIFEST_FILE), &dataset.manifest)
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.segments == 0 || manifest.classes == 0 {
        return Err(Error::Validation(
            "manifest: segments and classes must be positive".into(),
        ));
    }
    let mut videos = Vec::with_capacity(manifest.video_ids.len());
    for id in &manifest.video_ids {
        check_id(id)?;
        let with_id = |field: &str, e: Error| Error::Validation(format!("video `{id}`, {field}: {e}"));
        let raw_a = read_tensor(dir.join(format!("{id}.a.mmct"))).map_err(|e| with_id("audio features", e))?;
        let raw_v = read_tensor(dir.join(format!("{id}.v.mmct"))).map_err(|e| with_id("visual features", e))?;
        let labels: LabelsFile =
            read_json(&dir.join(format!("{id}.labels.json"))).map_err(|e| with_id("labels", e))?;
        let ann = labels.into_annotations().map_err(|e| with_id("labels", e))?;
        videos.push(VideoSample {
            id: id.clone(),
            raw_a,
            raw_v,
            ann,
        });
    }
    let dataset = Dataset { manifest, videos };
    dataset.validate()?;
    Ok(dataset)
}
