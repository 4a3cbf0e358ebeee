//! Videos, labels, the synthetic generator and the on-disk dataset layout.
//!
//! A dataset directory holds `manifest.json` plus, for each video id,
//! `<id>.a.mmct`, `<id>.v.mmct` (raw `[T, D]` features, see [`mmct`]) and
//! `<id>.labels.json` with integer 0/1 segment rows and the video vector.

pub(crate) mod io;
pub mod mmct;
mod synth;

pub use io::{load_dataset, save_dataset, LabelsFile, Manifest};
pub use synth::{generate, CoocBoost, Presence, SynthConfig};

use crate::error::{Error, Result};
use crate::model::Modality;
use crate::tensor::Tensor;

/// Binary `[T, K]` grid of segment labels or thresholded predictions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryGrid {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        BinaryGrid {
            rows,
            cols,
            cells: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut g = BinaryGrid::new(rows, cols);
        for t in 0..rows {
            for k in 0..cols {
                g.cells[t * cols + k] = f(t, k);
            }
        }
        g
    }

    /// Builds from integer rows, rejecting anything other than 0 or 1.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut g = BinaryGrid::new(rows.len(), cols);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Validation(format!(
                    "row {t} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (k, &v) in row.iter().enumerate() {
                g.cells[t * cols + k] = match v {
                    0 => false,
                    1 => true,
                    other => {
                        return Err(Error::Validation(format!(
                            "label ({t}, {k}) is {other}, expected 0 or 1"
                        )))
                    }
                };
            }
        }
        Ok(g)
    }

    /// Interprets a `[T, K]` tensor whose entries are exactly 0 or 1.
    pub fn from_binary_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::Validation(format!(
                "label tensor must be rank 2, got {:?}",
                t.shape()
            )));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut g = BinaryGrid::new(rows, cols);
        for (cell, &v) in g.cells.iter_mut().zip(t.data()) {
            *cell = if v == 1.0 {
                true
            } else if v == 0.0 {
                false
            } else {
                return Err(Error::Validation(format!("non-binary label value {v}")));
            };
        }
        Ok(g)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, t: usize, k: usize) -> bool {
        self.cells[t * self.cols + k]
    }

    pub fn set(&mut self, t: usize, k: usize, v: bool) {
        self.cells[t * self.cols + k] = v;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Elementwise AND, the audio-visual stream of two grids.
    pub fn and(&self, other: &BinaryGrid) -> BinaryGrid {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        BinaryGrid {
            rows: self.rows,
            cols: self.cols,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.cols.max(1)).take(self.rows).map(|r| r.iter().map(|&c| c as u8).collect()).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.rows, self.cols],
            self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect(),
        )
        .expect("grid extents are positive")
    }
}

/// Video-level label plus segment-level labels per modality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotations {
    pub video: Vec<bool>,
    pub audio: BinaryGrid,
    pub visual: BinaryGrid,
}

impl Annotations {
    /// Derives the video label as the OR over segments and modalities.
    pub fn from_segments(audio: BinaryGrid, visual: BinaryGrid) -> Self {
        let video = (0..audio.cols())
            .map(|k| (0..audio.rows()).any(|t| audio.get(t, k) || visual.get(t, k)))
            .collect();
        Annotations {
            video,
            audio,
            visual,
        }
    }

    pub fn segments(&self, m: Modality) -> &BinaryGrid {
        match m {
            Modality::Audio => &self.audio,
            Modality::Visual => &self.visual,
        }
    }

    pub fn num_segments(&self) -> usize {
        self.audio.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.video.len()
    }

    /// `[1, K]` tensor of the video label.
    pub fn video_tensor(&self) -> Tensor {
        Tensor::new(
            vec![1, self.video.len()],
            self.video.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect(),
        )
        .expect("K is positive")
    }

    /// Checks shapes against `(T, K)` and that every active segment class is in the video label.
    pub fn validate(&self, segments: usize, classes: usize) -> Result<()> {
        for (name, g) in [("audio", &self.audio), ("visual", &self.visual)] {
            if g.rows() != segments || g.cols() != classes {
                return Err(Error::Validation(format!(
                    "{name} labels are {}x{}, expected {segments}x{classes}",
                    g.rows(),
                    g.cols()
                )));
            }
        }
        if self.video.len() != classes {
            return Err(Error::Validation(format!(
                "video label has {} classes, expected {classes}",
                self.video.len()
            )));
        }
        for k in 0..classes {
            let active = (0..segments).any(|t| self.audio.get(t, k) || self.visual.get(t, k));
            if active && !self.video[k] {
                return Err(Error::Validation(format!(
                    "class {k} is active in a segment but missing from the video label"
                )));
            }
        }
        Ok(())
    }
}

/// One video's raw features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub id: String,
    /// `[T, D_a]`.
    pub raw_a: Tensor,
    /// `[T, D_v]`.
    pub raw_v: Tensor,
    pub ann: Annotations,
}

impl VideoSample {
    pub fn raw(&self, m: Modality) -> &Tensor {
        match m {
            Modality::Audio => &self.raw_a,
            Modality::Visual => &self.raw_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub videos: Vec<VideoSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Checks every video against the manifest, naming the first offender.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if m.video_ids.len() != self.videos.len() {
            return Err(Error::Validation(format!(
                "manifest lists {} videos, dataset has {}",
                m.video_ids.len(),
                self.videos.len()
            )));
        }
        if m.class_names.len() != m.classes {
            return Err(Error::Validation(format!(
                "manifest has {} class names for {} classes",
                m.class_names.len(),
                m.classes
            )));
        }
        for (id, v) in m.video_ids.iter().zip(&self.videos) {
            let fail = |field: &str, msg: String| {
                Error::Validation(format!("video `{}`, {field}: {msg}", v.id))
            };
            if *id != v.id {
                return Err(fail("id", format!("manifest lists `{id}` at this position")));
            }
            for (field, raw, dim) in [("audio features", &v.raw_a, m.audio_dim), ("visual features", &v.raw_v, m.visual_dim)] {
                if raw.shape() != [m.segments, dim] {
                    return Err(fail(field, format!("shape {:?}, expected [{}, {dim}]", raw.shape(), m.segments)));
                }
            }
            v.ann
                .validate(m.segments, m.classes)
                .map_err(|e| fail("labels", e.to_string()))?;
        }
        Ok(())
    }
}
