//! Segment-level and event-level F-scores for the audio, visual and
//! audio-visual streams, with Type@AV, Event@AV and the ten-metric average.
//!
//! Every score is computed per video and then averaged over videos. An F1
//! with no positives on either side counts as 1. Event proposals are maximal
//! runs over half-open segment intervals, matched greedily in (class, start)
//! order at temporal IoU at least `iou`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::data::BinaryGrid;
use crate::data::Annotations;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Thresholding and matching settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub threshold: f64,
    pub iou: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            threshold: 0.5,
            iou: 0.5,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} is not in (0, 1)", self.threshold)));
        }
        if !(self.iou > 0.0 && self.iou <= 1.0) {
            return Err(Error::Config(format!("iou {} is not in (0, 1]", self.iou)));
        }
        Ok(())
    }

    /// One-line description echoed at the top of reports.
    pub fn describe(&self) -> String {
        format!(
            "threshold={} rule=p>=threshold matching=greedy-first-fit iou>={} intervals=half-open empty-empty-f1=1 aggregation=per-video-mean",
            self.threshold, self.iou
        )
    }
}

/// `1` where `p >= threshold`.
pub fn binarize(p: &Tensor, threshold: f64) -> Result<BinaryGrid> {
    if p.rank() != 2 {
        return Err(Error::InvalidTensor(format!(
            "expected [T, K] probabilities, got {:?}",
            p.shape()
        )));
    }
    let k = p.shape()[1];
    Ok(BinaryGrid::from_fn(p.shape()[0], k, |t, c| p.data()[t * k + c] >= threshold))
}

/// True positive, false positive and false negative counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn f1(self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    fn plus(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

fn check_same(pred: &BinaryGrid, gt: &BinaryGrid) -> Result<()> {
    if (pred.rows(), pred.cols()) != (gt.rows(), gt.cols()) {
        return Err(Error::Validation(format!(
            "prediction grid is {}x{}, ground truth is {}x{}",
            pred.rows(),
            pred.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    Ok(())
}

pub fn segment_counts(pred: &BinaryGrid, gt: &BinaryGrid) -> Result<Counts> {
    check_same(pred, gt)?;
    let mut c = Counts::default();
    for (&p, &g) in pred.cells().iter().zip(gt.cells()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn segment_f1(pred: &BinaryGrid, gt: &BinaryGrid) -> Result<f64> {
    segment_counts(pred, gt).map(Counts::f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stream {
    A,
    V,
    AV,
}

/// A maximal run `[start, end)` of class `class`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventProposal {
    pub class: usize,
    pub start: usize,
    pub end: usize,
    pub stream: Stream,
}

impl EventProposal {
    pub fn iou(&self, other: &EventProposal) -> f64 {
        let inter = self.end.min(other.end).saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) - self.start.min(other.start);
        inter as f64 / union as f64
    }
}

/// Maximal runs of positives per class, ordered by (class, start).
pub fn extract_events(grid: &BinaryGrid, stream: Stream) -> Vec<EventProposal> {
    let mut out = Vec::new();
    for class in 0..grid.cols() {
        let mut t = 0;
        while t < grid.rows() {
            if grid.get(t, class) {
                let start = t;
                while t < grid.rows() && grid.get(t, class) {
                    t += 1;
                }
                out.push(EventProposal {
                    class,
                    start,
                    end: t,
                    stream,
                });
            } else {
                t += 1;
            }
        }
    }
    out
}

/// Greedy matching: each prediction, in (class, start) order, takes the first
/// unmatched ground-truth event of its class with IoU at least `iou_min`.
pub fn event_counts(pred: &[EventProposal], gt: &[EventProposal], iou_min: f64) -> Counts {
    let mut pred: Vec<&EventProposal> = pred.iter().collect();
    pred.sort_by_key(|e| (e.class, e.start));
    let mut gt: Vec<&EventProposal> = gt.iter().collect();
    gt.sort_by_key(|e| (e.class, e.start));
    let mut used = vec![false; gt.len()];
    let mut tp = 0;
    for p in &pred {
        let hit = gt
            .iter()
            .enumerate()
            .find(|(i, g)| !used[*i] && g.class == p.class && p.iou(g) >= iou_min);
        if let Some((i, _)) = hit {
            used[i] = true;
            tp += 1;
        }
    }
    Counts {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
    }
}

pub fn event_f1(pred: &[EventProposal], gt: &[EventProposal], iou_min: f64) -> f64 {
    event_counts(pred, gt, iou_min).f1()
}

/// The five scores of one level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelScores {
    pub a: f64,
    pub v: f64,
    pub av: f64,
    pub type_av: f64,
    pub event_av: f64,
}

impl LevelScores {
    fn from_counts(a: Counts, v: Counts, av: Counts) -> Self {
        let (fa, fv, fav) = (a.f1(), v.f1(), av.f1());
        LevelScores {
            a: fa,
            v: fv,
            av: fav,
            type_av: (fa + fv + fav) / 3.0,
            event_av: a.plus(v).f1(),
        }
    }

    fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("a", self.a),
            ("v", self.v),
            ("av", self.av),
            ("type", self.type_av),
            ("event", self.event_av),
        ]
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "a" => &mut self.a,
            "v" => &mut self.v,
            "av" => &mut self.av,
            "type" => &mut self.type_av,
            "event" => &mut self.event_av,
            _ => return None,
        })
    }
}

/// Dataset-level scores in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub segment: LevelScores,
    pub event: LevelScores,
    pub avg: f64,
}

const TEXT_KEYS: usize = 11;

impl MetricReport {
    /// The ten metrics in report order.
    pub fn ten(&self) -> [f64; 10] {
        let (s, e) = (&self.segment, &self.event);
        [s.a, s.v, s.av, s.type_av, s.event_av, e.a, e.v, e.av, e.type_av, e.event_av]
    }

    /// `key = value` lines, preceded by a `#` protocol header. Values use the
    /// shortest round-trip float formatting.
    pub fn to_text(&self, protocol: &Protocol) -> String {
        let mut out = format!("# {}\n", protocol.describe());
        for (level, scores) in [("segment", &self.segment), ("event", &self.event)] {
            for (name, v) in scores.fields() {
                let _ = writeln!(out, "{level}.{name} = {v}");
            }
        }
        let _ = writeln!(out, "avg = {}", self.avg);
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut r = MetricReport::default();
        let mut seen = BTreeSet::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Validation(format!("malformed report line `{line}`"));
            let (key, value) = line.split_once('=').ok_or_else(bad)?;
            let (key, value) = (key.trim(), value.trim());
            let v: f64 = value.parse().map_err(|_| bad())?;
            let slot = match key.split_once('.') {
                Some(("segment", name)) => r.segment.field_mut(name),
                Some(("event", name)) => r.event.field_mut(name),
                None if key == "avg" => Some(&mut r.avg),
                _ => None,
            }
            .ok_or_else(bad)?;
            *slot = v;
            if !seen.insert(key.to_string()) {
                return Err(Error::Validation(format!("duplicate report key `{key}`")));
            }
        }
        if seen.len() != TEXT_KEYS {
            return Err(Error::Validation(format!(
                "report has {} of {TEXT_KEYS} keys",
                seen.len()
            )));
        }
        Ok(r)
    }
}

/// Thresholded predictions of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    pub id: String,
    pub audio: BinaryGrid,
    pub visual: BinaryGrid,
}

impl VideoPrediction {
    pub fn from_probs(id: impl Into<String>, audio: &Tensor, visual: &Tensor, threshold: f64) -> Result<Self> {
        Ok(VideoPrediction {
            id: id.into(),
            audio: binarize(audio, threshold)?,
            visual: binarize(visual, threshold)?,
        })
    }
}

/// Both levels for one video.
pub fn score_video(audio: &BinaryGrid, visual: &BinaryGrid, ann: &Annotations, iou: f64) -> Result<(LevelScores, LevelScores)> {
    check_same(audio, &ann.audio)?;
    check_same(visual, &ann.visual)?;
    let pred_av = audio.and(visual);
    let gt_av = ann.audio.and(&ann.visual);

    let seg = LevelScores::from_counts(
        segment_counts(audio, &ann.audio)?,
        segment_counts(visual, &ann.visual)?,
        segment_counts(&pred_av, &gt_av)?,
    );
    let ev = |p: &BinaryGrid, g: &BinaryGrid, s: Stream| event_counts(&extract_events(p, s), &extract_events(g, s), iou);
    let event = LevelScores::from_counts(
        ev(audio, &ann.audio, Stream::A),
        ev(visual, &ann.visual, Stream::V),
        ev(&pred_av, &gt_av, Stream::AV),
    );
    Ok((seg, event))
}

/// Scores every annotated video. Predictions and annotations must cover the same ids.
pub fn evaluate(preds: &[VideoPrediction], truth: &[(&str, &Annotations)], protocol: &Protocol) -> Result<MetricReport> {
    protocol.validate()?;
    let by_id: BTreeMap<&str, &VideoPrediction> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let truth_ids: BTreeSet<&str> = truth.iter().map(|(id, _)| *id).collect();
    if by_id.len() != preds.len() || truth_ids.len() != truth.len() {
        return Err(Error::Validation("duplicate video ids".into()));
    }
    if let Some(extra) = by_id.keys().find(|id| !truth_ids.contains(*id)) {
        return Err(Error::Validation(format!("prediction for unknown video `{extra}`")));
    }
    if let Some(missing) = truth_ids.iter().find(|id| !by_id.contains_key(*id)) {
        return Err(Error::Validation(format!("no prediction for video `{missing}`")));
    }
    if truth.is_empty() {
        return Err(Error::Validation("nothing to evaluate".into()));
    }

    let per_video = truth
        .par_iter()
        .map(|(id, ann)| {
            let p = by_id[id];
            score_video(&p.audio, &p.visual, ann, protocol.iou)
                .map_err(|e| Error::Validation(format!("video `{id}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_video.len() as f64;
    let mut report = MetricReport::default();
    for (seg, ev) in &per_video {
        for (acc, s) in [(&mut report.segment, seg), (&mut report.event, ev)] {
            acc.a += s.a;
            acc.v += s.v;
            acc.av += s.av;
            acc.type_av += s.type_av;
            acc.event_av += s.event_av;
        }
    }
    for acc in [&mut report.segment, &mut report.event] {
        acc.a /= n;
        acc.v /= n;
        acc.av /= n;
        acc.type_av /= n;
        acc.event_av /= n;
    }
    report.avg = report.ten().iter().sum::<f64>() / 10.0;
    Ok(report)
}
