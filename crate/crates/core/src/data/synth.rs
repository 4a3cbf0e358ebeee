// Synthetic corpora built from per-class feature prototypes.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Annotations, BinaryGrid, Dataset, Manifest, VideoSample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative odds of an event being audio-only, visual-only or in both streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Presence {
    pub audio_only: f64,
    pub visual_only: f64,
    pub both: f64,
}

impl Default for Presence {
    fn default() -> Self {
        Presence {
            audio_only: 0.3,
            visual_only: 0.3,
            both: 0.4,
        }
    }
}

/// Whenever class `first` is active in a segment, class `second` is switched on
/// in both streams of that segment with probability `prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoocBoost {
    pub first: usize,
    pub second: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub segments: usize,
    pub classes: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    /// Inclusive range of distinct event classes per video.
    pub events_per_video: (usize, usize),
    /// Inclusive range of event durations in segments, capped at `segments`.
    pub event_length: (usize, usize),
    pub presence: Presence,
    /// Chance that a segment is cleared to background only.
    pub background_prob: f64,
    pub cooc: Vec<CoocBoost>,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 64,
            segments: 10,
            classes: 6,
            audio_dim: 32,
            visual_dim: 32,
            events_per_video: (1, 3),
            event_length: (1, 10),
            presence: Presence::default(),
            background_prob: 0.0,
            cooc: Vec::new(),
            noise: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [
            ("num_videos", self.num_videos),
            ("segments", self.segments),
            ("classes", self.classes),
            ("audio_dim", self.audio_dim),
            ("visual_dim", self.visual_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        let (lo, hi) = self.events_per_video;
        if lo > hi {
            return bad(format!("events_per_video range {lo}..={hi} is empty"));
        }
        if hi > self.classes {
            return bad(format!(
                "events_per_video up to {hi} exceeds the {} classes",
                self.classes
            ));
        }
        let (lo, hi) = self.event_length;
        if lo == 0 || lo > hi {
            return bad(format!("event_length range {lo}..={hi} is invalid"));
        }
        if lo > self.segments {
            return bad(format!(
                "minimum event length {lo} exceeds {} segments",
                self.segments
            ));
        }
        let p = self.presence;
        for (name, v) in [
            ("presence.audio_only", p.audio_only),
            ("presence.visual_only", p.visual_only),
            ("presence.both", p.both),
            ("background_prob", self.background_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is not a probability"));
            }
        }
        if ((p.audio_only + p.visual_only + p.both) - 1.0).abs() > 1e-9 {
            return bad("presence probabilities must sum to 1".into());
        }
        if !self.cooc.is_empty() && self.classes < 2 {
            return bad("co-occurrence pairs need at least two classes".into());
        }
        for c in &self.cooc {
            if c.first >= self.classes || c.second >= self.classes {
                return bad(format!(
                    "co-occurrence pair {}:{} out of range for {} classes",
                    c.first, c.second, self.classes
                ));
            }
            if c.first == c.second {
                return bad(format!("co-occurrence pair {}:{} is a self-pair", c.first, c.second));
            }
            if !(0.0..=1.0).contains(&c.prob) {
                return bad(format!("co-occurrence probability {} is not a probability", c.prob));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} must be finite and non-negative", self.noise));
        }
        Ok(())
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

struct Prototypes {
    classes: Vec<Vec<f64>>,
    background: Vec<f64>,
}

impl Prototypes {
    fn sample(rng: &mut ChaCha8Rng, classes: usize, dim: usize) -> Self {
        Prototypes {
            classes: (0..classes).map(|_| unit_gaussian(rng, dim)).collect(),
            background: unit_gaussian(rng, dim),
        }
    }

    /// `normalize(sum of active prototypes + background + noise * N(0, I))`.
    fn render(&self, rng: &mut ChaCha8Rng, labels: &BinaryGrid, noise: f64) -> Result<Tensor> {
        let dim = self.background.len();
        let mut data = Vec::with_capacity(labels.rows() * dim);
        for t in 0..labels.rows() {
            let mut row = self.background.clone();
            for (k, proto) in self.classes.iter().enumerate() {
                if labels.get(t, k) {
                    row.iter_mut().zip(proto).for_each(|(r, p)| *r += p);
                }
            }
            for r in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *r += noise * z;
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|r| *r /= norm);
            }
            data.extend(row);
        }
        Tensor::new(vec![labels.rows(), dim], data)
    }
}

/// Generates a corpus; identical configs (seed included) give identical data.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (t_len, k) = (cfg.segments, cfg.classes);
    let audio_protos = Prototypes::sample(&mut rng, k, cfg.audio_dim);
    let visual_protos = Prototypes::sample(&mut rng, k, cfg.visual_dim);
    let max_len = cfg.event_length.1.min(t_len);

    let mut videos = Vec::with_capacity(cfg.num_videos);
    for vi in 0..cfg.num_videos {
        let mut audio = BinaryGrid::new(t_len, k);
        let mut visual = BinaryGrid::new(t_len, k);

        let n_events = rng.random_range(cfg.events_per_video.0..=cfg.events_per_video.1);
        let classes = sample(&mut rng, k, n_events).into_vec();
        for class in classes {
            let len = rng.random_range(cfg.event_length.0..=max_len);
            let start = rng.random_range(0..=t_len - len);
            let u: f64 = rng.random();
            let (in_a, in_v) = if u < cfg.presence.audio_only {
                (true, false)
            } else if u < cfg.presence.audio_only + cfg.presence.visual_only {
                (false, true)
            } else {
                (true, true)
            };
            for t in start..start + len {
                if in_a {
                    audio.set(t, class, true);
                }
                if in_v {
                    visual.set(t, class, true);
                }
            }
        }

        for t in 0..t_len {
            if rng.random::<f64>() < cfg.background_prob {
                for c in 0..k {
                    audio.set(t, c, false);
                    visual.set(t, c, false);
                }
            }
        }

        for boost in &cfg.cooc {
            for t in 0..t_len {
                let active = audio.get(t, boost.first) || visual.get(t, boost.first);
                if active && rng.random::<f64>() < boost.prob {
                    audio.set(t, boost.second, true);
                    visual.set(t, boost.second, true);
                }
            }
        }

        let raw_a = audio_protos.render(&mut rng, &audio, cfg.noise)?;
        let raw_v = visual_protos.render(&mut rng, &visual, cfg.noise)?;
        videos.push(VideoSample {
            id: format!("vid{vi:05}"),
            raw_a,
            raw_v,
            ann: Annotations::from_segments(audio, visual),
        });
    }

    let manifest = Manifest {
        segments: t_len,
        classes: k,
        audio_dim: cfg.audio_dim,
        visual_dim: cfg.visual_dim,
        class_names: (0..k).map(|c| format!("class{c:02}")).collect(),
        video_ids: videos.iter().map(|v| v.id.clone()).collect(),
    };
    Ok(Dataset { manifest, videos })
}
