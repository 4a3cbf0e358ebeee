//! Shared fixtures for the benchmarks.

use mmcse::data::generate;
use mmcse::metrics::VideoPrediction;
use mmcse::{Annotations, BinaryGrid, Dataset, ModelConfig, ModelParams, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A model sized like the defaults or like the grad-check fixture.
#[derive(Debug, Clone, Copy)]
pub enum Size {
    Tiny,
    Default,
}

impl Size {
    pub fn name(self) -> &'static str {
        match self {
            Size::Tiny => "tiny",
            Size::Default => "default",
        }
    }
}

/// One seeded model plus a matching dataset of `videos` videos.
pub fn model_fixture(size: Size, videos: usize) -> (ModelParams, Dataset) {
    let (t, k, da, dv, d1, d2, layers) = match size {
        Size::Tiny => (3, 4, 5, 7, 8, 6, 2),
        Size::Default => (10, 6, 32, 32, 256, 128, 4),
    };
    let data = generate(&SynthConfig {
        num_videos: videos,
        segments: t,
        classes: k,
        audio_dim: da,
        visual_dim: dv,
        events_per_video: (1, k.min(3)),
        seed: 1,
        ..SynthConfig::default()
    })
    .expect("fixture config is valid");
    let cfg = ModelConfig {
        d1,
        d2,
        layers,
        ..ModelConfig::new(k, da, dv)
    };
    (ModelParams::init(&cfg, 1).expect("fixture config is valid"), data)
}

fn grid(rng: &mut ChaCha8Rng, t: usize, k: usize) -> BinaryGrid {
    BinaryGrid::from_fn(t, k, |_, _| rng.random_bool(0.3))
}

/// Random predictions and annotations for `videos` videos of `t` segments and `k` classes.
pub fn metric_fixture(videos: usize, t: usize, k: usize) -> (Vec<VideoPrediction>, Vec<(String, Annotations)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut preds = Vec::with_capacity(videos);
    let mut truth = Vec::with_capacity(videos);
    for i in 0..videos {
        let id = format!("v{i}");
        preds.push(VideoPrediction {
            id: id.clone(),
            audio: grid(&mut rng, t, k),
            visual: grid(&mut rng, t, k),
        });
        let ann = Annotations::from_segments(grid(&mut rng, t, k), grid(&mut rng, t, k));
        truth.push((id, ann));
    }
    (preds, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        for size in [Size::Tiny, Size::Default] {
            let (params, data) = model_fixture(size, 2);
            mmcse::train::check_compatible(&params.config, &data.manifest).unwrap();
        }
        let (preds, truth) = metric_fixture(3, 4, 5);
        assert_eq!(preds.len(), truth.len());
        assert!(preds.iter().zip(&truth).all(|(p, (id, _))| &p.id == id));
    }
}
