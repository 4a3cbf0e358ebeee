//! Seeded mini-batch training, per-epoch checkpoints and evaluation.

mod adamw;
mod checkpoint;
mod gradcheck;

pub use adamw::{adamw_step, AdamW, OptimState};
pub use gradcheck::{grad_check_model, ModelGradCheck};
pub use checkpoint::{load_checkpoint, resolve_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Manifest, VideoSample};
use crate::error::{Error, Result};
use crate::losses::{self, LossConfig, LossToggles, LossValues, OrtMode};
use crate::metrics::{evaluate, MetricReport, Protocol, VideoPrediction};
use crate::model::{self, Ablation, LgsfResidual, MmilMode, ModelConfig, ModelParams};
use crate::tensor::{Graph, Tensor};

pub const LOG_FILE: &str = "log.jsonl";

/// Training hyperparameters. Model widths live here; data widths come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub layers: usize,
    pub d1: usize,
    pub d2: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub losses: LossToggles,
    pub ort: OrtMode,
    pub secm_projections: bool,
    pub lgsf_residual: LgsfResidual,
    pub mmil: MmilMode,
    /// Run the samples of a batch on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamW::default();
        TrainConfig {
            epochs: 60,
            batch_size: 64,
            learning_rate: opt.lr,
            weight_decay: opt.weight_decay,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            lambda1: 0.1,
            lambda2: 0.1,
            layers: 4,
            d1: 256,
            d2: 128,
            seed: 0,
            ablation: Ablation::default(),
            losses: LossToggles::ALL,
            ort: OrtMode::Signed,
            secm_projections: true,
            lgsf_residual: LgsfResidual::Hhat,
            mmil: MmilMode::Joint,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        self.optimizer().validate()?;
        self.ablation.validate()
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            toggles: self.losses,
            ort: self.ort,
        }
    }

    pub fn model_config(&self, data: &Manifest) -> ModelConfig {
        ModelConfig {
            num_classes: data.classes,
            audio_dim: data.audio_dim,
            visual_dim: data.visual_dim,
            d1: self.d1,
            d2: self.d2,
            layers: self.layers,
            secm_projections: self.secm_projections,
            lgsf_residual: self.lgsf_residual,
            mmil: self.mmil,
            ablation: self.ablation,
        }
    }
}

/// One optimizer step: batch-mean loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub basic: f64,
    pub rec: f64,
    pub ort: f64,
    pub ec: f64,
    pub total: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<StepRecord>,
    /// Checkpoint of the last epoch, when an output directory was given.
    pub last_checkpoint: Option<PathBuf>,
}

/// Loss components and parameter gradients of one video.
pub fn sample_gradients(
    params: &ModelParams,
    sample: &VideoSample,
    loss: &LossConfig,
) -> Result<(LossValues, BTreeMap<String, Tensor>)> {
    let mut graph = Graph::new();
    let bound = params.bind(&mut graph);
    let trace = model::forward(&mut graph, &bound, &params.config, sample)?;
    let terms = losses::compute(&mut graph, &bound, &trace, &sample.ann, &params.config, loss)?;
    let grads = graph.backward(terms.total)?;
    let named = bound
        .iter()
        .map(|(name, v)| {
            let g = grads.get(v).cloned().expect("parameters always receive a gradient");
            (name.to_string(), g)
        })
        .collect();
    Ok((terms.values(&graph), named))
}

/// Loss components of one video without recording gradients.
pub fn sample_losses(params: &ModelParams, sample: &VideoSample, loss: &LossConfig) -> Result<LossValues> {
    let mut graph = Graph::new();
    let bound = params.bind_frozen(&mut graph);
    let trace = model::forward(&mut graph, &bound, &params.config, sample)?;
    let terms = losses::compute(&mut graph, &bound, &trace, &sample.ann, &params.config, loss)?;
    Ok(terms.values(&graph))
}

fn batch_gradients(
    params: &ModelParams,
    batch: &[&VideoSample],
    loss: &LossConfig,
    parallel: bool,
) -> Result<(LossValues, BTreeMap<String, Tensor>)> {
    let run = |s: &&VideoSample| {
        sample_gradients(params, s, loss).map_err(|e| match e {
            Error::NonFinite { .. } | Error::NonFiniteGradient(_) => e,
            other => Error::Validation(format!("video `{}`: {other}", s.id)),
        })
    };
    let results: Vec<_> = if parallel {
        batch.par_iter().map(run).collect::<Result<_>>()?
    } else {
        batch.iter().map(run).collect::<Result<_>>()?
    };

    let n = results.len() as f64;
    let mut mean = LossValues::default();
    let mut sum: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (values, grads) in &results {
        mean.basic += values.basic;
        mean.rec += values.rec;
        mean.ort += values.ort;
        mean.ec += values.ec;
        mean.total += values.total;
        for (name, g) in grads {
            let acc = sum.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
            for (a, &x) in acc.iter_mut().zip(g.data()) {
                *a += x;
            }
        }
    }
    mean.basic /= n;
    mean.rec /= n;
    mean.ort /= n;
    mean.ec /= n;
    mean.total /= n;
    let grads = sum
        .into_iter()
        .map(|(name, data)| {
            let shape = params.get(&name).expect("gradient of a known parameter").shape().to_vec();
            (name, Tensor::from_parts(shape, data.into_iter().map(|x| x / n).collect()))
        })
        .collect();
    Ok((mean, grads))
}

/// Trains from a fresh seeded initialization. With `out`, writes `log.jsonl`
/// and one `epoch-NNNN` checkpoint per epoch.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let model_cfg = cfg.model_config(&dataset.manifest);
    let params = ModelParams::init(&model_cfg, cfg.seed)?;
    train_from(params, dataset, cfg, out)
}

/// Trains starting from the given parameters.
pub fn train_from(mut params: ModelParams, dataset: &Dataset, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(&params.config, &dataset.manifest)?;
    let loss = cfg.loss_config();
    let opt = cfg.optimizer();
    let batch_size = cfg.batch_size.min(dataset.len());

    let mut log_writer = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(LOG_FILE);
            Some((BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?), path))
        }
        None => None,
    };

    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(1);
    let mut state = OptimState::default();
    let mut log = Vec::new();
    let mut last_checkpoint = None;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&VideoSample> = chunk.iter().map(|&i| &dataset.videos[i]).collect();
            let (values, grads) = batch_gradients(&params, &batch, &loss, cfg.parallel)?;
            adamw_step(&mut params, &grads, &mut state, &opt)?;
            let record = StepRecord {
                epoch,
                step: state.step as usize,
                basic: values.basic,
                rec: values.rec,
                ort: values.ort,
                ec: values.ec,
                total: values.total,
            };
            if let Some((w, path)) = log_writer.as_mut() {
                let line = serde_json::to_string(&record).map_err(|e| Error::json(&*path, e))?;
                writeln!(w, "{line}").map_err(|e| Error::io(&*path, e))?;
            }
            log.push(record);
        }
        if let Some(dir) = out {
            let ckpt = dir.join(format!("epoch-{epoch:04}"));
            save_checkpoint(&ckpt, &params, Some(cfg), epoch, state.step as usize)?;
            last_checkpoint = Some(ckpt);
        }
    }
    if let Some((mut w, path)) = log_writer {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome {
        params,
        log,
        last_checkpoint,
    })
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

/// Checks that a model fits a dataset's class count and feature widths.
pub fn check_compatible(model: &ModelConfig, data: &Manifest) -> Result<()> {
    let pairs = [
        ("classes", model.num_classes, data.classes),
        ("audio_dim", model.audio_dim, data.audio_dim),
        ("visual_dim", model.visual_dim, data.visual_dim),
    ];
    for (name, m, d) in pairs {
        if m != d {
            return Err(Error::Validation(format!("model has {name} = {m} but the dataset has {d}")));
        }
    }
    Ok(())
}

/// Segment probabilities `[T, K]` for audio and visual.
pub fn predict(params: &ModelParams, sample: &VideoSample) -> Result<[Tensor; 2]> {
    let mut graph = Graph::new();
    let bound = params.bind_frozen(&mut graph);
    let trace = model::forward(&mut graph, &bound, &params.config, sample)?;
    Ok(trace.segment_probs.map(|v| graph.value(v).clone()))
}

/// Thresholded predictions for every video, then [`evaluate`].
pub fn evaluate_checkpoint(params: &ModelParams, dataset: &Dataset, protocol: &Protocol) -> Result<MetricReport> {
    protocol.validate()?;
    check_compatible(&params.config, &dataset.manifest)?;
    let preds = dataset
        .videos
        .par_iter()
        .map(|v| {
            let [a, vis] = predict(params, v)?;
            VideoPrediction::from_probs(v.id.clone(), &a, &vis, protocol.threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<(&str, &crate::data::Annotations)> = dataset.videos.iter().map(|v| (v.id.as_str(), &v.ann)).collect();
    evaluate(&preds, &truth, protocol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthConfig};

    fn tiny_data(n: usize) -> Dataset {
        generate(&SynthConfig {
            num_videos: n,
            segments: 4,
            classes: 3,
            audio_dim: 6,
            visual_dim: 5,
            seed: 2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 3,
            d1: 6,
            d2: 4,
            layers: 1,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn parallel_batches_match_sequential_bitwise() {
        let data = tiny_data(5);
        let seq = train(&data, &tiny_cfg(), None).unwrap();
        let par = train(&data, &TrainConfig { parallel: true, ..tiny_cfg() }, None).unwrap();
        assert_eq!(seq.log, par.log);
        for (name, t) in seq.params.iter() {
            assert!(par.params.get(name).unwrap().bit_eq(t));
        }
        // 5 videos at batch 3: two steps per epoch, the last one partial.
        assert_eq!(seq.log.len(), 4);
    }

    #[test]
    fn batch_size_is_clamped_to_dataset() {
        let data = tiny_data(2);
        let out = train(&data, &TrainConfig { batch_size: 64, ..tiny_cfg() }, None).unwrap();
        assert_eq!(out.log.len(), 2);
    }

    #[test]
    fn log_and_checkpoints_on_disk() {
        let data = tiny_data(3);
        let dir = tempfile::tempdir().unwrap();
        let out = train(&data, &tiny_cfg(), Some(dir.path())).unwrap();
        assert_eq!(read_log(dir.path().join(LOG_FILE)).unwrap(), out.log);
        assert!(dir.path().join("epoch-0001").join("manifest.json").is_file());
        let (params, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest.epoch, 2);
        assert_eq!(manifest.train.as_ref(), Some(&tiny_cfg()));
        assert_eq!(params, out.params);
    }

    #[test]
    fn incompatible_checkpoint_is_rejected() {
        let data = tiny_data(2);
        let mut cfg = tiny_cfg().model_config(&data.manifest);
        cfg.num_classes = 4;
        let params = ModelParams::init(&cfg, 0).unwrap();
        let err = evaluate_checkpoint(&params, &data, &Protocol::default()).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Validation);
    }

    #[test]
    fn zero_parser_predicts_all_positive() {
        let data = tiny_data(3);
        let mut params = ModelParams::init(&tiny_cfg().model_config(&data.manifest), 1).unwrap();
        for m in ["a", "v"] {
            for part in ["w", "b"] {
                let name = format!("parser.{m}.{part}");
                let zeros = Tensor::zeros_like(params.get(&name).unwrap());
                params.set(&name, zeros).unwrap();
            }
        }
        let report = evaluate_checkpoint(&params, &data, &Protocol::default()).unwrap();
        let preds: Vec<VideoPrediction> = data
            .videos
            .iter()
            .map(|v| {
                let ones = crate::data::BinaryGrid::from_fn(4, 3, |_, _| true);
                VideoPrediction {
                    id: v.id.clone(),
                    audio: ones.clone(),
                    visual: ones,
                }
            })
            .collect();
        let truth: Vec<_> = data.videos.iter().map(|v| (v.id.as_str(), &v.ann)).collect();
        assert_eq!(report, evaluate(&preds, &truth, &Protocol::default()).unwrap());
    }
}
