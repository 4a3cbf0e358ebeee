use std::collections::BTreeMap;

use crate::data::{generate, SynthConfig};
use crate::error::Result;
use crate::losses::{self, LossConfig};
use crate::model::{self, BoundParams, ModelConfig, ModelParams};
use crate::tensor::{grad_check, GradCheckReport, Tensor};

/// Result of [`grad_check_model`], with the worst entry resolved to a parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradCheck {
    pub report: GradCheckReport,
    pub worst_param: Option<String>,
    pub parameters: Vec<String>,
}

/// Compares reverse-mode gradients of the total loss against central
/// differences over every parameter of a seeded model on one synthetic video.
pub fn grad_check_model(
    cfg: &ModelConfig,
    loss: &LossConfig,
    segments: usize,
    seed: u64,
    step: f64,
) -> Result<ModelGradCheck> {
    cfg.validate()?;
    let data = generate(&SynthConfig {
        num_videos: 1,
        segments,
        classes: cfg.num_classes,
        audio_dim: cfg.audio_dim,
        visual_dim: cfg.visual_dim,
        events_per_video: (1, cfg.num_classes.min(3)),
        seed,
        ..SynthConfig::default()
    })?;
    let sample = &data.videos[0];
    let params = ModelParams::init(cfg, seed)?;
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let leaves: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();

    let report = grad_check(
        |graph, vars| {
            let bound = BoundParams::from_vars(names.iter().cloned().zip(vars.iter().copied()).collect::<BTreeMap<_, _>>());
            let raw = [graph.constant(sample.raw_a.clone()), graph.constant(sample.raw_v.clone())];
            let trace = model::forward_raw(graph, &bound, cfg, raw)?;
            let terms = losses::compute(graph, &bound, &trace, &sample.ann, cfg, loss)?;
            Ok(terms.total)
        },
        &leaves,
        step,
    )?;
    Ok(ModelGradCheck {
        worst_param: report.worst.map(|(li, _)| names[li].clone()),
        report,
        parameters: names,
    })
}
