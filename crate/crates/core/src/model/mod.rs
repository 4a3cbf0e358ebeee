//! The parsing network: input encoders, class-aware decoupling, stacked
//! semantic-enhancement layers and the event parser with MMIL pooling.

mod cafd;
mod fgse;
mod heads;
mod params;

pub use cafd::{decouple, encode_inputs, fuse_background, CafdOutput};
pub use fgse::{fgse_layer, lgsf, secm, stack_forward, Branch, CoocMap, LayerTrace, Pair, SecmWeights};
pub use heads::{mmil_pool, parse_events};
pub use params::{BoundParams, ModelParams};

use serde::{Deserialize, Serialize};

use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Which stream a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Audio,
    Visual,
}

impl Modality {
    pub const BOTH: [Modality; 2] = [Modality::Audio, Modality::Visual];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Audio => "a",
            Modality::Visual => "v",
        }
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::Audio => Modality::Visual,
            Modality::Visual => Modality::Audio,
        }
    }
}

/// Residual source used by local-global fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LgsfResidual {
    /// `X = H + gamma * G`, the enriched class-wise input.
    #[default]
    Hhat,
    /// `X = Z + gamma * G`, the co-occurrence-enhanced feature.
    Z,
}

/// Video-level pooling variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmilMode {
    /// One softmax over all `2T` (segment, modality) slots per class.
    #[default]
    Joint,
    /// Temporal softmax times modality softmax, clamped into (0, 1).
    Factorized,
}

/// Component switches used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub no_cafd: bool,
    pub no_bg: bool,
    pub no_secm: bool,
    pub no_lgsf: bool,
    pub no_intra: bool,
    pub no_cross: bool,
}

impl Ablation {
    /// Sets a switch from its command-line name.
    pub fn enable(&mut self, name: &str) -> Result<()> {
        let flag = match name {
            "no-cafd" => &mut self.no_cafd,
            "no-bg" => &mut self.no_bg,
            "no-secm" => &mut self.no_secm,
            "no-lgsf" => &mut self.no_lgsf,
            "no-intra" => &mut self.no_intra,
            "no-cross" => &mut self.no_cross,
            other => return Err(Error::Config(format!("unknown ablation `{other}`"))),
        };
        *flag = true;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.no_intra && self.no_cross {
            return Err(Error::Config(
                "no-intra and no-cross together leave an empty FGSE layer".into(),
            ));
        }
        if self.no_cafd && self.no_bg {
            return Err(Error::Config(
                "no-cafd already removes the background branch; drop no-bg".into(),
            ));
        }
        Ok(())
    }

    /// Whether decoupled features (and hence the decoder) exist.
    pub fn has_decoupling(&self) -> bool {
        !self.no_cafd
    }
}

/// Network hyperparameters. Everything a checkpoint needs to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub d1: usize,
    pub d2: usize,
    pub layers: usize,
    pub secm_projections: bool,
    pub lgsf_residual: LgsfResidual,
    pub mmil: MmilMode,
    pub ablation: Ablation,
}

impl ModelConfig {
    /// Default widths (d1 = 256, d2 = 128, four layers) for the given data dims.
    pub fn new(num_classes: usize, audio_dim: usize, visual_dim: usize) -> Self {
        ModelConfig {
            num_classes,
            audio_dim,
            visual_dim,
            d1: 256,
            d2: 128,
            layers: 4,
            secm_projections: true,
            lgsf_residual: LgsfResidual::Hhat,
            mmil: MmilMode::Joint,
            ablation: Ablation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_classes", self.num_classes),
            ("audio_dim", self.audio_dim),
            ("visual_dim", self.visual_dim),
            ("d1", self.d1),
            ("d2", self.d2),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.ablation.validate()
    }

    pub fn input_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Audio => self.audio_dim,
            Modality::Visual => self.visual_dim,
        }
    }
}

/// Graph handles for every activation of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Holistic features `F^m`, `[T, d1]`, indexed audio then visual.
    pub holistic: [Var; 2],
    /// Decoupled features `[T, K+1, d2]`; the background slot is zero under `no-bg`.
    pub decoupled: Option<[Var; 2]>,
    /// Event view `[T, K, d2]` of the decoupled features.
    pub events: Option<[Var; 2]>,
    /// Background view `[T, 1, d2]`, absent under `no-bg` and `no-cafd`.
    pub background: Option<[Var; 2]>,
    /// Background gate `[T, 1]`.
    pub alpha: Option<[Var; 2]>,
    /// Enriched class-wise features `[T, K, d2]`.
    pub class_wise: [Var; 2],
    pub layers: Vec<LayerTrace>,
    /// Final enhanced features `[T, K, d2]`.
    pub enhanced: [Var; 2],
    /// Segment probabilities `[T, K]`.
    pub segment_probs: [Var; 2],
    /// Video probabilities `[1, K]`.
    pub video_probs: Var,
}

impl ForwardTrace {
    pub fn cooc_maps(&self) -> impl Iterator<Item = &CoocMap> {
        self.layers.iter().flat_map(|l| l.cooc.iter())
    }
}

fn idx(m: Modality) -> usize {
    match m {
        Modality::Audio => 0,
        Modality::Visual => 1,
    }
}

/// Runs the full network on one video.
pub fn forward(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    sample: &VideoSample,
) -> Result<ForwardTrace> {
    let raw_a = graph.constant(sample.raw_a.clone());
    let raw_v = graph.constant(sample.raw_v.clone());
    forward_raw(graph, params, cfg, [raw_a, raw_v])
}

/// [`forward`] on raw feature handles already on the graph.
pub fn forward_raw(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    raw: [Var; 2],
) -> Result<ForwardTrace> {
    let holistic = encode_inputs(graph, params, cfg, raw)?;
    let cafd = Modality::BOTH.map(|m| cafd::cafd(graph, params, cfg, m, holistic[idx(m)]));
    let [ca, cv] = cafd;
    let (ca, cv) = (ca?, cv?);

    let (enhanced, layers) = stack_forward(graph, params, cfg, [ca.class_wise, cv.class_wise])?;
    let segment_probs = [
        parse_events(graph, params, Modality::Audio, enhanced[0])?,
        parse_events(graph, params, Modality::Visual, enhanced[1])?,
    ];
    let video_probs = mmil_pool(graph, params, cfg, enhanced, segment_probs)?;

    let pair = |a: Option<Var>, b: Option<Var>| a.zip(b).map(|(x, y)| [x, y]);
    Ok(ForwardTrace {
        holistic,
        decoupled: pair(ca.decoupled, cv.decoupled),
        events: pair(ca.events, cv.events),
        background: pair(ca.background, cv.background),
        alpha: pair(ca.alpha, cv.alpha),
        class_wise: [ca.class_wise, cv.class_wise],
        layers,
        enhanced,
        segment_probs,
        video_probs,
    })
}

/// Affine map over the last axis: `x w + b`.
pub(crate) fn linear(graph: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = graph.matmul(x, w)?;
    let leading = graph.shape(y)[..graph.shape(y).len() - 1].to_vec();
    let bias = graph.expand_leading(b, &leading)?;
    graph.add(y, bias)
}
