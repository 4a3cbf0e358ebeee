//! Training objectives: classification, reconstruction, orthogonality and
//! event co-occurrence, combined as
//! `total = basic + rec + lambda1 * ort + lambda2 * ec`.

use serde::{Deserialize, Serialize};

use crate::data::Annotations;
use crate::error::{Error, Result};
use crate::model::{linear, BoundParams, CoocMap, ForwardTrace, Modality, ModelConfig};
use crate::tensor::{Graph, Tensor, Var, DEFAULT_NORM_EPS};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrtMode {
    /// Mean signed cosine between background and event features.
    #[default]
    Signed,
    /// Mean absolute cosine.
    Absolute,
}

/// Which loss components contribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossToggles {
    pub basic: bool,
    pub rec: bool,
    pub ort: bool,
    pub ec: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles::ALL
    }
}

impl LossToggles {
    pub const ALL: LossToggles = LossToggles {
        basic: true,
        rec: true,
        ort: true,
        ec: true,
    };

    /// Loss-ablation rows: 1 basic, 2 +rec, 3 +ort, 4 +rec+ort, 5 all.
    pub fn ablation_row(row: usize) -> Result<Self> {
        let (rec, ort, ec) = match row {
            1 => (false, false, false),
            2 => (true, false, false),
            3 => (false, true, false),
            4 => (true, true, false),
            5 => (true, true, true),
            _ => return Err(Error::Config(format!("no loss-ablation row {row}"))),
        };
        Ok(LossToggles {
            basic: true,
            rec,
            ort,
            ec,
        })
    }

    /// Parses a comma-separated list such as `basic,rec,ort,ec`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut t = LossToggles {
            basic: false,
            rec: false,
            ort: false,
            ec: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "basic" => t.basic = true,
                "rec" => t.rec = true,
                "ort" => t.ort = true,
                "ec" => t.ec = true,
                other => return Err(Error::Config(format!("unknown loss `{other}`"))),
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub toggles: LossToggles,
    pub ort: OrtMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 0.1,
            lambda2: 0.1,
            toggles: LossToggles::ALL,
            ort: OrtMode::Signed,
        }
    }
}

/// Graph handles of each component; disabled components are constant zeros.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub basic: Var,
    pub rec: Var,
    pub ort: Var,
    pub ec: Var,
    pub total: Var,
}

/// Scalar values of every component.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossValues {
    pub basic: f64,
    pub rec: f64,
    pub ort: f64,
    pub ec: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn values(&self, graph: &Graph) -> LossValues {
        let v = |x: Var| graph.value(x).data()[0];
        LossValues {
            basic: v(self.basic),
            rec: v(self.rec),
            ort: v(self.ort),
            ec: v(self.ec),
            total: v(self.total),
        }
    }
}

fn zero(graph: &mut Graph) -> Var {
    graph.constant(Tensor::scalar(0.0))
}

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn bce(graph: &mut Graph, p: Var, y: Var) -> Result<Var> {
    if graph.shape(p) != graph.shape(y) {
        return Err(Error::Shape {
            op: "bce",
            lhs: graph.shape(p).to_vec(),
            rhs: graph.shape(y).to_vec(),
        });
    }
    let pc = graph.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let log_p = graph.log(pc)?;
    let neg = graph.scale(pc, -1.0)?;
    let q = graph.add_scalar(neg, 1.0)?;
    let log_q = graph.log(q)?;
    let neg_y = graph.scale(y, -1.0)?;
    let one_minus_y = graph.add_scalar(neg_y, 1.0)?;
    let pos = graph.mul(y, log_p)?;
    let negs = graph.mul(one_minus_y, log_q)?;
    let ll = graph.add(pos, negs)?;
    let mean = graph.mean(ll)?;
    graph.scale(mean, -1.0)
}

/// `BCE(p^a, y^a) + BCE(p^v, y^v) + BCE(P, Y)`.
pub fn basic_loss(
    graph: &mut Graph,
    seg_probs: [Var; 2],
    video_probs: Var,
    ann: &Annotations,
) -> Result<Var> {
    let ya = graph.constant(ann.audio.to_tensor());
    let yv = graph.constant(ann.visual.to_tensor());
    let y = graph.constant(ann.video_tensor());
    let la = bce(graph, seg_probs[0], ya)?;
    let lv = bce(graph, seg_probs[1], yv)?;
    let lp = bce(graph, video_probs, y)?;
    let s = graph.add(la, lv)?;
    graph.add(s, lp)
}

fn mse(graph: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = graph.sub(a, b)?;
    let sq = graph.mul(d, d)?;
    graph.mean(sq)
}

/// Decoder: linear, ReLU, linear over the flattened `[T, (K+1) d2]` features.
pub fn decode(graph: &mut Graph, params: &BoundParams, m: Modality, decoupled: Var) -> Result<Var> {
    let shape = graph.shape(decoupled).to_vec();
    if shape.len() != 3 {
        return Err(Error::InvalidTensor(format!(
            "decoder input must be [T, K+1, d2], got {shape:?}"
        )));
    }
    let flat = graph.reshape(decoupled, vec![shape[0], shape[1] * shape[2]])?;
    let tag = m.tag();
    let (w1, b1) = (params.get(&format!("decoder.{tag}.l1.w"))?, params.get(&format!("decoder.{tag}.l1.b"))?);
    let (w2, b2) = (params.get(&format!("decoder.{tag}.l2.w"))?, params.get(&format!("decoder.{tag}.l2.b"))?);
    let h = linear(graph, flat, w1, b1)?;
    let h = graph.relu(h)?;
    linear(graph, h, w2, b2)
}

/// `sum_m MSE(Decoder(F~^m), F^m)`.
pub fn reconstruction_loss(
    graph: &mut Graph,
    params: &BoundParams,
    decoupled: [Var; 2],
    holistic: [Var; 2],
) -> Result<Var> {
    let mut total = None;
    for (i, m) in Modality::BOTH.into_iter().enumerate() {
        let rec = decode(graph, params, m, decoupled[i])?;
        let l = mse(graph, rec, holistic[i])?;
        total = Some(match total {
            None => l,
            Some(acc) => graph.add(acc, l)?,
        });
    }
    Ok(total.expect("two modalities"))
}

/// Cosine between the background slice `[T,1,d2]` and each event slice `[T,K,d2]`, as `[T, K]`.
pub fn background_cosines(graph: &mut Graph, background: Var, events: Var) -> Result<Var> {
    let (bs, es) = (graph.shape(background).to_vec(), graph.shape(events).to_vec());
    if bs.len() != 3 || es.len() != 3 || bs[0] != es[0] || bs[1] != 1 || bs[2] != es[2] {
        return Err(Error::Shape {
            op: "background_cosines",
            lhs: bs,
            rhs: es,
        });
    }
    let bg_flat = graph.reshape(background, vec![bs[0], bs[2]])?;
    let bg_rep = graph.broadcast_axis(bg_flat, 1, es[1])?;
    graph.cosine_last(bg_rep, events, DEFAULT_NORM_EPS)
}

/// `sum_m mean_{t,k} cos(F~_bg^m[t], F~_e^m[t,k])`, signed or absolute.
pub fn orthogonality_loss(
    graph: &mut Graph,
    background: [Var; 2],
    events: [Var; 2],
    mode: OrtMode,
) -> Result<Var> {
    let mut total = None;
    for i in 0..2 {
        let cos = background_cosines(graph, background[i], events[i])?;
        let cos = match mode {
            OrtMode::Signed => cos,
            OrtMode::Absolute => graph.abs(cos)?,
        };
        let l = graph.mean(cos)?;
        total = Some(match total {
            None => l,
            Some(acc) => graph.add(acc, l)?,
        });
    }
    Ok(total.expect("two modalities"))
}

/// `M[t,i,j] = y[t,i] * y'[t,j]` for binary `[T, K]` label tensors.
pub fn cooc_targets(labels: &Tensor, other: &Tensor) -> Result<Tensor> {
    if labels.rank() != 2 || labels.shape() != other.shape() {
        return Err(Error::Shape {
            op: "cooc_targets",
            lhs: labels.shape().to_vec(),
            rhs: other.shape().to_vec(),
        });
    }
    if labels.data().iter().chain(other.data()).any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Validation("co-occurrence targets need binary labels".into()));
    }
    let (t, k) = (labels.shape()[0], labels.shape()[1]);
    let mut out = Vec::with_capacity(t * k * k);
    for s in 0..t {
        let row = &labels.data()[s * k..(s + 1) * k];
        let orow = &other.data()[s * k..(s + 1) * k];
        for &a in row {
            out.extend(orow.iter().map(|&b| a * b));
        }
    }
    Tensor::new(vec![t, k, k], out)
}

/// Mean over all maps of `MSE(beta^{m,m'}, M^{m,m'})`. Zero when there are no maps.
pub fn ec_loss(graph: &mut Graph, maps: &[CoocMap], ann: &Annotations) -> Result<Var> {
    if maps.is_empty() {
        return Ok(zero(graph));
    }
    let labels = [ann.audio.to_tensor(), ann.visual.to_tensor()];
    let pick = |m: Modality| match m {
        Modality::Audio => &labels[0],
        Modality::Visual => &labels[1],
    };
    let mut total = None;
    for map in maps {
        let target = cooc_targets(pick(map.pair.query), pick(map.pair.key))?;
        let target = graph.constant(target);
        let l = mse(graph, map.beta, target)?;
        total = Some(match total {
            None => l,
            Some(acc) => graph.add(acc, l)?,
        });
    }
    graph.scale(total.expect("non-empty"), 1.0 / maps.len() as f64)
}

/// `basic + rec + lambda1 * ort + lambda2 * ec`.
pub fn total_loss(graph: &mut Graph, basic: Var, rec: Var, ort: Var, ec: Var, lambda1: f64, lambda2: f64) -> Result<Var> {
    let s = graph.add(basic, rec)?;
    let o = graph.scale(ort, lambda1)?;
    let s = graph.add(s, o)?;
    let e = graph.scale(ec, lambda2)?;
    graph.add(s, e)
}

/// Every enabled component for one forward pass.
pub fn compute(
    graph: &mut Graph,
    params: &BoundParams,
    trace: &ForwardTrace,
    ann: &Annotations,
    model: &ModelConfig,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let _ = model;
    let t = cfg.toggles;
    let basic = if t.basic {
        basic_loss(graph, trace.segment_probs, trace.video_probs, ann)?
    } else {
        zero(graph)
    };
    let rec = match (t.rec, trace.decoupled) {
        (true, Some(decoupled)) => reconstruction_loss(graph, params, decoupled, trace.holistic)?,
        _ => zero(graph),
    };
    let ort = match (t.ort, trace.background, trace.events) {
        (true, Some(bg), Some(ev)) => orthogonality_loss(graph, bg, ev, cfg.ort)?,
        _ => zero(graph),
    };
    let ec = if t.ec {
        let maps: Vec<CoocMap> = trace.cooc_maps().copied().collect();
        ec_loss(graph, &maps, ann)?
    } else {
        zero(graph)
    };
    let total = total_loss(graph, basic, rec, ort, ec, cfg.lambda1, cfg.lambda2)?;
    Ok(LossTerms {
        basic,
        rec,
        ort,
        ec,
        total,
    })
}
