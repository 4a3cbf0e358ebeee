// Input encoders and class-aware feature decoupling.

use super::params::head_name;
use super::{linear, BoundParams, Modality, ModelConfig};
use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

/// Per-modality result of the decoupling stage.
#[derive(Debug, Clone, Copy)]
pub struct CafdOutput {
    /// `[T, K+1, d2]`; background slot zero under `no-bg`, absent under `no-cafd`.
    pub decoupled: Option<Var>,
    pub events: Option<Var>,
    pub background: Option<Var>,
    pub alpha: Option<Var>,
    /// `[T, K, d2]`.
    pub class_wise: Var,
}

/// `F^m = ReLU(raw^m W^m + b^m)` for both modalities.
pub fn encode_inputs(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    raw: [Var; 2],
) -> Result<[Var; 2]> {
    let mut out = raw;
    for (m, slot) in Modality::BOTH.into_iter().zip(out.iter_mut()) {
        let shape = graph.shape(*slot).to_vec();
        if shape.len() != 2 || shape[1] != cfg.input_dim(m) {
            return Err(crate::error::Error::Shape {
                op: "encode_inputs",
                lhs: shape,
                rhs: vec![0, cfg.input_dim(m)],
            });
        }
        let t = m.tag();
        let w = params.get(&format!("enc.{t}.w"))?;
        let b = params.get(&format!("enc.{t}.b"))?;
        let pre = linear(graph, *slot, w, b)?;
        *slot = graph.relu(pre)?;
    }
    Ok(out)
}

/// Applies every decoupling head to `[T, d1]` holistic features.
///
/// Returns `[T, H, d2]` with the `K` event heads first and, unless the
/// background branch is ablated, the background head last. Heads are
/// independent linear maps without activation.
pub fn decouple(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    m: Modality,
    holistic: Var,
) -> Result<Var> {
    let mut names: Vec<String> = (0..cfg.num_classes).map(|k| head_name(m, k)).collect();
    if !cfg.ablation.no_bg {
        names.push(format!("cafd.{}.bg", m.tag()));
    }
    let mut ws = Vec::with_capacity(names.len());
    let mut bs = Vec::with_capacity(names.len());
    for n in &names {
        ws.push(params.get(&format!("{n}.w"))?);
        bs.push(params.get(&format!("{n}.b"))?);
    }
    // Stacking the heads column-wise evaluates them in one product.
    let w = graph.concat(&ws, 1)?;
    let b = graph.concat(&bs, 0)?;
    let flat = linear(graph, holistic, w, b)?;
    let t = graph.shape(holistic)[0];
    graph.reshape(flat, vec![t, names.len(), cfg.d2])
}

/// Blends the background slice into every event slice through the gate `alpha`.
///
/// `class_wise = ReLU([alpha * F_e ; (1 - alpha) * F_bg] W_h + b_h)` with the
/// background repeated over the `K` class slots. Returns `(class_wise, alpha)`.
pub fn fuse_background(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    m: Modality,
    decoupled: Var,
    holistic: Var,
) -> Result<(Var, Var)> {
    let (k, d2) = (cfg.num_classes, cfg.d2);
    let t = graph.shape(holistic)[0];
    let tag = m.tag();

    let events = graph.narrow(decoupled, 1, 0, k)?;
    let bg = graph.narrow(decoupled, 1, k, 1)?;

    let aw = params.get(&format!("cafd.{tag}.alpha.w"))?;
    let ab = params.get(&format!("cafd.{tag}.alpha.b"))?;
    let gate_pre = linear(graph, holistic, aw, ab)?;
    let alpha = graph.sigmoid(gate_pre)?;

    let a_flat = graph.reshape(alpha, vec![t])?;
    let a_k = graph.broadcast_axis(a_flat, 1, k)?;
    let a_full = graph.broadcast_axis(a_k, 2, d2)?;
    let weighted_events = graph.mul(a_full, events)?;

    let bg_flat = graph.reshape(bg, vec![t, d2])?;
    let bg_rep = graph.broadcast_axis(bg_flat, 1, k)?;
    let neg = graph.scale(a_full, -1.0)?;
    let one_minus = graph.add_scalar(neg, 1.0)?;
    let weighted_bg = graph.mul(one_minus, bg_rep)?;

    let cat = graph.concat(&[weighted_events, weighted_bg], 2)?;
    let class_wise = blend(graph, params, m, cat)?;
    Ok((class_wise, alpha))
}

fn blend(graph: &mut Graph, params: &BoundParams, m: Modality, cat: Var) -> Result<Var> {
    let tag = m.tag();
    let w = params.get(&format!("cafd.{tag}.blend.w"))?;
    let b = params.get(&format!("cafd.{tag}.blend.b"))?;
    let pre = linear(graph, cat, w, b)?;
    graph.relu(pre)
}

/// Decoupling stage for one modality, honoring the ablation switches.
pub(crate) fn cafd(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    m: Modality,
    holistic: Var,
) -> Result<CafdOutput> {
    let (k, d2) = (cfg.num_classes, cfg.d2);
    let t = graph.shape(holistic)[0];
    let tag = m.tag();

    if cfg.ablation.no_cafd {
        // One shared projection copied into every class slot.
        let w = params.get(&format!("cafd.{tag}.shared.w"))?;
        let b = params.get(&format!("cafd.{tag}.shared.b"))?;
        let shared = linear(graph, holistic, w, b)?;
        let class_wise = graph.broadcast_axis(shared, 1, k)?;
        return Ok(CafdOutput {
            decoupled: None,
            events: None,
            background: None,
            alpha: None,
            class_wise,
        });
    }

    let heads = decouple(graph, params, cfg, m, holistic)?;
    if cfg.ablation.no_bg {
        let zeros_k = graph.constant(Tensor::zeros(vec![t, k, d2]));
        let cat = graph.concat(&[heads, zeros_k], 2)?;
        let class_wise = blend(graph, params, m, cat)?;
        let zero_slot = graph.constant(Tensor::zeros(vec![t, 1, d2]));
        let decoupled = graph.concat(&[heads, zero_slot], 1)?;
        return Ok(CafdOutput {
            decoupled: Some(decoupled),
            events: Some(heads),
            background: None,
            alpha: None,
            class_wise,
        });
    }

    let (class_wise, alpha) = fuse_background(graph, params, cfg, m, heads, holistic)?;
    let events = graph.narrow(heads, 1, 0, k)?;
    let background = graph.narrow(heads, 1, k, 1)?;
    Ok(CafdOutput {
        decoupled: Some(heads),
        events: Some(events),
        background: Some(background),
        alpha: Some(alpha),
        class_wise,
    })
}
