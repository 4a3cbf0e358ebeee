// Event parser and multi-modal multi-instance pooling.

use super::{linear, BoundParams, Modality, ModelConfig, MmilMode};
use crate::error::Result;
use crate::tensor::{Graph, Var};

/// Bounds for the factorized pooling output, which is not a convex combination.
const FACTORIZED_CLAMP: f64 = 1e-7;

/// Linear score `[T, K, d2] -> [T, K]` with a probe shared by every class.
fn score(graph: &mut Graph, params: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let w = params.get(&format!("{prefix}.w"))?;
    let b = params.get(&format!("{prefix}.b"))?;
    let s = linear(graph, x, w, b)?;
    let shape = graph.shape(s)[..2].to_vec();
    graph.reshape(s, shape)
}

/// Segment probabilities `p^m[t,k] = sigmoid(X[t,k,:] w^m + b^m)`.
pub fn parse_events(graph: &mut Graph, params: &BoundParams, m: Modality, x: Var) -> Result<Var> {
    let logits = score(graph, params, &format!("parser.{}", m.tag()), x)?;
    graph.sigmoid(logits)
}

/// Attentive pooling of segment probabilities into a `[1, K]` video prediction.
pub fn mmil_pool(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    enhanced: [Var; 2],
    probs: [Var; 2],
) -> Result<Var> {
    let k = graph.shape(probs[0])[1];
    let sa = score(graph, params, "mmil.a", enhanced[0])?;
    let sv = score(graph, params, "mmil.v", enhanced[1])?;
    let pooled = match cfg.mmil {
        MmilMode::Joint => {
            // Softmax per class over all 2T (segment, modality) slots.
            let scores = graph.concat(&[sa, sv], 0)?;
            let scores_kt = graph.transpose_last2(scores)?;
            let weights = graph.softmax_last(scores_kt)?;
            let p = graph.concat(&probs, 0)?;
            let p_kt = graph.transpose_last2(p)?;
            let weighted = graph.mul(weights, p_kt)?;
            graph.sum_axis(weighted, 1)?
        }
        MmilMode::Factorized => {
            let t = graph.shape(probs[0])[0];
            let ma = score(graph, params, "mmil_av.a", enhanced[0])?;
            let mv = score(graph, params, "mmil_av.v", enhanced[1])?;
            let mut total = None;
            let av_logits = {
                let a3 = graph.reshape(ma, vec![t, k, 1])?;
                let v3 = graph.reshape(mv, vec![t, k, 1])?;
                graph.concat(&[a3, v3], 2)?
            };
            let av_att = graph.softmax_last(av_logits)?;
            for (i, (s, p)) in [(sa, probs[0]), (sv, probs[1])].into_iter().enumerate() {
                let s_kt = graph.transpose_last2(s)?;
                let temporal = graph.softmax_last(s_kt)?;
                let temporal_tk = graph.transpose_last2(temporal)?;
                let av_m = graph.narrow(av_att, 2, i, 1)?;
                let av_m = graph.reshape(av_m, vec![t, k])?;
                let w = graph.mul(temporal_tk, av_m)?;
                let wp = graph.mul(w, p)?;
                let summed = graph.sum_axis(wp, 0)?;
                total = Some(match total {
                    None => summed,
                    Some(acc) => graph.add(acc, summed)?,
                });
            }
            let total = total.expect("two modalities");
            graph.clamp(total, FACTORIZED_CLAMP, 1.0 - FACTORIZED_CLAMP)?
        }
    };
    graph.reshape(pooled, vec![1, k])
}
