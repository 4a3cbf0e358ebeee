// Fine-grained semantic enhancement: per-segment event co-occurrence
// attention (SECM) followed by local-global cosine fusion (LGSF).

use super::params::fgse_name;
use super::{BoundParams, LgsfResidual, Modality, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var, DEFAULT_NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Intra,
    Cross,
}

impl Branch {
    fn tag(self) -> &'static str {
        match self {
            Branch::Intra => "intra",
            Branch::Cross => "cross",
        }
    }
}

/// Ordered modality pair `(m, m')`: queries from `m`, keys and values from `m'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub query: Modality,
    pub key: Modality,
}

impl Pair {
    pub const AA: Pair = Pair {
        query: Modality::Audio,
        key: Modality::Audio,
    };
    pub const AV: Pair = Pair {
        query: Modality::Audio,
        key: Modality::Visual,
    };
    pub const VA: Pair = Pair {
        query: Modality::Visual,
        key: Modality::Audio,
    };
    pub const VV: Pair = Pair {
        query: Modality::Visual,
        key: Modality::Visual,
    };

    pub fn tag(self) -> String {
        format!("{}{}", self.query.tag(), self.key.tag())
    }
}

/// Co-occurrence attention `beta^{m,m'}` of one layer, `[T, K, K]`, row-stochastic.
#[derive(Debug, Clone, Copy)]
pub struct CoocMap {
    pub layer: usize,
    pub pair: Pair,
    pub beta: Var,
}

#[derive(Debug, Clone, Default)]
pub struct LayerTrace {
    pub cooc: Vec<CoocMap>,
    /// Cosine weights `gamma^{m,m'}`, `[T, K]`.
    pub gamma: Vec<(Pair, Var)>,
}

/// Optional query/key/value projections of one branch.
#[derive(Debug, Clone, Copy)]
pub struct SecmWeights {
    pub query: Var,
    pub key: Var,
    pub value: Var,
}

/// Per-segment attention among class slices.
///
/// `beta[t] = softmax(Q[t] K[t]^T / sqrt(d2))`, `Z[t] = H[t] + beta[t] V[t]`,
/// where `Q, K, V` are `H, H', H'` optionally projected.
pub fn secm(
    graph: &mut Graph,
    h: Var,
    h_other: Var,
    weights: Option<SecmWeights>,
) -> Result<(Var, Var)> {
    check_same(graph, "secm", h, h_other)?;
    let d2 = graph.shape(h)[2];
    let (q, k, v) = match weights {
        Some(w) => (
            graph.matmul(h, w.query)?,
            graph.matmul(h_other, w.key)?,
            graph.matmul(h_other, w.value)?,
        ),
        None => (h, h_other, h_other),
    };
    let kt = graph.transpose_last2(k)?;
    let logits = graph.bmm(q, kt)?;
    let scaled = graph.scale(logits, 1.0 / (d2 as f64).sqrt())?;
    let beta = graph.softmax_last(scaled)?;
    let agg = graph.bmm(beta, v)?;
    let z = graph.add(h, agg)?;
    Ok((z, beta))
}

/// Cosine-gated injection of the temporally pooled counterpart feature.
///
/// `G = mean_t H'`, `gamma[t,k] = cos(Z[t,k], G[k])`,
/// `X = R + gamma * G` with `R = H` (or `Z` under [`LgsfResidual::Z`]).
pub fn lgsf(
    graph: &mut Graph,
    z: Var,
    h: Var,
    h_other: Var,
    residual: LgsfResidual,
) -> Result<(Var, Var)> {
    check_same(graph, "lgsf", z, h)?;
    check_same(graph, "lgsf", h, h_other)?;
    let t = graph.shape(h)[0];
    let d2 = graph.shape(h)[2];
    let global = graph.mean_axis(h_other, 0)?;
    let g_t = graph.broadcast_axis(global, 0, t)?;
    let gamma = graph.cosine_last(z, g_t, DEFAULT_NORM_EPS)?;

    let gamma_full = graph.broadcast_axis(gamma, 2, d2)?;
    let inject = graph.mul(gamma_full, g_t)?;
    let base = match residual {
        LgsfResidual::Hhat => h,
        LgsfResidual::Z => z,
    };
    let x = graph.add(base, inject)?;
    Ok((x, gamma))
}

fn check_same(graph: &Graph, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (graph.shape(a), graph.shape(b));
    if sa.len() != 3 || sa != sb {
        return Err(Error::Shape {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        });
    }
    Ok(())
}

struct PhiOut {
    x: Var,
    beta: Option<Var>,
    gamma: Option<Var>,
}

/// One branch: SECM then LGSF, each skippable by ablation.
fn phi(
    graph: &mut Graph,
    cfg: &ModelConfig,
    h: Var,
    h_other: Var,
    weights: Option<SecmWeights>,
) -> Result<PhiOut> {
    let (z, beta) = if cfg.ablation.no_secm {
        (h, None)
    } else {
        let (z, beta) = secm(graph, h, h_other, weights)?;
        (z, Some(beta))
    };
    let (x, gamma) = if cfg.ablation.no_lgsf {
        (z, None)
    } else {
        let (x, gamma) = lgsf(graph, z, h, h_other, cfg.lgsf_residual)?;
        (x, Some(gamma))
    };
    Ok(PhiOut { x, beta, gamma })
}

fn branch_weights(
    params: &BoundParams,
    cfg: &ModelConfig,
    layer: usize,
    branch: Branch,
    m: Modality,
) -> Result<Option<SecmWeights>> {
    if !cfg.secm_projections || cfg.ablation.no_secm {
        return Ok(None);
    }
    let get = |which: &str| params.get(&fgse_name(layer, branch.tag(), m, which));
    Ok(Some(SecmWeights {
        query: get("wq")?,
        key: get("wk")?,
        value: get("wv")?,
    }))
}

/// `X^m = phi_intra(X^m, X^m) + phi_cross(X^m, X^{other})` for both modalities.
pub fn fgse_layer(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    layer: usize,
    inputs: [Var; 2],
) -> Result<([Var; 2], LayerTrace)> {
    cfg.ablation.validate()?;
    let mut trace = LayerTrace::default();
    let mut out = inputs;
    for (i, m) in Modality::BOTH.into_iter().enumerate() {
        let own = inputs[i];
        let other = inputs[1 - i];
        let mut terms = Vec::with_capacity(2);
        for branch in [Branch::Intra, Branch::Cross] {
            let skip = match branch {
                Branch::Intra => cfg.ablation.no_intra,
                Branch::Cross => cfg.ablation.no_cross,
            };
            if skip {
                continue;
            }
            let (source, pair) = match branch {
                Branch::Intra => (own, Pair { query: m, key: m }),
                Branch::Cross => (other, Pair { query: m, key: m.other() }),
            };
            let weights = branch_weights(params, cfg, layer, branch, m)?;
            let res = phi(graph, cfg, own, source, weights)?;
            if let Some(beta) = res.beta {
                trace.cooc.push(CoocMap { layer, pair, beta });
            }
            if let Some(gamma) = res.gamma {
                trace.gamma.push((pair, gamma));
            }
            terms.push(res.x);
        }
        out[i] = match terms.as_slice() {
            [single] => *single,
            [a, b] => graph.add(*a, *b)?,
            _ => unreachable!("validated: at least one branch"),
        };
    }
    trace.cooc.sort_by_key(|c| c.pair);
    Ok((out, trace))
}

/// Applies `cfg.layers` FGSE layers starting from the class-wise features.
pub fn stack_forward(
    graph: &mut Graph,
    params: &BoundParams,
    cfg: &ModelConfig,
    class_wise: [Var; 2],
) -> Result<([Var; 2], Vec<LayerTrace>)> {
    let mut x = class_wise;
    let mut traces = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let (next, trace) = fgse_layer(graph, params, cfg, l, x)?;
        x = next;
        traces.push(trace);
    }
    Ok((x, traces))
}
