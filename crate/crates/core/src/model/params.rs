use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Modality, ModelConfig, MmilMode};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Every learnable tensor of the network, keyed by a dotted name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

/// Parameter handles registered on one graph.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub(crate) fn from_vars(vars: BTreeMap<String, Var>) -> Self {
        BoundParams { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Validation(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

struct Slot {
    name: String,
    shape: Vec<usize>,
    bias: bool,
}

fn weight(name: String, fan_in: usize, fan_out: usize) -> Slot {
    Slot {
        name,
        shape: vec![fan_in, fan_out],
        bias: false,
    }
}

fn bias(name: String, n: usize) -> Slot {
    Slot {
        name,
        shape: vec![n],
        bias: true,
    }
}

fn affine(slots: &mut Vec<Slot>, prefix: &str, fan_in: usize, fan_out: usize) {
    slots.push(weight(format!("{prefix}.w"), fan_in, fan_out));
    slots.push(bias(format!("{prefix}.b"), fan_out));
}

/// Name of decoupling head `k` (events `0..K`) for modality `m`.
pub(crate) fn head_name(m: Modality, k: usize) -> String {
    format!("cafd.{}.head.{k:03}", m.tag())
}

pub(crate) fn fgse_name(layer: usize, branch: &str, m: Modality, which: &str) -> String {
    format!("fgse.{layer:02}.{branch}.{}.{which}", m.tag())
}

/// Parameter layout in initialization order.
fn layout(cfg: &ModelConfig) -> Vec<Slot> {
    let (k, d1, d2) = (cfg.num_classes, cfg.d1, cfg.d2);
    let ab = &cfg.ablation;
    let mut slots = Vec::new();
    for m in Modality::BOTH {
        let t = m.tag();
        affine(&mut slots, &format!("enc.{t}"), cfg.input_dim(m), d1);
        if ab.no_cafd {
            affine(&mut slots, &format!("cafd.{t}.shared"), d1, d2);
        } else {
            for c in 0..k {
                affine(&mut slots, &head_name(m, c), d1, d2);
            }
            if !ab.no_bg {
                affine(&mut slots, &format!("cafd.{t}.bg"), d1, d2);
                affine(&mut slots, &format!("cafd.{t}.alpha"), d1, 1);
            }
            affine(&mut slots, &format!("cafd.{t}.blend"), 2 * d2, d2);
        }
    }
    if cfg.secm_projections && !ab.no_secm {
        for l in 0..cfg.layers {
            for branch in ["intra", "cross"] {
                if (branch == "intra" && ab.no_intra) || (branch == "cross" && ab.no_cross) {
                    continue;
                }
                for m in Modality::BOTH {
                    for which in ["wq", "wk", "wv"] {
                        slots.push(weight(fgse_name(l, branch, m, which), d2, d2));
                    }
                }
            }
        }
    }
    for m in Modality::BOTH {
        let t = m.tag();
        affine(&mut slots, &format!("parser.{t}"), d2, 1);
        affine(&mut slots, &format!("mmil.{t}"), d2, 1);
        if cfg.mmil == MmilMode::Factorized {
            affine(&mut slots, &format!("mmil_av.{t}"), d2, 1);
        }
    }
    if ab.has_decoupling() {
        for m in Modality::BOTH {
            let t = m.tag();
            affine(&mut slots, &format!("decoder.{t}.l1"), (k + 1) * d2, d1);
            affine(&mut slots, &format!("decoder.{t}.l2"), d1, d1);
        }
    }
    slots
}

impl ModelParams {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for slot in layout(config) {
            let n: usize = slot.shape.iter().product();
            let data = if slot.bias {
                vec![0.0; n]
            } else {
                let bound = 1.0 / (slot.shape[0] as f64).sqrt();
                (0..n)
                    .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
                    .collect()
            };
            tensors.insert(slot.name, Tensor::new(slot.shape, data)?);
        }
        Ok(ModelParams {
            config: config.clone(),
            tensors,
        })
    }

    /// Rebuilds from named tensors, checking names and shapes against the layout.
    pub fn from_tensors(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != tensors.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for slot in &expected {
            match tensors.get(&slot.name) {
                None => {
                    return Err(Error::Validation(format!(
                        "missing parameter `{}`",
                        slot.name
                    )))
                }
                Some(t) if t.shape() != slot.shape.as_slice() => {
                    return Err(Error::Validation(format!(
                        "parameter `{}` has shape {:?}, expected {:?}",
                        slot.name,
                        t.shape(),
                        slot.shape
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(ModelParams { config, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::Validation(format!("unknown parameter `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_param",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Registers every tensor as a differentiable leaf.
    pub fn bind(&self, graph: &mut Graph) -> BoundParams {
        self.bind_with(graph, true)
    }

    /// Registers every tensor as a constant, for inference.
    pub fn bind_frozen(&self, graph: &mut Graph) -> BoundParams {
        self.bind_with(graph, false)
    }

    fn bind_with(&self, graph: &mut Graph, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    graph.param(t.clone())
                } else {
                    graph.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }
}
