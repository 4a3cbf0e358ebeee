//! Learned co-occurrence maps and decoupled feature dumps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses;
use crate::model::{self, ModelParams, Pair};
use crate::tensor::Graph;
use crate::train::check_compatible;

/// Mean cross-modal attention of the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoocExport {
    pub layer: usize,
    pub pair: String,
    pub classes: Vec<String>,
    /// `matrix[i][j]`: mean attention of audio class `i` on visual class `j`.
    pub matrix: Vec<Vec<f64>>,
}

/// Averages the final layer's audio-to-visual attention over all videos and segments.
pub fn cooc_matrix(params: &ModelParams, dataset: &Dataset) -> Result<CoocExport> {
    check_compatible(&params.config, &dataset.manifest)?;
    let k = params.config.num_classes;
    let mut sum = vec![0.0; k * k];
    let mut count = 0usize;
    let mut layer = None;
    for v in &dataset.videos {
        let mut graph = Graph::new();
        let bound = params.bind_frozen(&mut graph);
        let trace = model::forward(&mut graph, &bound, &params.config, v)?;
        let map = trace
            .layers
            .last()
            .and_then(|l| l.cooc.iter().find(|c| c.pair == Pair::AV))
            .ok_or_else(|| {
                Error::Validation("the model has no cross-modal co-occurrence map to export".into())
            })?;
        layer = Some(map.layer);
        let beta = graph.value(map.beta);
        for step in beta.data().chunks(k * k) {
            for (acc, &b) in sum.iter_mut().zip(step) {
                *acc += b;
            }
        }
        count += beta.shape()[0];
    }
    if count == 0 {
        return Err(Error::Validation("nothing to export".into()));
    }
    Ok(CoocExport {
        layer: layer.expect("at least one video"),
        pair: Pair::AV.tag().to_string(),
        classes: dataset.manifest.class_names.clone(),
        matrix: sum.chunks(k).map(|row| row.iter().map(|s| s / count as f64).collect()).collect(),
    })
}

/// Mean signed cosine between the background slot and every event slot,
/// averaged over both modalities, all segments and all videos.
pub fn mean_background_cosine(params: &ModelParams, dataset: &Dataset) -> Result<f64> {
    check_compatible(&params.config, &dataset.manifest)?;
    if dataset.is_empty() {
        return Err(Error::Validation("nothing to export".into()));
    }
    let mut total = 0.0;
    for v in &dataset.videos {
        let mut graph = Graph::new();
        let bound = params.bind_frozen(&mut graph);
        let trace = model::forward(&mut graph, &bound, &params.config, v)?;
        let (Some(bg), Some(ev)) = (trace.background, trace.events) else {
            return Err(Error::Validation("the model has no background slot".into()));
        };
        for m in 0..2 {
            let cos = losses::background_cosines(&mut graph, bg[m], ev[m])?;
            let c = graph.value(cos);
            total += c.data().iter().sum::<f64>() / c.numel() as f64 / 2.0;
        }
    }
    Ok(total / dataset.len() as f64)
}

/// One decoupled slice of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub video: String,
    pub modality: &'static str,
    pub segment: usize,
    /// Class name, or `background` for the last slot.
    pub slot: String,
    pub values: Vec<f64>,
}

/// Every decoupled `[K+1, d2]` slice of every segment, audio then visual per video.
pub fn embeddings(params: &ModelParams, dataset: &Dataset) -> Result<Vec<EmbeddingRow>> {
    check_compatible(&params.config, &dataset.manifest)?;
    if !params.config.ablation.has_decoupling() {
        return Err(Error::Validation("no-cafd models have no decoupled features".into()));
    }
    let mut rows = Vec::new();
    for v in &dataset.videos {
        let mut graph = Graph::new();
        let bound = params.bind_frozen(&mut graph);
        let trace = model::forward(&mut graph, &bound, &params.config, v)?;
        let decoupled = trace.decoupled.expect("decoupling is enabled");
        for (m, var) in model::Modality::BOTH.into_iter().zip(decoupled) {
            let t = graph.value(var);
            let (segs, slots, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            for s in 0..segs {
                for slot in 0..slots {
                    let name = if slot + 1 == slots {
                        "background".to_string()
                    } else {
                        dataset.manifest.class_names[slot].clone()
                    };
                    let at = (s * slots + slot) * d;
                    rows.push(EmbeddingRow {
                        video: v.id.clone(),
                        modality: m.tag(),
                        segment: s,
                        slot: name,
                        values: t.data()[at..at + d].to_vec(),
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// CSV with columns `video,modality,segment,slot,kind,f0..`.
pub fn write_embeddings_csv(path: impl AsRef<Path>, rows: &[EmbeddingRow]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Validation(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = rows.first().map_or(0, |r| r.values.len());
    let mut header = vec!["video".to_string(), "modality".into(), "segment".into(), "slot".into(), "kind".into()];
    header.extend((0..d).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let kind = if r.slot == "background" { "background" } else { "class" };
        let mut rec = vec![r.video.clone(), r.modality.to_string(), r.segment.to_string(), r.slot.clone(), kind.to_string()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
