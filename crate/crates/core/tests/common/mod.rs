//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

pub mod metrics_oracle {
    /// Plain `T x K` 0/1 rows.
    pub type Grid = Vec<Vec<u8>>;

    fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
        if tp + fp + fn_ == 0 {
            1.0
        } else {
            (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
        }
    }

    fn and(a: &Grid, b: &Grid) -> Grid {
        a.iter()
            .zip(b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x & y).collect())
            .collect()
    }

    fn cell_counts(pred: &Grid, gt: &Grid) -> (usize, usize, usize) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for t in 0..gt.len() {
            for k in 0..gt[t].len() {
                match (pred[t][k], gt[t][k]) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 1) => fn_ += 1,
                    _ => {}
                }
            }
        }
        (tp, fp, fn_)
    }

    /// Events as (class, set of covered segments), found from 0 -> 1 transitions.
    fn events(g: &Grid) -> Vec<(usize, Vec<usize>)> {
        let t_len = g.len();
        let k_len = g.first().map_or(0, Vec::len);
        let mut out = Vec::new();
        for k in 0..k_len {
            for t in 0..t_len {
                let starts = g[t][k] == 1 && (t == 0 || g[t - 1][k] == 0);
                if starts {
                    let covered: Vec<usize> = (t..t_len).take_while(|&s| g[s][k] == 1).collect();
                    out.push((k, covered));
                }
            }
        }
        out
    }

    fn iou(a: &[usize], b: &[usize]) -> f64 {
        let inter = a.iter().filter(|s| b.contains(s)).count();
        let union = a.len() + b.len() - inter;
        inter as f64 / union as f64
    }

    /// Exhaustive matching over all (prediction, ground-truth) pairs. Runs of
    /// one class are disjoint and non-adjacent, so each event has at most one
    /// partner at IoU >= 0.5 and the pair count is the matching size.
    fn event_counts(pred: &Grid, gt: &Grid, iou_min: f64) -> (usize, usize, usize) {
        let (pe, ge) = (events(pred), events(gt));
        let mut tp = 0;
        for (pk, ps) in &pe {
            for (gk, gs) in &ge {
                if pk == gk && iou(ps, gs) >= iou_min {
                    tp += 1;
                }
            }
        }
        (tp, pe.len() - tp, ge.len() - tp)
    }

    type Counts = (usize, usize, usize);

    fn level(a: Counts, v: Counts, av: Counts) -> [f64; 5] {
        let (fa, fv, fav) = (f1(a.0, a.1, a.2), f1(v.0, v.1, v.2), f1(av.0, av.1, av.2));
        [fa, fv, fav, (fa + fv + fav) / 3.0, f1(a.0 + v.0, a.1 + v.1, a.2 + v.2)]
    }

    /// `[seg a, v, av, type, event, evt a, v, av, type, event]` for one video.
    pub fn video_scores(pa: &Grid, pv: &Grid, ga: &Grid, gv: &Grid, iou_min: f64) -> [f64; 10] {
        let (pav, gav) = (and(pa, pv), and(ga, gv));
        let seg = level(cell_counts(pa, ga), cell_counts(pv, gv), cell_counts(&pav, &gav));
        let evt = level(
            event_counts(pa, ga, iou_min),
            event_counts(pv, gv, iou_min),
            event_counts(&pav, &gav, iou_min),
        );
        let mut out = [0.0; 10];
        out[..5].copy_from_slice(&seg);
        out[5..].copy_from_slice(&evt);
        out
    }

    /// Dataset metrics: per-video scores averaged in video order, then the ten-way mean.
    pub fn evaluate(videos: &[(Grid, Grid, Grid, Grid)]) -> ([f64; 10], f64) {
        let mut sum = [0.0; 10];
        for (pa, pv, ga, gv) in videos {
            let s = video_scores(pa, pv, ga, gv, 0.5);
            for i in 0..10 {
                sum[i] += s[i];
            }
        }
        let n = videos.len() as f64;
        let mean = sum.map(|x| x / n);
        let avg = mean.iter().sum::<f64>() / 10.0;
        (mean, avg)
    }
}

pub mod structure {
    use mmcse::data::{generate, SynthConfig};
    use mmcse::model::{self, mmil_pool, stack_forward, Ablation, MmilMode, ModelConfig};
    use mmcse::{Graph, ModelParams, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    pub fn small_config(k: usize, layers: usize) -> ModelConfig {
        ModelConfig {
            d1: 8,
            d2: 6,
            layers,
            ..ModelConfig::new(k, 5, 7)
        }
    }

    /// Worst deviations seen in one forward pass.
    #[derive(Debug, Default, Clone, Copy)]
    pub struct ForwardStats {
        pub max_row_sum_error: f64,
        pub max_abs_gamma: f64,
        pub beta_rows: usize,
    }

    /// Runs a seeded model on a seeded video and checks shapes, attention
    /// rows and gate ranges.
    pub fn forward_invariants(cfg: &ModelConfig, t: usize, seed: u64) -> Result<ForwardStats, String> {
        let data = generate(&SynthConfig {
            num_videos: 1,
            segments: t,
            classes: cfg.num_classes,
            audio_dim: cfg.audio_dim,
            visual_dim: cfg.visual_dim,
            events_per_video: (1, cfg.num_classes.min(2)),
            noise: 0.5,
            seed,
            ..SynthConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let params = ModelParams::init(cfg, seed).map_err(|e| e.to_string())?;
        let mut g = Graph::new();
        let bound = params.bind_frozen(&mut g);
        let trace = model::forward(&mut g, &bound, cfg, &data.videos[0]).map_err(|e| e.to_string())?;
        let (k, d2) = (cfg.num_classes, cfg.d2);

        let mut stats = ForwardStats::default();
        for layer in &trace.layers {
            for map in &layer.cooc {
                let beta = g.value(map.beta);
                if beta.shape() != [t, k, k] {
                    return Err(format!("beta shape {:?}", beta.shape()));
                }
                for row in beta.data().chunks(k) {
                    let err = (row.iter().sum::<f64>() - 1.0).abs();
                    stats.max_row_sum_error = stats.max_row_sum_error.max(err);
                    stats.beta_rows += 1;
                }
            }
            for (_, gamma) in &layer.gamma {
                let gamma = g.value(*gamma);
                if gamma.shape() != [t, k] {
                    return Err(format!("gamma shape {:?}", gamma.shape()));
                }
                for &x in gamma.data() {
                    stats.max_abs_gamma = stats.max_abs_gamma.max(x.abs());
                }
            }
        }
        for v in trace.enhanced.iter().chain(&trace.class_wise) {
            if g.shape(*v) != [t, k, d2] {
                return Err(format!("class-wise shape {:?}", g.shape(*v)));
            }
        }
        for p in trace.segment_probs {
            if g.value(p).data().iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err("segment probability outside [0, 1]".into());
            }
        }
        if stats.max_row_sum_error > 1e-9 {
            return Err(format!("beta row sum off by {:e}", stats.max_row_sum_error));
        }
        if stats.max_abs_gamma > 1.0 {
            return Err(format!("|gamma| reached {}", stats.max_abs_gamma));
        }
        Ok(stats)
    }

    /// Pools constant segment probabilities `c` with random features and
    /// returns the largest deviation of `P` from `c`.
    pub fn constant_pooling_error(mode: MmilMode, t: usize, k: usize, c: f64, seed: u64) -> f64 {
        let cfg = ModelConfig {
            mmil: mode,
            ..small_config(k, 1)
        };
        let params = ModelParams::init(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let bound = params.bind_frozen(&mut g);
        let xa = g.constant(random_tensor(&mut rng, &[t, k, cfg.d2], 3.0));
        let xv = g.constant(random_tensor(&mut rng, &[t, k, cfg.d2], 3.0));
        let p = g.constant(Tensor::full(vec![t, k], c));
        let video = mmil_pool(&mut g, &bound, &cfg, [xa, xv], [p, p]).unwrap();
        g.value(video).data().iter().map(|x| (x - c).abs()).fold(0.0, f64::max)
    }

    /// With SECM and LGSF both disabled, `layers` stacked layers must return
    /// exactly `2^layers` times the input.
    pub fn doubling_holds(layers: usize, t: usize, k: usize, seed: u64) -> bool {
        let cfg = ModelConfig {
            ablation: Ablation {
                no_secm: true,
                no_lgsf: true,
                ..Ablation::default()
            },
            ..small_config(k, layers)
        };
        let params = ModelParams::init(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ha = random_tensor(&mut rng, &[t, k, cfg.d2], 2.0);
        let hv = random_tensor(&mut rng, &[t, k, cfg.d2], 2.0);
        let mut g = Graph::new();
        let bound = params.bind_frozen(&mut g);
        let inputs = [g.constant(ha.clone()), g.constant(hv.clone())];
        let (out, _) = stack_forward(&mut g, &bound, &cfg, inputs).unwrap();
        let factor = (1u64 << layers) as f64;
        [ha, hv].iter().zip(out).all(|(h, x)| {
            g.value(x).data().iter().zip(h.data()).all(|(&a, &b)| a == factor * b)
        })
    }
}

pub mod metric_cases {
    use super::metrics_oracle::{self, Grid};
    use mmcse::metrics::{evaluate, VideoPrediction};
    use mmcse::{Annotations, BinaryGrid, Protocol};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, t: usize, k: usize, density: f64) -> Grid {
        (0..t).map(|_| (0..k).map(|_| rng.random_bool(density) as u8).collect()).collect()
    }

    pub fn to_grid(g: &Grid) -> BinaryGrid {
        BinaryGrid::from_rows(g).unwrap()
    }

    /// 1 to 4 videos sharing T <= 10 and K <= 5, as (pred A, pred V, truth A, truth V).
    pub fn random_instance(rng: &mut ChaCha8Rng) -> Vec<(Grid, Grid, Grid, Grid)> {
        let t = rng.random_range(1..=10);
        let k = rng.random_range(1..=5);
        let n = rng.random_range(1..=4);
        (0..n)
            .map(|_| {
                let d = rng.random_range(0.0..0.8);
                (
                    random_grid(rng, t, k, d),
                    random_grid(rng, t, k, d),
                    random_grid(rng, t, k, d),
                    random_grid(rng, t, k, d),
                )
            })
            .collect()
    }

    /// Runs the library on one instance and compares with the oracle bit for bit.
    pub fn compare(videos: &[(Grid, Grid, Grid, Grid)]) -> Result<(), String> {
        let ids: Vec<String> = (0..videos.len()).map(|i| format!("v{i}")).collect();
        let anns: Vec<Annotations> =
            videos.iter().map(|(_, _, ga, gv)| Annotations::from_segments(to_grid(ga), to_grid(gv))).collect();
        let preds: Vec<VideoPrediction> = videos
            .iter()
            .zip(&ids)
            .map(|((pa, pv, _, _), id)| VideoPrediction {
                id: id.clone(),
                audio: to_grid(pa),
                visual: to_grid(pv),
            })
            .collect();
        let truth: Vec<(&str, &Annotations)> = ids.iter().map(String::as_str).zip(&anns).collect();
        let report = evaluate(&preds, &truth, &Protocol::default()).map_err(|e| e.to_string())?;
        let (want, avg) = metrics_oracle::evaluate(videos);
        if report.ten() != want || report.avg != avg {
            return Err(format!("library {:?} / {}, oracle {want:?} / {avg}", report.ten(), report.avg));
        }
        Ok(())
    }
}
