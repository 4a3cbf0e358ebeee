use mmcse::losses::{LossConfig, LossToggles, OrtMode};
use mmcse::model::{Ablation, LgsfResidual, MmilMode, ModelConfig};
use mmcse::tensor::{grad_check, Graph, Tensor, Var, DEFAULT_STEP};
use mmcse::train::grad_check_model;
use mmcse::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

/// Entries with magnitude in [0.2, 1.2] and random sign, away from every kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.2..1.2);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(0.3..2.0)).collect()).unwrap()
}

/// Projects onto a fixed random direction so every output entry matters.
fn probe(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = away_from_zero(&mut rng, &shape);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

const POINTS: u64 = 100;

/// Grad-checks `f` composed with a random probe at `POINTS` random inputs.
fn check(
    name: &str,
    leaves: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) {
    for point in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(point);
        let inputs = leaves(&mut rng);
        let report = grad_check(
            |g, v| {
                let y = f(g, v)?;
                probe(g, y, 1000 + point)
            },
            &inputs,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.entries_checked > 0, "{name}");
        assert!(report.max_rel_error <= TOL, "{name} at point {point}: {report:?}");
    }
}

fn nz(shape: &'static [usize]) -> impl Fn(&mut ChaCha8Rng) -> Tensor {
    move |rng| away_from_zero(rng, shape)
}

fn one(gen: impl Fn(&mut ChaCha8Rng) -> Tensor) -> impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> {
    move |rng| vec![gen(rng)]
}

fn two(
    a: impl Fn(&mut ChaCha8Rng) -> Tensor,
    b: impl Fn(&mut ChaCha8Rng) -> Tensor,
) -> impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> {
    move |rng| vec![a(rng), b(rng)]
}

const M: &[usize] = &[3, 4];
const X3: &[usize] = &[2, 3, 4];

#[test]
fn elementwise_primitives() {
    let pos = |rng: &mut ChaCha8Rng| positive(rng, M);
    check("add", two(nz(M), nz(M)), |g, v| g.add(v[0], v[1]));
    check("sub", two(nz(M), nz(M)), |g, v| g.sub(v[0], v[1]));
    check("mul", two(nz(M), nz(M)), |g, v| g.mul(v[0], v[1]));
    check("div", two(nz(M), nz(M)), |g, v| g.div(v[0], v[1]));
    check("scale", one(nz(M)), |g, v| g.scale(v[0], -2.5));
    check("add_scalar", one(nz(M)), |g, v| g.add_scalar(v[0], 0.7));
    check("relu", one(nz(M)), |g, v| g.relu(v[0]));
    check("sigmoid", one(nz(M)), |g, v| g.sigmoid(v[0]));
    check("exp", one(nz(M)), |g, v| g.exp(v[0]));
    check("log", one(pos), |g, v| g.log(v[0]));
    check("sqrt", one(pos), |g, v| g.sqrt(v[0]));
    check("abs", one(nz(M)), |g, v| g.abs(v[0]));
    // Entries have magnitude at least 0.2, so no entry sits within a step of either bound.
    check("clamp", one(nz(M)), |g, v| g.clamp(v[0], -0.15, 0.15));
}

#[test]
fn linear_algebra_primitives() {
    check("matmul", two(nz(X3), nz(&[4, 5])), |g, v| g.matmul(v[0], v[1]));
    check("bmm", two(nz(X3), nz(&[2, 4, 3])), |g, v| g.bmm(v[0], v[1]));
    check("transpose_last2", one(nz(X3)), |g, v| g.transpose_last2(v[0]));
}

#[test]
fn shape_primitives() {
    check("concat", two(nz(X3), nz(&[2, 1, 4])), |g, v| g.concat(&[v[0], v[1]], 1));
    check("narrow", one(nz(X3)), |g, v| g.narrow(v[0], 2, 1, 2));
    check("sum_axis", one(nz(X3)), |g, v| g.sum_axis(v[0], 1));
    check("mean_axis", one(nz(X3)), |g, v| g.mean_axis(v[0], 0));
    check("sum", one(nz(X3)), |g, v| g.sum(v[0]));
    check("mean", one(nz(X3)), |g, v| g.mean(v[0]));
    check("broadcast_axis", one(nz(X3)), |g, v| g.broadcast_axis(v[0], 1, 3));
    check("expand_leading", one(nz(&[2, 1, 4])), |g, v| g.expand_leading(v[0], &[2]));
    check("reshape", one(nz(X3)), |g, v| g.reshape(v[0], vec![6, 4]));
}

#[test]
fn normalization_primitives() {
    check("softmax_last", one(nz(X3)), |g, v| g.softmax_last(v[0]));
    check("l2_normalize_last", one(nz(X3)), |g, v| g.l2_normalize_last(v[0], 1e-12));
    check("cosine_last", two(nz(X3), nz(X3)), |g, v| g.cosine_last(v[0], v[1], 1e-12));
}

fn tiny() -> ModelConfig {
    ModelConfig {
        d1: 8,
        d2: 6,
        layers: 2,
        ..ModelConfig::new(4, 5, 7)
    }
}

/// Some variants (no-secm stacking, shared biases) have large third
/// derivatives, so the sweep uses a smaller step to keep truncation error
/// below the tolerance.
const VARIANT_STEP: f64 = 1e-6;

fn model_check(cfg: &ModelConfig, loss: &LossConfig, seed: u64) {
    let out = grad_check_model(cfg, loss, 3, seed, VARIANT_STEP).unwrap();
    assert!(
        out.report.max_rel_error <= TOL,
        "seed {seed}: {:?} worst at {:?}",
        out.report,
        out.worst_param
    );
}

#[test]
fn full_model_covers_every_parameter_group() {
    let cfg = tiny();
    let out = grad_check_model(&cfg, &LossConfig::default(), 3, 7, DEFAULT_STEP).unwrap();
    assert!(out.report.max_rel_error <= TOL, "{:?} at {:?}", out.report, out.worst_param);
    for prefix in [
        "enc.a.", "enc.v.", "cafd.a.head.", "cafd.v.alpha", "cafd.a.bg", "cafd.v.blend", "fgse.00.intra.a.wq",
        "fgse.01.cross.v.wv", "parser.a", "mmil.v", "decoder.a.l1", "decoder.v.l2",
    ] {
        assert!(out.parameters.iter().any(|n| n.starts_with(prefix)), "no parameter under {prefix}");
    }
    let n: usize = mmcse::ModelParams::init(&cfg, 7).unwrap().num_scalars();
    assert_eq!(out.report.entries_checked, n);
}

#[test]
fn model_variants() {
    let all = LossConfig::default();
    let abs = LossConfig {
        ort: OrtMode::Absolute,
        ..all
    };
    let mut variants = vec![
        (tiny(), all),
        (ModelConfig { layers: 0, ..tiny() }, all),
        (ModelConfig { secm_projections: false, ..tiny() }, all),
        (ModelConfig { lgsf_residual: LgsfResidual::Z, ..tiny() }, all),
        (ModelConfig { mmil: MmilMode::Factorized, ..tiny() }, all),
        (tiny(), abs),
    ];
    for name in ["no-cafd", "no-bg", "no-secm", "no-lgsf", "no-intra", "no-cross"] {
        let mut ablation = Ablation::default();
        ablation.enable(name).unwrap();
        variants.push((ModelConfig { ablation, ..tiny() }, all));
    }
    for row in 1..=5 {
        let loss = LossConfig {
            toggles: LossToggles::ablation_row(row).unwrap(),
            ..all
        };
        variants.push((tiny(), loss));
    }
    for (i, (cfg, loss)) in variants.iter().enumerate() {
        model_check(cfg, loss, 100 + i as u64);
    }
}
