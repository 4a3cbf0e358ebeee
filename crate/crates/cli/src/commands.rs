use std::fs;
use std::path::{Path, PathBuf};

use mmcse::data::{generate, load_dataset, save_dataset};
use mmcse::export::{cooc_matrix, embeddings, write_embeddings_csv};
use mmcse::model::ModelConfig;
use mmcse::train::{evaluate_checkpoint, grad_check_model, load_checkpoint, resolve_checkpoint, train, LOG_FILE};
use mmcse::{Error, LossConfig, LossToggles, MetricReport, Protocol, Result, SynthConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{EvalArgs, ExportArgs, GenDataArgs, GradCheckArgs, ModelFlags, ReportFormat, TrainArgs};

/// Name of the resolved-config echo written into output directories.
pub const CONFIG_ECHO: &str = "config.toml";

const GRAD_TOLERANCE: f64 = 1e-6;

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn to_toml<T: Serialize>(cfg: &T) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
}

/// Prints the resolved config to stderr and optionally writes it to `dest`.
fn echo_config<T: Serialize>(cfg: &T, dest: Option<&Path>) -> Result<()> {
    let text = to_toml(cfg)?;
    eprintln!("# resolved config\n{}", text.trim_end());
    match dest {
        Some(dest) => write_file(dest, &text),
        None => Ok(()),
    }
}

/// `report.json` gets `report.config.toml` next to it.
fn sibling_echo(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{CONFIG_ECHO}"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let mut cfg: SynthConfig = read_config(args.config.as_deref())?;
    if let Some(v) = args.videos {
        cfg.num_videos = v;
    }
    if let Some(v) = args.segments {
        cfg.segments = v;
    }
    if let Some(v) = args.classes {
        cfg.classes = v;
        // Keep the events-per-video range inside the new class count.
        cfg.events_per_video.1 = cfg.events_per_video.1.min(v).max(cfg.events_per_video.0);
    }
    if let Some((a, v)) = args.dims {
        cfg.audio_dim = a;
        cfg.visual_dim = v;
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    if let Some(v) = args.background_prob {
        cfg.background_prob = v;
    }
    if !args.cooc.is_empty() {
        cfg.cooc = args.cooc.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    echo_config(&cfg, None)?;
    let data = generate(&cfg)?;
    save_dataset(&data, &args.out)?;
    write_file(&args.out.join(CONFIG_ECHO), &to_toml(&cfg)?)?;
    println!(
        "wrote {} videos (T={}, K={}, D_a={}, D_v={}) to {}",
        data.len(),
        cfg.segments,
        cfg.classes,
        cfg.audio_dim,
        cfg.visual_dim,
        args.out.display()
    );
    Ok(())
}

fn apply_model_flags(flags: &ModelFlags, cfg: &mut TrainConfig) -> Result<()> {
    for a in &flags.ablate {
        cfg.ablation.enable(a.flag())?;
    }
    if let Some(list) = &flags.losses {
        cfg.losses = LossToggles::parse(list)?;
    }
    if let Some(v) = flags.lambda1 {
        cfg.lambda1 = v;
    }
    if let Some(v) = flags.lambda2 {
        cfg.lambda2 = v;
    }
    if let Some(v) = flags.ort {
        cfg.ort = v.into();
    }
    if let Some(v) = flags.mmil {
        cfg.mmil = v.into();
    }
    if let Some(v) = flags.lgsf_residual {
        cfg.lgsf_residual = v.into();
    }
    if flags.no_secm_projections {
        cfg.secm_projections = false;
    }
    Ok(())
}

pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = read_config(args.config.as_deref())?;
    let fields = [
        (args.epochs, &mut cfg.epochs),
        (args.batch_size, &mut cfg.batch_size),
        (args.layers, &mut cfg.layers),
        (args.d1, &mut cfg.d1),
        (args.d2, &mut cfg.d2),
    ];
    for (flag, field) in fields {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.parallel {
        cfg.parallel = true;
    }
    apply_model_flags(&args.model, &mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(args)?;
    echo_config(&cfg, None)?;
    let data = load_dataset(&args.data)?;
    write_file(&args.out.join(CONFIG_ECHO), &to_toml(&cfg)?)?;
    let out = train(&data, &cfg, Some(&args.out))?;
    if let Some(last) = out.log.last() {
        println!(
            "epoch {} step {}: total {} basic {} rec {} ort {} ec {}",
            last.epoch, last.step, last.total, last.basic, last.rec, last.ort, last.ec
        );
    }
    println!("log: {}", args.out.join(LOG_FILE).display());
    if let Some(ckpt) = &out.last_checkpoint {
        println!("checkpoint: {}", ckpt.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalEcho<'a> {
    checkpoint: &'a Path,
    data: &'a Path,
    threshold: f64,
    iou: f64,
    report: &'a str,
}

/// Machine-readable report: protocol plus the eleven numbers.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct MachineReport {
    pub protocol: Protocol,
    pub metrics: MetricReport,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let protocol = Protocol {
        threshold: args.threshold,
        iou: args.iou,
    };
    protocol.validate()?;
    let ckpt = resolve_checkpoint(&args.ckpt)?;
    let format = match args.report {
        ReportFormat::Text => "text",
        ReportFormat::Machine => "machine",
    };
    let echo = EvalEcho {
        checkpoint: &ckpt,
        data: &args.data,
        threshold: protocol.threshold,
        iou: protocol.iou,
        report: format,
    };
    echo_config(&echo, args.out.as_deref().map(sibling_echo).as_deref())?;
    let (params, _) = load_checkpoint(&ckpt)?;
    let data = load_dataset(&args.data)?;
    let report = evaluate_checkpoint(&params, &data, &protocol)?;
    let text = match args.report {
        ReportFormat::Text => report.to_text(&protocol),
        ReportFormat::Machine => {
            let doc = MachineReport { protocol, metrics: report };
            let mut s = serde_json::to_string_pretty(&doc)
                .map_err(|e| Error::Validation(format!("cannot serialize report: {e}")))?;
            s.push('\n');
            s
        }
    };
    print!("{text}");
    if let Some(out) = &args.out {
        write_file(out, &text)?;
    }
    Ok(())
}

pub fn grad_check(args: &GradCheckArgs) -> Result<()> {
    let mut tc = TrainConfig {
        d1: args.d1,
        d2: args.d2,
        layers: args.layers,
        ..TrainConfig::default()
    };
    apply_model_flags(&args.model, &mut tc)?;
    tc.ablation.validate()?;
    let (da, dv) = args.dims;
    let cfg = ModelConfig {
        d1: tc.d1,
        d2: tc.d2,
        layers: tc.layers,
        secm_projections: tc.secm_projections,
        lgsf_residual: tc.lgsf_residual,
        mmil: tc.mmil,
        ablation: tc.ablation,
        ..ModelConfig::new(args.k, da, dv)
    };
    let loss = tc.loss_config();
    #[derive(Serialize)]
    struct Echo<'a> {
        seed: u64,
        segments: usize,
        step: f64,
        tolerance: f64,
        model: &'a ModelConfig,
        loss: &'a LossConfig,
    }
    echo_config(
        &Echo {
            seed: args.seed,
            segments: args.t,
            step: args.step,
            tolerance: GRAD_TOLERANCE,
            model: &cfg,
            loss: &loss,
        },
        None,
    )?;
    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {}", args.step)));
    }
    let out = grad_check_model(&cfg, &loss, args.t, args.seed, args.step)?;
    println!("max relative error: {:e}", out.report.max_rel_error);
    println!("entries checked: {}", out.report.entries_checked);
    println!("parameters: {}", out.parameters.len());
    if let Some(p) = &out.worst_param {
        println!("worst parameter: {p}");
    }
    if out.report.max_rel_error > GRAD_TOLERANCE {
        return Err(Error::GradCheck {
            error: out.report.max_rel_error,
            tolerance: GRAD_TOLERANCE,
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct ExportEcho<'a> {
    checkpoint: &'a Path,
    data: &'a Path,
    out: &'a Path,
}

fn export_setup(args: &ExportArgs) -> Result<(mmcse::ModelParams, mmcse::Dataset)> {
    let ckpt = resolve_checkpoint(&args.ckpt)?;
    echo_config(
        &ExportEcho {
            checkpoint: &ckpt,
            data: &args.data,
            out: &args.out,
        },
        Some(&sibling_echo(&args.out)),
    )?;
    let (params, _) = load_checkpoint(&ckpt)?;
    Ok((params, load_dataset(&args.data)?))
}

pub fn export_cooc(args: &ExportArgs) -> Result<()> {
    let (params, data) = export_setup(args)?;
    let export = cooc_matrix(&params, &data)?;
    let text = serde_json::to_string_pretty(&export)
        .map_err(|e| Error::Validation(format!("cannot serialize co-occurrence map: {e}")))?;
    write_file(&args.out, &(text + "\n"))?;
    println!("wrote {0}x{0} map of layer {1} to {2}", export.matrix.len(), export.layer, args.out.display());
    Ok(())
}

pub fn export_embeddings(args: &ExportArgs) -> Result<()> {
    let (params, data) = export_setup(args)?;
    let rows = embeddings(&params, &data)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_embeddings_csv(&args.out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}
