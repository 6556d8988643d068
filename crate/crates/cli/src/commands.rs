use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use neures_core::analysis::{peak_frequency_errors, stft, write_wav, Spectrogram};
use neures_core::config::RunConfig;
use neures_core::dataset::{generate, Dataset};
use neures_core::engine::{render_offline, EngineConfig};
use neures_core::excitation::kaiser_impulse;
use neures_core::experiments::{
    boundary_sweep, central_position, extrapolation_schedule, young_modulus_glide, GlideConfig,
    SPECTROGRAM_RANGE_DB,
};
use neures_core::modal::{ModalBasis, ShapeGrid};
use neures_core::neural::checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TrainingState,
};
use neures_core::neural::train::{evaluate, TrainData, Trainer};
use neures_core::neural::Model;
use neures_core::resonator::frequency_response;
use serde_json::json;

use crate::scene::{render_scene, Scene};
use crate::ConfigError;

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Output file; defaults to `paths.dataset`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use this outline (PGM) for every example instead of random shapes.
    #[arg(long)]
    pub shape: Option<PathBuf>,
    #[arg(long)]
    pub shapes: Option<usize>,
    #[arg(long)]
    pub materials: Option<usize>,
    #[arg(long)]
    pub positions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Checkpoint to write; defaults to `paths.checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Loss curve CSV; defaults to `<output>/loss.csv`.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Total number of updates, counting those already in a resumed
    /// checkpoint; the learning-rate schedule spans this many.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Stop after this many updates in total, leaving the schedule as if the
    /// run were to continue to `--steps`; resume later with `--resume`.
    #[arg(long)]
    pub until: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ModelSource {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Outline to evaluate on (PGM); otherwise the first shape of the dataset.
    #[arg(long)]
    pub shape: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory; defaults to `paths.output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Per-example spectral loss and peak-frequency errors on a dataset.
    Response {
        #[command(flatten)]
        src: ModelSource,
        /// Strongest target peaks to check.
        #[arg(long, default_value_t = 5)]
        peaks: usize,
        /// Relative frequency tolerance for a matched peak.
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
    /// Young's-modulus ramp: neural render against the modal reference.
    Fig2 {
        #[command(flatten)]
        src: ModelSource,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long)]
        e_start: Option<f64>,
        #[arg(long)]
        e_end: Option<f64>,
        /// Ramp-free control: compare a constant schedule with fixed coefficients.
        #[arg(long)]
        constant: bool,
    },
    /// Every parameter ramped beyond its training range.
    Fig3 {
        #[command(flatten)]
        src: ModelSource,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
    },
    /// Coefficient averages along a vertical line through the shape.
    Fig4 {
        #[command(flatten)]
        src: ModelSource,
        #[arg(long, default_value_t = 257)]
        steps: usize,
        /// Horizontal position of the line; defaults to the shape centroid.
        #[arg(long)]
        x: Option<f64>,
    },
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

pub fn load_model(cfg: &RunConfig, path: Option<&PathBuf>) -> Result<Model> {
    let path = path.unwrap_or(&cfg.paths.checkpoint);
    Ok(load_checkpoint(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?
        .model)
}

/// The run's engine settings with the filter-bank size of the model.
pub fn engine_config(cfg: &RunConfig, model: &Model) -> EngineConfig {
    EngineConfig {
        branches: model.config().branches,
        depth: model.config().depth,
        sample_rate: model.config().sample_rate,
        ..cfg.engine.clone()
    }
}

pub fn cmd_dataset(cfg: &RunConfig, args: &DatasetArgs) -> Result<()> {
    let mut spec = cfg.dataset.clone();
    spec.shapes = args.shapes.unwrap_or(spec.shapes);
    spec.materials = args.materials.unwrap_or(spec.materials);
    spec.positions = args.positions.unwrap_or(spec.positions);
    spec.seed = args.seed.unwrap_or(spec.seed);
    let fixed = match &args.shape {
        Some(p) => Some(
            ShapeGrid::read_pgm(p)
                .map_err(|e| ConfigError(format!("shape {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let ds = generate(&spec, fixed.as_ref())?;
    let out = args.out.as_ref().unwrap_or(&cfg.paths.dataset);
    write_file(out, ds.to_bytes())?;
    println!("wrote {} examples to {}", ds.examples.len(), out.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    let ds_path = args.dataset.as_ref().unwrap_or(&cfg.paths.dataset);
    let ds =
        Dataset::read(ds_path).with_context(|| format!("reading dataset {}", ds_path.display()))?;
    if ds.sample_rate != cfg.model.sample_rate {
        bail!(ConfigError(format!(
            "dataset sample rate {} differs from model sample rate {}",
            ds.sample_rate, cfg.model.sample_rate
        )));
    }
    let data = TrainData::from_dataset(&ds)?;
    let mut trainer = match &args.resume {
        Some(p) => {
            let ckpt = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
            let Some(state) = ckpt.training else {
                bail!(ConfigError(format!(
                    "{} has no optimizer state to resume from",
                    p.display()
                )));
            };
            let mut tc = state.config;
            tc.steps = args.steps.unwrap_or(tc.steps);
            Trainer::resume(ckpt.model, tc, state.adam)?
        }
        None => {
            let mut tc = cfg.train.clone();
            tc.steps = args.steps.unwrap_or(tc.steps);
            tc.seed = args.seed.unwrap_or(tc.seed);
            let mut mc = cfg.model.clone();
            mc.init_freqs = ds.mode_frequencies(mc.branches)?;
            Trainer::new(Model::new(mc, tc.seed)?, tc)?
        }
    };
    let first_step = trainer.adam.step;
    let start = std::time::Instant::now();
    let until = args.until.unwrap_or(usize::MAX);
    let mut grad_norm = 0.0;
    while (trainer.adam.step as usize) < until.min(trainer.config.steps) {
        let loss = trainer.step(&data)?;
        grad_norm = f64::max(grad_norm, trainer.grad_norm);
        let step = trainer.adam.step;
        if step % 100 == 0 {
            log::info!(
                "step {step} loss {loss:.3} max |grad| {grad_norm:.3e} ({:.0?})",
                start.elapsed()
            );
            grad_norm = 0.0;
        }
    }
    let ckpt_path = args.checkpoint.as_ref().unwrap_or(&cfg.paths.checkpoint);
    let ckpt = Checkpoint {
        model: trainer.model.clone(),
        training: Some(TrainingState {
            config: trainer.config.clone(),
            adam: trainer.adam.clone(),
        }),
    };
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_checkpoint(&ckpt, ckpt_path)?;
    let curve_path = args
        .curve
        .clone()
        .unwrap_or_else(|| cfg.paths.output.join("loss.csv"));
    let mut csv = String::from("step,loss\n");
    for (i, l) in trainer.curve.iter().enumerate() {
        csv.push_str(&format!("{},{:e}\n", first_step + i as u64 + 1, l));
    }
    write_file(&curve_path, csv)?;
    let losses = evaluate(&trainer.model, &data)?;
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    println!(
        "trained to step {} in {:.1?}; mean dataset loss {mean:.4}; checkpoint {}",
        trainer.adam.step,
        start.elapsed(),
        ckpt_path.display()
    );
    Ok(())
}

fn eval_shape(cfg: &RunConfig, src: &ModelSource) -> Result<ShapeGrid> {
    if let Some(p) = &src.shape {
        return ShapeGrid::read_pgm(p)
            .map_err(|e| ConfigError(format!("shape {}: {e}", p.display())).into());
    }
    let path = src.dataset.as_ref().unwrap_or(&cfg.paths.dataset);
    let ds = Dataset::read(path).with_context(|| format!("reading dataset {}", path.display()))?;
    match ds.examples.first() {
        Some(e) => Ok(e.grid.clone()),
        None => bail!("dataset {} is empty", path.display()),
    }
}

fn spectrogram_png(spec: &Spectrogram, path: &Path) -> Result<()> {
    let frames = spec.log_frames(SPECTROGRAM_RANGE_DB);
    let (w, h) = (frames.len().max(1) as u32, spec.bins() as u32);
    let img = image::GrayImage::from_fn(w, h, |x, y| {
        let v = frames
            .get(x as usize)
            .map_or(-SPECTROGRAM_RANGE_DB, |f| f[(h - 1 - y) as usize]);
        image::Luma([
            (255.0 * (v + SPECTROGRAM_RANGE_DB) / SPECTROGRAM_RANGE_DB).clamp(0.0, 255.0) as u8,
        ])
    });
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn save_summary(dir: &Path, name: &str, value: serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(&value)?;
    // a closed stdout (e.g. piped into `head`) must not fail the command
    let _ = writeln!(std::io::stdout(), "{text}");
    write_file(&dir.join(name), text + "\n")
}

pub fn cmd_eval(cfg: &RunConfig, cmd: &EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Response {
            src,
            peaks,
            tolerance,
        } => {
            let model = load_model(cfg, src.checkpoint.as_ref())?;
            let path = src.dataset.as_ref().unwrap_or(&cfg.paths.dataset);
            let ds = Dataset::read(path)
                .with_context(|| format!("reading dataset {}", path.display()))?;
            let grid = ds.frequency_grid()?;
            let data = TrainData::from_dataset(&ds)?;
            let losses = evaluate(&model, &data)?;
            let (shapes, ids) = ds.shape_table();
            let latents: Vec<_> = shapes.iter().map(|s| model.encode(s)).collect();
            let mut csv = String::from("example,loss");
            for k in 0..*peaks {
                csv.push_str(&format!(",peak{k}_error"));
            }
            csv.push_str(",matched\n");
            let mut matched = 0;
            for (i, e) in ds.examples.iter().enumerate() {
                let bank =
                    model.predict_bank(&latents[ids[i]], e.position, &e.material.normalize())?;
                let pred = frequency_response(&bank, &grid)?;
                let target = ds.target(i, &grid);
                let errs = peak_frequency_errors(grid.freqs(), &target.db, &pred.db, *peaks);
                let ok = errs.iter().all(|e| *e <= *tolerance);
                matched += ok as usize;
                csv.push_str(&format!("{i},{:e}", losses[i]));
                for e in &errs {
                    csv.push_str(&format!(",{e:e}"));
                }
                csv.push_str(&format!(",{}\n", ok as u8));
            }
            let out = src.out.as_ref().unwrap_or(&cfg.paths.output);
            write_file(&out.join("response.csv"), csv)?;
            save_summary(
                out,
                "response.json",
                json!({
                    "examples": ds.examples.len(),
                    "mean_loss": losses.iter().sum::<f64>() / losses.len() as f64,
                    "peaks": peaks,
                    "tolerance": tolerance,
                    "matched": matched,
                }),
            )
        }
        EvalCommand::Fig2 {
            src,
            duration,
            e_start,
            e_end,
            constant,
        } => {
            let model = load_model(cfg, src.checkpoint.as_ref())?;
            let shape = eval_shape(cfg, src)?;
            let engine = engine_config(cfg, &model);
            let out = src.out.as_ref().unwrap_or(&cfg.paths.output);
            let mut gc = GlideConfig {
                duration: *duration,
                ..GlideConfig::default()
            };
            gc.e_start = e_start.unwrap_or(gc.e_start);
            gc.e_end = e_end.unwrap_or(gc.e_end);
            if *constant {
                return fig2_constant(&model, &engine, &shape, cfg, &gc, out);
            }
            let r = young_modulus_glide(&model, &engine, &shape, cfg.dataset.plate, &gc)?;
            let sr = engine.sample_rate as u32;
            write_wav(&out.join("fig2_neural.wav"), &r.neural.audio, sr)?;
            write_wav(&out.join("fig2_reference.wav"), &r.reference, sr)?;
            write_file(
                &out.join("fig2_neural_spectrogram.csv"),
                r.neural_spec.to_csv(SPECTROGRAM_RANGE_DB),
            )?;
            write_file(
                &out.join("fig2_reference_spectrogram.csv"),
                r.reference_spec.to_csv(SPECTROGRAM_RANGE_DB),
            )?;
            spectrogram_png(&r.neural_spec, &out.join("fig2_neural.png"))?;
            spectrogram_png(&r.reference_spec, &out.join("fig2_reference.png"))?;
            write_file(&out.join("fig2_coefficients.csv"), r.neural.log_csv())?;
            save_summary(
                out,
                "fig2.json",
                json!({
                    "position": r.position,
                    "e_start": gc.e_start,
                    "e_end": gc.e_end,
                    "similarity": r.similarity,
                    "neural_glide_octaves_per_s": r.neural_slope,
                    "reference_glide_octaves_per_s": r.reference_slope,
                }),
            )
        }
        EvalCommand::Fig3 { src, duration } => {
            let model = load_model(cfg, src.checkpoint.as_ref())?;
            let shape = eval_shape(cfg, src)?;
            let engine = engine_config(cfg, &model);
            let out = src.out.as_ref().unwrap_or(&cfg.paths.output);
            let total = (duration * engine.sample_rate).round() as usize;
            let mut excitation = kaiser_impulse(&Default::default())?;
            excitation.resize(total, 0.0);
            let schedule = extrapolation_schedule(*duration);
            let r = render_offline(
                &model,
                &engine,
                &shape,
                cfg.material,
                [0.5, 0.5],
                &schedule,
                &excitation,
                *duration,
            )?;
            if r.audio.iter().any(|v| !v.is_finite()) {
                bail!("non-finite samples in the fig3 render");
            }
            let spec = stft(&r.audio, 2048, 512, engine.sample_rate)?;
            write_wav(&out.join("fig3.wav"), &r.audio, engine.sample_rate as u32)?;
            write_file(
                &out.join("fig3_spectrogram.csv"),
                spec.to_csv(SPECTROGRAM_RANGE_DB),
            )?;
            spectrogram_png(&spec, &out.join("fig3.png"))?;
            write_file(&out.join("fig3_coefficients.csv"), r.log_csv())?;
            write_file(
                &out.join("fig3_schedule.json"),
                serde_json::to_string_pretty(&schedule)?,
            )?;
            save_summary(
                out,
                "fig3.json",
                json!({ "ticks": r.log.len() / (engine.branches * engine.depth), "outside_ticks": r.outside_ticks }),
            )
        }
        EvalCommand::Fig4 { src, steps, x } => {
            let model = load_model(cfg, src.checkpoint.as_ref())?;
            let shape = eval_shape(cfg, src)?;
            let out = src.out.as_ref().unwrap_or(&cfg.paths.output);
            let x = x.unwrap_or_else(|| shape.centroid()[0]);
            let table = boundary_sweep(&model, &shape, &cfg.material, x, *steps)?;
            write_file(&out.join("fig4.csv"), table.to_csv())?;
            let names = ["gain", "zero_radius", "pole_radius"];
            let stats: serde_json::Map<String, serde_json::Value> = names
                .iter()
                .zip(table.smoothness())
                .map(|(n, s)| {
                    (
                        n.to_string(),
                        json!({ "max_step": s.max_step, "interior_median": s.interior_median, "ratio": s.ratio }),
                    )
                })
                .collect();
            save_summary(
                out,
                "fig4.json",
                json!({ "x": x, "steps": steps, "boundary_rows": table.boundary_crossings(), "smoothness": stats }),
            )
        }
    }
}

fn fig2_constant(
    model: &Model,
    engine: &EngineConfig,
    shape: &ShapeGrid,
    cfg: &RunConfig,
    gc: &GlideConfig,
    out: &Path,
) -> Result<()> {
    use neures_core::analysis::log_spectrogram_similarity;
    use neures_core::engine::{self, ControlMessage, ModulationSchedule};
    let basis = ModalBasis::new(shape, cfg.dataset.plate)?;
    let pos = central_position(&basis);
    let total = (gc.duration * engine.sample_rate).round() as usize;
    let mut excitation = kaiser_impulse(&gc.impulse)?;
    excitation.resize(total, 0.0);
    let scheduled = render_offline(
        model,
        engine,
        shape,
        gc.material,
        pos,
        &ModulationSchedule::constant(),
        &excitation,
        gc.duration,
    )?;
    let (mut ctl, mut rend) = engine::engine(Some(model.clone()), engine.clone())?;
    ctl.control_step(ControlMessage::SetShape(shape.clone()))?;
    ctl.update(gc.material, pos)?;
    // coefficients set once; excitation fed at control rate like the
    // scheduled render so the accumulator never overflows
    let mut fixed = vec![0.0; total];
    let mut tick = 0;
    while engine.tick_start(tick) < total as u64 {
        let s0 = engine.tick_start(tick) as usize;
        let s1 = (engine.tick_start(tick + 1) as usize).min(total);
        ctl.push_excitation(&excitation[s0..s1], s0 == 0);
        rend.render(&mut fixed[s0..s1]);
        tick += 1;
    }
    let a = stft(
        &scheduled.audio,
        gc.frame_len,
        gc.frame_hop,
        engine.sample_rate,
    )?;
    let b = stft(&fixed, gc.frame_len, gc.frame_hop, engine.sample_rate)?;
    let similarity = log_spectrogram_similarity(&a, &b, SPECTROGRAM_RANGE_DB)?;
    save_summary(
        out,
        "fig2_constant.json",
        json!({ "similarity": similarity }),
    )
}

pub fn cmd_render(cfg: &RunConfig, args: &RenderArgs) -> Result<()> {
    let model = load_model(cfg, args.checkpoint.as_ref())?;
    let (scene, shape) = Scene::load(&args.scene)?;
    let engine = engine_config(cfg, &model);
    let audio = render_scene(&model, &engine, &scene, &shape, cfg.material)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_wav(&args.out, &audio, engine.sample_rate as u32)?;
    let peak = audio.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let _ = writeln!(
        std::io::stdout(),
        "wrote {} samples to {} (peak {peak:.4})",
        audio.len(),
        args.out.display()
    );
    Ok(())
}
