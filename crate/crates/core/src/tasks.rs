//! Task runners behind the command-line subcommands, plus the procedural
//! scenes they train on.
//!
//! Every runner takes a [`Config`], writes its artifacts into the
//! configured output directory and returns an in-memory report. Artifacts
//! carry the config hash and seed; the hash ignores `output`, so reruns
//! into different directories stay comparable.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::count::{
    convergence_study, estimate_mean, marked_count, quantum_count, EnergyTable, FixedPointSpec, OracleMode,
    StudyConfig,
};
use crate::encoding::EncoderKind;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::io::{float_json, output_dir, read_energies, write_json, Checkpoint, Config, JsonLines, Stamp, CHECKPOINT_VERSION};
use crate::model::{
    direction_angles, train_step, ActivationKind, Batch, Optimizer, PointSample, QrfConfig, QrfModel, RaySample,
};
use crate::pqc::TemplateKind;
use crate::render::{
    composite, psnr, render_image, ssim, Aabb, Camera, FieldSample, Image, RadianceField, RenderOptions, SampleSet,
};

/// Largest image side trained on; larger inputs are box-downsampled.
pub const MAX_IMAGE_SIDE: usize = 64;

/// Largest pixel count of the quantum rendering demo.
pub const MAX_QUANTUM_PIXELS: usize = 4;

const COMMON_KEYS: &[&str] = &["seed", "output", "exec"];
const MODEL_KEYS: &[&str] = &["encoder", "circuit", "layers", "activation", "gamma_position", "gamma_direction"];
const TRAIN_KEYS: &[&str] = &["lr", "momentum", "iterations", "batch_size", "eval_every", "resume"];
const FIT2D_KEYS: &[&str] = &["scene", "image", "size", "color"];
const FIT3D_KEYS: &[&str] = &["scene", "views", "view_size", "samples", "gt_samples"];
const RENDER_KEYS: &[&str] = &[
    "checkpoint",
    "width",
    "height",
    "samples",
    "azimuth",
    "quantum_pixels",
    "quantum_index_bits",
    "quantum_frac_bits",
    "quantum_qpe_bits",
];
const COUNT_KEYS: &[&str] = &["energies", "int_bits", "total_bits", "qpe_bits", "oracle"];
const STUDY_KEYS: &[&str] =
    &["energies", "index_bits", "int_bits", "total_bits", "table_seed", "qpe_min", "qpe_max", "nc_min", "nc_max", "trials", "oracle"];
const ABLATE_KEYS: &[&str] = &["activations", "encoders", "circuits", "repeats"];

fn known_keys(task: &str) -> Vec<&'static str> {
    let mut k: Vec<&str> = COMMON_KEYS.to_vec();
    let extra: &[&[&str]] = match task {
        "fit2d" => &[MODEL_KEYS, TRAIN_KEYS, FIT2D_KEYS],
        "fit3d" => &[MODEL_KEYS, TRAIN_KEYS, FIT3D_KEYS],
        "render" => &[RENDER_KEYS],
        "qcount" => &[COUNT_KEYS],
        "convergence" => &[STUDY_KEYS],
        "ablate" => &[MODEL_KEYS, TRAIN_KEYS, FIT2D_KEYS, ABLATE_KEYS],
        _ => &[],
    };
    for e in extra {
        k.extend_from_slice(e);
    }
    k
}

/// Checks keys and builds the stamp for `task`.
fn prepare(cfg: &Config, task: &str) -> Result<(Stamp, Execution, PathBuf)> {
    cfg.check_keys(&known_keys(task))?;
    let seed = cfg.require::<u64>("seed")?;
    let exec = match cfg.get_or::<String>("exec", "parallel".into())?.as_str() {
        "parallel" => Execution::Parallel,
        "sequential" => Execution::Sequential,
        other => return Err(Error::Config(format!("unknown exec `{other}` (expected parallel|sequential)"))),
    };
    let out = output_dir(&cfg.get_or::<String>("output", format!("runs/{task}"))?);
    fs::create_dir_all(&out)?;
    let mut hashed = cfg.clone();
    hashed.remove("output");
    Ok((Stamp { config_hash: hashed.hash(), seed }, exec, out))
}

fn existing_path(cfg: &Config, key: &str) -> Result<PathBuf> {
    let p = PathBuf::from(cfg.require::<String>(key)?);
    if !p.exists() {
        return Err(Error::Config(format!("`{key}` points to missing file {}", p.display())));
    }
    Ok(p)
}

fn stamp_json(stamp: &Stamp, mut v: Map<String, Value>) -> Value {
    v.insert("config_hash".into(), json!(stamp.config_hash));
    v.insert("seed".into(), json!(stamp.seed));
    Value::Object(v)
}

fn to_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

/// Model settings from config; `L_p = 4` and `L_d = 2` by default.
pub fn model_config(cfg: &Config, position_dims: usize, use_direction: bool) -> Result<QrfConfig> {
    Ok(QrfConfig {
        encoder: cfg.get_or("encoder", EncoderKind::DenseAngle)?,
        circuit: cfg.get_or("circuit", TemplateKind::Circuit5)?,
        layers: cfg.get_or("layers", 1)?,
        activation: cfg.get_or("activation", ActivationKind::QRelu)?,
        position_frequencies: cfg.get_or("gamma_position", 4)?,
        direction_frequencies: cfg.get_or("gamma_direction", 2)?,
        position_dims,
        use_direction,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub eval_every: usize,
}

impl TrainSettings {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let s = TrainSettings {
            lr: cfg.get_or("lr", 0.1)?,
            momentum: cfg.get_or("momentum", 0.9)?,
            iterations: cfg.get_or("iterations", 500)?,
            batch_size: cfg.get_or("batch_size", 64)?,
            eval_every: cfg.get_or("eval_every", 50)?,
        };
        if s.batch_size == 0 || s.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        Ok(s)
    }
}

// ---------------------------------------------------------------------------
// Procedural scenes

/// Deterministic landscape-like image: sky gradient, wavy horizon, ground,
/// a few soft blobs and two octaves of value noise. `size` pixels are
/// cropped from the center of a 64 × 64 canvas.
pub fn natural_image(size: usize, seed: u64) -> Result<Image> {
    let full = MAX_IMAGE_SIDE;
    if size == 0 || size > full {
        return Err(Error::Config(format!("natural image size must be in 1..={full}, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lattice = |rng: &mut ChaCha8Rng, cells: usize| -> Vec<f64> {
        (0..(cells + 1) * (cells + 1)).map(|_| rng.gen::<f64>()).collect()
    };
    let octaves = [(4usize, lattice(&mut rng, 4), 0.12), (8, lattice(&mut rng, 8), 0.06)];
    let blobs: Vec<([f64; 2], f64, [f64; 3])> = (0..5)
        .map(|_| {
            let c = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
            let r = rng.gen_range(0.05..0.15);
            let col = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            (c, r, col)
        })
        .collect();
    let phase = rng.gen_range(0.0..2.0 * PI);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let img = Image::from_fn(full, full, |x, y| {
        let u = (x as f64 + 0.5) / full as f64;
        let v = (y as f64 + 0.5) / full as f64;
        let horizon = 0.5 + 0.06 * (2.0 * PI * 1.5 * u + phase).sin();
        let mut c = if v < horizon {
            let t = v / horizon;
            [0.45 + 0.4 * t, 0.6 + 0.3 * t, 0.9]
        } else {
            let t = (v - horizon) / (1.0 - horizon);
            [0.35 - 0.1 * t, 0.5 - 0.15 * t, 0.2]
        };
        for (ctr, r, col) in &blobs {
            let d2 = (u - ctr[0]).powi(2) + (v - ctr[1]).powi(2);
            let w = (-d2 / (2.0 * r * r)).exp() * 0.6;
            for k in 0..3 {
                c[k] = c[k] * (1.0 - w) + col[k] * w;
            }
        }
        for (cells, grid, amp) in &octaves {
            let gx = u * *cells as f64;
            let gy = v * *cells as f64;
            let (ix, iy) = ((gx as usize).min(cells - 1), (gy as usize).min(cells - 1));
            let (fx, fy) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
            let at = |i: usize, j: usize| grid[j * (cells + 1) + i];
            let n = at(ix, iy) * (1.0 - fx) * (1.0 - fy)
                + at(ix + 1, iy) * fx * (1.0 - fy)
                + at(ix, iy + 1) * (1.0 - fx) * fy
                + at(ix + 1, iy + 1) * fx * fy;
            for ch in c.iter_mut() {
                *ch += amp * (n - 0.5);
            }
        }
        c.map(|x| x.clamp(0.0, 1.0))
    });
    let off = (full - size) / 2;
    img.crop(off, off, size, size)
}

/// Soft-edged sphere at the origin with a position-dependent color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereScene {
    pub radius: f64,
    pub density: f64,
}

impl Default for SphereScene {
    fn default() -> Self {
        SphereScene { radius: 0.6, density: 12.0 }
    }
}

impl RadianceField for SphereScene {
    fn sample(&self, p: &Point3<f64>, _dir: &Vector3<f64>) -> Result<FieldSample> {
        let r = p.coords.norm();
        let edge = 1.0 / (1.0 + ((r - self.radius) * 25.0).exp());
        let color = [0.5 + 0.45 * p.x / self.radius, 0.5 + 0.45 * p.y / self.radius, 0.5 - 0.45 * p.z / self.radius]
            .map(|c| c.clamp(0.0, 1.0));
        Ok(FieldSample { color, sigma: self.density * edge })
    }
}

/// Fully transparent scene.
pub struct EmptyScene;

impl RadianceField for EmptyScene {
    fn sample(&self, _p: &Point3<f64>, _dir: &Vector3<f64>) -> Result<FieldSample> {
        Ok(FieldSample { color: [0.0; 3], sigma: 0.0 })
    }
}

/// Camera on a circle of radius 3 around the y axis, 0.35 rad above the
/// equator, looking at the origin.
pub fn orbit_camera(azimuth: f64, size: usize) -> Result<Camera> {
    let (elev, dist) = (0.35f64, 3.0);
    let eye = [dist * elev.cos() * azimuth.sin(), dist * elev.sin(), dist * elev.cos() * azimuth.cos()];
    Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], 1.25 * size as f64, size, size)
}

pub fn scene_render_options(samples: usize, exec: Execution) -> RenderOptions {
    let mut o = RenderOptions::new(samples, 0.1, 6.0);
    o.bounds = Some(Aabb::cube(1.0));
    o.exec = exec;
    o
}

// ---------------------------------------------------------------------------
// Training

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub train_loss: Option<f64>,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub stamp: Stamp,
    pub model: QrfConfig,
    pub initial_psnr: f64,
    pub final_psnr: f64,
    pub final_ssim: f64,
    pub evals: Vec<EvalRecord>,
    pub checkpoint: Checkpoint,
    pub prediction: Image,
    pub target: Image,
    pub output: PathBuf,
}

enum Items {
    Points(Vec<PointSample>),
    Rays(Vec<RaySample>, RenderOptions),
}

impl Items {
    fn len(&self) -> usize {
        match self {
            Items::Points(v) => v.len(),
            Items::Rays(v, _) => v.len(),
        }
    }
}

/// Indices for the batch at `iteration`; a fresh RNG per iteration keeps
/// resumed runs on the uninterrupted trajectory.
fn batch_indices(seed: u64, iteration: usize, n: usize, batch: usize) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (iteration as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx = sample_indices(&mut rng, n, batch).into_vec();
    idx.sort_unstable();
    idx
}

struct Problem<'a> {
    model: QrfModel,
    items: Items,
    target: Image,
    predict: Box<dyn Fn(&QrfModel, &[f64]) -> Result<Image> + Sync + 'a>,
}

struct Sinks {
    metrics: Option<JsonLines>,
    timing: Option<JsonLines>,
}

fn train(
    problem: &Problem<'_>,
    settings: &TrainSettings,
    stamp: &Stamp,
    config: &Config,
    resume: Option<Checkpoint>,
    exec: Execution,
    sinks: &mut Sinks,
) -> Result<(Vec<EvalRecord>, Checkpoint, Image, f64)> {
    let model = &problem.model;
    let (mut params, mut opt, start, mut history) = match resume {
        Some(c) => {
            if c.params.len() != model.param_count() || c.velocity.len() != model.param_count() {
                return Err(Error::Config("checkpoint does not match the configured model".into()));
            }
            let mut opt = Optimizer::new(settings.lr, settings.momentum, model.param_count())?;
            opt.velocity = c.velocity;
            (c.params, opt, c.iteration, c.loss_history)
        }
        None => (
            model.init_params(stamp.seed),
            Optimizer::new(settings.lr, settings.momentum, model.param_count())?,
            0,
            Vec::new(),
        ),
    };
    let clock = Instant::now();
    let mut evals = Vec::new();
    let mut evaluate = |params: &[f64], iteration: usize, train_loss: Option<f64>, log: bool, sinks: &mut Sinks| {
        let img = (problem.predict)(model, params)?;
        let rec = EvalRecord { iteration, train_loss, psnr: psnr(&img, &problem.target)?, ssim: ssim(&img, &problem.target)? };
        if log {
            if let Some(m) = sinks.metrics.as_mut() {
                m.write(to_map(json!({
                    "iteration": iteration,
                    "train_loss": train_loss,
                    "psnr": float_json(rec.psnr),
                    "ssim": rec.ssim,
                })))?;
            }
            if let Some(t) = sinks.timing.as_mut() {
                t.write(to_map(json!({ "iteration": iteration, "wall_seconds": clock.elapsed().as_secs_f64() })))?;
            }
            evals.push(rec.clone());
        }
        Ok::<_, Error>((rec, img))
    };

    let (first, _) = evaluate(&params, start, None, start == 0, sinks)?;
    let initial_psnr = first.psnr;
    for it in start..settings.iterations {
        let idx = batch_indices(stamp.seed, it, problem.items.len(), settings.batch_size);
        let (next, loss) = match &problem.items {
            Items::Points(all) => {
                let b: Vec<PointSample> = idx.iter().map(|&i| all[i].clone()).collect();
                train_step(model, &mut opt, &params, Batch::Points(&b), it, exec)?
            }
            Items::Rays(all, opts) => {
                let b: Vec<RaySample> = idx.iter().map(|&i| all[i].clone()).collect();
                train_step(model, &mut opt, &params, Batch::Rays(&b, opts), it, exec)?
            }
        };
        params = next;
        history.push(loss);
        let done = it + 1;
        if done % settings.eval_every == 0 || done == settings.iterations {
            evaluate(&params, done, Some(loss), true, sinks)?;
        }
    }
    let (last, img) = evaluate(&params, settings.iterations.max(start), history.last().copied(), false, sinks)?;
    if evals.last().map(|e| e.iteration) != Some(last.iteration) {
        evals.push(last);
    }
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config_hash: stamp.config_hash.clone(),
        seed: stamp.seed,
        config: config.entries().clone(),
        iteration: settings.iterations.max(start),
        params,
        velocity: opt.velocity,
        loss_history: history,
    };
    Ok((evals, checkpoint, img, initial_psnr))
}

fn finish_fit(
    task: &str,
    problem: &Problem<'_>,
    cfg: &Config,
    stamp: Stamp,
    exec: Execution,
    out: PathBuf,
    write: bool,
) -> Result<FitReport> {
    let settings = TrainSettings::from_config(cfg)?;
    let resume = match cfg.get("resume") {
        Some(_) => Some(Checkpoint::load(&existing_path(cfg, "resume")?)?),
        None => None,
    };
    let mut sinks = if write {
        Sinks {
            metrics: Some(JsonLines::create(&out.join("metrics.jsonl"), stamp.clone())?),
            timing: Some(JsonLines::create(&out.join("timing.jsonl"), stamp.clone())?),
        }
    } else {
        Sinks { metrics: None, timing: None }
    };
    let (evals, checkpoint, prediction, initial_psnr) = train(problem, &settings, &stamp, cfg, resume, exec, &mut sinks)?;
    let last = evals.last().cloned().expect("final evaluation");
    if write {
        sinks.metrics.take().map(JsonLines::finish).transpose()?;
        sinks.timing.take().map(JsonLines::finish).transpose()?;
        let meta = stamp.meta();
        problem.target.save(&out.join("target.png"), &meta)?;
        prediction.save(&out.join("prediction.png"), &meta)?;
        checkpoint.save(&out.join("checkpoint.json"))?;
        cfg.save(&out.join("config.txt"))?;
        let (na, nb) = problem.model.qubits();
        write_json(
            &out.join("summary.json"),
            &stamp_json(
                &stamp,
                to_map(json!({
                    "task": task,
                    "iterations": checkpoint.iteration,
                    "parameters": problem.model.param_count(),
                    "qubits_position": na,
                    "qubits_direction": nb,
                    "initial_psnr": float_json(initial_psnr),
                    "final_psnr": float_json(last.psnr),
                    "final_ssim": last.ssim,
                })),
            ),
        )?;
    }
    Ok(FitReport {
        stamp,
        model: problem.model.config().clone(),
        initial_psnr,
        final_psnr: last.psnr,
        final_ssim: last.ssim,
        evals,
        checkpoint,
        prediction,
        target: problem.target.clone(),
        output: out,
    })
}

/// Pixel center `(x, y)` of a `w × h` image mapped to `[-1, 1]²`.
fn pixel_coord(x: usize, y: usize, w: usize, h: usize) -> Vec<f64> {
    vec![2.0 * (x as f64 + 0.5) / w as f64 - 1.0, 2.0 * (y as f64 + 0.5) / h as f64 - 1.0]
}

/// Target image for `fit2d` and `ablate`.
pub fn fit2d_target(cfg: &Config) -> Result<Image> {
    let size: usize = cfg.get_or("size", 16)?;
    if size == 0 || size > MAX_IMAGE_SIDE {
        return Err(Error::Config(format!("size must be in 1..={MAX_IMAGE_SIDE}, got {size}")));
    }
    match cfg.get_or::<String>("scene", "natural".into())?.as_str() {
        "constant" => {
            let c: Vec<f64> = cfg.list_or("color", vec![0.8, 0.3, 0.5])?;
            if c.len() != 3 || c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config("color must be three values in [0, 1]".into()));
            }
            Ok(Image::filled(size, size, [c[0], c[1], c[2]]))
        }
        "natural" => natural_image(size, cfg.require("seed")?),
        "image" => {
            let img = Image::load(&existing_path(cfg, "image")?)?.downsample_to(MAX_IMAGE_SIDE);
            if img.width() < size || img.height() < size {
                return Err(Error::Config(format!("image is smaller than the {size}×{size} crop")));
            }
            img.crop((img.width() - size) / 2, (img.height() - size) / 2, size, size)
        }
        other => Err(Error::Config(format!("unknown fit2d scene `{other}` (expected constant|natural|image)"))),
    }
}

fn fit2d_problem(cfg: &Config, exec: Execution) -> Result<Problem<'static>> {
    let target = fit2d_target(cfg)?;
    let (w, h) = (target.width(), target.height());
    let model = QrfModel::new(model_config(cfg, 2, false)?)?;
    let mut items = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            items.push(PointSample { position: pixel_coord(x, y, w, h), target: target.get(x, y) });
        }
    }
    let predict = move |m: &QrfModel, params: &[f64]| -> Result<Image> {
        let bound = m.bind(params)?;
        let px = exec::map_range(exec, w * h, |i| bound.evaluate(&pixel_coord(i % w, i / w, w, h), [0.0, 0.0]));
        let mut img = Image::new(w, h);
        for (i, s) in px.into_iter().enumerate() {
            img.set(i % w, i / w, s?.color);
        }
        Ok(img)
    };
    Ok(Problem { model, items: Items::Points(items), target, predict: Box::new(predict) })
}

/// Image regression from pixel coordinates to colors.
pub fn run_fit2d(cfg: &Config) -> Result<FitReport> {
    let (stamp, exec, out) = prepare(cfg, "fit2d")?;
    let problem = fit2d_problem(cfg, exec)?;
    finish_fit("fit2d", &problem, cfg, stamp, exec, out, true)
}

/// Training views and the held-out view of the toy scene.
pub struct SceneViews {
    pub train: Vec<(Camera, Image)>,
    pub held_out: (Camera, Image),
}

pub fn scene_views(cfg: &Config, exec: Execution) -> Result<SceneViews> {
    let views: usize = cfg.get_or("views", 6)?;
    let size: usize = cfg.get_or("view_size", 8)?;
    let gt_samples: usize = cfg.get_or("gt_samples", 64)?;
    if views == 0 || size == 0 || size > MAX_IMAGE_SIDE {
        return Err(Error::Config("views must be positive and view_size in 1..=64".into()));
    }
    let opts = scene_render_options(gt_samples, exec);
    let scene: Box<dyn RadianceField> = match cfg.get_or::<String>("scene", "sphere".into())?.as_str() {
        "sphere" => Box::new(SphereScene::default()),
        "empty" => Box::new(EmptyScene),
        other => return Err(Error::Config(format!("unknown fit3d scene `{other}` (expected sphere|empty)"))),
    };
    let step = 2.0 * PI / views as f64;
    let mut train = Vec::with_capacity(views);
    for v in 0..views {
        let cam = orbit_camera(v as f64 * step, size)?;
        let img = render_image(scene.as_ref(), &cam, &opts)?;
        train.push((cam, img));
    }
    let cam = orbit_camera(0.5 * step, size)?;
    let img = render_image(scene.as_ref(), &cam, &opts)?;
    Ok(SceneViews { train, held_out: (cam, img) })
}

fn fit3d_problem(cfg: &Config, exec: Execution) -> Result<Problem<'static>> {
    let views = scene_views(cfg, exec)?;
    let samples: usize = cfg.get_or("samples", 16)?;
    let opts = scene_render_options(samples, exec);
    let model = QrfModel::new(model_config(cfg, 3, true)?)?;
    let mut items = Vec::new();
    for (cam, img) in &views.train {
        for (i, ray) in cam.generate_rays()?.into_iter().enumerate() {
            items.push(RaySample { ray, target: img.get(i % cam.width, i / cam.width) });
        }
    }
    let (cam, target) = views.held_out;
    let predict = move |m: &QrfModel, params: &[f64]| -> Result<Image> {
        let bound = m.bind(params)?;
        render_image(&bound, &cam, &opts)
    };
    Ok(Problem { model, items: Items::Rays(items, opts), target, predict: Box::new(predict) })
}

/// Toy-scene fit from rendered views; evaluated on a held-out view.
pub fn run_fit3d(cfg: &Config) -> Result<FitReport> {
    let (stamp, exec, out) = prepare(cfg, "fit3d")?;
    let problem = fit3d_problem(cfg, exec)?;
    finish_fit("fit3d", &problem, cfg, stamp, exec, out, true)
}

/// Bitwise check that σ does not depend on direction at `positions`.
pub fn sigma_view_independent(model: &QrfModel, params: &[f64], positions: &[[f64; 3]], directions: &[([f64; 2], [f64; 2])]) -> Result<bool> {
    let bound = model.bind(params)?;
    let dims = model.config().position_dims;
    for p in positions {
        for (d1, d2) in directions {
            let a = bound.evaluate(&p[..dims], *d1)?.sigma;
            let b = bound.evaluate(&p[..dims], *d2)?.sigma;
            if a.to_bits() != b.to_bits() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Rendering

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumPixel {
    pub x: usize,
    pub y: usize,
    pub channel: usize,
    /// `Σ_i w_i c_i` over the `2^n` samples.
    pub classical: f64,
    /// Same sum over fixed-point-quantized per-sample energies.
    pub quantized: f64,
    pub quantum: f64,
    pub error_bound: f64,
    pub oracle_queries: u64,
}

#[derive(Clone, Debug)]
pub struct RenderReport {
    pub stamp: Stamp,
    pub image: Image,
    pub quantum: Vec<QuantumPixel>,
    pub output: PathBuf,
}

/// Renders a view of a trained checkpoint. With `quantum_pixels = k > 0`,
/// the first `k` pixels of the center row are also composited by quantum
/// mean estimation: sample `i` of `N = 2^n` contributes the energy
/// `N·w_i·c_i`, whose mean is the composite.
pub fn run_render(cfg: &Config) -> Result<RenderReport> {
    let (stamp, exec, out) = prepare(cfg, "render")?;
    let ckpt = Checkpoint::load(&existing_path(cfg, "checkpoint")?)?;
    let train_cfg = ckpt.config();
    let model = QrfModel::new(model_config(&train_cfg, 3, true)?)?;
    let bound = model.bind(&ckpt.params)?;
    let width: usize = cfg.get_or("width", 16)?;
    let height: usize = cfg.get_or("height", width)?;
    let samples: usize = cfg.get_or("samples", 16)?;
    let azimuth: f64 = cfg.get_or("azimuth", 0.3)?;
    let (ev, ee) = (0.35f64, 3.0);
    let eye = [ee * ev.cos() * azimuth.sin(), ee * ev.sin(), ee * ev.cos() * azimuth.cos()];
    let cam = Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], 1.25 * width.min(height) as f64, width, height)?;
    let image = render_image(&bound, &cam, &scene_render_options(samples, exec))?;
    let meta = stamp.meta();
    image.save(&out.join("render.png"), &meta)?;

    let k: usize = cfg.get_or("quantum_pixels", 0)?;
    if k > MAX_QUANTUM_PIXELS || k > width {
        return Err(Error::ResourceLimit(format!("quantum demo renders at most {MAX_QUANTUM_PIXELS} pixels, asked for {k}")));
    }
    let mut quantum = Vec::new();
    if k > 0 {
        let n_bits: u32 = cfg.get_or("quantum_index_bits", 2)?;
        let frac: u32 = cfg.get_or("quantum_frac_bits", 3)?;
        let t: usize = cfg.get_or("quantum_qpe_bits", 6)?;
        let n = 1usize << n_bits;
        // Energies lie in [0, N]; b0 integer bits cover that range.
        let int_bits = (n as f64 + 1.0).log2().ceil() as u32;
        let spec = FixedPointSpec::new(int_bits, int_bits + frac)?;
        let opts = scene_render_options(n, Execution::Sequential);
        let rays = cam.generate_rays()?;
        let y = height / 2;
        for x in 0..k {
            let ray = &rays[y * width + x];
            let Some((depths, deltas)) = opts.depths(ray, 0)? else { continue };
            let dir = direction_angles(&ray.direction);
            let fs = depths
                .iter()
                .map(|&z| {
                    let p = ray.at(z);
                    bound.evaluate(&[p.x, p.y, p.z], dir)
                })
                .collect::<Result<Vec<_>>>()?;
            let set = SampleSet {
                colors: fs.iter().map(|f| f.color).collect(),
                sigmas: fs.iter().map(|f| f.sigma).collect(),
                depths,
                deltas,
            };
            let weights = composite_weights(&set);
            for ch in 0..3 {
                let energies: Vec<f64> = (0..n).map(|i| n as f64 * weights[i] * set.colors[i][ch]).collect();
                let table = EnergyTable::new(energies)?;
                let est = estimate_mean(&table, &spec, t, OracleMode::Compiled)?;
                quantum.push(QuantumPixel {
                    x,
                    y,
                    channel: ch,
                    classical: composite(&set).color[ch],
                    quantized: table.quantized_mean(&spec)?,
                    quantum: est.mean,
                    error_bound: est.error_bound,
                    oracle_queries: est.count.oracle_queries,
                });
            }
        }
        let mut csv = String::from("x,y,channel,classical,quantized,quantum,error_bound,oracle_queries,config_hash,seed\n");
        for q in &quantum {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                q.x, q.y, q.channel, q.classical, q.quantized, q.quantum, q.error_bound, q.oracle_queries, stamp.config_hash, stamp.seed
            ));
        }
        fs::write(out.join("quantum_pixels.csv"), csv)?;
    }
    Ok(RenderReport { stamp, image, quantum, output: out })
}

/// `w_i = T_i (1 - e^{-σ_i δ_i})`.
fn composite_weights(s: &SampleSet) -> Vec<f64> {
    let mut t = 1.0;
    s.sigmas
        .iter()
        .zip(&s.deltas)
        .map(|(sig, d)| {
            let e = (-sig * d).exp();
            let w = t * (1.0 - e);
            t *= e;
            w
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Counting

fn oracle_mode(cfg: &Config) -> Result<OracleMode> {
    match cfg.get_or::<String>("oracle", "compiled".into())?.as_str() {
        "compiled" => Ok(OracleMode::Compiled),
        "gate" => Ok(OracleMode::GateLevel),
        other => Err(Error::Config(format!("unknown oracle mode `{other}` (expected compiled|gate)"))),
    }
}

/// Quantum count and mean estimate for one energy table.
pub fn run_qcount(cfg: &Config) -> Result<Value> {
    let (stamp, _, out) = prepare(cfg, "qcount")?;
    let table = EnergyTable::new(read_energies(&existing_path(cfg, "energies")?)?)?;
    let spec = FixedPointSpec::new(cfg.get_or("int_bits", 2)?, cfg.get_or("total_bits", 4)?)?;
    let t: usize = cfg.get_or("qpe_bits", 6)?;
    let mode = oracle_mode(cfg)?;
    let count = quantum_count(&table, &spec, t, mode)?;
    let n = table.len() as f64;
    let report = stamp_json(
        &stamp,
        to_map(json!({
            "estimate": count.estimate,
            "true_count": marked_count(&table, &spec)?,
            "total_states": count.total_states,
            "qpe_bits": count.qpe_bits,
            "oracle_queries": count.oracle_queries,
            "error_bound": count.error_bound,
            "mean_estimate": spec.step() * (count.estimate - n) / n,
            "mean_error_bound": spec.step() * count.error_bound / n,
            "quantized_mean": table.quantized_mean(&spec)?,
            "true_mean": table.mean(),
        })),
    );
    write_json(&out.join("qcount.json"), &report)?;
    Ok(report)
}

/// Error-versus-cost study; writes `convergence.csv` and a JSON summary.
pub fn run_convergence(cfg: &Config) -> Result<crate::count::StudyReport> {
    let (stamp, exec, out) = prepare(cfg, "convergence")?;
    let spec = FixedPointSpec::new(cfg.get_or("int_bits", 2)?, cfg.get_or("total_bits", 4)?)?;
    let table = match cfg.get("energies") {
        Some(_) => EnergyTable::new(read_energies(&existing_path(cfg, "energies")?)?)?,
        None => EnergyTable::random_representable(cfg.get_or("index_bits", 3)?, &spec, cfg.get_or("table_seed", 0)?)?,
    };
    let (qmin, qmax): (usize, usize) = (cfg.get_or("qpe_min", 3)?, cfg.get_or("qpe_max", 8)?);
    let (cmin, cmax): (usize, usize) = (cfg.get_or("nc_min", 16)?, cfg.get_or("nc_max", 4096)?);
    if qmin > qmax || cmin == 0 || cmin > cmax {
        return Err(Error::Config("need qpe_min <= qpe_max and 0 < nc_min <= nc_max".into()));
    }
    let mut mc_samples = Vec::new();
    let mut c = cmin;
    while c <= cmax {
        mc_samples.push(c);
        c *= 2;
    }
    let study = StudyConfig {
        qpe_bits: (qmin..=qmax).collect(),
        mc_samples,
        trials: cfg.get_or("trials", 200)?,
        seed: stamp.seed,
        mode: oracle_mode(cfg)?,
        exec,
    };
    let report = convergence_study(&table, &spec, &study)?;
    let mut csv = String::from("method,cost,error,envelope,reference,config_hash,seed\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.cost, r.error, r.envelope, r.reference, stamp.config_hash, stamp.seed
        ));
    }
    fs::write(out.join("convergence.csv"), csv)?;
    write_json(
        &out.join("convergence_summary.json"),
        &stamp_json(
            &stamp,
            to_map(json!({
                "mc_slope": report.mc_slope,
                "quantum_envelope_slope": report.quantum_slope,
                "quantum_bound_slope": report.quantum_bound_slope,
                "true_mean": report.true_mean,
                "quantized_mean": report.quantized_mean,
                "energies": table.energies(),
                "note": report.note,
            })),
        ),
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Ablation

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub activation: ActivationKind,
    pub encoder: EncoderKind,
    pub circuit: TemplateKind,
    pub repeat: usize,
    pub seed: u64,
    /// `Err` carries the failure message; the grid continues.
    pub outcome: std::result::Result<(f64, f64, f64), String>,
}

/// Grid of `fit2d` runs (activation × encoder × circuit × repeat) sharing
/// one budget. Repeat `r` uses seed `seed + r`.
pub fn run_ablate(cfg: &Config) -> Result<Vec<AblationRow>> {
    let (stamp, exec, out) = prepare(cfg, "ablate")?;
    let acts: Vec<ActivationKind> = cfg.list_or("activations", vec![ActivationKind::QRelu])?;
    let encs: Vec<EncoderKind> = cfg.list_or("encoders", vec![EncoderKind::DenseAngle, EncoderKind::Angle])?;
    let circs: Vec<TemplateKind> = cfg.list_or("circuits", vec![TemplateKind::Circuit5])?;
    let repeats: usize = cfg.get_or("repeats", 1)?;
    let mut cells = Vec::new();
    for &a in &acts {
        for &e in &encs {
            for &c in &circs {
                for r in 0..repeats {
                    cells.push((a, e, c, r));
                }
            }
        }
    }
    let run_cell = |&(a, e, c, r): &(ActivationKind, EncoderKind, TemplateKind, usize)| {
        let seed = stamp.seed + r as u64;
        let mut cell = cfg.clone();
        for k in ABLATE_KEYS {
            cell.remove(k);
        }
        cell.set("activation", a.as_str());
        cell.set("encoder", e.as_str());
        cell.set("circuit", c.as_str());
        cell.set("seed", seed.to_string());
        let outcome = fit2d_problem(&cell, exec)
            .and_then(|p| {
                let s = Stamp { config_hash: stamp.config_hash.clone(), seed };
                finish_fit("fit2d", &p, &cell, s, exec, out.clone(), false)
            })
            .map(|rep| (rep.initial_psnr, rep.final_psnr, rep.final_ssim))
            .map_err(|err| err.to_string());
        AblationRow { activation: a, encoder: e, circuit: c, repeat: r, seed, outcome }
    };
    let rows = exec::map(exec, &cells, run_cell);

    let mut csv = String::from("activation,encoder,circuit,repeat,seed,initial_psnr,final_psnr,final_ssim,status,config_hash\n");
    for r in &rows {
        let (i, f, s, status) = match &r.outcome {
            Ok((i, f, s)) => (i.to_string(), f.to_string(), s.to_string(), "ok".to_string()),
            Err(m) => (String::new(), String::new(), String::new(), format!("\"error: {}\"", m.replace('"', "'"))),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{i},{f},{s},{status},{}\n",
            r.activation, r.encoder, r.circuit, r.repeat, r.seed, stamp.config_hash
        ));
    }
    fs::write(out.join("ablation.csv"), csv)?;
    let dense_vs_angle = dense_beats_angle(&rows);
    write_json(
        &out.join("ablation_summary.json"),
        &stamp_json(
            &stamp,
            to_map(json!({
                "cells": rows.len(),
                "failures": rows.iter().filter(|r| r.outcome.is_err()).count(),
                "dense_ge_angle_fraction": dense_vs_angle,
            })),
        ),
    )?;
    Ok(rows)
}

/// Fraction of matched (activation, circuit, repeat) pairs where the dense
/// angle encoder's final PSNR is at least the angle encoder's.
pub fn dense_beats_angle(rows: &[AblationRow]) -> Option<f64> {
    let mut wins = 0usize;
    let mut total = 0usize;
    for d in rows.iter().filter(|r| r.encoder == EncoderKind::DenseAngle) {
        let pair = rows.iter().find(|a| {
            a.encoder == EncoderKind::Angle && a.activation == d.activation && a.circuit == d.circuit && a.repeat == d.repeat
        });
        if let (Some(a), Ok(dv)) = (pair, &d.outcome) {
            if let Ok(av) = &a.outcome {
                total += 1;
                wins += (dv.1 >= av.1) as usize;
            }
        }
    }
    (total > 0).then(|| wins as f64 / total as f64)
}

/// Runs the subcommand named `task`.
pub fn run_task(task: &str, cfg: &Config) -> Result<String> {
    Ok(match task {
        "fit2d" => {
            let r = run_fit2d(cfg)?;
            format!("fit2d: PSNR {:.2} -> {:.2} dB, SSIM {:.4}; wrote {}", r.initial_psnr, r.final_psnr, r.final_ssim, r.output.display())
        }
        "fit3d" => {
            let r = run_fit3d(cfg)?;
            format!("fit3d: held-out PSNR {:.2} -> {:.2} dB, SSIM {:.4}; wrote {}", r.initial_psnr, r.final_psnr, r.final_ssim, r.output.display())
        }
        "render" => {
            let r = run_render(cfg)?;
            format!("render: {}x{} image, {} quantum pixel channels; wrote {}", r.image.width(), r.image.height(), r.quantum.len(), r.output.display())
        }
        "qcount" => {
            let v = run_qcount(cfg)?;
            format!("qcount: M̂ = {} (true {}), mean̂ = {}", v["estimate"], v["true_count"], v["mean_estimate"])
        }
        "convergence" => {
            let r = run_convergence(cfg)?;
            format!("convergence: MC slope {:?}, quantum envelope slope {:?}", r.mc_slope, r.quantum_slope)
        }
        "ablate" => {
            let rows = run_ablate(cfg)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            format!("ablate: {} cells, {failed} failed, dense >= angle fraction {:?}", rows.len(), dense_beats_angle(&rows))
        }
        other => return Err(Error::Config(format!("unknown task `{other}`"))),
    })
}
