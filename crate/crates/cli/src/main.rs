use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vff::exec::with_threads;
use vff::fusion::FusionMode;
use vff::geometry::{KittiCalib, Projection, VoxelIndex};
use vff::pipeline::{
    bench_rays, build_train_set, cast_rays, gen_scene, grad_check_vff, prepare_frame, run_fusion_pass, sample_pixels,
    train_heads, Config, FeatureEncoder, Model, SamplerMode, SceneSpec,
};
use vff::Exec;

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "vff", version, about = "Voxel field fusion: desk-scale runs and checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Fusion mode: single, local_aggregate, local_propagate, ray_wise.
    #[arg(long, global = true)]
    mode: Option<FusionMode>,
    /// Fusion radius in voxels.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Sampler: importance, uniformity, density, sparsity.
    #[arg(long, global = true)]
    sampler: Option<SamplerMode>,
    /// Ray budget per frame.
    #[arg(long = "n", global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    flip: bool,
    #[arg(long, global = true)]
    rescale: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    rotate: Option<f64>,
    /// Image feature channels.
    #[arg(long, global = true)]
    channels: Option<usize>,
    /// Apply the inference score threshold.
    #[arg(long, global = true)]
    inference: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and write it to a directory.
    GenScene {
        #[arg(long)]
        out: PathBuf,
    },
    /// Project voxels through the (augmented) scene transform.
    Project {
        /// Voxel as `i,j,k`; repeatable. Defaults to every voxel.
        #[arg(long)]
        voxel: Vec<String>,
    },
    /// Sample ray seed cells.
    Sample,
    /// Cast rays for the sampled cells.
    Rays,
    /// Run one fusion pass and write its report.
    Fuse {
        /// JSON-lines report path; printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the sampler head and coordinate MLP on the toy set.
    Train {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Finite-difference check of the full objective.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        coords: usize,
    },
    /// Time ray construction against ray count.
    Bench {
        /// Voxels per grid side.
        #[arg(long, default_value_t = 128)]
        grid: usize,
        /// Largest ray count; the table also covers 1/2, 1/4 and 1/8 of it.
        #[arg(long, default_value_t = 4096)]
        rays: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.fusion.mode = m;
        }
        if let Some(r) = self.radius {
            cfg.fusion.radius = r;
        }
        if let Some(s) = self.sampler {
            cfg.sampler.mode = s;
        }
        if let Some(n) = self.n {
            cfg.sampler.n = n;
        }
        if self.flip {
            cfg.augment.flip = true;
        }
        if let Some(r) = self.rescale {
            cfg.augment.rescale = r;
        }
        if let Some(r) = self.rotate {
            cfg.augment.rotate = r;
        }
        if let Some(c) = self.channels {
            cfg.scene.channels = c;
        }
        if self.inference {
            cfg.inference = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

fn parse_voxel(s: &str) -> Result<VoxelIndex> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("voxel {s:?} must be i,j,k"))?;
    match parts[..] {
        [i, j, k] => Ok(VoxelIndex::new(i, j, k)),
        _ => bail!("voxel {s:?} must have three indices"),
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string(v).expect("json value serializes"));
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = cli.common.config()?;
    let exec = cli.common.exec();
    let model = || Model::new(cfg.scene.channels, 4, 1, cfg.seed);
    let scene = || -> Result<_> { Ok(gen_scene(&SceneSpec::from_config(&cfg)?)?) };

    match &cli.command {
        Command::GenScene { out } => {
            let s = scene()?;
            fs::create_dir_all(out)?;
            s.points.write_kitti_bin(fs::File::create(out.join("points.bin"))?)?;
            let calib = KittiCalib {
                p2: s.camera.matrix,
                ..KittiCalib::identity()
            };
            fs::write(out.join("calib.txt"), calib.to_kitti_string())?;
            let meta = json!({
                "seed": cfg.seed,
                "points": s.points.len(),
                "image": [s.camera.height, s.camera.width],
                "boxes3d": s.boxes3d,
                "boxes2d": s.boxes2d,
            });
            fs::write(out.join("scene.json"), serde_json::to_string_pretty(&meta)?)?;
            fs::write(out.join("config.toml"), cfg.to_toml())?;
            print_json(&meta);
        }
        Command::Project { voxel } => {
            let s = scene()?;
            let frame = prepare_frame(&s, &cfg, &FeatureEncoder::from_config(&cfg))?;
            let voxels: Vec<VoxelIndex> = if voxel.is_empty() {
                frame.grid.iter().collect()
            } else {
                voxel.iter().map(|v| parse_voxel(v)).collect::<Result<_>>()?
            };
            for v in voxels {
                if !frame.grid.contains(v) {
                    bail!("voxel {:?} outside grid {:?}", v.0, frame.grid.dims);
                }
                let cell = match frame.vt.project(v) {
                    Projection::Cell { u, v } => json!([u, v]),
                    Projection::Behind => json!("behind"),
                    Projection::OutOfBounds => json!("out_of_bounds"),
                };
                print_json(&json!({ "voxel": v.0, "depth": frame.vt.depth(v), "cell": cell }));
            }
        }
        Command::Sample => {
            let s = scene()?;
            let frame = prepare_frame(&s, &cfg, &FeatureEncoder::from_config(&cfg))?;
            let samples = sample_pixels(&frame, &cfg, &model(), cfg.seed)?;
            print_json(&json!({
                "mode": cfg.sampler.mode,
                "kept_windows": frame.partition.kept().count(),
                "pixels": samples.pixels,
                "scores": samples.scores,
            }));
        }
        Command::Rays => {
            let s = scene()?;
            let frame = prepare_frame(&s, &cfg, &FeatureEncoder::from_config(&cfg))?;
            let samples = sample_pixels(&frame, &cfg, &model(), cfg.seed)?;
            for ray in cast_rays(&frame, &samples.pixels, exec)? {
                print_json(&json!({
                    "pixel": [ray.pixel.0, ray.pixel.1],
                    "voxels": ray.len(),
                    "anchors": ray.anchors.len(),
                }));
            }
        }
        Command::Fuse { report } => {
            let (_, rep) = run_fusion_pass(&scene()?, &cfg, &model(), exec)?;
            let lines = rep.to_json_lines();
            match report {
                Some(path) => {
                    fs::write(path, &lines)?;
                    println!("{}", rep.hash());
                }
                None => print!("{lines}"),
            }
        }
        Command::Train { steps, lr, scenes } => {
            let mut cfg = cfg.clone();
            if let Some(s) = scenes {
                cfg.train.scenes = *s;
            }
            let steps = steps.unwrap_or(cfg.train.steps);
            let lr = lr.unwrap_or(cfg.train.lr);
            let frames = build_train_set(&cfg, exec)?;
            let mut m = Model::new(cfg.scene.channels, 4, 1, cfg.seed);
            let rep = train_heads(&frames, &mut m, &cfg, steps, lr, exec)?;
            print_json(&serde_json::to_value(&rep)?);
        }
        Command::GradCheck { coords } => {
            let rep = grad_check_vff(&cfg, *coords, exec)?;
            print_json(&json!({
                "max_rel_err": rep.max_rel_err,
                "coords_checked": rep.coords_checked,
                "worst": rep.worst,
                "tolerance": GRAD_TOLERANCE,
            }));
            if !(rep.max_rel_err < GRAD_TOLERANCE) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench { grid, rays, repeats } => {
            let counts: Vec<usize> = [8, 4, 2, 1].iter().map(|d| (rays / d).max(1)).collect();
            let rep = bench_rays(*grid, &counts, *repeats, exec, cfg.seed)?;
            print!("{}", rep.table());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.common.threads;
    match with_threads(threads, || run(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
