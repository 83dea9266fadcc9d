//! `slicefuse` — streaming LiDAR-camera fusion pipeline tool.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slicefuse_core::calib::CameraRig;
use slicefuse_core::detect::{evaluate_map, DetectionSet};
use slicefuse_core::error::{Error, Result};
use slicefuse_core::fusion::volume_conv_stage;
use slicefuse_core::image_bev::{
    batch_standardize, reduce_volume_to_bev, splat_to_volume, FeatureImage, FeatureProvider,
    SeededLinearProvider,
};
use slicefuse_core::io;
use slicefuse_core::pipeline::{
    noise_sweep, run_pipeline, write_run_outputs, write_sweep_csv, NoiseSpec, RunConfig,
};
use slicefuse_core::scene::{generate_scene, read_bundle, write_bundle};
use slicefuse_core::sim::{compare_pipelines, simulate, PipelineModel};
use slicefuse_core::slicing::{assign_boxes_to_slice, slice_sweep, RawPoint};

#[derive(Parser)]
#[command(name = "slicefuse", version, about = "Streaming LiDAR-camera fusion data plane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the pipeline-facing subcommands. Command-line values
/// override the config file.
#[derive(Args, Clone, Default)]
struct RunOpts {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Sectors per LiDAR rotation.
    #[arg(long)]
    n_slices: Option<u32>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Drop a camera from the image stream (repeatable).
    #[arg(long = "no-camera", value_name = "IDX")]
    no_camera: Vec<usize>,
    /// Calibration noise: per-axis Euler bound, degrees.
    #[arg(long)]
    noise_deg: Option<f64>,
    /// Calibration noise: per-axis translation bound, centimeters.
    #[arg(long)]
    noise_cm: Option<f64>,
}

impl RunOpts {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &self.config {
            Some(path) => io::read_json(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.n_slices {
            cfg.n_slices = n;
        }
        for &idx in &self.no_camera {
            if !cfg.disabled_cameras.contains(&idx) {
                cfg.disabled_cameras.push(idx);
            }
        }
        if self.noise_deg.is_some() || self.noise_cm.is_some() {
            cfg.noise = Some(NoiseSpec {
                max_angle_deg: self.noise_deg.unwrap_or(0.0),
                max_trans_m: self.noise_cm.unwrap_or(0.0) / 100.0,
                seed: None,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle (points, boxes, calibration, images).
    Gen {
        #[command(flatten)]
        opts: RunOpts,
        /// Number of objects to place.
        #[arg(long)]
        n_objects: Option<usize>,
        /// Number of ground-clutter points.
        #[arg(long)]
        clutter: Option<usize>,
        /// Camera image width (must be divisible by 4).
        #[arg(long, default_value_t = 512)]
        image_w: u32,
        /// Camera image height (must be divisible by 4).
        #[arg(long, default_value_t = 288)]
        image_h: u32,
    },
    /// Split a bundle's sweep into sectors; dump per-slice point files and
    /// the ground-truth assignment table.
    Slice {
        #[command(flatten)]
        opts: RunOpts,
        /// Scene bundle directory (from `gen`).
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Splat camera features into the voxel volume and reduce to the image
    /// BEV map.
    Project {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        bundle: PathBuf,
        /// Directory of precomputed `cam{i}.feat` maps that replace the
        /// reference feature provider.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Run the full per-slice pipeline over a bundle.
    Run {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Evaluate detections against ground truth (center-distance mAP).
    Eval {
        #[command(flatten)]
        opts: RunOpts,
        /// Detections CSV (frame_id,slice,class,score,cx,cy,cz,l,w,h,yaw).
        #[arg(long)]
        dets: PathBuf,
        /// Ground-truth scene JSON.
        #[arg(long)]
        scene: PathBuf,
    },
    /// Sweep calibration-noise levels and report mAP per level.
    NoiseSweep {
        #[command(flatten)]
        opts: RunOpts,
        /// Noise levels as `deg:cm` pairs.
        #[arg(long, default_value = "0:0,1:10,3:30,5:50", value_delimiter = ',')]
        levels: Vec<String>,
        /// Number of scene seeds.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 512)]
        image_w: u32,
        #[arg(long, default_value_t = 288)]
        image_h: u32,
    },
    /// Simulate pipeline models and report latency and throughput.
    Simulate {
        #[command(flatten)]
        opts: RunOpts,
        /// Bundled model name (`parallel`, `sequential`) or a JSON file;
        /// repeat for a comparison report.
        #[arg(long, required = true)]
        model: Vec<String>,
        #[arg(long, default_value_t = 4)]
        rotations: u32,
    },
    /// Convolution FLOP cost model: full vs cropped.
    Flops {
        #[command(flatten)]
        opts: RunOpts,
        /// JSON list of conv layer specs; defaults to the bundled 3D stack.
        #[arg(long)]
        stage: Option<PathBuf>,
    },
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_gen(
    opts: &RunOpts,
    n_objects: Option<usize>,
    clutter: Option<usize>,
    image_w: u32,
    image_h: u32,
) -> Result<()> {
    let mut cfg = opts.load()?;
    if let Some(n) = n_objects {
        cfg.scene.n_objects = n;
    }
    if let Some(c) = clutter {
        cfg.scene.clutter_points = c;
    }
    let rig = CameraRig::surround(image_w, image_h)?;
    let scene = generate_scene(cfg.seed, &cfg.scene, &rig, &cfg.grid)?;
    write_bundle(&opts.out, &scene)?;
    println!(
        "bundle: {} objects, {} points, {} cameras -> {}",
        scene.boxes.len(),
        scene.points.len(),
        scene.rig.len(),
        opts.out.display()
    );
    Ok(())
}

fn cmd_slice(opts: &RunOpts, bundle: &Path) -> Result<()> {
    let cfg = opts.load()?;
    let scene = read_bundle(bundle)?;
    ensure_out(&opts.out)?;
    let slices = slice_sweep(&scene.points, cfg.n_slices)?;
    let mut assignment = String::from("slice,box_index,class,cx,cy\n");
    for slice in &slices {
        let raw: Vec<RawPoint> = slice
            .points
            .iter()
            .map(|p| RawPoint { x: p.x, y: p.y, z: p.z, r: p.r, m: p.m })
            .collect();
        io::write_point_cloud(
            &opts.out.join(format!("slice_{:02}.bin", slice.spec.index)),
            &raw,
        )?;
        for (bi, bx) in scene.boxes.iter().enumerate() {
            if assign_boxes_to_slice(std::slice::from_ref(bx), &slice.spec).len() == 1 {
                assignment.push_str(&format!(
                    "{},{},{},{},{}\n",
                    slice.spec.index, bi, bx.class_id, bx.center.x, bx.center.y
                ));
            }
        }
        println!("slice {:02}: {} points", slice.spec.index, slice.points.len());
    }
    std::fs::write(opts.out.join("gt_assignment.csv"), assignment)?;
    Ok(())
}

/// Feature maps for every enabled camera of the scene.
fn scene_features(
    scene: &slicefuse_core::scene::SceneData,
    cfg: &RunConfig,
) -> Result<Vec<FeatureImage>> {
    let provider = SeededLinearProvider::from_seed(cfg.grid.channels, cfg.seed)?;
    scene
        .images
        .iter()
        .enumerate()
        .filter(|(idx, _)| !cfg.disabled_cameras.contains(idx))
        .map(|(idx, img)| provider.features(img, idx))
        .collect()
}

fn cmd_project(opts: &RunOpts, bundle: &Path, feature_dir: Option<&Path>) -> Result<()> {
    let cfg = opts.load()?;
    let scene = read_bundle(bundle)?;
    ensure_out(&opts.out)?;
    let rig = match cfg.calib_noise() {
        Some(noise) => scene.rig.perturbed(&noise),
        None => scene.rig.clone(),
    };
    let features = match feature_dir {
        Some(dir) => (0..scene.rig.len())
            .filter(|idx| !cfg.disabled_cameras.contains(idx))
            .map(|idx| io::read_feature_image(&dir.join(format!("cam{idx}.feat")), idx))
            .collect::<Result<Vec<_>>>()?,
        None => scene_features(&scene, &cfg)?,
    };
    let mut volumes = vec![splat_to_volume(&features, &rig, &cfg.grid, None)?];
    batch_standardize(&mut volumes)?;
    let map = reduce_volume_to_bev(&volumes[0], None)?;
    let path = opts.out.join("i_bev.bev");
    io::write_bev(&path, &map)?;
    let occupied = map.mask().iter().filter(|&&m| m).count();
    println!(
        "i_bev {}x{}x{}: {} occupied columns -> {}",
        map.nx(),
        map.ny(),
        map.channels(),
        occupied,
        path.display()
    );
    Ok(())
}

fn cmd_run(opts: &RunOpts, bundle: &Path) -> Result<()> {
    let cfg = opts.load()?;
    let scene = read_bundle(bundle)?;
    let output = run_pipeline(&scene, &cfg, None)?;
    write_run_outputs(&opts.out, &output)?;
    println!(
        "slices: {}, detections: {}, dropped points: {}",
        cfg.n_slices,
        output.detections.len(),
        output.dropped_points
    );
    match output.eval.as_ref().and_then(|e| e.mean_ap) {
        Some(map) => println!("mAP: {map:.4}"),
        None => println!("mAP: absent (no evaluable ground truth)"),
    }
    Ok(())
}

fn cmd_eval(opts: &RunOpts, dets: &Path, scene: &Path) -> Result<()> {
    let cfg = opts.load()?;
    let detections: DetectionSet = io::read_detections_csv(dets)?;
    let (_, boxes) = io::read_scene(scene)?;
    let report = evaluate_map(&detections, &boxes, &cfg.eval)?;
    ensure_out(&opts.out)?;
    io::write_eval_csv(&opts.out.join("eval.csv"), &report)?;
    for e in &report.entries {
        let ap = e.ap.map(|v| format!("{v:.4}")).unwrap_or_else(|| "absent".to_string());
        println!("class {} @ {:>4} m: AP {}", e.class_id, e.threshold_m, ap);
    }
    match report.mean_ap {
        Some(map) => println!("mAP: {map:.4}"),
        None => println!("mAP: absent"),
    }
    Ok(())
}

fn parse_levels(levels: &[String]) -> Result<Vec<(f64, f64)>> {
    levels
        .iter()
        .map(|s| {
            let (deg, cm) = s
                .split_once(':')
                .ok_or_else(|| Error::config(format!("level '{s}' is not deg:cm")))?;
            let deg: f64 = deg
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad degrees in '{s}'")))?;
            let cm: f64 =
                cm.trim().parse().map_err(|_| Error::config(format!("bad cm in '{s}'")))?;
            Ok((deg, cm / 100.0))
        })
        .collect()
}

fn cmd_noise_sweep(
    opts: &RunOpts,
    levels: &[String],
    seeds: u64,
    image_w: u32,
    image_h: u32,
) -> Result<()> {
    let cfg = opts.load()?;
    let levels = parse_levels(levels)?;
    let rig = CameraRig::surround(image_w, image_h)?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let result = noise_sweep(&cfg, &rig, &levels, &seeds)?;
    ensure_out(&opts.out)?;
    write_sweep_csv(&opts.out.join("noise_sweep.csv"), &result)?;
    for (level, mean) in levels.iter().zip(&result.level_means) {
        println!("noise ({:>4}°, {:>5.2} m): mean mAP {mean:.4}", level.0, level.1);
    }
    println!(
        "clean vs noisiest: {} wins, {} ties over {} seeds; sign test p = {:.5}",
        result.wins,
        result.ties,
        seeds.len(),
        result.p_value
    );
    Ok(())
}

fn load_model(spec: &str) -> Result<PipelineModel> {
    if let Some(model) = PipelineModel::bundled(spec) {
        return Ok(model);
    }
    io::read_json(Path::new(spec))
}

fn cmd_simulate(opts: &RunOpts, model_specs: &[String], rotations: u32) -> Result<()> {
    let models = model_specs.iter().map(|s| load_model(s)).collect::<Result<Vec<_>>>()?;
    ensure_out(&opts.out)?;
    let mut summaries = Vec::new();
    for model in &models {
        let trace = simulate(model, rotations)?;
        io::write_sim_trace_csv(&opts.out.join(format!("trace_{}.csv", model.name)), &trace)?;
        println!(
            "{}: {:.1} Hz per-frame, e2e {:.2} ms (mean {:.2}, max {:.2}), wait growth {:.2} ms/slice",
            model.name,
            trace.summary.throughput_hz,
            trace.slices[0].end_to_end_ms,
            trace.summary.mean_e2e_ms,
            trace.summary.max_e2e_ms,
            trace.summary.wait_growth_ms_per_slice
        );
        summaries.push(trace.summary);
    }
    if models.len() >= 2 {
        let rows = compare_pipelines(&models, rotations)?;
        io::write_sim_summary_csv(&opts.out.join("comparison.csv"), &rows)?;
    } else {
        io::write_sim_summary_csv(&opts.out.join("summary.csv"), &summaries)?;
    }
    Ok(())
}

fn cmd_flops(opts: &RunOpts, stage: Option<&Path>) -> Result<()> {
    let stage = match stage {
        Some(path) => io::read_json(path)?,
        None => volume_conv_stage(),
    };
    ensure_out(&opts.out)?;
    let path = opts.out.join("flops.csv");
    io::write_flops_csv(&path, &stage)?;
    let (full, cropped) = slicefuse_core::fusion::stage_flops(&stage);
    println!(
        "stage: {} GFLOPs full, {} GFLOPs cropped, ratio {:.4}",
        full as f64 / 1e9,
        cropped as f64 / 1e9,
        cropped as f64 / full as f64
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen { opts, n_objects, clutter, image_w, image_h } => {
            cmd_gen(opts, *n_objects, *clutter, *image_w, *image_h)
        }
        Command::Slice { opts, bundle } => cmd_slice(opts, bundle),
        Command::Project { opts, bundle, features } => {
            cmd_project(opts, bundle, features.as_deref())
        }
        Command::Run { opts, bundle } => cmd_run(opts, bundle),
        Command::Eval { opts, dets, scene } => cmd_eval(opts, dets, scene),
        Command::NoiseSweep { opts, levels, seeds, image_w, image_h } => {
            cmd_noise_sweep(opts, levels, *seeds, *image_w, *image_h)
        }
        Command::Simulate { opts, model, rotations } => cmd_simulate(opts, model, *rotations),
        Command::Flops { opts, stage } => cmd_flops(opts, stage.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
