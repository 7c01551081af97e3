use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use nalgebra::Vector3;

use voxelfuse::descriptor::{dissimilarity, embed, extract_patch};
use voxelfuse::fusion::enumerate_pairs;
use voxelfuse::geometry::{build_lattice, pair_angle, Aabb, CameraView};
use voxelfuse::pipeline::{self, load_config, report_to_string, PipelineConfig};
use voxelfuse::predictor::predict_pair;
use voxelfuse::scene_io::{
    self, manifest_to_string, read_occgrid, read_ply_vertices, SceneManifest,
};
use voxelfuse::synth_eval::{evaluate, generate_scene, RigSpec, ShapeSpec};
use voxelfuse::weighting::{
    fit_gate, fit_weightnet, gate_to_string, weightnet_to_string, WeightSample,
};

#[derive(Parser)]
#[command(
    name = "voxelfuse",
    about = "Volumetric multi-view stereo reconstruction",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reconstruct a surface voxel cloud from a calibrated scene.
    Reconstruct {
        /// Scene manifest file.
        #[arg(long)]
        scene: PathBuf,
        /// Pipeline config file (key=value); defaults used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output PLY path.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Generate a synthetic calibrated scene with ground truth.
    Synth {
        /// Shape to render: sphere | box.
        #[arg(long, default_value = "sphere")]
        shape: String,
        #[arg(long, default_value_t = 8)]
        views: usize,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        image_size: usize,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        voxel_size: f64,
        /// Padding added around the shape's bounding box, in world units.
        #[arg(long, default_value_t = 0.125)]
        pad: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Score a predicted point cloud against a ground-truth voxel grid.
    Eval {
        /// Predicted PLY file.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth occupancy grid (with its .meta sidecar).
        #[arg(long)]
        gt: PathBuf,
        /// Completeness tolerance in world units; default 2 voxel sizes.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Train the pair-scoring net on synthetic scenes with ground truth.
    FitWeights {
        /// Directory holding one scene, or subdirectories of scenes.
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the cube-acceptance gate on synthetic scenes.
    FitGate {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
    },
}

/// Data-level failure: exit code 2.
struct DataError(String);

impl<E: std::fmt::Display> From<E> for DataError {
    fn from(e: E) -> Self {
        DataError(format!("{e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage problems exit 1 with a synopsis; --help/--version exit 0
            if e.use_stderr() {
                eprintln!("{e}");
                eprintln!("{}", Cli::command().render_usage());
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DataError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), DataError> {
    match cli.cmd {
        Cmd::Reconstruct {
            scene,
            config,
            out,
            threads,
        } => cmd_reconstruct(&scene, config.as_deref(), &out, threads),
        Cmd::Synth {
            shape,
            views,
            out,
            image_size,
            voxel_size,
            pad,
            seed,
        } => cmd_synth(&shape, views, &out, image_size, voxel_size, pad, seed),
        Cmd::Eval { pred, gt, eps } => cmd_eval(&pred, &gt, eps),
        Cmd::FitWeights {
            scenes,
            out,
            epochs,
            seed,
        } => cmd_fit_weights(&scenes, &out, epochs, seed),
        Cmd::FitGate {
            scenes,
            out,
            epochs,
        } => cmd_fit_gate(&scenes, &out, epochs),
    }
}

fn cmd_reconstruct(
    scene: &Path,
    config: Option<&Path>,
    out: &Path,
    threads: Option<usize>,
) -> Result<(), DataError> {
    let manifest = scene_io::load_manifest(scene)?;
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let rec = pipeline::reconstruct(&manifest, &cfg)?;
    std::fs::write(out, &rec.ply)?;
    print!("{}", report_to_string(&rec.report));
    println!("out={}", out.display());
    Ok(())
}

fn parse_shape(name: &str) -> Result<ShapeSpec, DataError> {
    match name {
        "sphere" => Ok(ShapeSpec::Sphere {
            center: Vector3::zeros(),
            radius: 0.5,
        }),
        "box" => Ok(ShapeSpec::Box {
            center: Vector3::zeros(),
            half_extents: Vector3::new(0.5, 0.5, 0.5),
        }),
        other => Err(DataError(format!("unknown shape {other:?}"))),
    }
}

fn cmd_synth(
    shape: &str,
    views: usize,
    out: &Path,
    image_size: usize,
    voxel_size: f64,
    pad: f64,
    seed: u64,
) -> Result<(), DataError> {
    let shape = parse_shape(shape)?;
    let rig = RigSpec {
        n_views: views,
        image_width: image_size,
        image_height: image_size,
        ..RigSpec::default()
    };
    let scene = generate_scene(shape, &rig, voxel_size, pad, seed)?;
    std::fs::create_dir_all(out)?;

    let mut image_paths = Vec::new();
    for view in &scene.views {
        let path = out.join(format!("view{:03}.ppm", view.id));
        scene_io::save_image(&path, &view.image)?;
        image_paths.push(path);
    }
    let camera_file_path = out.join("cameras.txt");
    let cams: Vec<_> = scene.views.iter().map(|v| v.proj).collect();
    scene_io::save_cameras(&camera_file_path, &cams)?;

    let manifest = SceneManifest {
        image_paths,
        camera_file_path,
        bbox: scene.bbox,
        notes: String::new(),
    };
    std::fs::write(out.join("manifest.txt"), manifest_to_string(&manifest))?;

    // ground truth as a dense grid over the scene bbox
    let ext = scene.bbox.extent();
    let dims = [
        (ext.x / voxel_size).ceil() as usize,
        (ext.y / voxel_size).ceil() as usize,
        (ext.z / voxel_size).ceil() as usize,
    ];
    let mut occ = vec![false; dims[0] * dims[1] * dims[2]];
    for g in &scene.gt_occ {
        let idx = (g[0] as usize * dims[1] + g[1] as usize) * dims[2] + g[2] as usize;
        occ[idx] = true;
    }
    scene_io::write_occgrid(&out.join("gt.occ"), dims, &occ, scene.bbox.min, voxel_size)?;

    println!("scene_dir={}", out.display());
    println!("views={}", scene.views.len());
    println!("gt_voxels={}", scene.gt_occ.len());
    Ok(())
}

fn grid_to_set(grid: &scene_io::OccGrid) -> BTreeSet<[i64; 3]> {
    let mut set = BTreeSet::new();
    for i in 0..grid.dims[0] {
        for j in 0..grid.dims[1] {
            for k in 0..grid.dims[2] {
                if grid.occ[(i * grid.dims[1] + j) * grid.dims[2] + k] {
                    set.insert([i as i64, j as i64, k as i64]);
                }
            }
        }
    }
    set
}

fn cmd_eval(pred: &Path, gt: &Path, eps: Option<f64>) -> Result<(), DataError> {
    let verts = read_ply_vertices(pred)?;
    let grid = read_occgrid(gt)?;
    let vs = grid.voxel_size;
    let eps = eps.unwrap_or(2.0 * vs);

    // snap predicted points onto the ground-truth grid
    let pred_set: BTreeSet<[i64; 3]> = verts
        .iter()
        .map(|p| {
            let g = (p - grid.origin) / vs;
            [
                (g.x - 0.5).round() as i64,
                (g.y - 0.5).round() as i64,
                (g.z - 0.5).round() as i64,
            ]
        })
        .collect();
    let gt_set = grid_to_set(&grid);
    let report = evaluate(&pred_set, &gt_set, vs, eps)?;

    match report.accuracy {
        Some(a) => println!("accuracy={a}"),
        None => println!("accuracy=undefined"),
    }
    println!("completeness={}", report.completeness);
    println!("predicted_count={}", report.predicted_count);
    println!("gt_count={}", report.gt_count);
    Ok(())
}

/// Scene directories under `root`: either `root` itself (manifest.txt
/// present) or its immediate subdirectories that have one.
fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>, DataError> {
    if root.join("manifest.txt").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        if path.join("manifest.txt").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(DataError(format!(
            "no scene (manifest.txt) found under {}",
            root.display()
        )));
    }
    Ok(dirs)
}

struct TrainingScene {
    views: Vec<CameraView>,
    gt: BTreeSet<[i64; 3]>,
    bbox: Aabb,
    voxel_size: f64,
}

fn load_training_scene(dir: &Path) -> Result<TrainingScene, DataError> {
    let manifest = scene_io::load_manifest(&dir.join("manifest.txt"))?;
    let grid = read_occgrid(&dir.join("gt.occ"))?;
    let cams = scene_io::load_cameras(&manifest.camera_file_path)?;
    let mut views = Vec::new();
    for (id, (proj, img)) in cams.iter().zip(&manifest.image_paths).enumerate() {
        views.push(CameraView::new(id, scene_io::load_image(img)?, *proj)?);
    }
    Ok(TrainingScene {
        views,
        gt: grid_to_set(&grid),
        bbox: manifest.bbox,
        voxel_size: grid.voxel_size,
    })
}

/// Per-pair training rows: predict each pair alone on cubes that contain
/// ground-truth surface, and label it with the IoU of its thresholded
/// prediction against the truth inside the cube.
fn collect_weight_samples(scene: &TrainingScene) -> Result<Vec<WeightSample>, DataError> {
    let cfg = PipelineConfig {
        voxel_size: scene.voxel_size,
        ..PipelineConfig::default()
    };
    let lattice = build_lattice(scene.bbox, cfg.voxel_size, cfg.s, cfg.stride)?;
    let mut samples = Vec::new();
    for cube in &lattice.cubes {
        // ground truth restricted to this cube
        let mut gt_local = vec![false; cube.voxel_count()];
        let mut any = false;
        for i in 0..cube.s {
            for j in 0..cube.s {
                for k in 0..cube.s {
                    if scene.gt.contains(&lattice.global_voxel(cube, i, j, k)) {
                        gt_local[cube.linear(i, j, k)] = true;
                        any = true;
                    }
                }
            }
        }
        if !any {
            continue;
        }
        let pairs = enumerate_pairs(&scene.views, cube)?;
        for &(i, j) in &pairs {
            let pi = extract_patch(cube, &scene.views[i])?;
            let pj = extract_patch(cube, &scene.views[j])?;
            let (ei, ej) = (embed(&pi), embed(&pj));
            let d = dissimilarity(&ei, &ej)?;
            let theta = pair_angle(cube, &scene.views[i], &scene.views[j])?;

            let ci = voxelfuse::cvc::build_cvc(cube, &scene.views[i]);
            let cj = voxelfuse::cvc::build_cvc(cube, &scene.views[j]);
            let prob = predict_pair(&ci, &cj, &cfg.predictor)?;
            let mut inter = 0usize;
            let mut union = 0usize;
            for (x, &gt) in gt_local.iter().enumerate() {
                let predicted = prob.valid[x] && prob.p[x] > cfg.tau;
                if predicted && gt {
                    inter += 1;
                }
                if predicted || gt {
                    union += 1;
                }
            }
            let quality = if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            };
            samples.push(WeightSample {
                theta,
                d,
                e_i: ei.vec,
                e_j: ej.vec,
                quality,
            });
        }
    }
    Ok(samples)
}

fn cmd_fit_weights(scenes: &Path, out: &Path, epochs: usize, seed: u64) -> Result<(), DataError> {
    let mut samples = Vec::new();
    for dir in scene_dirs(scenes)? {
        let scene = load_training_scene(&dir)?;
        samples.extend(collect_weight_samples(&scene)?);
    }
    let net = fit_weightnet(&samples, epochs, 0.5, seed)?;
    std::fs::write(out, weightnet_to_string(&net))?;
    println!("samples={}", samples.len());
    println!("out={}", out.display());
    Ok(())
}

fn cmd_fit_gate(scenes: &Path, out: &Path, epochs: usize) -> Result<(), DataError> {
    let mut samples: Vec<(f64, bool)> = Vec::new();
    for dir in scene_dirs(scenes)? {
        let scene = load_training_scene(&dir)?;
        let cfg = PipelineConfig {
            voxel_size: scene.voxel_size,
            ..PipelineConfig::default()
        };
        let lattice = build_lattice(scene.bbox, cfg.voxel_size, cfg.s, cfg.stride)?;
        for cube in &lattice.cubes {
            // label: does this cube contain ground-truth surface?
            let mut label = false;
            'scan: for i in 0..cube.s {
                for j in 0..cube.s {
                    for k in 0..cube.s {
                        if scene.gt.contains(&lattice.global_voxel(cube, i, j, k)) {
                            label = true;
                            break 'scan;
                        }
                    }
                }
            }
            for &(i, j) in &enumerate_pairs(&scene.views, cube)? {
                let pi = extract_patch(cube, &scene.views[i])?;
                let pj = extract_patch(cube, &scene.views[j])?;
                let d = dissimilarity(&embed(&pi), &embed(&pj))?;
                samples.push((d, label));
            }
        }
    }
    let gate = fit_gate(&samples, epochs, 1.0)?;
    std::fs::write(out, gate_to_string(&gate))?;
    println!("samples={}", samples.len());
    println!("slope={}", gate.slope);
    println!("intercept={}", gate.intercept);
    println!("out={}", out.display());
    Ok(())
}
