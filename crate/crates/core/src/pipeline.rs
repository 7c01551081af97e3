//! Configuration, cube scheduling and end-to-end orchestration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::binarize::{
    binarize_cube, optimize_thresholds, ray_votes, thin, CubeField, SurfaceCube,
};
use crate::cvc::build_cvc;
use crate::descriptor::{dissimilarity, embed, extract_patch, PatchEmbedding};
use crate::fusion::{enumerate_pairs, fuse, select_pairs};
use crate::geometry::{build_lattice, pair_angle, Aabb, CameraView, CubeLattice};
use crate::predictor::{predict_pair, PredictorSpec};
use crate::scene_io::{self, SceneManifest};
use crate::weighting::{
    gate_cube, gate_from_str, heuristic_score, raw_score, softmax_weights, weightnet_from_str,
    GateModel, PairWeighting, WeightEntry, WeightNet,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    SceneIo(#[from] scene_io::SceneIoError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Weighting(#[from] crate::weighting::WeightingError),
    #[error(transparent)]
    Binarize(#[from] crate::binarize::BinarizeError),
    #[error("cube {index:?}: {source}")]
    CubeFailure {
        index: [i64; 3],
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// How per-pair raw scores are produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightMode {
    Heuristic,
    Net(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub s: usize,
    pub stride: usize,
    pub voxel_size: f64,
    pub gamma: f64,
    pub tau: f64,
    pub adaptive: bool,
    pub beta: f64,
    pub n_v: usize,
    pub n_min: usize,
    pub predictor: PredictorSpec,
    pub weight_mode: WeightMode,
    /// Optional trained gate model; defaults to GateModel::default().
    pub gate_path: Option<PathBuf>,
    pub thinning: bool,
    /// 0 means "let the runtime decide".
    pub threads: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            s: 32,
            stride: 16,
            voxel_size: 1.0 / 64.0,
            gamma: 0.8,
            tau: 0.7,
            // Per-cube threshold optimization (adaptive=true) recovers
            // more of the surface but admits low-confidence voxels; the
            // fixed threshold is the conservative default.
            adaptive: false,
            beta: 6.0,
            n_v: 5,
            n_min: 3,
            predictor: PredictorSpec::default(),
            weight_mode: WeightMode::Heuristic,
            gate_path: None,
            thinning: false,
            threads: 1,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(PipelineError::InvalidConfig(format!(
                "gamma must lie in [0,1], got {}",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(PipelineError::InvalidConfig(format!(
                "tau must lie in [0,1), got {}",
                self.tau
            )));
        }
        if self.s < 2 || self.stride == 0 || self.stride > self.s {
            return Err(PipelineError::InvalidConfig(format!(
                "need s >= 2 and 1 <= stride <= s, got s={} stride={}",
                self.s, self.stride
            )));
        }
        if self.voxel_size <= 0.0 {
            return Err(PipelineError::InvalidConfig(
                "voxel_size must be positive".into(),
            ));
        }
        if self.n_v == 0 || self.n_min == 0 {
            return Err(PipelineError::InvalidConfig(
                "n_v and n_min must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn config_to_string(c: &PipelineConfig) -> String {
    let weights = match &c.weight_mode {
        WeightMode::Heuristic => "heuristic".to_string(),
        WeightMode::Net(p) => format!("net:{}", p.display()),
    };
    let mut out = String::new();
    out.push_str(&format!("s={}\n", c.s));
    out.push_str(&format!("stride={}\n", c.stride));
    out.push_str(&format!("voxel_size={}\n", c.voxel_size));
    out.push_str(&format!("gamma={}\n", c.gamma));
    out.push_str(&format!("tau={}\n", c.tau));
    out.push_str(&format!("adaptive={}\n", c.adaptive));
    out.push_str(&format!("beta={}\n", c.beta));
    out.push_str(&format!("n_v={}\n", c.n_v));
    out.push_str(&format!("n_min={}\n", c.n_min));
    out.push_str(&format!("predictor={}\n", c.predictor.kind));
    out.push_str(&format!("window={}\n", c.predictor.window));
    out.push_str(&format!("sharpness={}\n", c.predictor.sharpness));
    out.push_str(&format!("weights={weights}\n"));
    if let Some(g) = &c.gate_path {
        out.push_str(&format!("gate={}\n", g.display()));
    }
    out.push_str(&format!("thinning={}\n", c.thinning));
    out.push_str(&format!("threads={}\n", c.threads));
    out.push_str(&format!("seed={}\n", c.seed));
    out
}

pub fn config_from_str(text: &str) -> Result<PipelineConfig, PipelineError> {
    let mut c = PipelineConfig::default();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, val) = line.split_once('=').ok_or_else(|| {
            PipelineError::InvalidConfig(format!("line {}: expected key=value", ln + 1))
        })?;
        let (key, val) = (key.trim(), val.trim());
        let bad = |e: &dyn std::fmt::Display| {
            PipelineError::InvalidConfig(format!("line {}: {key}: {e}", ln + 1))
        };
        match key {
            "s" => c.s = val.parse().map_err(|e| bad(&e))?,
            "stride" => c.stride = val.parse().map_err(|e| bad(&e))?,
            "voxel_size" => c.voxel_size = val.parse().map_err(|e| bad(&e))?,
            "gamma" => c.gamma = val.parse().map_err(|e| bad(&e))?,
            "tau" => c.tau = val.parse().map_err(|e| bad(&e))?,
            "adaptive" => c.adaptive = val.parse().map_err(|e| bad(&e))?,
            "beta" => c.beta = val.parse().map_err(|e| bad(&e))?,
            "n_v" => c.n_v = val.parse().map_err(|e| bad(&e))?,
            "n_min" => c.n_min = val.parse().map_err(|e| bad(&e))?,
            "predictor" => c.predictor.kind = val.to_string(),
            "window" => c.predictor.window = val.parse().map_err(|e| bad(&e))?,
            "sharpness" => c.predictor.sharpness = val.parse().map_err(|e| bad(&e))?,
            "weights" => {
                c.weight_mode = if val == "heuristic" {
                    WeightMode::Heuristic
                } else if let Some(p) = val.strip_prefix("net:") {
                    WeightMode::Net(PathBuf::from(p))
                } else {
                    return Err(PipelineError::InvalidConfig(format!(
                        "line {}: weights must be 'heuristic' or 'net:PATH', got {val:?}",
                        ln + 1
                    )));
                }
            }
            "gate" => c.gate_path = Some(PathBuf::from(val)),
            "thinning" => c.thinning = val.parse().map_err(|e| bad(&e))?,
            "threads" => c.threads = val.parse().map_err(|e| bad(&e))?,
            "seed" => c.seed = val.parse().map_err(|e| bad(&e))?,
            other => {
                return Err(PipelineError::InvalidConfig(format!(
                    "line {}: unknown key {other:?}",
                    ln + 1
                )))
            }
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
    config_from_str(&text)
}

/// Per-stage timings and cube accounting for one reconstruction run.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub cubes_total: usize,
    pub cubes_accepted: usize,
    pub cubes_rejected_gate: usize,
    pub cubes_rejected_pairs: usize,
    pub occupied_voxels: usize,
    pub adaptive_sweeps: usize,
    pub adaptive_converged: bool,
    pub per_cube_ms: f64,
    pub threshold_ms: f64,
    pub output_ms: f64,
}

pub fn report_to_string(r: &RunReport) -> String {
    format!(
        "cubes_total={}\ncubes_accepted={}\ncubes_rejected_gate={}\n\
         cubes_rejected_pairs={}\noccupied_voxels={}\nadaptive_sweeps={}\n\
         adaptive_converged={}\nper_cube_ms={:.1}\nthreshold_ms={:.1}\noutput_ms={:.1}\n",
        r.cubes_total,
        r.cubes_accepted,
        r.cubes_rejected_gate,
        r.cubes_rejected_pairs,
        r.occupied_voxels,
        r.adaptive_sweeps,
        r.adaptive_converged,
        r.per_cube_ms,
        r.threshold_ms,
        r.output_ms,
    )
}

pub struct Reconstruction {
    pub surface_cubes: Vec<SurfaceCube>,
    pub ply: Vec<u8>,
    pub report: RunReport,
    pub lattice: CubeLattice,
    pub occupied: BTreeSet<[i64; 3]>,
}

enum CubeOutcome {
    RejectedPairs,
    RejectedGate,
    Accepted(Box<CubeField>),
}

fn process_cube(
    pos: usize,
    lattice: &CubeLattice,
    views: &[CameraView],
    config: &PipelineConfig,
    net: Option<&WeightNet>,
    gate: &GateModel,
) -> Result<CubeOutcome, PipelineError> {
    let cube = &lattice.cubes[pos];
    let fail = |e: Box<dyn std::error::Error + Send + Sync>| PipelineError::CubeFailure {
        index: cube.index,
        source: e,
    };

    let pairs = enumerate_pairs(views, cube).map_err(|e| fail(Box::new(e)))?;
    if pairs.len() < config.n_min {
        return Ok(CubeOutcome::RejectedPairs);
    }

    // one embedding per view that participates in some pair
    let mut embeddings: Vec<Option<PatchEmbedding>> = vec![None; views.len()];
    for &(i, j) in &pairs {
        for v in [i, j] {
            if embeddings[v].is_none() {
                let patch = extract_patch(cube, &views[v]).map_err(|e| fail(Box::new(e)))?;
                embeddings[v] = Some(embed(&patch));
            }
        }
    }
    let emb = |v: usize| embeddings[v].as_ref().unwrap();

    let dissims: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| dissimilarity(emb(i), emb(j)).map_err(|e| fail(Box::new(e))))
        .collect::<Result<_, _>>()?;
    if !gate_cube(gate, &dissims, config.n_min) {
        return Ok(CubeOutcome::RejectedGate);
    }

    let mut entries = Vec::with_capacity(pairs.len());
    let mut scores = Vec::with_capacity(pairs.len());
    for (&(i, j), &d) in pairs.iter().zip(&dissims) {
        let theta = pair_angle(cube, &views[i], &views[j]).map_err(|e| fail(Box::new(e)))?;
        let score = match net {
            Some(n) => raw_score(n, theta, d, &emb(i).vec, &emb(j).vec),
            None => heuristic_score(theta, d),
        };
        scores.push(score);
        entries.push(WeightEntry {
            pair: (i, j),
            theta,
            d,
            raw_score: score,
            w: 0.0,
        });
    }
    let weights = softmax_weights(&scores).map_err(|e| fail(Box::new(e)))?;
    for (e, w) in entries.iter_mut().zip(weights) {
        e.w = w;
    }
    let weighting = PairWeighting {
        cube_index: cube.index,
        entries,
    };
    let selected = select_pairs(&weighting, config.n_v);

    // CVCs only for the views the selected pairs use
    let mut cvcs: Vec<Option<crate::cvc::CvcVolume>> = vec![None; views.len()];
    for &((i, j), _) in &selected {
        for v in [i, j] {
            if cvcs[v].is_none() {
                cvcs[v] = Some(build_cvc(cube, &views[v]));
            }
        }
    }
    let prob_cubes: Vec<_> = selected
        .iter()
        .map(|&((i, j), _)| {
            predict_pair(
                cvcs[i].as_ref().unwrap(),
                cvcs[j].as_ref().unwrap(),
                &config.predictor,
            )
            .map_err(|e| fail(Box::new(e)))
        })
        .collect::<Result<_, _>>()?;
    let sel_weights: Vec<f64> = selected.iter().map(|&(_, w)| w).collect();
    let fused = fuse(&prob_cubes, &sel_weights).map_err(|e| fail(Box::new(e)))?;
    let vote_fraction = ray_votes(&fused, views, cube).map_err(|e| fail(Box::new(e)))?;

    Ok(CubeOutcome::Accepted(Box::new(CubeField {
        fused,
        vote_fraction,
    })))
}

/// Default adaptive-threshold candidate grid: 50 values in [0.5, 0.99].
pub fn default_tau_candidates() -> Vec<f64> {
    (0..50).map(|i| 0.5 + 0.01 * i as f64).collect()
}

/// Full reconstruction from loaded views. Deterministic for a fixed
/// config regardless of `config.threads`: cube work is pure and results
/// are gathered in lattice order.
pub fn reconstruct_views(
    views: &[CameraView],
    bbox: Aabb,
    config: &PipelineConfig,
) -> Result<Reconstruction, PipelineError> {
    config.validate()?;
    let net = match &config.weight_mode {
        WeightMode::Heuristic => None,
        WeightMode::Net(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
            Some(weightnet_from_str(&text)?)
        }
    };
    let gate = match &config.gate_path {
        None => GateModel::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
            gate_from_str(&text)?
        }
    };

    let lattice = build_lattice(bbox, config.voxel_size, config.s, config.stride)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(format!("thread pool: {e}")))?;

    let t0 = Instant::now();
    let outcomes: Vec<Result<CubeOutcome, PipelineError>> = pool.install(|| {
        use rayon::prelude::*;
        (0..lattice.cubes.len())
            .into_par_iter()
            .map(|pos| process_cube(pos, &lattice, views, config, net.as_ref(), &gate))
            .collect()
    });
    let per_cube_ms = t0.elapsed().as_secs_f64() * 1e3;

    let mut report = RunReport {
        cubes_total: lattice.cubes.len(),
        per_cube_ms,
        ..RunReport::default()
    };
    let mut fields: Vec<Option<CubeField>> = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome? {
            CubeOutcome::RejectedPairs => {
                report.cubes_rejected_pairs += 1;
                fields.push(None);
            }
            CubeOutcome::RejectedGate => {
                report.cubes_rejected_gate += 1;
                fields.push(None);
            }
            CubeOutcome::Accepted(field) => {
                report.cubes_accepted += 1;
                fields.push(Some(*field));
            }
        }
    }

    let t1 = Instant::now();
    let taus: Vec<Option<f64>> = if config.adaptive {
        let candidates = default_tau_candidates();
        let tf = pool.install(|| {
            optimize_thresholds(
                &fields,
                &lattice,
                config.gamma,
                config.beta,
                &candidates,
                10,
            )
        })?;
        report.adaptive_sweeps = tf.iteration_count;
        report.adaptive_converged = tf.converged;
        tf.tau
    } else {
        fields
            .iter()
            .map(|f| f.as_ref().map(|_| config.tau))
            .collect()
    };
    report.threshold_ms = t1.elapsed().as_secs_f64() * 1e3;

    let t2 = Instant::now();
    let mut surface_cubes = Vec::new();
    for (pos, field) in fields.iter().enumerate() {
        let Some(field) = field else { continue };
        let tau = taus[pos].unwrap();
        let mut surf = binarize_cube(&field.fused, &field.vote_fraction, tau, config.gamma);
        if config.thinning {
            surf = thin(
                &surf,
                &field.fused,
                views,
                &lattice.cubes[pos],
                config.gamma,
            );
        }
        surface_cubes.push(surf);
    }
    let occupied = scene_io::occupied_global_voxels(&surface_cubes, &lattice);
    report.occupied_voxels = occupied.len();
    let ply = scene_io::write_ply(&surface_cubes, &lattice);
    report.output_ms = t2.elapsed().as_secs_f64() * 1e3;

    Ok(Reconstruction {
        surface_cubes,
        ply,
        report,
        lattice,
        occupied,
    })
}

/// Load a scene manifest from disk and reconstruct it.
pub fn reconstruct(
    manifest: &SceneManifest,
    config: &PipelineConfig,
) -> Result<Reconstruction, PipelineError> {
    let cameras = scene_io::load_cameras(&manifest.camera_file_path)?;
    if cameras.len() != manifest.image_paths.len() {
        return Err(PipelineError::InvalidConfig(format!(
            "{} cameras but {} images",
            cameras.len(),
            manifest.image_paths.len()
        )));
    }
    let mut views = Vec::with_capacity(cameras.len());
    for (id, (proj, img_path)) in cameras.iter().zip(&manifest.image_paths).enumerate() {
        let image = scene_io::load_image(img_path)?;
        views.push(CameraView::new(id, image, *proj)?);
    }
    reconstruct_views(&views, manifest.bbox, config)
}
