//! Volumetric multi-view stereo reconstruction.
//!
//! The pipeline converts a set of calibrated images into a voxel surface:
//! the scene volume is partitioned into overlapping cubes, each cube is
//! projected into every camera to build per-view colored voxel cubes,
//! view pairs are scored by a patch descriptor and an angular/similarity
//! weighting, per-pair surface probabilities are predicted by windowed
//! photo-consistency and fused as a weighted average, and the fused
//! volume is binarized via ray pooling plus a global or neighbor-adaptive
//! probability threshold.

pub mod binarize;
pub mod cvc;
pub mod descriptor;
pub mod fusion;
pub mod geometry;
pub mod pipeline;
pub mod predictor;
pub mod raster;
pub mod scene_io;
pub mod synth_eval;
pub mod weighting;

pub use geometry::{Aabb, CameraView, Cube, CubeLattice};
pub use pipeline::{PipelineConfig, RunReport};
