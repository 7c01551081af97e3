//! Colored voxel cubes: per-view color volumes built by projecting every
//! voxel center into the image and sampling bilinearly.

use crate::geometry::{CameraView, Cube};
use crate::raster::luma;

/// Per-view colored voxel cube. `colors` holds the bilinear image sample
/// at each voxel's projection, zero where `valid` is false.
#[derive(Debug, Clone)]
pub struct CvcVolume {
    pub cube_index: [i64; 3],
    pub view_id: usize,
    pub s: usize,
    pub colors: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl CvcVolume {
    pub fn voxel_count(&self) -> usize {
        self.s * self.s * self.s
    }
}

/// Build the colored voxel cube for one (cube, view) pair. Voxels whose
/// center projects outside the frame (or behind the camera) are marked
/// invalid with color zero; an all-invalid CVC is legal.
pub fn build_cvc(cube: &Cube, view: &CameraView) -> CvcVolume {
    let n = cube.voxel_count();
    let mut colors = vec![[0.0; 3]; n];
    let mut valid = vec![false; n];

    for i in 0..cube.s {
        for j in 0..cube.s {
            for k in 0..cube.s {
                let idx = cube.linear(i, j, k);
                let p = cube.voxel_center(i, j, k);
                if let Some(hit) = view.project_in_frame(&p) {
                    colors[idx] = view.image.sample_bilinear(hit.u, hit.v);
                    valid[idx] = true;
                }
            }
        }
    }

    CvcVolume {
        cube_index: cube.index,
        view_id: view.id,
        s: cube.s,
        colors,
        valid,
    }
}

/// Per-voxel luminance of a CVC; invalid voxels map to 0.
pub fn cvc_gray(cvc: &CvcVolume) -> Vec<f64> {
    cvc.colors
        .iter()
        .zip(&cvc.valid)
        .map(|(c, &v)| if v { luma(*c) } else { 0.0 })
        .collect()
}
