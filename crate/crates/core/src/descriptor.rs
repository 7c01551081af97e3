//! Patch extraction around the projected cube center and a deterministic
//! 128-D embedding used to compare view pairs.
//!
//! The embedding pools a 64×64 grayscale patch to an 8×8 mean-subtracted
//! intensity block plus an 8×8 gradient-magnitude block and L2-normalizes
//! the concatenation, so it is invariant to photometric gain and offset.

use thiserror::Error;

use crate::geometry::{CameraView, Cube};

pub const PATCH_SIZE: usize = 64;
pub const EMBED_DIM: usize = 128;
const POOL: usize = 8;
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("cube center patch falls off-frame for view {view_id}")]
    OffFrame { view_id: usize },
    #[error("embeddings belong to different cubes: {0:?} vs {1:?}")]
    CubeMismatch([i64; 3], [i64; 3]),
}

/// 64×64 grayscale patch cropped around the projected cube center.
#[derive(Debug, Clone)]
pub struct Patch {
    pub view_id: usize,
    pub cube_index: [i64; 3],
    /// Row-major, values in [0,1].
    pub pixels: Vec<f64>,
}

/// Unit-norm 128-vector (or zero for flat patches).
#[derive(Debug, Clone)]
pub struct PatchEmbedding {
    pub vec: Vec<f64>,
    pub source_view: usize,
    pub cube_index: [i64; 3],
}

/// Crop the 64×64 grayscale patch centered at the projection of the
/// cube's center voxel; off-frame when the center does not project into
/// the image or any crop pixel would fall outside it.
pub fn extract_patch(cube: &Cube, view: &CameraView) -> Result<Patch, DescriptorError> {
    let hit = view
        .project_in_frame(&cube.center())
        .ok_or(DescriptorError::OffFrame { view_id: view.id })?;

    let half = (PATCH_SIZE / 2) as i64;
    let cu = hit.u.round() as i64;
    let cv = hit.v.round() as i64;
    let x0 = cu - half;
    let y0 = cv - half;
    let w = view.image.width() as i64;
    let h = view.image.height() as i64;
    if x0 < 0 || y0 < 0 || x0 + PATCH_SIZE as i64 > w || y0 + PATCH_SIZE as i64 > h {
        return Err(DescriptorError::OffFrame { view_id: view.id });
    }

    let mut pixels = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
    for dy in 0..PATCH_SIZE {
        for dx in 0..PATCH_SIZE {
            pixels.push(
                view.image
                    .luminance((x0 + dx as i64) as usize, (y0 + dy as i64) as usize),
            );
        }
    }
    Ok(Patch {
        view_id: view.id,
        cube_index: cube.index,
        pixels,
    })
}

fn pool_8x8(values: &[f64]) -> [f64; 64] {
    let block = PATCH_SIZE / POOL;
    let mut out = [0.0; 64];
    for by in 0..POOL {
        for bx in 0..POOL {
            let mut sum = 0.0;
            for y in 0..block {
                for x in 0..block {
                    sum += values[(by * block + y) * PATCH_SIZE + bx * block + x];
                }
            }
            out[by * POOL + bx] = sum / (block * block) as f64;
        }
    }
    out
}

/// Deterministic 128-D embedding of a patch.
pub fn embed(patch: &Patch) -> PatchEmbedding {
    let n = PATCH_SIZE;
    debug_assert_eq!(patch.pixels.len(), n * n);

    let mut intensity = pool_8x8(&patch.pixels);
    let mean: f64 = intensity.iter().sum::<f64>() / intensity.len() as f64;
    for v in intensity.iter_mut() {
        *v -= mean;
    }

    // central differences with replicated borders
    let px = |x: usize, y: usize| patch.pixels[y * n + x];
    let mut gmag = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let gx = (px((x + 1).min(n - 1), y) - px(x.saturating_sub(1), y)) * 0.5;
            let gy = (px(x, (y + 1).min(n - 1)) - px(x, y.saturating_sub(1))) * 0.5;
            gmag[y * n + x] = (gx * gx + gy * gy).sqrt();
        }
    }
    let gradient = pool_8x8(&gmag);

    let mut vec: Vec<f64> = Vec::with_capacity(EMBED_DIM);
    vec.extend_from_slice(&intensity);
    vec.extend_from_slice(&gradient);

    let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < NORM_EPS {
        vec.iter_mut().for_each(|v| *v = 0.0);
    } else {
        vec.iter_mut().for_each(|v| *v /= norm);
    }

    PatchEmbedding {
        vec,
        source_view: patch.view_id,
        cube_index: patch.cube_index,
    }
}

/// Euclidean distance between two embeddings of the same cube.
pub fn dissimilarity(e_i: &PatchEmbedding, e_j: &PatchEmbedding) -> Result<f64, DescriptorError> {
    if e_i.cube_index != e_j.cube_index {
        return Err(DescriptorError::CubeMismatch(
            e_i.cube_index,
            e_j.cube_index,
        ));
    }
    let d2: f64 = e_i
        .vec
        .iter()
        .zip(&e_j.vec)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(d2.sqrt())
}
