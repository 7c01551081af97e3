//! View-pair enumeration, top-N_v selection and weighted probability
//! fusion across the selected pairs.

use thiserror::Error;

use crate::descriptor::extract_patch;
use crate::geometry::{CameraView, Cube};
use crate::predictor::ProbabilityCube;
use crate::weighting::PairWeighting;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("need at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("weights sum to zero")]
    ZeroWeightSum,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Weighted average of the selected per-pair probabilities.
#[derive(Debug, Clone)]
pub struct FusedCube {
    pub cube_index: [i64; 3],
    pub s: usize,
    pub p: Vec<f64>,
    /// True where at least one selected pair was valid.
    pub valid: Vec<bool>,
    /// Selected pairs with their renormalized weights.
    pub pair_set: Vec<((usize, usize), f64)>,
}

/// All unordered view pairs (i<j, indices into `views`) whose center
/// patches are both on-frame for this cube, in deterministic order.
pub fn enumerate_pairs(
    views: &[CameraView],
    cube: &Cube,
) -> Result<Vec<(usize, usize)>, FusionError> {
    if views.len() < 2 {
        return Err(FusionError::TooFewViews(views.len()));
    }
    let on_frame: Vec<bool> = views
        .iter()
        .map(|v| extract_patch(cube, v).is_ok())
        .collect();
    let mut pairs = Vec::new();
    for i in 0..views.len() {
        if !on_frame[i] {
            continue;
        }
        for (j, &ok) in on_frame.iter().enumerate().skip(i + 1) {
            if ok {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Keep the N_v highest-weight entries (ties broken by lexicographic pair
/// id) and renormalize their weights to sum 1.
pub fn select_pairs(weighting: &PairWeighting, n_v: usize) -> Vec<((usize, usize), f64)> {
    let mut entries: Vec<((usize, usize), f64)> =
        weighting.entries.iter().map(|e| (e.pair, e.w)).collect();
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    entries.truncate(n_v);
    let sum: f64 = entries.iter().map(|(_, w)| w).sum();
    if sum > 0.0 {
        for (_, w) in entries.iter_mut() {
            *w /= sum;
        }
    }
    entries
}

/// Per-voxel weighted average of the pair probabilities. A pair whose
/// validity mask is false at a voxel drops out of both numerator and
/// denominator there; voxels valid in no pair get p = 0.
pub fn fuse(prob_cubes: &[ProbabilityCube], weights: &[f64]) -> Result<FusedCube, FusionError> {
    if prob_cubes.len() != weights.len() {
        return Err(FusionError::ShapeMismatch(format!(
            "{} probability cubes vs {} weights",
            prob_cubes.len(),
            weights.len()
        )));
    }
    if prob_cubes.is_empty() {
        return Err(FusionError::ShapeMismatch("no probability cubes".into()));
    }
    let first = &prob_cubes[0];
    for pc in prob_cubes.iter().skip(1) {
        if pc.cube_index != first.cube_index || pc.s != first.s {
            return Err(FusionError::ShapeMismatch(format!(
                "cube {:?}/s={} vs {:?}/s={}",
                pc.cube_index, pc.s, first.cube_index, first.s
            )));
        }
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(FusionError::ZeroWeightSum);
    }

    let n = first.s * first.s * first.s;
    let mut p = vec![0.0; n];
    let mut valid = vec![false; n];
    for x in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for (pc, &w) in prob_cubes.iter().zip(weights) {
            if pc.valid[x] {
                num += w * pc.p[x];
                den += w;
            }
        }
        if den > 0.0 {
            p[x] = num / den;
            valid[x] = true;
        }
    }

    Ok(FusedCube {
        cube_index: first.cube_index,
        s: first.s,
        p,
        valid,
        pair_set: prob_cubes
            .iter()
            .zip(weights)
            .map(|(pc, &w)| (pc.pair, w))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weighting::WeightEntry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prob_cube(s: usize, pair: (usize, usize), p: Vec<f64>, valid: Vec<bool>) -> ProbabilityCube {
        ProbabilityCube {
            cube_index: [0, 0, 0],
            pair,
            s,
            p,
            valid,
        }
    }

    fn weighting_of(ws: &[f64]) -> PairWeighting {
        PairWeighting {
            cube_index: [0, 0, 0],
            entries: ws
                .iter()
                .enumerate()
                .map(|(i, &w)| WeightEntry {
                    pair: (i, i + 1),
                    theta: 0.0,
                    d: 0.0,
                    raw_score: 0.0,
                    w,
                })
                .collect(),
        }
    }

    #[test]
    fn select_keeps_all_when_nv_large() {
        let sel = select_pairs(&weighting_of(&[0.5, 0.3, 0.2]), 10);
        assert_eq!(sel.len(), 3);
    }

    #[test]
    fn select_renormalizes() {
        let sel = select_pairs(&weighting_of(&[0.5, 0.3, 0.2]), 2);
        assert_eq!(sel.len(), 2);
        assert!((sel[0].1 - 0.625).abs() < 1e-12);
        assert!((sel[1].1 - 0.375).abs() < 1e-12);
    }

    #[test]
    fn select_breaks_ties_lexicographically() {
        let mut w = weighting_of(&[0.25, 0.25, 0.25, 0.25]);
        w.entries.reverse();
        let sel = select_pairs(&w, 1);
        assert_eq!(sel[0].0, (0, 1));
        assert!((sel[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fuse_single_pair_is_identity() {
        let p = vec![0.1, 0.9, 0.4, 0.7, 0.0, 1.0, 0.3, 0.2];
        let pc = prob_cube(2, (0, 1), p.clone(), vec![true; 8]);
        let fused = fuse(&[pc], &[1.0]).unwrap();
        assert_eq!(fused.p, p);
    }

    #[test]
    fn fuse_equal_weights_average() {
        let a = prob_cube(1, (0, 1), vec![0.2], vec![true]);
        let b = prob_cube(1, (0, 2), vec![0.8], vec![true]);
        let fused = fuse(&[a, b], &[0.5, 0.5]).unwrap();
        assert!((fused.p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fuse_weighted_hand_computed() {
        let a = prob_cube(1, (0, 1), vec![1.0], vec![true]);
        let b = prob_cube(1, (0, 2), vec![0.0], vec![true]);
        let c = prob_cube(1, (1, 2), vec![0.5], vec![true]);
        let fused = fuse(&[a, b, c], &[0.5, 0.3, 0.2]).unwrap();
        // 0.5*1.0 + 0.3*0.0 + 0.2*0.5 = 0.6
        assert!((fused.p[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn fuse_masks_invalid_pairs_per_voxel() {
        let a = prob_cube(1, (0, 1), vec![0.0], vec![false]);
        let b = prob_cube(1, (0, 2), vec![0.9], vec![true]);
        let fused = fuse(&[a, b], &[0.9, 0.1]).unwrap();
        // invalid pair drops out entirely: 0.9, not diluted
        assert!((fused.p[0] - 0.9).abs() < 1e-15);
        // no valid pair anywhere -> p = 0, valid = false
        let c = prob_cube(1, (0, 1), vec![0.5], vec![false]);
        let d = prob_cube(1, (0, 2), vec![0.5], vec![false]);
        let fused = fuse(&[c, d], &[0.5, 0.5]).unwrap();
        assert_eq!(fused.p[0], 0.0);
        assert!(!fused.valid[0]);
    }

    #[test]
    fn fuse_error_paths() {
        let a = prob_cube(1, (0, 1), vec![0.5], vec![true]);
        assert!(matches!(
            fuse(&[a.clone()], &[0.0]),
            Err(FusionError::ZeroWeightSum)
        ));
        assert!(matches!(
            fuse(&[a.clone()], &[0.5, 0.5]),
            Err(FusionError::ShapeMismatch(_))
        ));
        let mut b = a.clone();
        b.cube_index = [1, 0, 0];
        assert!(matches!(
            fuse(&[a, b], &[0.5, 0.5]),
            Err(FusionError::ShapeMismatch(_))
        ));
    }

    fn random_case(rng: &mut ChaCha8Rng, s: usize) -> (Vec<ProbabilityCube>, Vec<f64>) {
        let n_pairs = rng.gen_range(1..=4);
        let n = s * s * s;
        let cubes: Vec<ProbabilityCube> = (0..n_pairs)
            .map(|i| {
                prob_cube(
                    s,
                    (i, i + 1),
                    (0..n).map(|_| rng.gen()).collect(),
                    (0..n).map(|_| rng.gen_bool(0.8)).collect(),
                )
            })
            .collect();
        let weights: Vec<f64> = (0..n_pairs).map(|_| rng.gen_range(0.01..1.0)).collect();
        (cubes, weights)
    }

    #[test]
    fn fuse_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let (cubes, weights) = random_case(&mut rng, 4);
            let fused = fuse(&cubes, &weights).unwrap();
            for x in 0..64 {
                let mut num = 0.0;
                let mut den = 0.0;
                for (pc, &w) in cubes.iter().zip(&weights) {
                    if pc.valid[x] {
                        num += w * pc.p[x];
                        den += w;
                    }
                }
                let want = if den > 0.0 { num / den } else { 0.0 };
                assert!((fused.p[x] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fuse_convexity_and_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..50 {
            let (cubes, weights) = random_case(&mut rng, 3);
            let fused = fuse(&cubes, &weights).unwrap();
            for x in 0..27 {
                let vals: Vec<f64> = cubes
                    .iter()
                    .filter(|pc| pc.valid[x])
                    .map(|pc| pc.p[x])
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(fused.p[x] >= lo - 1e-12 && fused.p[x] <= hi + 1e-12);
            }
            let mut rev_cubes = cubes.clone();
            rev_cubes.reverse();
            let mut rev_w = weights.clone();
            rev_w.reverse();
            let fused_rev = fuse(&rev_cubes, &rev_w).unwrap();
            for x in 0..27 {
                assert!((fused.p[x] - fused_rev.p[x]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fuse_weight_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (cubes, weights) = random_case(&mut rng, 4);
        let fused = fuse(&cubes, &weights).unwrap();
        // power-of-two scaling is exact in binary floating point, so the
        // result must be bit-identical; arbitrary scales only get closeness
        let scaled: Vec<f64> = weights.iter().map(|w| w * 32.0).collect();
        let fused2 = fuse(&cubes, &scaled).unwrap();
        assert_eq!(fused.p, fused2.p);
        let scaled: Vec<f64> = weights.iter().map(|w| w * 37.5).collect();
        let fused3 = fuse(&cubes, &scaled).unwrap();
        for x in 0..64 {
            assert!((fused.p[x] - fused3.p[x]).abs() < 1e-12);
        }
    }
}
