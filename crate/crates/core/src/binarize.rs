//! Ray pooling, binarization, neighbor-adaptive threshold optimization
//! and optional thinning.
//!
//! Ray pooling buckets a cube's voxels per view by their integer-rounded
//! projected pixel; the most confident voxel of each bucket receives that
//! view's vote. A voxel becomes surface when at least a γ fraction of the
//! views seeing the cube vote for it and its fused probability exceeds τ.
//! The adaptive mode optimizes per-cube thresholds by synchronous
//! (snapshot-based) coordinate descent on the pairwise overlap energy, so
//! results are independent of cube iteration order and thread count.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::fusion::FusedCube;
use crate::geometry::{CameraView, Cube, CubeLattice};

#[derive(Debug, Error)]
pub enum BinarizeError {
    #[error("no views supplied for ray pooling")]
    NoViews,
    #[error("invalid threshold candidates: {0}")]
    InvalidCandidates(String),
}

/// Binary occupancy of one cube after binarization.
#[derive(Debug, Clone)]
pub struct SurfaceCube {
    pub cube_index: [i64; 3],
    pub s: usize,
    pub occ: Vec<bool>,
    pub tau_used: f64,
}

/// Adaptive per-cube thresholds, aligned with the lattice cube list.
#[derive(Debug, Clone)]
pub struct ThresholdField {
    /// τ_C per lattice cube; None for cubes absent from the input.
    pub tau: Vec<Option<f64>>,
    pub iteration_count: usize,
    pub converged: bool,
    /// Cross energy Σ_C E(τ_C | previous sweep) recorded after each sweep.
    pub energy_per_sweep: Vec<f64>,
}

/// Per-cube data needed to binarize at an arbitrary threshold.
#[derive(Debug, Clone)]
pub struct CubeField {
    pub fused: FusedCube,
    pub vote_fraction: Vec<f64>,
}

/// Fraction of views voting for each voxel under per-pixel argmax ray
/// pooling. A view sees the cube when at least one voxel center projects
/// in-frame; the denominator counts exactly those views.
pub fn ray_votes(
    fused: &FusedCube,
    views: &[CameraView],
    cube: &Cube,
) -> Result<Vec<f64>, BinarizeError> {
    if views.is_empty() {
        return Err(BinarizeError::NoViews);
    }
    let n = cube.voxel_count();
    let mut votes = vec![0usize; n];
    let mut seeing = 0usize;

    for view in views {
        // bucket by integer-rounded projected pixel
        let mut buckets: HashMap<(i64, i64), usize> = HashMap::new();
        let mut any = false;
        for i in 0..cube.s {
            for j in 0..cube.s {
                for k in 0..cube.s {
                    let idx = cube.linear(i, j, k);
                    let Some(hit) = view.project_in_frame(&cube.voxel_center(i, j, k)) else {
                        continue;
                    };
                    any = true;
                    let key = (hit.u.round() as i64, hit.v.round() as i64);
                    // argmax-p per bucket; ties keep the lexicographically
                    // smallest voxel, which is the first one visited
                    buckets
                        .entry(key)
                        .and_modify(|best| {
                            if fused.p[idx] > fused.p[*best] {
                                *best = idx;
                            }
                        })
                        .or_insert(idx);
                }
            }
        }
        if any {
            seeing += 1;
            for &best in buckets.values() {
                votes[best] += 1;
            }
        }
    }

    if seeing == 0 {
        return Ok(vec![0.0; n]);
    }
    Ok(votes.iter().map(|&v| v as f64 / seeing as f64).collect())
}

/// occ(x) = (vote_fraction(x) ≥ γ) ∧ (p(x) > τ).
pub fn binarize_cube(
    fused: &FusedCube,
    vote_fraction: &[f64],
    tau: f64,
    gamma: f64,
) -> SurfaceCube {
    let occ = fused
        .p
        .iter()
        .zip(vote_fraction)
        .map(|(&p, &v)| v >= gamma && p > tau)
        .collect();
    SurfaceCube {
        cube_index: fused.cube_index,
        s: fused.s,
        occ,
        tau_used: tau,
    }
}

/// Pairwise overlap cost: disagreement terms plus the −β reward for
/// shared surface voxels, summed over the overlap.
pub fn psi(
    surf_a: &SurfaceCube,
    surf_b: &SurfaceCube,
    overlap: &[(usize, usize)],
    beta: f64,
) -> f64 {
    let mut e = 0.0;
    for &(ia, ib) in overlap {
        let sa = surf_a.occ[ia];
        let sb = surf_b.occ[ib];
        match (sa, sb) {
            (true, true) => e -= beta,
            (true, false) | (false, true) => e += 1.0,
            (false, false) => {}
        }
    }
    e
}

fn occ_at(field: &CubeField, idx: usize, tau: f64, gamma: f64) -> bool {
    field.vote_fraction[idx] >= gamma && field.fused.p[idx] > tau
}

/// Synchronous coordinate descent over per-cube thresholds. Each sweep
/// minimizes every cube's energy against the previous sweep's neighbor
/// surfaces; ties pick the smallest candidate τ.
pub fn optimize_thresholds(
    fields: &[Option<CubeField>],
    lattice: &CubeLattice,
    gamma: f64,
    beta: f64,
    candidates: &[f64],
    max_sweeps: usize,
) -> Result<ThresholdField, BinarizeError> {
    if candidates.is_empty() {
        return Err(BinarizeError::InvalidCandidates(
            "empty candidate list".into(),
        ));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BinarizeError::InvalidCandidates(
            "candidates must be strictly ascending".into(),
        ));
    }
    if candidates[0] < 0.5 || *candidates.last().unwrap() >= 1.0 {
        return Err(BinarizeError::InvalidCandidates(format!(
            "candidates must lie in [0.5, 1), got [{}, {}]",
            candidates[0],
            candidates.last().unwrap()
        )));
    }
    assert_eq!(fields.len(), lattice.cubes.len());

    // neighbor positions and overlap index pairs, computed once
    type Neighborhood = Vec<(usize, Vec<(usize, usize)>)>;
    let neighborhoods: Vec<Neighborhood> = (0..fields.len())
        .map(|pos| {
            if fields[pos].is_none() {
                return Vec::new();
            }
            lattice
                .face_neighbors(pos)
                .into_iter()
                .filter(|&np| fields[np].is_some())
                .map(|np| (np, lattice.overlap_voxels(pos, np)))
                .filter(|(_, ov)| !ov.is_empty())
                .collect()
        })
        .collect();

    // energy of cube `pos` at threshold `tau` against snapshot thresholds
    let energy = |pos: usize, tau: f64, snapshot: &[Option<f64>]| -> f64 {
        let field = fields[pos].as_ref().unwrap();
        let mut e = 0.0;
        for (np, overlap) in &neighborhoods[pos] {
            let nf = fields[*np].as_ref().unwrap();
            let ntau = snapshot[*np].unwrap();
            for &(ia, ib) in overlap {
                let sa = occ_at(field, ia, tau, gamma);
                let sb = occ_at(nf, ib, ntau, gamma);
                match (sa, sb) {
                    (true, true) => e -= beta,
                    (true, false) | (false, true) => e += 1.0,
                    (false, false) => {}
                }
            }
        }
        e
    };

    // τ_C initialized to the smallest candidate (0.5 in the default grid)
    let mut tau: Vec<Option<f64>> = fields
        .iter()
        .map(|f| f.as_ref().map(|_| candidates[0]))
        .collect();

    let mut energy_per_sweep = Vec::new();
    let mut converged = false;
    let mut sweeps = 0usize;

    for _ in 0..max_sweeps {
        sweeps += 1;
        let snapshot = tau.clone();
        let updates: Vec<Option<(f64, f64)>> = (0..fields.len())
            .into_par_iter()
            .map(|pos| {
                fields[pos].as_ref()?;
                let mut best_tau = candidates[0];
                let mut best_e = f64::INFINITY;
                for &cand in candidates {
                    let e = energy(pos, cand, &snapshot);
                    if e < best_e {
                        best_e = e;
                        best_tau = cand;
                    }
                }
                Some((best_tau, best_e))
            })
            .collect();

        let mut changed = false;
        let mut total = 0.0;
        for (pos, upd) in updates.iter().enumerate() {
            if let Some((t, e)) = upd {
                if tau[pos] != Some(*t) {
                    changed = true;
                }
                tau[pos] = Some(*t);
                total += e;
            }
        }
        energy_per_sweep.push(total);
        if !changed {
            converged = true;
            break;
        }
    }

    Ok(ThresholdField {
        tau,
        iteration_count: sweeps,
        converged,
        energy_per_sweep,
    })
}

/// Keep only voxels that are the most confident occupied voxel of their
/// ray bucket in at least a γ fraction of the views seeing the cube.
pub fn thin(
    surf: &SurfaceCube,
    fused: &FusedCube,
    views: &[CameraView],
    cube: &Cube,
    gamma: f64,
) -> SurfaceCube {
    let n = cube.voxel_count();
    let mut votes = vec![0usize; n];
    let mut seeing = 0usize;

    for view in views {
        let mut buckets: HashMap<(i64, i64), usize> = HashMap::new();
        let mut any = false;
        for i in 0..cube.s {
            for j in 0..cube.s {
                for k in 0..cube.s {
                    let idx = cube.linear(i, j, k);
                    let Some(hit) = view.project_in_frame(&cube.voxel_center(i, j, k)) else {
                        continue;
                    };
                    any = true;
                    if !surf.occ[idx] {
                        continue;
                    }
                    let key = (hit.u.round() as i64, hit.v.round() as i64);
                    buckets
                        .entry(key)
                        .and_modify(|best| {
                            if fused.p[idx] > fused.p[*best] {
                                *best = idx;
                            }
                        })
                        .or_insert(idx);
                }
            }
        }
        if any {
            seeing += 1;
            for &best in buckets.values() {
                votes[best] += 1;
            }
        }
    }

    let occ = if seeing == 0 {
        vec![false; n]
    } else {
        surf.occ
            .iter()
            .enumerate()
            .map(|(idx, &o)| o && votes[idx] as f64 / seeing as f64 >= gamma)
            .collect()
    };
    SurfaceCube {
        cube_index: surf.cube_index,
        s: surf.s,
        occ,
        tau_used: surf.tau_used,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, Aabb, ProjMatrix};
    use crate::raster::RgbImage;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fused_of(s: usize, p: Vec<f64>) -> FusedCube {
        let n = s * s * s;
        assert_eq!(p.len(), n);
        FusedCube {
            cube_index: [0, 0, 0],
            s,
            p,
            valid: vec![true; n],
            pair_set: vec![((0, 1), 1.0)],
        }
    }

    /// Camera looking down an axis so that rays run along that axis.
    fn axis_view(id: usize, axis: usize) -> CameraView {
        // orthographic-like: large focal length, far camera, so that
        // adjacent voxels land in distinct pixel buckets
        let f = 100_000.0;
        let dist = 500.0;
        let img = RgbImage::new(64, 64);
        let mut p = ProjMatrix::zeros();
        // camera at -dist on `axis`, looking toward +axis
        // rows: u from next axis, v from the one after
        let a1 = (axis + 1) % 3;
        let a2 = (axis + 2) % 3;
        p[(0, a1)] = f;
        p[(0, axis)] = 31.5;
        p[(1, a2)] = f;
        p[(1, axis)] = 31.5;
        p[(2, axis)] = 1.0;
        p[(0, 3)] = 31.5 * dist;
        p[(1, 3)] = 31.5 * dist;
        p[(2, 3)] = dist;
        CameraView::new(id, img, p).unwrap()
    }

    fn unit_cube(s: usize) -> Cube {
        Cube {
            index: [0, 0, 0],
            origin: Vector3::new(-0.01, -0.01, -0.01),
            voxel_size: 0.02 / s as f64,
            s,
        }
    }

    #[test]
    fn one_view_monotone_p_votes_once_per_ray() {
        let s = 3;
        let cube = unit_cube(s);
        let view = axis_view(0, 0);
        // p strictly increasing along x (= ray direction of the view)
        let mut p = vec![0.0; 27];
        for i in 0..s {
            for j in 0..s {
                for k in 0..s {
                    p[cube.linear(i, j, k)] = 0.1 + 0.3 * i as f64 + 0.01 * (j + k) as f64;
                }
            }
        }
        let fused = fused_of(s, p);
        let vf = ray_votes(&fused, &[view], &cube).unwrap();
        let voted: usize = vf.iter().filter(|&&v| v > 0.0).count();
        assert_eq!(voted, s * s); // one per ray
                                  // all votes on the i=2 slab
        for i in 0..s {
            for j in 0..s {
                for k in 0..s {
                    let v = vf[cube.linear(i, j, k)];
                    assert_eq!(v > 0.0, i == 2, "voxel {i},{j},{k}");
                }
            }
        }
    }

    #[test]
    fn uniform_p_votes_lexicographically_first() {
        let s = 3;
        let cube = unit_cube(s);
        let view = axis_view(0, 2); // rays along z; z is the innermost index
        let fused = fused_of(s, vec![0.5; 27]);
        let vf = ray_votes(&fused, &[view], &cube).unwrap();
        for i in 0..s {
            for j in 0..s {
                for k in 0..s {
                    let v = vf[cube.linear(i, j, k)];
                    assert_eq!(v > 0.0, k == 0, "voxel {i},{j},{k}");
                }
            }
        }
    }

    #[test]
    fn two_orthogonal_views_fractions_match_enumeration() {
        let s = 3;
        let cube = unit_cube(s);
        let views = vec![axis_view(0, 0), axis_view(1, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p: Vec<f64> = (0..27).map(|_| rng.gen()).collect();
        let fused = fused_of(s, p.clone());
        let vf = ray_votes(&fused, &views, &cube).unwrap();

        // brute-force both bucketings: view 0 rays along x, view 1 along y
        let mut votes = vec![0usize; 27];
        for j in 0..s {
            for k in 0..s {
                let best = (0..s)
                    .map(|i| cube.linear(i, j, k))
                    .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
                    .unwrap();
                votes[best] += 1;
            }
        }
        for i in 0..s {
            for k in 0..s {
                let best = (0..s)
                    .map(|j| cube.linear(i, j, k))
                    .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
                    .unwrap();
                votes[best] += 1;
            }
        }
        for idx in 0..27 {
            assert!(
                (vf[idx] - votes[idx] as f64 / 2.0).abs() < 1e-12,
                "voxel {idx}: {} vs {}",
                vf[idx],
                votes[idx]
            );
        }
        assert!(vf.iter().all(|&v| [0.0, 0.5, 1.0].contains(&v)));
    }

    #[test]
    fn no_views_is_an_error() {
        let cube = unit_cube(2);
        let fused = fused_of(2, vec![0.5; 8]);
        assert!(matches!(
            ray_votes(&fused, &[], &cube),
            Err(BinarizeError::NoViews)
        ));
    }

    #[test]
    fn binarize_closed_forms() {
        let fused = fused_of(2, vec![0.9, 0.2, 0.8, 0.1, 0.9, 0.2, 0.8, 0.1]);
        // high tau empties the surface
        let surf = binarize_cube(&fused, &[1.0; 8], 0.99, 0.0);
        assert!(surf.occ.iter().all(|&o| !o));
        // gamma = 0, tau = 0: occ = (p > 0)
        let surf = binarize_cube(&fused, &[0.0; 8], 0.0, 0.0);
        assert!(surf.occ.iter().all(|&o| o));
    }

    #[test]
    fn gamma_vote_rule_four_of_five() {
        let fused = fused_of(1, vec![0.9]);
        let surf = binarize_cube(&fused, &[4.0 / 5.0], 0.7, 0.8);
        assert!(surf.occ[0]); // 4/5 >= 0.8
        let surf = binarize_cube(&fused, &[3.0 / 5.0], 0.7, 0.8);
        assert!(!surf.occ[0]); // 3/5 < 0.8
    }

    #[test]
    fn binarize_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let p: Vec<f64> = (0..27).map(|_| rng.gen()).collect();
            let vf: Vec<f64> = (0..27).map(|_| rng.gen()).collect();
            let fused = fused_of(3, p);
            let t1: f64 = rng.gen_range(0.0..0.5);
            let t2: f64 = rng.gen_range(t1..1.0);
            let s1 = binarize_cube(&fused, &vf, t1, 0.5);
            let s2 = binarize_cube(&fused, &vf, t2, 0.5);
            for (a, b) in s1.occ.iter().zip(&s2.occ) {
                assert!(*a || !*b); // occ(t2) subset of occ(t1)
            }
        }
    }

    fn surf_of(occ: Vec<bool>) -> SurfaceCube {
        SurfaceCube {
            cube_index: [0, 0, 0],
            s: 2,
            occ,
            tau_used: 0.5,
        }
    }

    #[test]
    fn psi_closed_forms() {
        let beta = 6.0;
        let overlap: Vec<(usize, usize)> = (0..8).map(|i| (i, i)).collect();
        // identical surfaces with n occupied -> -beta * n
        let a = surf_of(vec![true, true, true, false, false, false, false, false]);
        assert_eq!(psi(&a, &a, &overlap, beta), -beta * 3.0);
        // fully disagreeing -> m + k
        let b = surf_of(vec![false, false, false, true, true, false, false, false]);
        assert_eq!(psi(&a, &b, &overlap, beta), 5.0);
        // both empty -> 0
        let e = surf_of(vec![false; 8]);
        assert_eq!(psi(&e, &e, &overlap, beta), 0.0);
    }

    fn field_of(s: usize, p: Vec<f64>, index: [i64; 3]) -> CubeField {
        let n = s * s * s;
        CubeField {
            fused: FusedCube {
                cube_index: index,
                s,
                p,
                valid: vec![true; n],
                pair_set: vec![((0, 1), 1.0)],
            },
            vote_fraction: vec![1.0; n],
        }
    }

    fn two_cube_lattice(s: usize, stride: usize) -> CubeLattice {
        build_lattice(
            Aabb::new(
                Vector3::zeros(),
                Vector3::new((s + stride) as f64, s as f64, s as f64),
            ),
            1.0,
            s,
            stride,
        )
        .unwrap()
    }

    #[test]
    fn single_cube_picks_smallest_candidate() {
        let lat = build_lattice(
            Aabb::new(Vector3::zeros(), Vector3::new(2.0, 2.0, 2.0)),
            1.0,
            2,
            2,
        )
        .unwrap();
        let fields = vec![Some(field_of(2, vec![0.9; 8], [0, 0, 0]))];
        let tf = optimize_thresholds(&fields, &lat, 0.0, 6.0, &[0.5, 0.7, 0.9], 10).unwrap();
        assert_eq!(tf.tau[0], Some(0.5));
        assert!(tf.converged);
        assert_eq!(tf.iteration_count, 1);
    }

    #[test]
    fn identical_p_fields_converge_to_equal_tau_with_nonpositive_psi() {
        let s = 4;
        let lat = two_cube_lattice(s, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let p: Vec<f64> = (0..s * s * s).map(|_| rng.gen()).collect();
        let fields = vec![
            Some(field_of(s, p.clone(), [0, 0, 0])),
            Some(field_of(s, p.clone(), [1, 0, 0])),
        ];
        let cands = [0.5, 0.6, 0.7, 0.8, 0.9];
        let tf = optimize_thresholds(&fields, &lat, 0.0, 6.0, &cands, 20).unwrap();
        assert!(tf.converged);
        assert_eq!(tf.tau[0], tf.tau[1]);

        // final psi over the overlap must be <= 0
        let t0 = tf.tau[0].unwrap();
        let t1 = tf.tau[1].unwrap();
        let sa = binarize_cube(
            &fields[0].as_ref().unwrap().fused,
            &vec![1.0; s * s * s],
            t0,
            0.0,
        );
        let sb = binarize_cube(
            &fields[1].as_ref().unwrap().fused,
            &vec![1.0; s * s * s],
            t1,
            0.0,
        );
        let ov = lat.overlap_voxels(0, 1);
        assert!(psi(&sa, &sb, &ov, 6.0) <= 0.0);
    }

    #[test]
    fn two_cube_result_matches_exhaustive_nine_case_oracle() {
        let s = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..20 {
            let lat = two_cube_lattice(s, 2);
            let fields: Vec<Option<CubeField>> = vec![
                Some(field_of(
                    s,
                    (0..s * s * s).map(|_| rng.gen()).collect(),
                    [0, 0, 0],
                )),
                Some(field_of(
                    s,
                    (0..s * s * s).map(|_| rng.gen()).collect(),
                    [1, 0, 0],
                )),
            ];
            let cands = [0.5, 0.7, 0.9];
            let beta = 6.0;
            let tf = optimize_thresholds(&fields, &lat, 0.0, beta, &cands, 50).unwrap();

            // exhaustive minimization of the symmetric total energy over
            // all 9 candidate combinations
            let ov = lat.overlap_voxels(0, 1);
            let vf = vec![1.0; s * s * s];
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for &ta in &cands {
                for &tb in &cands {
                    let sa = binarize_cube(&fields[0].as_ref().unwrap().fused, &vf, ta, 0.0);
                    let sb = binarize_cube(&fields[1].as_ref().unwrap().fused, &vf, tb, 0.0);
                    let e = 2.0 * psi(&sa, &sb, &ov, beta);
                    if e < best.0 - 1e-12 {
                        best = (e, ta, tb);
                    }
                }
            }
            assert!(tf.converged, "trial {trial}: did not converge");
            assert_eq!(tf.tau[0], Some(best.1), "trial {trial}");
            assert_eq!(tf.tau[1], Some(best.2), "trial {trial}");
        }
    }

    #[test]
    fn sweep_energy_is_non_increasing() {
        let s = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let lat = build_lattice(
            Aabb::new(Vector3::zeros(), Vector3::new(8.0, 8.0, 8.0)),
            1.0,
            s,
            2,
        )
        .unwrap();
        let fields: Vec<Option<CubeField>> = lat
            .cubes
            .iter()
            .map(|c| {
                Some(field_of(
                    s,
                    (0..s * s * s).map(|_| rng.gen()).collect(),
                    c.index,
                ))
            })
            .collect();
        let cands = [0.5, 0.6, 0.7, 0.8, 0.9];
        let tf = optimize_thresholds(&fields, &lat, 0.0, 4.0, &cands, 10).unwrap();
        for w in tf.energy_per_sweep.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "energy rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn candidate_validation() {
        let lat = build_lattice(
            Aabb::new(Vector3::zeros(), Vector3::new(2.0, 2.0, 2.0)),
            1.0,
            2,
            2,
        )
        .unwrap();
        let fields = vec![Some(field_of(2, vec![0.5; 8], [0, 0, 0]))];
        for bad in [vec![], vec![0.7, 0.6], vec![0.4, 0.6], vec![0.5, 1.0]] {
            assert!(matches!(
                optimize_thresholds(&fields, &lat, 0.0, 6.0, &bad, 5),
                Err(BinarizeError::InvalidCandidates(_))
            ));
        }
    }

    #[test]
    fn thin_single_layer_unchanged_and_idempotent() {
        let s = 3;
        let cube = unit_cube(s);
        let views = vec![axis_view(0, 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let p: Vec<f64> = (0..27).map(|_| rng.gen()).collect();
        let fused = fused_of(s, p);
        // single-voxel-thick slab at i=1
        let mut occ = vec![false; 27];
        for j in 0..s {
            for k in 0..s {
                occ[cube.linear(1, j, k)] = true;
            }
        }
        let surf = SurfaceCube {
            cube_index: [0, 0, 0],
            s,
            occ: occ.clone(),
            tau_used: 0.5,
        };
        let thinned = thin(&surf, &fused, &views, &cube, 1.0);
        assert_eq!(thinned.occ, occ);
        let again = thin(&thinned, &fused, &views, &cube, 1.0);
        assert_eq!(again.occ, thinned.occ);
    }

    #[test]
    fn thin_empty_stays_empty() {
        let s = 2;
        let cube = unit_cube(s);
        let views = vec![axis_view(0, 0)];
        let fused = fused_of(s, vec![0.5; 8]);
        let surf = SurfaceCube {
            cube_index: [0, 0, 0],
            s,
            occ: vec![false; 8],
            tau_used: 0.5,
        };
        let thinned = thin(&surf, &fused, &views, &cube, 0.5);
        assert!(thinned.occ.iter().all(|&o| !o));
    }

    #[test]
    fn thin_removes_back_layer_of_slab() {
        let s = 3;
        let cube = unit_cube(s);
        let views = vec![axis_view(0, 0)]; // rays along x
        let mut p = vec![0.0; 27];
        let mut occ = vec![false; 27];
        for j in 0..s {
            for k in 0..s {
                // front layer i=1 higher p than back layer i=0
                p[cube.linear(1, j, k)] = 0.9;
                p[cube.linear(0, j, k)] = 0.6;
                occ[cube.linear(1, j, k)] = true;
                occ[cube.linear(0, j, k)] = true;
            }
        }
        let fused = fused_of(s, p);
        let surf = SurfaceCube {
            cube_index: [0, 0, 0],
            s,
            occ,
            tau_used: 0.5,
        };
        let thinned = thin(&surf, &fused, &views, &cube, 0.5);
        for j in 0..s {
            for k in 0..s {
                assert!(thinned.occ[cube.linear(1, j, k)]);
                assert!(!thinned.occ[cube.linear(0, j, k)]);
            }
        }
        // subset property
        for (a, b) in thinned.occ.iter().zip(&surf.occ) {
            assert!(*b || !*a);
        }
    }
}
