//! Camera model, perspective projection and the overlapping cube lattice.

use nalgebra::{Matrix3, SMatrix, Vector3};
use thiserror::Error;

use crate::raster::RgbImage;

/// 3×4 real projection matrix P = [M | p4].
pub type ProjMatrix = SMatrix<f64, 3, 4>;

const W_EPS: f64 = 1e-12;
const DET_EPS: f64 = 1e-12;
const RAY_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("camera matrix is singular (|det M| = {0:e})")]
    SingularCamera(f64),
    #[error("degenerate projection ray for cube center")]
    DegenerateRay,
    #[error("invalid lattice configuration: {0}")]
    InvalidConfig(String),
}

/// Result of projecting a world point: pixel coordinates plus the
/// homogeneous depth, or out-of-frustum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Dehomogenized projection of a world point; `None` when the homogeneous
/// w is at or below 1e-12 (point behind or on the camera plane).
pub fn project(proj: &ProjMatrix, point: &Vector3<f64>) -> Option<PixelProjection> {
    let h = proj * point.push(1.0);
    if h.z <= W_EPS {
        return None;
    }
    Some(PixelProjection {
        u: h.x / h.z,
        v: h.y / h.z,
        depth: h.z,
    })
}

/// World camera center −M⁻¹·p4 of P = [M | p4].
pub fn camera_center(proj: &ProjMatrix) -> Result<Vector3<f64>, GeometryError> {
    let m = proj.fixed_view::<3, 3>(0, 0).into_owned();
    let det = m.determinant();
    if det.abs() < DET_EPS {
        return Err(GeometryError::SingularCamera(det.abs()));
    }
    let inv: Matrix3<f64> = m
        .try_inverse()
        .ok_or(GeometryError::SingularCamera(det.abs()))?;
    let p4 = proj.column(3).into_owned();
    Ok(-inv * p4)
}

/// One input image with its projection matrix and derived camera center.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub id: usize,
    pub image: RgbImage,
    pub proj: ProjMatrix,
    pub center: Vector3<f64>,
}

impl CameraView {
    pub fn new(id: usize, image: RgbImage, proj: ProjMatrix) -> Result<Self, GeometryError> {
        let center = camera_center(&proj)?;
        Ok(CameraView {
            id,
            image,
            proj,
            center,
        })
    }

    /// Project a world point and require it to land inside the frame.
    pub fn project_in_frame(&self, point: &Vector3<f64>) -> Option<PixelProjection> {
        let p = project(&self.proj, point)?;
        if self.image.in_bounds(p.u, p.v) {
            Some(p)
        } else {
            None
        }
    }
}

/// Axis-aligned world bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Aabb { min, max }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

/// Axis-aligned voxel cube on the lattice: s×s×s voxels of edge
/// `voxel_size`, minimum corner at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub index: [i64; 3],
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub s: usize,
}

impl Cube {
    /// World center of voxel (i,j,k): origin + voxel_size·(i+½, j+½, k+½).
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + self.voxel_size * Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5)
    }

    /// World center of the cube.
    pub fn center(&self) -> Vector3<f64> {
        let half = self.voxel_size * self.s as f64 * 0.5;
        self.origin + Vector3::new(half, half, half)
    }

    pub fn voxel_count(&self) -> usize {
        self.s * self.s * self.s
    }

    /// Linear storage index of voxel (i,j,k); lexicographic in (i,j,k).
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.s + j) * self.s + k
    }

    pub fn unlinear(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.s;
        let j = (idx / self.s) % self.s;
        let i = idx / (self.s * self.s);
        (i, j, k)
    }
}

/// Overlapping cube partition of the scene volume. Cube origins are
/// `stride` voxels apart; stride < s means face neighbors share a
/// (s−stride)·s·s voxel slab.
#[derive(Debug, Clone)]
pub struct CubeLattice {
    pub bbox: Aabb,
    pub voxel_size: f64,
    pub s: usize,
    pub stride: usize,
    /// Cubes per axis.
    pub dims: [usize; 3],
    /// Lexicographic by lattice index.
    pub cubes: Vec<Cube>,
}

/// Deterministic lattice construction covering `bbox`.
pub fn build_lattice(
    bbox: Aabb,
    voxel_size: f64,
    s: usize,
    stride: usize,
) -> Result<CubeLattice, GeometryError> {
    if voxel_size <= 0.0 {
        return Err(GeometryError::InvalidConfig(format!(
            "voxel_size must be positive, got {voxel_size}"
        )));
    }
    if s < 2 {
        return Err(GeometryError::InvalidConfig(format!(
            "cube side must be at least 2 voxels, got {s}"
        )));
    }
    if stride < 1 || stride > s {
        return Err(GeometryError::InvalidConfig(format!(
            "stride must lie in [1, s={s}], got {stride}"
        )));
    }
    let ext = bbox.extent();
    if ext.x <= 0.0 || ext.y <= 0.0 || ext.z <= 0.0 {
        return Err(GeometryError::InvalidConfig(
            "bounding box must have positive extent".into(),
        ));
    }

    let mut dims = [0usize; 3];
    for ax in 0..3 {
        let n_vox = (ext[ax] / voxel_size).ceil() as usize;
        dims[ax] = if n_vox <= s {
            1
        } else {
            (n_vox - s).div_ceil(stride) + 1
        };
    }

    let mut cubes = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for ci in 0..dims[0] {
        for cj in 0..dims[1] {
            for ck in 0..dims[2] {
                let idx = [ci as i64, cj as i64, ck as i64];
                let origin = bbox.min
                    + voxel_size
                        * Vector3::new(
                            (ci * stride) as f64,
                            (cj * stride) as f64,
                            (ck * stride) as f64,
                        );
                cubes.push(Cube {
                    index: idx,
                    origin,
                    voxel_size,
                    s,
                });
            }
        }
    }

    Ok(CubeLattice {
        bbox,
        voxel_size,
        s,
        stride,
        dims,
        cubes,
    })
}

impl CubeLattice {
    /// Position of a cube in `cubes` from its lattice index.
    pub fn cube_pos(&self, index: [i64; 3]) -> Option<usize> {
        for (&ix, &dim) in index.iter().zip(&self.dims) {
            if ix < 0 || ix >= dim as i64 {
                return None;
            }
        }
        Some(
            (index[0] as usize * self.dims[1] + index[1] as usize) * self.dims[2]
                + index[2] as usize,
        )
    }

    /// Positions of the up-to-6 face-adjacent neighbors of a cube.
    pub fn face_neighbors(&self, pos: usize) -> Vec<usize> {
        let idx = self.cubes[pos].index;
        let mut out = Vec::with_capacity(6);
        for ax in 0..3 {
            for d in [-1i64, 1] {
                let mut n = idx;
                n[ax] += d;
                if let Some(p) = self.cube_pos(n) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Global voxel index of a cube-local voxel.
    pub fn global_voxel(&self, cube: &Cube, i: usize, j: usize, k: usize) -> [i64; 3] {
        [
            cube.index[0] * self.stride as i64 + i as i64,
            cube.index[1] * self.stride as i64 + j as i64,
            cube.index[2] * self.stride as i64 + k as i64,
        ]
    }

    /// Pairs of linear voxel indices (in cube a, in cube b) addressing the
    /// same world voxel. Empty when the cubes do not overlap.
    pub fn overlap_voxels(&self, pos_a: usize, pos_b: usize) -> Vec<(usize, usize)> {
        let a = &self.cubes[pos_a];
        let b = &self.cubes[pos_b];
        let s = self.s as i64;
        let stride = self.stride as i64;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for ax in 0..3 {
            // global voxel ranges [start, start+s) of each cube
            let sa = a.index[ax] * stride;
            let sb = b.index[ax] * stride;
            lo[ax] = sa.max(sb);
            hi[ax] = (sa + s).min(sb + s);
            if lo[ax] >= hi[ax] {
                return Vec::new();
            }
        }
        let mut out = Vec::new();
        for gi in lo[0]..hi[0] {
            for gj in lo[1]..hi[1] {
                for gk in lo[2]..hi[2] {
                    let la = (
                        (gi - a.index[0] * stride) as usize,
                        (gj - a.index[1] * stride) as usize,
                        (gk - a.index[2] * stride) as usize,
                    );
                    let lb = (
                        (gi - b.index[0] * stride) as usize,
                        (gj - b.index[1] * stride) as usize,
                        (gk - b.index[2] * stride) as usize,
                    );
                    out.push((a.linear(la.0, la.1, la.2), b.linear(lb.0, lb.1, lb.2)));
                }
            }
        }
        out
    }
}

/// Angle at the cube center between the projection rays toward the two
/// camera centers, in [0, π]. The arccos argument is clamped to absorb
/// rounding.
pub fn pair_angle(
    cube: &Cube,
    view_i: &CameraView,
    view_j: &CameraView,
) -> Result<f64, GeometryError> {
    let c = cube.center();
    let ri = c - view_i.center;
    let rj = c - view_j.center;
    let ni = ri.norm();
    let nj = rj.norm();
    if ni < RAY_EPS || nj < RAY_EPS {
        return Err(GeometryError::DegenerateRay);
    }
    let cos = (ri.dot(&rj) / (ni * nj)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_proj() -> ProjMatrix {
        let mut p = ProjMatrix::zeros();
        p[(0, 0)] = 1.0;
        p[(1, 1)] = 1.0;
        p[(2, 2)] = 1.0;
        p
    }

    #[test]
    fn project_identity_axis_point() {
        let p = identity_proj();
        let hit = project(&p, &Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((hit.u, hit.v, hit.depth), (0.0, 0.0, 2.0));
    }

    #[test]
    fn project_dehomogenizes() {
        let p = identity_proj();
        let hit = project(&p, &Vector3::new(2.0, 4.0, 2.0)).unwrap();
        assert_eq!((hit.u, hit.v), (1.0, 2.0));
    }

    #[test]
    fn project_behind_camera_is_out_of_frustum() {
        let p = identity_proj();
        assert!(project(&p, &Vector3::new(0.0, 0.0, -1.0)).is_none());
        assert!(project(&p, &Vector3::new(1.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn project_matches_homogeneous_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut p = ProjMatrix::zeros();
            for r in 0..3 {
                for c in 0..4 {
                    p[(r, c)] = rng.gen_range(-2.0..2.0);
                }
            }
            let pt = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            // brute-force homogeneous multiply then divide
            let mut h = [0.0f64; 3];
            for r in 0..3 {
                h[r] = p[(r, 0)] * pt.x + p[(r, 1)] * pt.y + p[(r, 2)] * pt.z + p[(r, 3)];
            }
            match project(&p, &pt) {
                Some(hit) => {
                    assert!(h[2] > 1e-12);
                    assert!((hit.u - h[0] / h[2]).abs() < 1e-12);
                    assert!((hit.v - h[1] / h[2]).abs() < 1e-12);
                    assert!((hit.depth - h[2]).abs() < 1e-12);
                }
                None => assert!(h[2] <= 1e-12),
            }
        }
    }

    #[test]
    fn camera_center_identity() {
        let c = camera_center(&identity_proj()).unwrap();
        assert_eq!(c, Vector3::zeros());
    }

    #[test]
    fn camera_center_translation() {
        let mut p = identity_proj();
        p[(2, 3)] = -5.0;
        let c = camera_center(&p).unwrap();
        assert!((c - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
    }

    #[test]
    fn camera_center_residual_on_random_cameras() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut p = ProjMatrix::zeros();
            for r in 0..3 {
                for c in 0..4 {
                    p[(r, c)] = rng.gen_range(-1.0..1.0);
                }
            }
            let m = p.fixed_view::<3, 3>(0, 0).into_owned();
            if m.determinant().abs() < 1e-6 {
                continue;
            }
            let c = camera_center(&p).unwrap();
            let res = p * c.push(1.0);
            let scale = p.norm().max(1.0);
            assert!(res.norm() / scale < 1e-9, "residual {}", res.norm());
        }
    }

    #[test]
    fn camera_center_singular_rejected() {
        let mut p = ProjMatrix::zeros();
        p[(0, 0)] = 1.0;
        p[(1, 1)] = 1.0;
        assert!(matches!(
            camera_center(&p),
            Err(GeometryError::SingularCamera(_))
        ));
    }

    fn unit_box(n: f64) -> Aabb {
        Aabb::new(Vector3::zeros(), Vector3::new(n, n, n))
    }

    #[test]
    fn lattice_single_cube() {
        let lat = build_lattice(unit_box(8.0), 1.0, 8, 8).unwrap();
        assert_eq!(lat.cubes.len(), 1);
        assert_eq!(lat.dims, [1, 1, 1]);
    }

    #[test]
    fn lattice_count_matches_formula_and_enumeration() {
        // 3s voxels per axis, stride s/2 -> ceil((3s-s)/(s/2))+1 = 5 per axis
        let s = 8usize;
        let lat = build_lattice(unit_box(3.0 * s as f64), 1.0, s, s / 2).unwrap();
        assert_eq!(lat.dims, [5, 5, 5]);
        assert_eq!(lat.cubes.len(), 125);
        // enumeration: last cube must reach the far face
        let last = lat.cubes.last().unwrap();
        assert!(last.origin.x + (s as f64) >= 3.0 * s as f64);
    }

    #[test]
    fn lattice_overlap_size() {
        let s = 8usize;
        let stride = 4usize;
        let lat = build_lattice(unit_box(2.0 * s as f64), 1.0, s, stride).unwrap();
        let a = lat.cube_pos([0, 0, 0]).unwrap();
        let b = lat.cube_pos([1, 0, 0]).unwrap();
        let ov = lat.overlap_voxels(a, b);
        assert_eq!(ov.len(), (s - stride) * s * s);
    }

    #[test]
    fn lattice_stride_s_has_empty_overlap() {
        let s = 4usize;
        let lat = build_lattice(unit_box(2.0 * s as f64), 1.0, s, s).unwrap();
        let a = lat.cube_pos([0, 0, 0]).unwrap();
        let b = lat.cube_pos([1, 0, 0]).unwrap();
        assert!(lat.overlap_voxels(a, b).is_empty());
    }

    #[test]
    fn lattice_is_deterministic() {
        let l1 = build_lattice(unit_box(20.0), 0.5, 16, 8).unwrap();
        let l2 = build_lattice(unit_box(20.0), 0.5, 16, 8).unwrap();
        assert_eq!(l1.cubes, l2.cubes);
    }

    #[test]
    fn lattice_rejects_bad_config() {
        assert!(build_lattice(unit_box(8.0), 0.0, 8, 4).is_err());
        assert!(build_lattice(unit_box(8.0), 1.0, 8, 0).is_err());
        assert!(build_lattice(unit_box(8.0), 1.0, 8, 9).is_err());
    }

    fn view_at(center: Vector3<f64>) -> CameraView {
        // P = [I | -c]
        let mut p = identity_proj();
        p[(0, 3)] = -center.x;
        p[(1, 3)] = -center.y;
        p[(2, 3)] = -center.z;
        CameraView::new(0, RgbImage::new(4, 4), p).unwrap()
    }

    fn centered_cube() -> Cube {
        Cube {
            index: [0, 0, 0],
            origin: Vector3::new(-1.0, -1.0, -1.0),
            voxel_size: 1.0,
            s: 2,
        }
    }

    #[test]
    fn pair_angle_same_view_is_zero() {
        let v = view_at(Vector3::new(1.0, 0.0, 0.0));
        let c = centered_cube();
        assert_eq!(pair_angle(&c, &v, &v).unwrap(), 0.0);
    }

    #[test]
    fn pair_angle_opposite_rays() {
        let vi = view_at(Vector3::new(1.0, 0.0, 0.0));
        let vj = view_at(Vector3::new(-1.0, 0.0, 0.0));
        let c = centered_cube();
        assert!((pair_angle(&c, &vi, &vj).unwrap() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn pair_angle_orthogonal_rays_and_symmetry() {
        let vi = view_at(Vector3::new(1.0, 0.0, 0.0));
        let vj = view_at(Vector3::new(0.0, 1.0, 0.0));
        let c = centered_cube();
        let t = pair_angle(&c, &vi, &vj).unwrap();
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(t, pair_angle(&c, &vj, &vi).unwrap());
    }

    #[test]
    fn pair_angle_degenerate() {
        let v = view_at(Vector3::zeros());
        let c = centered_cube(); // center at origin == camera center
        assert!(matches!(
            pair_angle(&c, &v, &v),
            Err(GeometryError::DegenerateRay)
        ));
    }
}
