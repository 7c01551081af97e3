//! Scene loading and reconstruction persistence: camera text files,
//! binary PPM images, scene manifests, ASCII PLY point clouds and raw
//! occupancy grids.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use thiserror::Error;

use crate::binarize::SurfaceCube;
use crate::geometry::{Aabb, CubeLattice, ProjMatrix};
use crate::raster::RgbImage;

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error at line {line} of {path}: {msg}")]
    ParseError {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("unsupported format in {path}: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },
    #[error("manifest invalid: {0}")]
    InvalidManifest(String),
}

fn io_err(path: &Path, source: io::Error) -> SceneIoError {
    SceneIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> SceneIoError {
    SceneIoError::ParseError {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Scene description: images, cameras and the reconstruction volume.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneManifest {
    pub image_paths: Vec<PathBuf>,
    pub camera_file_path: PathBuf,
    pub bbox: Aabb,
    pub notes: String,
}

// --- camera text format --------------------------------------------------
//
//   # cameras <N>
//   <blank-separated blocks of 3 lines x 4 decimal floats>

pub fn cameras_to_string(cameras: &[ProjMatrix]) -> String {
    let mut out = String::new();
    writeln!(out, "# cameras {}", cameras.len()).unwrap();
    for cam in cameras {
        writeln!(out).unwrap();
        for r in 0..3 {
            writeln!(
                out,
                "{} {} {} {}",
                cam[(r, 0)],
                cam[(r, 1)],
                cam[(r, 2)],
                cam[(r, 3)]
            )
            .unwrap();
        }
    }
    out
}

pub fn cameras_from_str(text: &str, path: &Path) -> Result<Vec<ProjMatrix>, SceneIoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty camera file"))?;
    let count: usize = header
        .strip_prefix("# cameras ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| parse_err(path, 1, format!("bad header {header:?}")))?;

    let mut cams = Vec::with_capacity(count);
    let mut rows: Vec<[f64; 4]> = Vec::with_capacity(3);
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| parse_err(path, ln + 1, format!("{e}")))?;
        if vals.len() != 4 {
            return Err(parse_err(
                path,
                ln + 1,
                format!("expected 4 values per row, found {}", vals.len()),
            ));
        }
        rows.push([vals[0], vals[1], vals[2], vals[3]]);
        if rows.len() == 3 {
            let mut m = ProjMatrix::zeros();
            for (r, row) in rows.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    m[(r, c)] = *v;
                }
            }
            cams.push(m);
            rows.clear();
        }
    }
    if !rows.is_empty() {
        return Err(parse_err(path, 0, "trailing incomplete camera block"));
    }
    if cams.len() != count {
        return Err(parse_err(
            path,
            1,
            format!("header promises {count} cameras, found {}", cams.len()),
        ));
    }
    Ok(cams)
}

pub fn load_cameras(path: &Path) -> Result<Vec<ProjMatrix>, SceneIoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    cameras_from_str(&text, path)
}

pub fn save_cameras(path: &Path, cameras: &[ProjMatrix]) -> Result<(), SceneIoError> {
    fs::write(path, cameras_to_string(cameras)).map_err(|e| io_err(path, e))
}

// --- binary PPM (P6, 8-bit) ----------------------------------------------

pub fn load_image(path: &Path) -> Result<RgbImage, SceneIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_ppm(&bytes, path)
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<RgbImage, SceneIoError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P6" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(SceneIoError::UnsupportedFormat {
            path: path.to_path_buf(),
            msg: format!("expected binary PPM magic P6, found {magic:?}"),
        });
    }
    // header: P6 <w> <h> <maxval> with arbitrary whitespace/comments
    let mut pos = 2usize;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, 1, "truncated PPM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| parse_err(path, 1, "non-ASCII PPM header"))?;
        let v: usize = tok
            .parse()
            .map_err(|_| parse_err(path, 1, format!("bad header token {tok:?}")))?;
        fields.push(v);
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(SceneIoError::UnsupportedFormat {
            path: path.to_path_buf(),
            msg: format!("only 8-bit PPM supported, maxval {maxval}"),
        });
    }
    pos += 1; // single whitespace after maxval
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(parse_err(
            path,
            1,
            format!(
                "truncated pixel payload: need {need} bytes, have {}",
                bytes.len().saturating_sub(pos)
            ),
        ));
    }
    let mut pixels = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let o = pos + i * 3;
        pixels.push([bytes[o], bytes[o + 1], bytes[o + 2]]);
    }
    Ok(RgbImage::from_pixels(w, h, pixels))
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for p in img.pixels() {
        out.extend_from_slice(p);
    }
    out
}

pub fn save_image(path: &Path, img: &RgbImage) -> Result<(), SceneIoError> {
    fs::write(path, encode_ppm(img)).map_err(|e| io_err(path, e))
}

// --- scene manifest ------------------------------------------------------
//
//   images=a.ppm;b.ppm
//   cameras=cams.txt
//   bbox=x0 y0 z0 x1 y1 z1
//   notes=... (optional)

pub fn manifest_to_string(m: &SceneManifest) -> String {
    let imgs: Vec<String> = m
        .image_paths
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    let mut out = String::new();
    writeln!(out, "images={}", imgs.join(";")).unwrap();
    writeln!(out, "cameras={}", m.camera_file_path.display()).unwrap();
    writeln!(
        out,
        "bbox={} {} {} {} {} {}",
        m.bbox.min.x, m.bbox.min.y, m.bbox.min.z, m.bbox.max.x, m.bbox.max.y, m.bbox.max.z
    )
    .unwrap();
    if !m.notes.is_empty() {
        writeln!(out, "notes={}", m.notes).unwrap();
    }
    out
}

pub fn manifest_from_str(text: &str, path: &Path) -> Result<SceneManifest, SceneIoError> {
    let mut images = None;
    let mut cameras = None;
    let mut bbox = None;
    let mut notes = String::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, ln + 1, "expected key=value"))?;
        match key {
            "images" => {
                images = Some(
                    value
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(PathBuf::from)
                        .collect::<Vec<_>>(),
                )
            }
            "cameras" => cameras = Some(PathBuf::from(value)),
            "bbox" => {
                let vals: Result<Vec<f64>, _> = value.split_whitespace().map(str::parse).collect();
                let vals = vals.map_err(|e| parse_err(path, ln + 1, format!("{e}")))?;
                if vals.len() != 6 {
                    return Err(parse_err(path, ln + 1, "bbox needs 6 numbers"));
                }
                bbox = Some(Aabb::new(
                    Vector3::new(vals[0], vals[1], vals[2]),
                    Vector3::new(vals[3], vals[4], vals[5]),
                ));
            }
            "notes" => notes = value.to_string(),
            other => {
                return Err(parse_err(path, ln + 1, format!("unknown key {other:?}")));
            }
        }
    }
    let image_paths = images.ok_or(SceneIoError::InvalidManifest("missing images".into()))?;
    if image_paths.len() < 2 {
        return Err(SceneIoError::InvalidManifest(format!(
            "need at least 2 views, got {}",
            image_paths.len()
        )));
    }
    Ok(SceneManifest {
        image_paths,
        camera_file_path: cameras.ok_or(SceneIoError::InvalidManifest("missing cameras".into()))?,
        bbox: bbox.ok_or(SceneIoError::InvalidManifest("missing bbox".into()))?,
        notes,
    })
}

pub fn load_manifest(path: &Path) -> Result<SceneManifest, SceneIoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    manifest_from_str(&text, path)
}

// --- PLY writer ----------------------------------------------------------

/// Deduplicated global voxel indices of all occupied voxels.
pub fn occupied_global_voxels(
    surface_cubes: &[SurfaceCube],
    lattice: &CubeLattice,
) -> BTreeSet<[i64; 3]> {
    let mut set = BTreeSet::new();
    for surf in surface_cubes {
        let Some(pos) = lattice.cube_pos(surf.cube_index) else {
            continue;
        };
        let cube = &lattice.cubes[pos];
        for i in 0..surf.s {
            for j in 0..surf.s {
                for k in 0..surf.s {
                    if surf.occ[cube.linear(i, j, k)] {
                        set.insert(lattice.global_voxel(cube, i, j, k));
                    }
                }
            }
        }
    }
    set
}

/// ASCII PLY with one vertex per occupied world voxel (deduplicated
/// across overlapping cubes), sorted lexicographically by position.
pub fn write_ply(surface_cubes: &[SurfaceCube], lattice: &CubeLattice) -> Vec<u8> {
    let set = occupied_global_voxels(surface_cubes, lattice);
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", set.len()).unwrap();
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for g in &set {
        let p = lattice.bbox.min
            + lattice.voxel_size
                * Vector3::new(g[0] as f64 + 0.5, g[1] as f64 + 0.5, g[2] as f64 + 0.5);
        writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    out.into_bytes()
}

/// Parse vertex positions back out of an ASCII PLY.
pub fn read_ply_vertices(path: &Path) -> Result<Vec<Vector3<f64>>, SceneIoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let mut count = None;
    for (ln, line) in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err(path, ln + 1, format!("{e}")))?,
            );
        }
        if line.trim() == "end_header" {
            break;
        }
    }
    let count = count.ok_or_else(|| parse_err(path, 1, "missing element vertex"))?;
    let mut verts = Vec::with_capacity(count);
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| parse_err(path, ln + 1, format!("{e}")))?;
        if vals.len() < 3 {
            return Err(parse_err(path, ln + 1, "vertex needs 3 coordinates"));
        }
        verts.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    if verts.len() != count {
        return Err(parse_err(
            path,
            1,
            format!("header promises {count} vertices, found {}", verts.len()),
        ));
    }
    Ok(verts)
}

// --- raw occupancy grid --------------------------------------------------
//
//   occgrid <nx> <ny> <nz>
//   row-major 0/1 bytes
//
// A sidecar "<path>.meta" records the world placement of the grid.

pub fn write_occgrid(
    path: &Path,
    dims: [usize; 3],
    occ: &[bool],
    origin: Vector3<f64>,
    voxel_size: f64,
) -> Result<(), SceneIoError> {
    assert_eq!(occ.len(), dims[0] * dims[1] * dims[2]);
    let mut bytes = format!("occgrid {} {} {}\n", dims[0], dims[1], dims[2]).into_bytes();
    bytes.extend(occ.iter().map(|&o| o as u8));
    fs::write(path, bytes).map_err(|e| io_err(path, e))?;
    let meta = format!(
        "origin={} {} {}\nvoxel_size={}\n",
        origin.x, origin.y, origin.z, voxel_size
    );
    let meta_path = meta_path_for(path);
    fs::write(&meta_path, meta).map_err(|e| io_err(&meta_path, e))
}

pub fn meta_path_for(occ_path: &Path) -> PathBuf {
    let mut p = occ_path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub struct OccGrid {
    pub dims: [usize; 3],
    pub occ: Vec<bool>,
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
}

pub fn read_occgrid(path: &Path) -> Result<OccGrid, SceneIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| parse_err(path, 1, "missing header line"))?;
    let header =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| parse_err(path, 1, "non-ASCII header"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "occgrid" {
        return Err(parse_err(path, 1, format!("bad header {header:?}")));
    }
    let dims: Vec<usize> = parts[1..]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(path, 1, format!("{e}")))?;
    let n = dims[0] * dims[1] * dims[2];
    let payload = &bytes[nl + 1..];
    if payload.len() < n {
        return Err(parse_err(
            path,
            1,
            format!("payload needs {n} bytes, found {}", payload.len()),
        ));
    }
    let occ = payload[..n].iter().map(|&b| b != 0).collect();

    let meta_path = meta_path_for(path);
    let meta = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let mut origin = Vector3::zeros();
    let mut voxel_size = 1.0;
    for (ln, line) in meta.lines().enumerate() {
        if let Some(v) = line.strip_prefix("origin=") {
            let vals: Result<Vec<f64>, _> = v.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|e| parse_err(&meta_path, ln + 1, format!("{e}")))?;
            if vals.len() != 3 {
                return Err(parse_err(&meta_path, ln + 1, "origin needs 3 numbers"));
            }
            origin = Vector3::new(vals[0], vals[1], vals[2]);
        } else if let Some(v) = line.strip_prefix("voxel_size=") {
            voxel_size = v
                .trim()
                .parse()
                .map_err(|e| parse_err(&meta_path, ln + 1, format!("{e}")))?;
        }
    }
    Ok(OccGrid {
        dims: [dims[0], dims[1], dims[2]],
        occ,
        origin,
        voxel_size,
    })
}
