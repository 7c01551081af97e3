//! View-pair weighting: a shallow scoring network with softmax
//! normalization per cube, a closed-form heuristic fallback, and the
//! logistic-regression gate that rejects cubes unlikely to contain
//! surface.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::descriptor::EMBED_DIM;

/// Input layout of the scoring net: [θ, d, e_i, e_j].
pub const NET_INPUT_DIM: usize = 2 + 2 * EMBED_DIM;
pub const NET_HIDDEN: usize = 100;

const WEIGHTNET_MAGIC: &str = "weightnet v1";
const GATE_MAGIC: &str = "gatemodel v1";

#[derive(Debug, Error)]
pub enum WeightingError {
    #[error("empty input")]
    EmptyInput,
    #[error("gate fitting needs both classes present")]
    SingleClass,
    #[error("model parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
}

/// 2-layer scoring net: 100 sigmoid hidden units, one linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightNet {
    /// Row-major 100×258.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// 1×100.
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl WeightNet {
    pub fn zeros() -> Self {
        WeightNet {
            w1: vec![0.0; NET_HIDDEN * NET_INPUT_DIM],
            b1: vec![0.0; NET_HIDDEN],
            w2: vec![0.0; NET_HIDDEN],
            b2: 0.0,
        }
    }

    fn random_init(rng: &mut ChaCha8Rng) -> Self {
        let mut net = WeightNet::zeros();
        for w in net.w1.iter_mut() {
            *w = rng.gen_range(-0.1..0.1);
        }
        for w in net.w2.iter_mut() {
            *w = rng.gen_range(-0.1..0.1);
        }
        net
    }
}

/// Per-cube weighting of candidate view pairs.
#[derive(Debug, Clone)]
pub struct WeightEntry {
    pub pair: (usize, usize),
    pub theta: f64,
    pub d: f64,
    pub raw_score: f64,
    pub w: f64,
}

#[derive(Debug, Clone)]
pub struct PairWeighting {
    pub cube_index: [i64; 3],
    pub entries: Vec<WeightEntry>,
}

/// Logistic regression on the patch dissimilarity d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateModel {
    pub slope: f64,
    pub intercept: f64,
}

impl Default for GateModel {
    /// Accepts a pair when d ≤ 1.1. Embedding distances live in [0,2]
    /// and uncorrelated patches land near √2, so the boundary sits
    /// between "same surface, wide baseline" and "unrelated".
    fn default() -> Self {
        GateModel {
            slope: -4.0,
            intercept: 4.4,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn net_input(theta: f64, d: f64, e_i: &[f64], e_j: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(NET_INPUT_DIM);
    x.push(theta);
    x.push(d);
    x.extend_from_slice(e_i);
    x.extend_from_slice(e_j);
    debug_assert_eq!(x.len(), NET_INPUT_DIM);
    x
}

/// W2·sigmoid(W1·[θ; d; e_i; e_j] + b1) + b2.
pub fn raw_score(net: &WeightNet, theta: f64, d: f64, e_i: &[f64], e_j: &[f64]) -> f64 {
    let x = net_input(theta, d, e_i, e_j);
    let mut out = net.b2;
    for h in 0..NET_HIDDEN {
        let mut z = net.b1[h];
        let row = &net.w1[h * NET_INPUT_DIM..(h + 1) * NET_INPUT_DIM];
        for (w, xv) in row.iter().zip(&x) {
            z += w * xv;
        }
        out += net.w2[h] * sigmoid(z);
    }
    out
}

/// Numerically stable softmax; sums to 1 within 1e-12.
pub fn softmax_weights(scores: &[f64]) -> Result<Vec<f64>, WeightingError> {
    if scores.is_empty() {
        return Err(WeightingError::EmptyInput);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Closed-form pair score used when no trained net is available: favors
/// a baseline angle of 15° and penalizes patch dissimilarity.
pub fn heuristic_score(theta: f64, d: f64) -> f64 {
    let theta0 = 15f64.to_radians();
    let sigma = 10f64.to_radians();
    let lambda = 4.0;
    let a = (theta - theta0) / sigma;
    -(a * a) - lambda * d
}

/// One training sample for the scoring net.
#[derive(Debug, Clone)]
pub struct WeightSample {
    pub theta: f64,
    pub d: f64,
    pub e_i: Vec<f64>,
    pub e_j: Vec<f64>,
    /// Target in [0,1], e.g. IoU of the pair's prediction against truth.
    pub quality: f64,
}

/// Mini-batch gradient descent on MSE between sigmoid(raw_score) and the
/// quality target. Deterministic given `seed`; never returns a net with
/// higher training loss than its initialization.
pub fn fit_weightnet(
    samples: &[WeightSample],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<WeightNet, WeightingError> {
    if samples.is_empty() {
        return Err(WeightingError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = WeightNet::random_init(&mut rng);
    let init = net.clone();

    let inputs: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| net_input(s.theta, s.d, &s.e_i, &s.e_j))
        .collect();

    let loss_of = |net: &WeightNet| -> f64 {
        samples
            .iter()
            .zip(&inputs)
            .map(|(s, x)| {
                let pred = sigmoid(forward(net, x).1);
                (pred - s.quality).powi(2)
            })
            .sum::<f64>()
            / samples.len() as f64
    };
    let init_loss = loss_of(&net);

    let batch = 32.min(samples.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..epochs {
        // deterministic shuffle
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch) {
            let mut gw1 = vec![0.0; NET_HIDDEN * NET_INPUT_DIM];
            let mut gb1 = vec![0.0; NET_HIDDEN];
            let mut gw2 = vec![0.0; NET_HIDDEN];
            let mut gb2 = 0.0;
            for &si in chunk {
                let x = &inputs[si];
                let (h, score) = forward(&net, x);
                let pred = sigmoid(score);
                let dscore = 2.0 * (pred - samples[si].quality) * pred * (1.0 - pred);
                gb2 += dscore;
                for hh in 0..NET_HIDDEN {
                    gw2[hh] += dscore * h[hh];
                    let dz = dscore * net.w2[hh] * h[hh] * (1.0 - h[hh]);
                    gb1[hh] += dz;
                    let row = &mut gw1[hh * NET_INPUT_DIM..(hh + 1) * NET_INPUT_DIM];
                    for (g, xv) in row.iter_mut().zip(x) {
                        *g += dz * xv;
                    }
                }
            }
            let scale = lr / chunk.len() as f64;
            for (w, g) in net.w1.iter_mut().zip(&gw1) {
                *w -= scale * g;
            }
            for (w, g) in net.b1.iter_mut().zip(&gb1) {
                *w -= scale * g;
            }
            for (w, g) in net.w2.iter_mut().zip(&gw2) {
                *w -= scale * g;
            }
            net.b2 -= scale * gb2;
        }
    }

    if loss_of(&net) > init_loss {
        return Ok(init);
    }
    Ok(net)
}

fn forward(net: &WeightNet, x: &[f64]) -> (Vec<f64>, f64) {
    let mut h = vec![0.0; NET_HIDDEN];
    let mut score = net.b2;
    for (hh, hv) in h.iter_mut().enumerate() {
        let mut z = net.b1[hh];
        let row = &net.w1[hh * NET_INPUT_DIM..(hh + 1) * NET_INPUT_DIM];
        for (w, xv) in row.iter().zip(x) {
            z += w * xv;
        }
        *hv = sigmoid(z);
        score += net.w2[hh] * *hv;
    }
    (h, score)
}

/// Accept the cube iff at least `n_min` view pairs are predicted similar
/// (sigmoid(slope·d + intercept) ≥ 0.5).
pub fn gate_cube(gate: &GateModel, dissims: &[f64], n_min: usize) -> bool {
    let passing = dissims
        .iter()
        .filter(|&&d| gate.slope * d + gate.intercept >= 0.0)
        .count();
    passing >= n_min
}

/// Fit the gate by gradient descent on the logistic loss.
pub fn fit_gate(
    samples: &[(f64, bool)],
    epochs: usize,
    lr: f64,
) -> Result<GateModel, WeightingError> {
    let pos = samples.iter().filter(|(_, l)| *l).count();
    if pos == 0 || pos == samples.len() {
        return Err(WeightingError::SingleClass);
    }
    let mut slope = 0.0;
    let mut intercept = 0.0;
    let n = samples.len() as f64;
    for _ in 0..epochs {
        let mut gs = 0.0;
        let mut gi = 0.0;
        for &(d, label) in samples {
            let p = sigmoid(slope * d + intercept);
            let err = p - if label { 1.0 } else { 0.0 };
            gs += err * d;
            gi += err;
        }
        slope -= lr * gs / n;
        intercept -= lr * gi / n;
    }
    Ok(GateModel { slope, intercept })
}

// --- serialization -------------------------------------------------------
//
// Versioned flat text: magic line, dimensions, then row-major parameters
// as decimal floats. Rust's shortest-round-trip float formatting keeps
// write→read→write byte-identical.

pub fn weightnet_to_string(net: &WeightNet) -> String {
    let mut out = String::new();
    writeln!(out, "{WEIGHTNET_MAGIC}").unwrap();
    writeln!(out, "{} {}", NET_INPUT_DIM, NET_HIDDEN).unwrap();
    for h in 0..NET_HIDDEN {
        let row = &net.w1[h * NET_INPUT_DIM..(h + 1) * NET_INPUT_DIM];
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "{}", join(&net.b1)).unwrap();
    writeln!(out, "{}", join(&net.w2)).unwrap();
    writeln!(out, "{}", net.b2).unwrap();
    out
}

fn parse_floats(line: &str, lineno: usize, expect: usize) -> Result<Vec<f64>, WeightingError> {
    let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
    let vals = vals.map_err(|e| WeightingError::ParseError {
        line: lineno,
        msg: format!("{e}"),
    })?;
    if vals.len() != expect {
        return Err(WeightingError::ParseError {
            line: lineno,
            msg: format!("expected {expect} values, found {}", vals.len()),
        });
    }
    Ok(vals)
}

pub fn weightnet_from_str(text: &str) -> Result<WeightNet, WeightingError> {
    let mut lines = text.lines().enumerate();
    let (n0, magic) = lines.next().ok_or(WeightingError::ParseError {
        line: 1,
        msg: "empty file".into(),
    })?;
    if magic.trim() != WEIGHTNET_MAGIC {
        return Err(WeightingError::ParseError {
            line: n0 + 1,
            msg: format!("bad magic {magic:?}"),
        });
    }
    let (n1, dims) = lines.next().ok_or(WeightingError::ParseError {
        line: 2,
        msg: "missing dimensions".into(),
    })?;
    let d = parse_floats(dims, n1 + 1, 2)?;
    if d[0] as usize != NET_INPUT_DIM || d[1] as usize != NET_HIDDEN {
        return Err(WeightingError::ParseError {
            line: n1 + 1,
            msg: format!("unsupported dimensions {dims}"),
        });
    }
    let mut net = WeightNet::zeros();
    for h in 0..NET_HIDDEN {
        let (ln, row) = lines.next().ok_or(WeightingError::ParseError {
            line: 3 + h,
            msg: "truncated W1".into(),
        })?;
        let vals = parse_floats(row, ln + 1, NET_INPUT_DIM)?;
        net.w1[h * NET_INPUT_DIM..(h + 1) * NET_INPUT_DIM].copy_from_slice(&vals);
    }
    let (ln, b1) = lines.next().ok_or(WeightingError::ParseError {
        line: 3 + NET_HIDDEN,
        msg: "missing b1".into(),
    })?;
    net.b1 = parse_floats(b1, ln + 1, NET_HIDDEN)?;
    let (ln, w2) = lines.next().ok_or(WeightingError::ParseError {
        line: 4 + NET_HIDDEN,
        msg: "missing W2".into(),
    })?;
    net.w2 = parse_floats(w2, ln + 1, NET_HIDDEN)?;
    let (ln, b2) = lines.next().ok_or(WeightingError::ParseError {
        line: 5 + NET_HIDDEN,
        msg: "missing b2".into(),
    })?;
    net.b2 = parse_floats(b2, ln + 1, 1)?[0];
    Ok(net)
}

pub fn gate_to_string(gate: &GateModel) -> String {
    format!("{GATE_MAGIC}\n{} {}\n", gate.slope, gate.intercept)
}

pub fn gate_from_str(text: &str) -> Result<GateModel, WeightingError> {
    let mut lines = text.lines();
    let magic = lines.next().ok_or(WeightingError::ParseError {
        line: 1,
        msg: "empty file".into(),
    })?;
    if magic.trim() != GATE_MAGIC {
        return Err(WeightingError::ParseError {
            line: 1,
            msg: format!("bad magic {magic:?}"),
        });
    }
    let params = lines.next().ok_or(WeightingError::ParseError {
        line: 2,
        msg: "missing parameters".into(),
    })?;
    let vals = parse_floats(params, 2, 2)?;
    Ok(GateModel {
        slope: vals[0],
        intercept: vals[1],
    })
}
