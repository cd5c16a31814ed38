//! Two-dimensional maps of relatedness matrices by Kamada–Kawai stress
//! minimization, and their export formats.
//!
//! Stress is `E = Σ_{i<j} k_ij (‖p_i − p_j‖ − d_ij)²` with `k_ij = 1/d_ij²`.
//! The optimizer repeatedly picks the node with the largest gradient and
//! moves it with damped Newton steps until its own gradient vanishes. Every
//! accepted step lowers (or keeps) the stress, so the recorded history is
//! non-increasing.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkage::RelatednessMatrix;

/// Floor applied to distances so identical domains stay distinguishable.
pub const MIN_DISTANCE: f64 = 1e-6;
pub const MAX_DISTANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry, a zero diagonal and positive off-diagonal entries.
    pub fn new(labels: Vec<String>, d: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if d.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "distance matrix has {} entries, expected {n}x{n}",
                d.len()
            )));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidInput(format!("non-zero diagonal at `{}`", labels[i])));
            }
            for j in (i + 1)..n {
                let (a, b) = (d[i * n + j], d[j * n + i]);
                if !(a.is_finite() && a > 0.0) || a != b {
                    return Err(Error::InvalidInput(format!(
                        "distance ({}, {}) must be positive and symmetric",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(Self { labels, d })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.labels.len() + j]
    }
}

/// `d_ij = 1 − r_ij` clamped to `[MIN_DISTANCE, MAX_DISTANCE]`, zero diagonal.
pub fn distances_from_similarity(matrix: &RelatednessMatrix) -> Result<DistanceMatrix> {
    let n = matrix.size();
    let undefined: Vec<String> = matrix
        .upper_triangle()
        .filter(|(_, _, v)| v.is_none())
        .map(|(i, j, _)| format!("({}, {})", matrix.labels[i], matrix.labels[j]))
        .collect();
    if !undefined.is_empty() {
        return Err(Error::Undefined(format!(
            "similarity undefined for pairs {}",
            undefined.join(", ")
        )));
    }
    let mut d = vec![0.0; n * n];
    for (i, j, r) in matrix.upper_triangle() {
        let r = r.expect("checked above");
        let v = (1.0 - r).clamp(MIN_DISTANCE, MAX_DISTANCE);
        d[i * n + j] = v;
        d[j * n + i] = v;
    }
    DistanceMatrix::new(matrix.labels.clone(), d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutOptions {
    /// Stop once every node's gradient norm is below this.
    pub tolerance: f64,
    /// Outer iteration cap; `None` means `10·n²`.
    pub max_iterations: Option<usize>,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub labels: Vec<String>,
    pub positions: Vec<[f64; 2]>,
    pub stress: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub converged: bool,
    /// Stress before the first move, then after every outer iteration.
    #[serde(skip)]
    pub stress_history: Vec<f64>,
}

/// Total stress of `positions` against target distances.
pub fn stress(positions: &[[f64; 2]], d: &DistanceMatrix) -> f64 {
    let n = positions.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dij = d.get(i, j);
            let dist = norm(sub(positions[i], positions[j]));
            e += (dist - dij).powi(2) / (dij * dij);
        }
    }
    e
}

/// ∂E/∂p_m for every node.
pub fn stress_gradient(positions: &[[f64; 2]], d: &DistanceMatrix) -> Vec<[f64; 2]> {
    (0..positions.len())
        .map(|m| node_gradient(positions, d, m, positions[m]))
        .collect()
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Stress terms involving node `m` placed at `p`.
fn node_energy(positions: &[[f64; 2]], d: &DistanceMatrix, m: usize, p: [f64; 2]) -> f64 {
    let mut e = 0.0;
    for (i, &q) in positions.iter().enumerate() {
        if i != m {
            let dij = d.get(m, i);
            e += (norm(sub(p, q)) - dij).powi(2) / (dij * dij);
        }
    }
    e
}

fn node_gradient(positions: &[[f64; 2]], d: &DistanceMatrix, m: usize, p: [f64; 2]) -> [f64; 2] {
    let mut g = [0.0, 0.0];
    for (i, &q) in positions.iter().enumerate() {
        if i == m {
            continue;
        }
        let dij = d.get(m, i);
        let k = 1.0 / (dij * dij);
        let delta = sub(p, q);
        let dist = norm(delta).max(f64::MIN_POSITIVE);
        let coef = 2.0 * k * (dist - dij) / dist;
        g[0] += coef * delta[0];
        g[1] += coef * delta[1];
    }
    g
}

/// 2×2 Hessian block of E with respect to node `m`.
fn node_hessian(positions: &[[f64; 2]], d: &DistanceMatrix, m: usize, p: [f64; 2]) -> [f64; 3] {
    let (mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0);
    for (i, &q) in positions.iter().enumerate() {
        if i == m {
            continue;
        }
        let dij = d.get(m, i);
        let k = 2.0 / (dij * dij);
        let [dx, dy] = sub(p, q);
        let dist = norm([dx, dy]).max(1e-12);
        let cube = dist * dist * dist;
        hxx += k * (1.0 - dij * dy * dy / cube);
        hxy += k * dij * dx * dy / cube;
        hyy += k * (1.0 - dij * dx * dx / cube);
    }
    [hxx, hxy, hyy]
}

/// Moves node `m` until its gradient is below `tol` or no step helps.
fn relax_node(positions: &mut [[f64; 2]], d: &DistanceMatrix, m: usize, tol: f64) {
    for _ in 0..100 {
        let p = positions[m];
        let g = node_gradient(positions, d, m, p);
        if norm(g) < tol {
            return;
        }
        let [hxx, hxy, hyy] = node_hessian(positions, d, m, p);
        let det = hxx * hyy - hxy * hxy;
        let mut step = if det > 0.0 && hxx > 0.0 {
            [-(hyy * g[0] - hxy * g[1]) / det, -(hxx * g[1] - hxy * g[0]) / det]
        } else {
            let scale = (hxx.abs() + hyy.abs()).max(1e-12);
            [-g[0] / scale, -g[1] / scale]
        };
        let before = node_energy(positions, d, m, p);
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = [p[0] + step[0], p[1] + step[1]];
            if node_energy(positions, d, m, candidate) <= before {
                positions[m] = candidate;
                accepted = true;
                break;
            }
            step = [step[0] * 0.5, step[1] * 0.5];
        }
        if !accepted {
            return;
        }
    }
}

/// Lays out the distance matrix. Deterministic for a fixed seed, and
/// equivariant under relabeling: nodes are initialized on a circle in sorted
/// label order, and all work happens in that order.
pub fn kamada_kawai(d: &DistanceMatrix, seed: u64, options: LayoutOptions) -> Result<LayoutResult> {
    let n = d.size();
    if n < 2 {
        return Err(Error::InvalidInput(format!("layout needs at least 2 nodes, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d.labels[a].cmp(&d.labels[b]));
    if order.windows(2).any(|w| d.labels[w[0]] == d.labels[w[1]]) {
        return Err(Error::InvalidInput("duplicate labels in distance matrix".into()));
    }
    // Work on the label-sorted matrix.
    let mut sorted = Vec::with_capacity(n * n);
    for &i in &order {
        for &j in &order {
            sorted.push(d.get(i, j));
        }
    }
    let sd = DistanceMatrix {
        labels: order.iter().map(|&i| d.labels[i].clone()).collect(),
        d: sorted,
    };

    let max_d = sd.d.iter().copied().fold(0.0, f64::max);
    let radius = 0.5 * max_d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let jitter = 1e-3 * radius;
            [
                radius * theta.cos() + rng.gen_range(-jitter..=jitter),
                radius * theta.sin() + rng.gen_range(-jitter..=jitter),
            ]
        })
        .collect();

    let cap = options.max_iterations.unwrap_or(10 * n * n);
    let mut history = vec![stress(&positions, &sd)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cap {
        let (m, gmax) = (0..n)
            .map(|m| (m, norm(node_gradient(&positions, &sd, m, positions[m]))))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if gmax < options.tolerance {
            converged = true;
            break;
        }
        relax_node(&mut positions, &sd, m, options.tolerance);
        iterations += 1;
        history.push(stress(&positions, &sd));
    }
    if !converged {
        converged = (0..n).all(|m| norm(node_gradient(&positions, &sd, m, positions[m])) < options.tolerance);
    }

    // Back to input order.
    let mut out = vec![[0.0; 2]; n];
    for (k, &i) in order.iter().enumerate() {
        out[i] = positions[k];
    }
    Ok(LayoutResult {
        labels: d.labels.clone(),
        stress: *history.last().expect("initial stress recorded"),
        positions: out,
        iterations,
        converged,
        stress_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutFormat {
    Json,
    Dot,
    PajekNet,
    SvgScatter,
}

impl FromStr for LayoutFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(LayoutFormat::Json),
            "dot" => Ok(LayoutFormat::Dot),
            "net" | "pajek" | "pajek_net" => Ok(LayoutFormat::PajekNet),
            "svg" | "svg_scatter" => Ok(LayoutFormat::SvgScatter),
            other => Err(Error::InvalidInput(format!("unknown layout format `{other}`"))),
        }
    }
}

impl LayoutFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| Error::InvalidInput(format!("no extension on `{}`", path.display())))?
            .parse()
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn escape_quoted(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn bounds(positions: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in positions {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Serializes a layout. Output depends only on the layout value.
pub fn export_layout(layout: &LayoutResult, format: LayoutFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        LayoutFormat::Json => {
            out = serde_json::to_string_pretty(layout)?;
            out.push('\n');
        }
        LayoutFormat::Dot => {
            out.push_str("graph map {\n  node [shape=point];\n");
            for (label, p) in layout.labels.iter().zip(&layout.positions) {
                let _ = writeln!(
                    out,
                    "  \"{0}\" [label=\"{0}\", pos=\"{1},{2}!\"];",
                    escape_quoted(label),
                    p[0],
                    p[1]
                );
            }
            out.push_str("}\n");
        }
        LayoutFormat::PajekNet => {
            // Pajek expects coordinates in [0, 1].
            let (lo, hi) = bounds(&layout.positions);
            let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
            let _ = writeln!(out, "*Vertices {}", layout.labels.len());
            for (i, (label, p)) in layout.labels.iter().zip(&layout.positions).enumerate() {
                let _ = writeln!(
                    out,
                    "{} \"{}\" {:.6} {:.6} 0.5",
                    i + 1,
                    escape_quoted(label),
                    (p[0] - lo[0]) / span,
                    (p[1] - lo[1]) / span
                );
            }
        }
        LayoutFormat::SvgScatter => {
            const SIZE: f64 = 800.0;
            const MARGIN: f64 = 80.0;
            let (lo, hi) = bounds(&layout.positions);
            let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
            let scale = (SIZE - 2.0 * MARGIN) / span;
            let _ = writeln!(
                out,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
            );
            let _ = writeln!(out, "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
            for (label, p) in layout.labels.iter().zip(&layout.positions) {
                let x = MARGIN + (p[0] - lo[0]) * scale;
                // SVG y grows downward
                let y = SIZE - MARGIN - (p[1] - lo[1]) * scale;
                let _ = writeln!(
                    out,
                    "  <circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"5\" fill=\"steelblue\"/>"
                );
                let _ = writeln!(
                    out,
                    "  <text x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                    x + 7.0,
                    y + 4.0,
                    escape_xml(label)
                );
            }
            out.push_str("</svg>\n");
        }
    }
    Ok(out)
}

pub fn import_layout_json(text: &str) -> Result<LayoutResult> {
    let layout: LayoutResult = serde_json::from_str(text)?;
    if layout.labels.len() != layout.positions.len() {
        return Err(Error::InvalidInput("labels and positions differ in length".into()));
    }
    Ok(layout)
}
