//! Neighborhood structure and 2-D diagnostics over embeddings: brute-force
//! k-NN, exact t-SNE with a per-point bandwidth search, and deterministic
//! SVG scatter rendering.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;
use crate::{Error, Result};

/// N x d feature rows aligned to dataset sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    ids: Vec<u64>,
    dim: usize,
    data: Vec<f64>,
}

impl Embedding {
    pub fn new(ids: Vec<u64>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be >= 1"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::InvalidParam(format!(
                "embedding data length {} does not match {} rows x {} dims",
                data.len(),
                ids.len(),
                dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding values must be finite"));
        }
        Ok(Embedding { ids, dim, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    /// Rows reordered by `perm` (new position -> old position).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::invalid("permutation length mismatch"));
        }
        let mut ids = Vec::with_capacity(self.len());
        let mut data = Vec::with_capacity(self.data.len());
        for &old in perm {
            ids.push(self.ids[old]);
            data.extend_from_slice(self.row(old));
        }
        Embedding::new(ids, self.dim, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub dist: f64,
}

/// Per-node k nearest neighbors sorted by ascending distance (ties broken by
/// lower id), never including the node itself.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    ids: Vec<u64>,
    k: usize,
    neighbors: Vec<Vec<Neighbor>>,
}

impl NeighborGraph {
    pub fn new(ids: Vec<u64>, k: usize, neighbors: Vec<Vec<Neighbor>>) -> Result<Self> {
        if neighbors.len() != ids.len() {
            return Err(Error::invalid("one neighbor list per node required"));
        }
        for (node, list) in ids.iter().zip(&neighbors) {
            if list.len() != k {
                return Err(Error::InvalidParam(format!(
                    "node {node} has {} neighbors, expected {k}",
                    list.len()
                )));
            }
            if list.iter().any(|n| n.id == *node) {
                return Err(Error::InvalidParam(format!("node {node} lists itself")));
            }
            if list.windows(2).any(|w| w[0].dist > w[1].dist) {
                return Err(Error::InvalidParam(format!(
                    "node {node} neighbor distances are not nondecreasing"
                )));
            }
        }
        Ok(NeighborGraph { ids, k, neighbors })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Neighbors of the node at position `i`.
    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }
}

/// Exact brute-force k-NN over Euclidean distances, O(N^2 d).
pub fn knn(emb: &Embedding, k: usize) -> Result<NeighborGraph> {
    let n = emb.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParam(format!("k = {k} must lie in [1, {})", n)));
    }
    let mut neighbors = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<Neighbor> = (0..n)
            .filter(|&j| j != i)
            .map(|j| Neighbor {
                id: emb.ids()[j],
                dist: math::sqrt(math::sq_dist(emb.row(i), emb.row(j))),
            })
            .collect();
        dists.sort_by(|a, b| {
            a.dist
                .partial_cmp(&b.dist)
                .expect("finite distances")
                .then(a.id.cmp(&b.id))
        });
        dists.truncate(k);
        neighbors.push(dists);
    }
    NeighborGraph::new(emb.ids().to_vec(), k, neighbors)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub step_size: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_start: f64,
    pub momentum_late: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
}

impl TsneConfig {
    /// Standard-recipe defaults sized for `n` points.
    pub fn for_points(n: usize, seed: u64) -> Self {
        TsneConfig {
            perplexity: f64::min(30.0, (n as f64 - 1.0) / 3.0),
            iters: 500,
            step_size: 200.0,
            early_exaggeration: 4.0,
            exaggeration_iters: 100,
            momentum_start: 0.5,
            momentum_late: 0.8,
            momentum_switch_iter: 250,
            seed,
        }
    }
}

pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    pub initial_kl: f64,
    pub final_kl: f64,
    /// Largest |entropy - log2(perplexity)| left by any bandwidth search.
    pub max_entropy_gap: f64,
}

/// Conditional affinities p_{j|i} (row-major N x N) for `emb` at the given
/// perplexity, plus the worst remaining entropy gap.
///
/// Each sigma_i is found by bisection toward Shannon entropy (in bits) equal
/// to log2(perplexity). The bisection always runs its full 50 refinement
/// steps so the result depends only on the pairwise distances.
pub fn conditional_affinities(emb: &Embedding, perplexity: f64) -> Result<(Vec<f64>, f64)> {
    let n = emb.len();
    if n < 4 {
        return Err(Error::invalid("t-SNE needs at least 4 points"));
    }
    if !(perplexity > 1.0 && perplexity < n as f64) {
        return Err(Error::InvalidParam(format!(
            "perplexity {perplexity} must lie in (1, {n})"
        )));
    }
    let mut sq = vec![0.0; n * n];
    let mut max_sq = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = math::sq_dist(emb.row(i), emb.row(j));
            sq[i * n + j] = d;
            sq[j * n + i] = d;
            max_sq = max_sq.max(d);
        }
    }
    if max_sq == 0.0 {
        return Err(Error::Degenerate(
            "all embedding rows identical; affinities undefined".into(),
        ));
    }
    let target = math::log2(perplexity);
    let mut cond = vec![0.0; n * n];
    let mut max_gap = 0.0_f64;
    for i in 0..n {
        let row = &sq[i * n..(i + 1) * n];
        let (beta, gap) = search_beta(row, i, target);
        max_gap = max_gap.max(gap);
        let mut sum = 0.0;
        for j in 0..n {
            if j != i {
                let p = math::exp(-beta * row[j]);
                cond[i * n + j] = p;
                sum += p;
            }
        }
        for j in 0..n {
            cond[i * n + j] /= sum;
        }
    }
    Ok((cond, max_gap))
}

/// Symmetrized joint affinities p_ij = (p_{j|i} + p_{i|j}) / 2N.
pub fn joint_affinities(emb: &Embedding, perplexity: f64) -> Result<(Vec<f64>, f64)> {
    let n = emb.len();
    let (cond, max_gap) = conditional_affinities(emb, perplexity)?;
    let mut joint = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    Ok((joint, max_gap))
}

/// Shannon entropy in bits of the conditional distribution at `beta`.
fn entropy_at(row: &[f64], skip: usize, beta: f64) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, &d) in row.iter().enumerate() {
        if j == skip {
            continue;
        }
        let w = math::exp(-beta * d);
        sum += w;
        weighted += w * d;
    }
    if sum <= 0.0 {
        return 0.0;
    }
    // H = log(sum) + beta * E[d], converted from nats to bits.
    (math::ln(sum) + beta * weighted / sum) / core::f64::consts::LN_2
}

/// Bisection for the precision beta = 1/(2 sigma^2) whose conditional
/// entropy hits `target` bits. Returns (beta, |entropy - target|).
fn search_beta(row: &[f64], skip: usize, target: f64) -> (f64, f64) {
    let mut beta = 1.0;
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    // Entropy decreases in beta; expand the bracket first.
    for _ in 0..64 {
        let h = entropy_at(row, skip, beta);
        if h > target {
            lo = beta;
            if hi.is_infinite() {
                beta *= 2.0;
            } else {
                break;
            }
        } else {
            hi = beta;
            break;
        }
    }
    if hi.is_infinite() {
        hi = beta;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..50 {
        mid = 0.5 * (lo + hi);
        if entropy_at(row, skip, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (mid, math::abs(entropy_at(row, skip, mid) - target))
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        if pi > 0.0 {
            kl += pi * math::ln(pi / qi.max(1e-300));
        }
    }
    kl
}

/// Student-t weights and their total for the current 2-D layout.
fn student_weights(coords: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = coords.len();
    let mut w = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let wij = 1.0 / (1.0 + dx * dx + dy * dy);
            w[i * n + j] = wij;
            w[j * n + i] = wij;
            total += 2.0 * wij;
        }
    }
    (w, total)
}

fn q_matrix(coords: &[[f64; 2]]) -> Vec<f64> {
    let (w, total) = student_weights(coords);
    w.iter().map(|&x| x / total).collect()
}

/// Exact t-SNE: gradient descent on the KL divergence between the joint
/// affinities and Student-t low-dimensional affinities, with early
/// exaggeration and the two-phase momentum schedule from the config.
pub fn tsne(emb: &Embedding, cfg: &TsneConfig) -> Result<TsneResult> {
    if cfg.iters < 1 {
        return Err(Error::invalid("iters must be at least 1"));
    }
    let n = emb.len();
    let (p, max_entropy_gap) = joint_affinities(emb, cfg.perplexity)?;
    let mut rng = Rng::derive(cfg.seed, 0x7473_6e65);
    let mut coords: Vec<[f64; 2]> = (0..n)
        .map(|_| [1e-4 * rng.normal(), 1e-4 * rng.normal()])
        .collect();
    let initial_kl = kl_divergence(&p, &q_matrix(&coords));
    let mut velocity = vec![[0.0_f64; 2]; n];
    for iter in 0..cfg.iters {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < cfg.momentum_switch_iter {
            cfg.momentum_start
        } else {
            cfg.momentum_late
        };
        let (w, total) = student_weights(&coords);
        for i in 0..n {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wij = w[i * n + j];
                let qij = wij / total;
                let f = 4.0 * (exaggeration * p[i * n + j] - qij) * wij;
                gx += f * (coords[i][0] - coords[j][0]);
                gy += f * (coords[i][1] - coords[j][1]);
            }
            velocity[i][0] = momentum * velocity[i][0] - cfg.step_size * gx;
            velocity[i][1] = momentum * velocity[i][1] - cfg.step_size * gy;
        }
        for i in 0..n {
            coords[i][0] += velocity[i][0];
            coords[i][1] += velocity[i][1];
        }
    }
    let final_kl = kl_divergence(&p, &q_matrix(&coords));
    Ok(TsneResult {
        coords,
        initial_kl,
        final_kl,
        max_entropy_gap,
    })
}

/// Per-point glyph in the diagnostic scatter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mark {
    /// Plain class-colored dot.
    Point,
    /// Representative sample (star polygon).
    Star,
    /// Dropped point (cross).
    Cross,
    /// Relabeled point (ring).
    Ring,
}

impl Mark {
    pub fn as_str(self) -> &'static str {
        match self {
            Mark::Point => "point",
            Mark::Star => "star",
            Mark::Cross => "cross",
            Mark::Ring => "ring",
        }
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const SVG_SIDE: f64 = 800.0;
const SVG_PAD: f64 = 40.0;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders a standalone SVG scatter: exactly one primary glyph per point,
/// colored by class with the fixed 10-color palette cycling. Output bytes
/// are a pure function of the inputs.
pub fn render_scatter(coords: &[[f64; 2]], labels: &[usize], marks: &[Mark]) -> Result<String> {
    if coords.len() != labels.len() || coords.len() != marks.len() {
        return Err(Error::invalid("coords, labels, and marks must align"));
    }
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        SVG_SIDE as usize
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if !coords.is_empty() {
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in coords {
            min_x = min_x.min(c[0]);
            max_x = max_x.max(c[0]);
            min_y = min_y.min(c[1]);
            max_y = max_y.max(c[1]);
        }
        let span_x = (max_x - min_x).max(1e-12);
        let span_y = (max_y - min_y).max(1e-12);
        let scale = (SVG_SIDE - 2.0 * SVG_PAD) / span_x.max(span_y);
        for ((c, &label), &mark) in coords.iter().zip(labels).zip(marks) {
            let x = SVG_PAD + (c[0] - min_x) * scale;
            // Flip y so larger coordinates plot upward.
            let y = SVG_SIDE - SVG_PAD - (c[1] - min_y) * scale;
            let color = PALETTE[label % PALETTE.len()];
            svg.push_str(&render_glyph(x, y, color, mark));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn render_glyph(x: f64, y: f64, color: &str, mark: Mark) -> String {
    match mark {
        Mark::Point => format!(
            "<circle class=\"pt\" cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{color}\"/>\n",
            fmt(x),
            fmt(y)
        ),
        Mark::Ring => format!(
            "<circle class=\"pt\" cx=\"{}\" cy=\"{}\" r=\"6\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2.5\"/>\n",
            fmt(x),
            fmt(y)
        ),
        Mark::Cross => format!(
            "<path class=\"pt\" d=\"M {} {} L {} {} M {} {} L {} {}\" stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>\n",
            fmt(x - 5.0),
            fmt(y - 5.0),
            fmt(x + 5.0),
            fmt(y + 5.0),
            fmt(x - 5.0),
            fmt(y + 5.0),
            fmt(x + 5.0),
            fmt(y - 5.0)
        ),
        Mark::Star => {
            let mut points = String::new();
            for i in 0..10 {
                let r = if i % 2 == 0 { 8.0 } else { 3.5 };
                let a = core::f64::consts::PI * (i as f64 / 5.0 - 0.5);
                if i > 0 {
                    points.push(' ');
                }
                points.push_str(&format!(
                    "{},{}",
                    fmt(x + r * math::cos(a)),
                    fmt(y + r * math::sin(a))
                ));
            }
            format!(
                "<polygon class=\"pt\" points=\"{points}\" fill=\"{color}\" stroke=\"#cc0000\" stroke-width=\"1.5\"/>\n"
            )
        }
    }
}
